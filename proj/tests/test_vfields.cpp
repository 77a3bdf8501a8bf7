#include <gtest/gtest.h>

#include <random>

#include "hmfg/grid.hpp"
#include "hmfg/vfields.hpp"

using namespace hmfg;

namespace {

// Finite-difference Jacobian of a field, J(j,k) = d X^j / d x_k (central, step s).
Eigen::MatrixXd fd_jacobian(const VectorField& X, const Point& x, double s = 1e-5) {
    const int d = X.dim();
    Eigen::MatrixXd J(d, d);
    for (int k = 0; k < d; ++k) {
        Point p = x, m = x;
        p[k] += s;
        m[k] -= s;
        const Point vp = X.eval(p), vm = X.eval(m);
        for (int j = 0; j < d; ++j) J(j, k) = (vp[j] - vm[j]) / (2 * s);
    }
    return J;
}

Eigen::VectorXd as_vec(const Point& p, int d) {
    Eigen::VectorXd v(d);
    for (int j = 0; j < d; ++j) v(j) = p[j];
    return v;
}

Eigen::VectorXd fd_bracket(const VectorField& a, const VectorField& b, const Point& x) {
    const int d = a.dim();
    return fd_jacobian(b, x) * as_vec(a.eval(x), d) - fd_jacobian(a, x) * as_vec(b.eval(x), d);
}

std::vector<Point> random_points(int d, int count, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<Point> pts(static_cast<std::size_t>(count));
    for (auto& p : pts)
        for (int j = 0; j < d; ++j) p[j] = U(rng);
    return pts;
}

}  // namespace

TEST(TrigPoly, ProductAndDerivativeMatchPointwise) {
    const TrigPoly s = TrigPoly::sine(families::wave(0)) + TrigPoly::cosine({1, 2, 0, 0}, 0.5);
    const TrigPoly c = TrigPoly::cosine(families::wave(1), 2.0) + TrigPoly::constant(0.25);
    const TrigPoly prod = s * c;
    const TrigPoly ds = s.derivative(0);
    for (const Point& x : random_points(2, 50, 1)) {
        EXPECT_NEAR(prod(x), s(x) * c(x), 1e-13);
        Point p = x, m = x;
        p[0] += 1e-6;
        m[0] -= 1e-6;
        EXPECT_NEAR(ds(x), (s(p) - s(m)) / 2e-6, 1e-6);
    }
}

TEST(VectorFieldFamily, EvalEuclideanIsIdentity) {
    const auto fam = families::euclidean(2);
    const Eigen::MatrixXd s = fam.sigma({0.3, 0.7});
    EXPECT_TRUE(s.isApprox(Eigen::MatrixXd::Identity(2, 2)));
}

TEST(VectorFieldFamily, EvalGrushinAndHeisenberg) {
    const auto gr = families::grushin();
    const Eigen::MatrixXd s = gr.sigma({0.25, 0.9});
    EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(s(0, 1), 0.0);
    EXPECT_NEAR(s(1, 0), 0.0, 0.0);
    EXPECT_NEAR(s(1, 1), 1.0, 1e-15);

    const auto he = families::heisenberg_periodic();
    const Eigen::MatrixXd t = he.sigma({0.0, 0.0, 0.0});
    Eigen::MatrixXd expect(2, 3);
    expect << 1, 0, 0, 0, 1, 0;
    EXPECT_TRUE(t.isApprox(expect));
}

TEST(VectorFieldFamily, CoefficientsArePeriodic) {
    for (const auto& fam : {families::euclidean(3), families::grushin(), families::heisenberg_periodic()}) {
        for (Point x : random_points(fam.dim(), 20, 2)) {
            const Eigen::MatrixXd s0 = fam.sigma(x);
            for (int j = 0; j < fam.dim(); ++j) {
                Point y = x;
                y[j] += 1.0;
                EXPECT_LT((fam.sigma(y) - s0).cwiseAbs().maxCoeff(), 1e-12) << fam.name();
            }
        }
    }
}

TEST(VectorFieldFamily, DivergenceIsJacobianTraceAndZeroForBuiltins) {
    for (const auto& fam : {families::euclidean(2), families::grushin(), families::heisenberg_periodic()}) {
        EXPECT_TRUE(fam.divergence_free()) << fam.name();
        for (const Point& x : random_points(fam.dim(), 10, 3))
            for (int i = 0; i < fam.size(); ++i) {
                EXPECT_EQ(fam.div(i, x), 0.0);
                EXPECT_NEAR(fd_jacobian(fam.field(i), x).trace(), 0.0, 1e-8);
                EXPECT_LT((fam.jacobian(i, x) - fd_jacobian(fam.field(i), x)).cwiseAbs().maxCoeff(), 1e-7);
            }
    }
    // A field with nonzero divergence: sin(2 pi x) d/dx.
    VectorField f(1);
    f[0] = TrigPoly::sine(families::wave(0));
    const Point x{0.1};
    EXPECT_NEAR(f.divergence()(x), kTwoPi * std::cos(kTwoPi * 0.1), 1e-14);
}

TEST(LieBracket, ConstantFieldsCommute) {
    const auto e = families::euclidean(2);
    EXPECT_TRUE(lie_bracket(e.field(0), e.field(1)).is_zero());
}

TEST(LieBracket, GrushinBracketMatchesFiniteDifferences) {
    const auto gr = families::grushin();
    const VectorField b = lie_bracket(gr.field(0), gr.field(1));
    const Point v = b.eval({0.0, 0.0});
    EXPECT_NEAR(v[0], 0.0, 1e-12);
    EXPECT_NEAR(v[1], kTwoPi, 1e-12);
    for (const Point& x : random_points(2, 20, 4)) {
        const Eigen::VectorXd fd = fd_bracket(gr.field(0), gr.field(1), x);
        const Point an = b.eval(x);
        EXPECT_NEAR(an[0], fd(0), 1e-6);
        EXPECT_NEAR(an[1], fd(1), 1e-6);
    }
}

TEST(LieBracket, AntisymmetricAndSelfBracketVanishes) {
    const auto he = families::heisenberg_periodic();
    const VectorField ab = lie_bracket(he.field(0), he.field(1));
    const VectorField ba = lie_bracket(he.field(1), he.field(0));
    EXPECT_TRUE(lie_bracket(he.field(0), he.field(0)).is_zero());
    for (const Point& x : random_points(3, 30, 5)) {
        const Point p = ab.eval(x), q = ba.eval(x);
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(p[j], -q[j], 1e-14);
    }
}

TEST(LieBracket, JacobiIdentityResidualIsSmall) {
    for (const auto& fam : {families::grushin(), families::heisenberg_periodic()}) {
        const VectorField& X = fam.field(0);
        const VectorField& Y = fam.field(1);
        const VectorField Z = lie_bracket(X, Y);
        const VectorField a = lie_bracket(X, lie_bracket(Y, Z));
        const VectorField b = lie_bracket(Y, lie_bracket(Z, X));
        const VectorField c = lie_bracket(Z, lie_bracket(X, Y));
        for (const Point& x : random_points(fam.dim(), 30, 6)) {
            const Point pa = a.eval(x), pb = b.eval(x), pc = c.eval(x);
            for (int j = 0; j < fam.dim(); ++j) EXPECT_LT(std::abs(pa[j] + pb[j] + pc[j]), 1e-8);
        }
    }
}

TEST(BracketTree, DepthOneEntriesAreTheFields) {
    const auto he = families::heisenberg_periodic();
    const auto tree = BracketTree::build(he, 3);
    ASSERT_GE(tree.entries.size(), 2u);
    for (int i = 0; i < 2; ++i) {
        EXPECT_EQ(tree.entries[static_cast<std::size_t>(i)].word, std::vector<int>{i});
        const Point x{0.2, 0.4, 0.6};
        const Point a = tree.entries[static_cast<std::size_t>(i)].field.eval(x);
        const Point b = he.field(i).eval(x);
        for (int j = 0; j < 3; ++j) EXPECT_EQ(a[j], b[j]);
    }
}

TEST(Hormander, EuclideanStepOne) {
    const auto rep = verify_hormander(families::euclidean(2), lattice_points(2, 16), 3);
    EXPECT_TRUE(rep.satisfied);
    EXPECT_EQ(rep.step, 1);
}

TEST(Hormander, GrushinStepTwoOn64Lattice) {
    const auto rep = verify_hormander(families::grushin(), lattice_points(2, 64), 3);
    EXPECT_TRUE(rep.satisfied);
    EXPECT_EQ(rep.step, 2);
}

TEST(Hormander, HeisenbergTypeStepAtMostFour) {
    const auto rep = verify_hormander(families::heisenberg_periodic(), lattice_points(3, 16), 4);
    EXPECT_TRUE(rep.satisfied);
    EXPECT_LE(rep.step, 4);
    EXPECT_GE(rep.step, 2);
}

TEST(Hormander, SingleFieldFailsEverywhere) {
    VectorFieldFamily lone("single", {families::axis_field(2, 0)}, 0);
    const auto pts = lattice_points(2, 8);
    const auto rep = verify_hormander(lone, pts, 4);
    EXPECT_FALSE(rep.satisfied);
    EXPECT_EQ(rep.deficient.size(), pts.size());
}

TEST(Hormander, MonotoneInMaxStep) {
    const auto fam = families::heisenberg_periodic();
    const auto pts = lattice_points(3, 8);
    bool seen = false;
    for (int k = 1; k <= 5; ++k) {
        const auto rep = verify_hormander(fam, pts, k);
        if (seen) {
            EXPECT_TRUE(rep.satisfied) << k;
        }
        seen = seen || rep.satisfied;
    }
    EXPECT_TRUE(seen);
}

TEST(Hormander, RejectsBadArguments) {
    EXPECT_THROW(verify_hormander(families::grushin(), {}, 2), DomainError);
    EXPECT_THROW(verify_hormander(families::grushin(), lattice_points(2, 4), 0), DomainError);
    EXPECT_THROW(families::by_name("klein"), DomainError);
}
