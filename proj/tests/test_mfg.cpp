#include <gtest/gtest.h>

#include <random>

#include "hmfg/mfg.hpp"
#include "oracles.hpp"

using namespace hmfg;

namespace {

Coupling smoothed(const TorusGrid& g, const std::string& G = "identity", double kappa = 1.0, double sigma = 0.15) {
    return make_coupling(g, "smoothed-local", sigma, G, kappa);
}

// Gibbs form e^{-2u}/Z of the invariant density for g = -D_X u.
Vec gibbs(const TorusGrid& g, const Vec& u) {
    Vec e = (-2.0 * (u.array() - u.minCoeff())).exp();
    return e / (g.cell_volume() * e.sum());
}

}  // namespace

TEST(Coupling, UniformDensityWithIdentity) {
    const TorusGrid g(2, 16);
    const Coupling V = smoothed(g);
    EXPECT_LT((V(Vec::Constant(g.size(), 1.0)).array() - 1.0).abs().maxCoeff(), 1e-13);
}

TEST(Coupling, ConstantKindIgnoresDensity) {
    const TorusGrid g(1, 16);
    const Coupling V = Coupling::constant_value(g, 0.7);
    std::mt19937_64 rng(1);
    const Vec m = random_density(g, rng);
    EXPECT_TRUE((V(m).array() == 0.7).all());
    EXPECT_EQ(V.lipschitz_l1(), 0.0);
}

TEST(Coupling, SampledMonotonicityForIncreasingG) {
    const TorusGrid g(2, 16);
    for (const std::string G : {"identity", "arctan", "log1p"}) {
        const Coupling V = smoothed(g, G);
        std::mt19937_64 rng(3);
        for (int s = 0; s < 100; ++s) {
            const Vec m1 = random_density(g, rng), m2 = random_density(g, rng);
            EXPECT_GE(g.cell_volume() * (V(m1) - V(m2)).dot(m1 - m2), -1e-12) << G;
        }
    }
}

TEST(Coupling, LipschitzAndSupBounds) {
    const TorusGrid g(2, 20);
    const Coupling V = smoothed(g, "arctan", 2.0);
    std::mt19937_64 rng(5);
    for (int s = 0; s < 50; ++s) {
        const Vec m1 = random_density(g, rng, 2.5), m2 = random_density(g, rng, 2.5);
        const double lhs = (V(m1) - V(m2)).lpNorm<Eigen::Infinity>();
        EXPECT_LE(lhs, V.lipschitz_l1() * g.cell_volume() * (m1 - m2).lpNorm<1>() + 1e-14);
        EXPECT_LE(V(m1).lpNorm<Eigen::Infinity>(), V.sup_bound() + 1e-14);
    }
}

TEST(Coupling, ValidatesParameters) {
    const TorusGrid g(1, 16);
    EXPECT_THROW(make_coupling(g, "smoothed-local", 0.6), DomainError);
    EXPECT_THROW(make_coupling(g, "smoothed-local", 0.0), DomainError);
    EXPECT_THROW(make_coupling(g, "local", 0.1), DomainError);
    EXPECT_THROW(make_coupling(g, "smoothed-local", 0.1, "negative", 1.0, 0.0, true), DomainError);
    EXPECT_NO_THROW(make_coupling(g, "smoothed-local", 0.1, "negative"));
}

TEST(Uniqueness, QuadraticIsStrictlyConvexAndArctanMonotone) {
    const TorusGrid g(2, 16);
    const auto rep = check_uniqueness_conditions(smoothed(g, "arctan"), QuadraticModel(2), 200, 1000);
    EXPECT_TRUE(rep.monotone);
    EXPECT_TRUE(rep.g_convex);
    EXPECT_TRUE(rep.strictly_g_convex);
    EXPECT_GE(rep.monotone_min, -1e-12);
}

TEST(Uniqueness, QuadraticGapIsHalfSquaredDistance) {
    const QuadraticModel Q(2);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int s = 0; s < 100; ++s) {
        const HVec q1{N(rng), N(rng)}, q2{N(rng), N(rng)};
        const HVec g1 = Q.auxiliary(Point{}, q1);
        const double gap = Q.hamiltonian(Point{}, q2) - Q.hamiltonian(Point{}, q1) + g1[0] * (q2[0] - q1[0]) +
                           g1[1] * (q2[1] - q1[1]);
        const double half = 0.5 * ((q2[0] - q1[0]) * (q2[0] - q1[0]) + (q2[1] - q1[1]) * (q2[1] - q1[1]));
        EXPECT_NEAR(gap, half, 1e-12);
    }
}

TEST(Uniqueness, LinearModelPassesThroughEqualityClause) {
    const TorusGrid g(2, 12);
    const auto rep = check_uniqueness_conditions(make_coupling(g, "linear-convolution", 0.2), LinearModel(2), 100, 900);
    EXPECT_TRUE(rep.g_convex);
    EXPECT_TRUE(rep.strictly_g_convex);
    EXPECT_NEAR(rep.g_convex_min, 0.0, 1e-12);
}

TEST(Uniqueness, DecreasingNonlinearityFailsMonotonicity) {
    const TorusGrid g(1, 32);
    const auto rep = check_uniqueness_conditions(make_coupling(g, "smoothed-local", 0.1, "negative"), QuadraticModel(1));
    EXPECT_FALSE(rep.monotone);
}

TEST(SystemResidual, ExactTrivialSolution) {
    const TorusGrid g(2, 12);
    const Discretization disc(g, families::grushin());
    const auto r = system_residual(SystemKind::ergodic, disc, TrivialModel(2), Coupling::constant_value(g, 0.4), 0.4,
                                   Vec::Zero(g.size()), Vec::Constant(g.size(), 1.0));
    EXPECT_LE(r.hjb, 1e-13);
    EXPECT_LE(r.fp, 1e-13);
    EXPECT_LE(std::abs(r.mass), 1e-13);
    EXPECT_LE(std::abs(r.mean), 1e-13);
}

TEST(SystemResidual, LinearScalingUnderPerturbation) {
    const TorusGrid g(1, 32);
    const Discretization disc(g, families::euclidean(1));
    const QuadraticModel Q(1);
    const Coupling V = smoothed(g);
    const auto sol = solve_ergodic_mfg(disc, Q, V);
    std::vector<double> xs, ys;
    for (double eps : {1e-4, 1e-3, 1e-2}) {
        Vec u = sol.u.values();
        for (Index r = 0; r < u.size(); ++r) u[r] += eps * std::cos(kTwoPi * g.point(r)[0]);
        const auto res = system_residual(SystemKind::ergodic, disc, Q, V, sol.lambda, u, sol.m.m.values());
        xs.push_back(std::log(eps));
        ys.push_back(std::log(res.hjb));
    }
    const auto f = detail::fit_line(xs, ys);
    EXPECT_NEAR(f.slope, 1.0, 0.1);
}

TEST(SystemResidual, MassErrorIsExact) {
    const TorusGrid g(1, 10);
    const Discretization disc(g, families::euclidean(1));
    Vec m = Vec::Constant(10, 1.0);
    m[3] = 1.5;
    const auto r = system_residual(SystemKind::discounted, disc, TrivialModel(1), Coupling::constant_value(g, 0.0), 1.0,
                                   Vec::Zero(10), m);
    EXPECT_DOUBLE_EQ(r.mass, 0.1 * m.sum() - 1.0);
}

TEST(DiscountedMFG, DecoupledTrivialSystem) {
    const TorusGrid g(2, 16);
    const Discretization disc(g, families::euclidean(2));
    const auto s = solve_discounted_mfg(disc, TrivialModel(2), Coupling::constant_value(g, 0.6), 0.3);
    EXPECT_LT((s.u.values().array() - 2.0).abs().maxCoeff(), 1e-12);
    EXPECT_LT((s.m.m.values().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_LE(s.iterations, 2);
}

TEST(DiscountedMFG, GrushinResidualsAndPositivity) {
    const TorusGrid g(2, 32);
    const Discretization disc(g, families::grushin());
    const auto s = solve_discounted_mfg(disc, QuadraticModel(2), smoothed(g, "identity", 1.0, 0.2), 0.5);
    EXPECT_LE(s.hjb_residual, 1e-7);
    EXPECT_LE(s.fp_residual, 1e-7);
    EXPECT_GT(s.m.delta0, 0.0);
    EXPECT_NEAR(s.m.m.integral(), 1.0, 1e-12);
}

TEST(DiscountedMFG, GibbsIdentityOnCircle) {
    std::vector<double> C;
    for (int n : {32, 64, 128}) {
        const TorusGrid g(1, n);
        const Discretization disc(g, families::euclidean(1));
        const auto s = solve_discounted_mfg(disc, QuadraticModel(1, [](const Point& x) { return std::cos(kTwoPi * x[0]); }), smoothed(g), 1.0);
        const double err = (s.m.m.values() - gibbs(g, s.u.values())).lpNorm<Eigen::Infinity>();
        C.push_back(err / g.h());
        EXPECT_LE(s.hjb_residual, 1e-7);
    }
    const double ratio = *std::max_element(C.begin(), C.end()) / *std::min_element(C.begin(), C.end());
    EXPECT_LE(ratio, 2.0);
}

TEST(DiscountedMFG, RejectsBadParameters) {
    const TorusGrid g(1, 8);
    const Discretization disc(g, families::euclidean(1));
    MFGOptions o;
    o.theta = 0.0;
    EXPECT_THROW(solve_discounted_mfg(disc, TrivialModel(1), Coupling::constant_value(g, 0.0), 1.0, o), DomainError);
    EXPECT_THROW(solve_discounted_mfg(disc, TrivialModel(1), Coupling::constant_value(g, 0.0), -1.0), DomainError);
}

TEST(ErgodicMFG, DecoupledTrivialSystem) {
    const TorusGrid g(2, 12);
    const Discretization disc(g, families::grushin());
    const auto s = solve_ergodic_mfg(disc, TrivialModel(2), Coupling::constant_value(g, 0.25));
    EXPECT_NEAR(s.lambda, 0.25, 1e-12);
    EXPECT_LT(s.u.sup_norm(), 1e-10);
    EXPECT_LT((s.m.m.values().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(ErgodicMFG, MatchesNewtonOracle) {
    const TorusGrid g(1, 24);
    const Discretization disc(g, families::euclidean(1));
    const Coupling V = smoothed(g, "arctan", 2.0);
    const auto s = solve_ergodic_mfg(disc, QuadraticModel(1), V);
    const auto o = oracle::ergodic_newton_1d(disc, V, Vec::Zero(24), Vec::Constant(24, 1.0));
    ASSERT_LT(o.residual, 1e-11);
    EXPECT_NEAR(s.lambda, o.lambda, 1e-5);
    EXPECT_LT((s.u.values() - o.w).lpNorm<Eigen::Infinity>(), 1e-5);
    EXPECT_LT((s.m.m.values() - o.m).lpNorm<Eigen::Infinity>(), 1e-5);
    EXPECT_FALSE(s.warnings.empty());
}

TEST(ErgodicMFG, ContinuationBoundsAndCauchyGaps) {
    const TorusGrid g(2, 16);
    const Discretization disc(g, families::grushin());
    const LinearModel model(2, 1.0, [](const Point& x) { return std::cos(kTwoPi * x[0]) + 0.5 * std::sin(kTwoPi * x[1]); });
    const auto s = solve_ergodic_mfg(disc, model, smoothed(g, "log1p", 1.5));
    ASSERT_GE(s.rho_path.size(), 13u);
    for (const auto& st : s.rho_path) EXPECT_LE(std::abs(st.lambda), st.bound + 1e-8);
    const std::size_t n = s.rho_path.size();
    for (std::size_t k = n - 3; k < n; ++k)
        EXPECT_LT(std::abs(s.rho_path[k].lambda - s.rho_path[k - 1].lambda),
                  std::abs(s.rho_path[k - 1].lambda - s.rho_path[k - 2].lambda));
    EXPECT_LE(std::abs(s.rho_path[n - 1].lambda - s.rho_path[n - 2].lambda), 1e-6);
    double wmax = 0.0;
    for (const auto& st : s.rho_path) wmax = std::max(wmax, st.w_sup);
    EXPECT_LT(wmax, 10.0);
    EXPECT_NEAR(s.u.mean(), 0.0, 1e-12);
    EXPECT_LE(s.hjb_residual, 1e-6);
    EXPECT_TRUE(s.warnings.empty());
}

TEST(ErgodicMFG, RandomStartsAgree) {
    const TorusGrid g(2, 12);
    const Discretization disc(g, families::grushin());
    const Coupling V = smoothed(g, "arctan", 1.0);
    std::optional<MFGSolution> ref;
    std::mt19937_64 rng(17);
    for (int s = 0; s < 3; ++s) {
        const Vec u0 = 2.0 * random_density(g, rng).array().log();
        const Vec m0 = random_density(g, rng);
        const auto sol = solve_ergodic_mfg(disc, QuadraticModel(2), V, {}, u0, m0);
        if (!ref) {
            ref = sol;
            continue;
        }
        EXPECT_NEAR(sol.lambda, ref->lambda, 1e-6);
        EXPECT_LT((sol.u.values() - ref->u.values()).lpNorm<Eigen::Infinity>(), 1e-6);
        EXPECT_LT(g.cell_volume() * (sol.m.m.values() - ref->m.m.values()).lpNorm<1>(), 1e-6);
    }
}
