#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "hmfg/ccgeom.hpp"
#include "hmfg/mollify.hpp"
#include "hmfg/regularity.hpp"

using namespace hmfg;

namespace {

Vec random_values(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = U(rng);
    return v;
}

}  // namespace

TEST(Mollify, ConstantsAndMeansArePreserved) {
    for (int d : {1, 2}) {
        const TorusGrid g(d, 32);
        const GridFunction c(g, Vec::Constant(g.size(), 3.25));
        EXPECT_LT((mollify(c, 0.1).values().array() - 3.25).abs().maxCoeff(), 1e-14);
        const GridFunction f(g, random_values(g.size(), 7 + d));
        EXPECT_NEAR(mollify(f, 0.13).mean(), f.mean(), 1e-13);
    }
}

TEST(Mollify, IndicatorConvergesInL1) {
    const TorusGrid g(1, 512);
    GridFunction f(g);
    for (Index i = 0; i < g.size(); ++i) f[i] = g.point(i)[0] < 0.5 ? 1.0 : 0.0;
    // Two jumps, each smeared over a width proportional to zeta: the L1
    // distance must halve with zeta.
    double prev = std::numeric_limits<double>::infinity();
    for (double z : {0.2, 0.1, 0.05}) {
        const double dist = GridFunction(g, mollify(f, z).values() - f.values()).l1_norm();
        if (std::isfinite(prev)) EXPECT_NEAR(dist / prev, 0.5, 0.05);
        prev = dist;
    }
}

TEST(Mollify, KernelIsSymmetricStochastic) {
    const TorusGrid g(2, 16);
    const Eigen::MatrixXd K(convolution_matrix(g, 0.2));
    EXPECT_LT((K - K.transpose()).cwiseAbs().maxCoeff(), 1e-16);
    EXPECT_LT((K.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
    EXPECT_GE(K.minCoeff(), 0.0);
}

TEST(Mollify, RejectsBadRadius) {
    const TorusGrid g(1, 16);
    const GridFunction f(g);
    EXPECT_THROW(mollify(f, 0.0), DomainError);
    EXPECT_THROW(mollify(f, 0.5), DomainError);
}

TEST(Regularity, ConstantHasZeroSeminorms) {
    const TorusGrid g(2, 12);
    const GridFunction u(g, Vec::Constant(g.size(), -2.0));
    const auto r = regularity_norms(u, 0.5, families::grushin());
    EXPECT_DOUBLE_EQ(r.sup, 2.0);
    EXPECT_EQ(r.holder_seminorm, 0.0);
    ASSERT_EQ(r.sobolev.size(), 2u);
    EXPECT_NEAR(r.sobolev[0].value, 2.0, 1e-12);  // only the L^2 norm of u itself
}

TEST(Regularity, LipschitzSeminormOfCosineTendsToTwoPi) {
    // The best pair straddles x = 1/4 with midpoint h/2 off it, so the quotient
    // is 2 sin(pi h)/h cos(pi h) = 2 pi (1 - 2 (pi h)^2 / 3 + ...): second order.
    double prev_err = std::numeric_limits<double>::infinity();
    for (int n : {32, 64, 128}) {
        const TorusGrid g(1, n);
        GridFunction u(g);
        for (Index i = 0; i < g.size(); ++i) u[i] = std::cos(kTwoPi * g.point(i)[0]);
        const double err = std::abs(regularity_norms(u, 1.0, families::euclidean(1)).holder_seminorm - kTwoPi);
        EXPECT_NEAR(err, 2.0 * kTwoPi * std::pow(std::numbers::pi / n, 2) / 3.0, 0.05 * err);
        if (std::isfinite(prev_err)) EXPECT_GE(std::log2(prev_err / err), 1.8);
        prev_err = err;
    }
}

TEST(Regularity, PowerOfDistanceSaturatesAtOne) {
    const TorusGrid g(1, 64);
    const double alpha = 0.5;
    GridFunction u(g);
    for (Index i = 0; i < g.size(); ++i) u[i] = std::pow(torus_distance(g.point(0), g.point(i), 1), alpha);
    const auto r = regularity_norms(u, alpha, families::euclidean(1));
    EXPECT_NEAR(r.holder_seminorm, 1.0, 1e-12);
}

TEST(Regularity, SubsamplingIsDeterministicAndBounded) {
    const TorusGrid g(2, 24);  // 576 nodes, 165600 pairs
    const GridFunction u(g, random_values(g.size(), 3));
    const auto a = regularity_norms(u, 0.7, families::euclidean(2));
    const auto b = regularity_norms(u, 0.7, families::euclidean(2));
    EXPECT_LE(a.pairs, kMaxHolderPairs);
    EXPECT_EQ(a.pairs, b.pairs);
    EXPECT_EQ(a.holder_seminorm, b.holder_seminorm);
}

TEST(CCDistance, EuclideanCircleWrapsAround) {
    const TorusGrid g(1, 64);
    const auto mp = cc_distance_map(g, families::euclidean(1), 0);
    EXPECT_EQ(mp[0], 0.0);
    EXPECT_NEAR(mp[g.nearest({0.75})], 0.25, 2.0 * g.h());
}

TEST(CCDistance, EuclideanPlaneMatchesFlatTorusMetric) {
    const TorusGrid g(2, 48);
    const auto mp = cc_distance_map(g, families::euclidean(2), g.index({5, 17}));
    for (Index i = 0; i < g.size(); ++i)
        EXPECT_NEAR(mp[i], torus_distance(g.point(mp.source), g.point(i), 2), 2.0 * g.h());
    const auto fit = distance_equivalence_fit({mp}, 1);
    EXPECT_NEAR(fit.exponent, 1.0, 0.05);
    EXPECT_NEAR(fit.C_lower, 1.0, 0.05);
    EXPECT_NEAR(fit.C_upper, 1.0, 0.1);
}

TEST(CCDistance, GrushinSymmetryAndTriangleInequality) {
    const TorusGrid g(2, 32);
    const auto fam = families::grushin();
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<Index> node(0, g.size() - 1);
    std::vector<DistanceMap> maps;
    for (int s = 0; s < 8; ++s) maps.push_back(cc_distance_map(g, fam, node(rng)));
    for (const auto& a : maps) {
        EXPECT_EQ(a[a.source], 0.0);
        EXPECT_EQ(a.unreachable, 0);
        for (const auto& b : maps) EXPECT_NEAR(a[b.source], b[a.source], 3.0 * g.h());
    }
    int triples = 0;
    for (const auto& x : maps)
        for (const auto& y : maps)
            for (int k = 0; k < 16; ++k, ++triples) {
                const Index z = node(rng);
                EXPECT_LE(x[z], x[y.source] + y[z] + 6.0 * g.h());
            }
    EXPECT_GE(triples, 1000);
}

TEST(CCDistance, GrushinDegenerateAxisMatchesGeodesicShooting) {
    // Reference lengths of Grushin geodesics from (0,0) to (0,delta), from the
    // boundary-value problem solved by shooting with an adaptive ODE integrator.
    const std::vector<double> delta{0.04, 0.06, 0.08, 0.10, 0.12, 0.14, 0.16};
    const std::vector<double> ref{0.20201, 0.24864, 0.28867, 0.32443, 0.35727, 0.38795, 0.41696};
    const TorusGrid g(2, 128);
    CCGraphOptions o;
    o.cutoff = 0.6;
    const auto mp = cc_distance_map(g, families::grushin(), g.index({0, 0}), o);
    for (std::size_t k = 0; k < delta.size(); ++k)
        EXPECT_NEAR(mp[g.nearest({0.0, delta[k]})], ref[k], mp.error_bar()) << "delta " << delta[k];
    const auto fit = distance_equivalence_fit({mp}, 2, 0.17, along_axis(1, 2), 0.039);
    EXPECT_NEAR(fit.exponent, 0.5, 0.1);
    EXPECT_GT(fit.min_ratio, 0.0);
    const auto Q = homogeneous_dimension_fit(mp, {0.08, 0.1, 0.125, 0.15, 0.2, 0.25});
    EXPECT_NEAR(Q.Q, 3.0, 0.3);
}

TEST(CCDistance, HomogeneousDimensionAtGenericPoints) {
    const TorusGrid g(2, 96);
    const std::vector<double> radii{0.08, 0.1, 0.125, 0.15, 0.2, 0.25};
    CCGraphOptions o;
    o.cutoff = 0.3;
    const auto e = homogeneous_dimension_fit(cc_distance_map(g, families::euclidean(2), 0, o), radii);
    EXPECT_NEAR(e.Q, 2.0, 0.15);
    const auto a = homogeneous_dimension_fit(cc_distance_map(g, families::grushin(), g.nearest({0.25, 0.5}), o), radii);
    const auto b = homogeneous_dimension_fit(cc_distance_map(g, families::grushin(), g.nearest({0.125, 0.5}), o), radii);
    EXPECT_NEAR(a.Q, b.Q, 0.3);
}

TEST(CCDistance, RefinementChangesDistancesByOrderH) {
    const auto fam = families::grushin();
    const TorusGrid c(2, 32), f(2, 64);
    const auto mc = cc_distance_map(c, fam, 0), mf = cc_distance_map(f, fam, 0);
    double diff = 0.0;
    for (Index i = 0; i < c.size(); ++i) diff = std::max(diff, std::abs(mc[i] - mf[f.nearest(c.point(i))]));
    EXPECT_LE(diff, 3.0 * c.h());
}

TEST(CCDistance, RejectsMismatchedInput) {
    const TorusGrid g(2, 8);
    EXPECT_THROW(cc_distance_map(g, families::euclidean(1), 0), DomainError);
    EXPECT_THROW(cc_distance_map(g, families::grushin(), g.size()), DomainError);
    const TorusGrid g1(1, 8);
    const auto mp = cc_distance_map(g1, families::euclidean(1), 0);
    EXPECT_THROW(homogeneous_dimension_fit(mp, {0.1}), DomainError);
}
