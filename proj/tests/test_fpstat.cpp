#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "hmfg/fpstat.hpp"

using namespace hmfg;

namespace {

std::vector<Vec> smooth_drift(const TorusGrid& g, int m, unsigned seed, double amp = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<Vec> out;
    for (int i = 0; i < m; ++i) {
        const double a = U(rng), b = U(rng), s = U(rng);
        Vec v(g.size());
        for (Index r = 0; r < g.size(); ++r) {
            const Point x = g.point(r);
            v[r] = amp * (a * std::sin(kTwoPi * (x[0] + s)) + b * std::cos(kTwoPi * (x[g.dim() - 1] - x[0])));
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace

TEST(StationaryMeasure, ZeroDriftIsUniform) {
    for (const auto& fam : {families::grushin(), families::euclidean(2)}) {
        const TorusGrid g(2, 16);
        const Discretization disc(g, fam);
        const auto s = stationary_measure(disc);
        EXPECT_LT((s.m.values().array() - 1.0).abs().maxCoeff(), 1e-10) << fam.name();
    }
}

TEST(StationaryMeasure, GibbsDensityOnCircle) {
    double prev = INFINITY;
    for (int n : {32, 64, 128}) {
        const TorusGrid g(1, n);
        const Discretization disc(g, families::euclidean(1));
        Vec drift(g.size()), gibbs(g.size());
        for (Index r = 0; r < g.size(); ++r) {
            const double x = g.point(r)[0];
            drift[r] = kTwoPi * std::sin(kTwoPi * x);
            gibbs[r] = std::exp(-2.0 * std::cos(kTwoPi * x));
        }
        gibbs /= g.cell_volume() * gibbs.sum();
        const auto s = stationary_measure(disc, std::vector<Vec>{drift});
        const double err = (s.m.values() - gibbs).lpNorm<Eigen::Infinity>() / gibbs.maxCoeff();
        EXPECT_LT(err, 8.0 / n) << n;
        EXPECT_LT(err, prev);
        prev = err;
        EXPECT_NEAR(s.m.integral(), 1.0, 1e-12);
    }
}

TEST(StationaryMeasure, GrushinMatchesDensePerronVector) {
    const TorusGrid g(2, 32);
    const Discretization disc(g, families::grushin());
    const auto drift = smooth_drift(g, 2, 5);
    const auto s = stationary_measure(disc, drift);
    EXPECT_GT(s.delta0, 0.0);
    EXPECT_NEAR(s.m.integral(), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(s.delta0, s.m.min());

    const Eigen::MatrixXd At = Eigen::MatrixXd(disc.generator(drift).matrix).transpose();
    Eigen::EigenSolver<Eigen::MatrixXd> es(At);
    const auto ev = es.eigenvalues();
    Index k0 = 0;
    int near_zero = 0;
    for (Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev[i]) < std::abs(ev[k0])) k0 = i;
        if (std::abs(ev[i]) < 1e-8) ++near_zero;
    }
    EXPECT_EQ(near_zero, 1);
    Vec v = es.eigenvectors().col(k0).real();
    v /= g.cell_volume() * v.sum();
    EXPECT_LT((v - s.m.values()).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_GT(v.minCoeff(), 0.0);
}

TEST(StationaryMeasure, MassPreservedAndPositiveOnHeisenberg) {
    const TorusGrid g(3, 8);
    const Discretization disc(g, families::heisenberg_periodic());
    const auto s = stationary_measure(disc, smooth_drift(g, 2, 8));
    EXPECT_NEAR(s.m.integral(), 1.0, 1e-12);
    EXPECT_GT(s.delta0, 0.0);
    EXPECT_GE(s.delta1, s.delta0);
}

TEST(StationaryMeasure, CenteredSchemeWithLargeDriftIsRejected) {
    const TorusGrid g(1, 16);
    const Discretization disc(g, families::euclidean(1), Scheme::centered);
    Vec drift(g.size());
    for (Index r = 0; r < g.size(); ++r) drift[r] = 200.0 * std::sin(kTwoPi * g.point(r)[0]);
    EXPECT_THROW(stationary_measure(disc, std::vector<Vec>{drift}), SolverError);
}

TEST(HeatEvolve, ConstantsAreStationary) {
    const TorusGrid g(2, 16);
    const Discretization disc(g, families::grushin());
    const auto run = heat_evolve(disc, smooth_drift(g, 2, 1), GridFunction(g, 1.0), 1.0, 0.05);
    for (const auto& z : run.snapshots) EXPECT_LT((z.values().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(HeatEvolve, FourierDecayOnCircle) {
    const double T = 0.05;
    double prev = INFINITY;
    for (int n : {32, 64, 128}) {
        const TorusGrid g(1, n);
        const Discretization disc(g, families::euclidean(1));
        const auto phi = GridFunction::from(g, [](const Point& x) { return std::cos(kTwoPi * x[0]); });
        const double dt = 1.0 / (n * n);
        const auto run = heat_evolve(disc, {}, phi, T, dt);
        const Vec exact = std::exp(-2.0 * M_PI * M_PI * T) * phi.values();
        const double err = (run.snapshots.back().values() - exact).lpNorm<Eigen::Infinity>();
        EXPECT_LT(err, 30.0 / (n * n)) << n;
        EXPECT_LT(err, prev);
        prev = err;
    }
}

TEST(HeatEvolve, PairingWithInvariantMeasureIsConserved) {
    const TorusGrid g(2, 24);
    const Discretization disc(g, families::grushin());
    const auto drift = smooth_drift(g, 2, 3, 1.5);
    const auto s = stationary_measure(disc, drift);
    const auto phi = GridFunction::from(g, [](const Point& x) { return std::sin(kTwoPi * x[0]) + x[1] * x[1]; });
    const auto run = heat_evolve(disc, drift, phi, 5.0, 0.05, &s, 20);
    EXPECT_EQ(run.pairing.size(), 101u);
    EXPECT_LT(run.conservation_drift(), 1e-10);
    EXPECT_DOUBLE_EQ(run.times.back(), 5.0);
}

TEST(HeatEvolve, RejectsBadStep) {
    const TorusGrid g(1, 8);
    const Discretization disc(g, families::euclidean(1));
    EXPECT_THROW(heat_evolve(disc, {}, GridFunction(g), 1.0, 0.0), DomainError);
}

TEST(TransitionMatrix, IsMarkovAndMatchesColumns) {
    const TorusGrid g(2, 12);
    const Discretization disc(g, families::grushin());
    const auto drift = smooth_drift(g, 2, 4);
    const Eigen::MatrixXd P = heat_transition_matrix(disc, drift, 0.25, 1.0 / 64);
    EXPECT_LT((P.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_GT(P.minCoeff(), 0.0);
    const Eigen::MatrixXd K = heat_kernel_columns(disc, drift, {0, 77}, 0.25, 1.0 / 64);
    EXPECT_LT((K.col(0) * g.cell_volume() - P.col(0)).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_LT((K.col(1) * g.cell_volume() - P.col(77)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(ErgodicDecay, RateAndDoeblinBound) {
    // Spectral gap of the discrete generator from a dense eigensolve.
    const TorusGrid g(1, 64);
    const Discretization disc(g, families::euclidean(1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(disc.diffusion()));
    const double gap = -es.eigenvalues()[es.eigenvalues().size() - 2];
    EXPECT_NEAR(gap, 2.0 * M_PI * M_PI, 0.01 * 2.0 * M_PI * M_PI);

    const auto phi = GridFunction::from(g, [](const Point& x) { return std::cos(kTwoPi * x[0]) + 0.3 * std::sin(2 * kTwoPi * x[0]); });
    const auto d = ergodic_decay_estimate(disc, {}, phi, 3);
    EXPECT_NEAR(d.k_fit, 2.0 * M_PI * M_PI, 0.1 * 2.0 * M_PI * M_PI);
    EXPECT_GT(d.delta, 0.0);
    EXPECT_LT(d.delta, 1.0);
    EXPECT_TRUE(d.bound_holds);
    EXPECT_TRUE(d.monotone);
    EXPECT_FALSE(d.sampled);
}

TEST(ErgodicDecay, DoeblinOnEveryFamily) {
    struct Case {
        VectorFieldFamily fam;
        int n;
    };
    for (const auto& c : {Case{families::euclidean(2), 32}, Case{families::grushin(), 32},
                          Case{families::heisenberg_periodic(), 12}}) {
        const TorusGrid g(c.fam.dim(), c.n);
        const Discretization disc(g, c.fam);
        const auto phi = GridFunction::from(g, [](const Point& x) { return std::sin(kTwoPi * x[0]) * std::cos(kTwoPi * x[1]); });
        const auto d = ergodic_decay_estimate(disc, smooth_drift(g, c.fam.size(), 2, 0.5), phi, 6);
        EXPECT_GT(d.delta, 0.0) << c.fam.name();
        EXPECT_LT(d.delta, 1.0) << c.fam.name();
        EXPECT_TRUE(d.bound_holds) << c.fam.name();
        EXPECT_TRUE(d.monotone) << c.fam.name();
    }
}

TEST(ErgodicDecay, RejectsShortHorizon) {
    const TorusGrid g(1, 8);
    const Discretization disc(g, families::euclidean(1));
    EXPECT_THROW(ergodic_decay_estimate(disc, {}, GridFunction(g, 1.0), 2), DomainError);
}

TEST(GaussianEnvelope, LogKernelDecreasesWithSquaredDistance) {
    for (const auto& fam : {families::euclidean(2), families::grushin()}) {
        const TorusGrid g(2, 32);
        const Discretization disc(g, fam);
        const DistanceMap dist = cc_distance_map(g, fam, g.index({16, 16}));
        const auto e = gaussian_envelope(disc, {}, dist, 1.0 / 64, 1.0 / 2048, 0.3);
        EXPECT_LT(e.slope, 0.0) << fam.name();
        EXPECT_LT(e.correlation, -0.9) << fam.name();
        EXPECT_LT(e.upper - e.lower, 6.0) << fam.name();
    }
}
