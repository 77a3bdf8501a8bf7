#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <optional>
#include <random>
#include <vector>

#include "hmfg/ccgeom.hpp"
#include "hmfg/operators.hpp"

namespace hmfg {

/// Invariant probability density of the generator with drift g.
struct StationaryMeasure {
    GridFunction m;
    double delta0 = 0.0;  ///< min m
    double delta1 = 0.0;  ///< max m
    double eta = 0.0;     ///< resolvent shift
    int iterations = 0;
    double increment = 0.0;  ///< last ||m^{k+1} - m^k||_1

    explicit StationaryMeasure(const TorusGrid& g) : m(g) {}
};

struct StationaryOptions {
    double tol = 1e-12;
    int max_iter = 200000;
    double eta = 0.0;  ///< 0 selects 2 (1 + ||g||_inf^2)
    double negative_tolerance = -1e-13;
    double round_off_band = 1e-9;
};

/// Solve A^T m = 0, h^d sum m = 1 for A = generator(g), by inverse power
/// iteration on the shifted resolvent: (eta I - A)^T m^{k+1} = eta m^k.
/// The shifted matrix has column sums eta, so mass is preserved exactly
/// by every step and no renormalization happens inside the loop.
inline StationaryMeasure stationary_measure(const Discretization& disc, const SplitDrift& g = {},
                                           const StationaryOptions& opt = {},
                                           const std::optional<Vec>& warm = std::nullopt) {
    const TorusGrid& grid = disc.grid();
    const Index N = grid.size();
    const SparseMatrix A = disc.generator(g).matrix;
    StationaryMeasure out(grid);
    const double gs = g.sup();
    out.eta = opt.eta > 0.0 ? opt.eta : 2.0 * (1.0 + gs * gs);
    const SparseMatrix S = SparseMatrix(shifted(out.eta, A, -1.0).transpose());
    const LinearSolver solver(S);

    Vec m = Vec::Constant(N, 1.0);
    if (warm) {
        require(warm->size() == N, "stationary_measure: warm start size mismatch");
        m = *warm / (grid.cell_volume() * warm->sum());
    }
    for (int k = 1; k <= opt.max_iter; ++k) {
        const Vec next = solver.solve(out.eta * m);
        const double minv = next.minCoeff();
        if (minv < opt.negative_tolerance)
            throw SolverError("stationary_measure: negative density (scheme is not monotone)", minv);
        const double inc = grid.cell_volume() * (next - m).lpNorm<1>();
        m = next;
        out.iterations = k;
        // Below round_off_band a non-decreasing increment means the iteration
        // sits on its round-off floor (reached on fine grids before tol).
        const bool floor_reached = k > 1 && inc < opt.round_off_band && inc >= out.increment;
        out.increment = inc;
        if (inc < opt.tol || floor_reached) break;
        if (k == opt.max_iter) throw SolverError("stationary_measure: no convergence", inc);
    }
    m /= grid.cell_volume() * m.sum();
    out.m.values() = m;
    out.delta0 = m.minCoeff();
    out.delta1 = m.maxCoeff();
    return out;
}

/// Implicit Euler evolution of z_t = A z.
struct HeatRun {
    GridFunction phi;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<GridFunction> snapshots;
    std::vector<double> pairing;  ///< <z(t), m>_h per step, when m is supplied

    explicit HeatRun(const GridFunction& p) : phi(p) {}
    /// max_t |<z(t), m> - <phi, m>|.
    double conservation_drift() const {
        double d = 0.0;
        for (double p : pairing) d = std::max(d, std::abs(p - pairing.front()));
        return d;
    }
};

/// Evolve phi to time T with step dt. Snapshots are kept every
/// `snapshot_every` steps (and at T).
inline HeatRun heat_evolve(const Discretization& disc, const SplitDrift& g, const GridFunction& phi, double T,
                           double dt, const StationaryMeasure* m = nullptr, int snapshot_every = 1) {
    require(dt > 0.0 && T >= 0.0, "heat_evolve: need dt > 0 and T >= 0");
    require(snapshot_every >= 1, "heat_evolve: snapshot_every must be positive");
    const TorusGrid& grid = disc.grid();
    const int steps = static_cast<int>(std::ceil(T / dt - 1e-9));
    const double step = steps > 0 ? T / steps : dt;
    const LinearSolver solver(shifted(1.0, disc.generator(g).matrix, -step));
    HeatRun run(phi);
    run.dt = step;
    Vec z = phi.values();
    auto record = [&](int k, bool snap) {
        if (snap) {
            run.times.push_back(k * step);
            run.snapshots.emplace_back(grid, z);
        }
        if (m) run.pairing.push_back(grid.cell_volume() * z.dot(m->m.values()));
    };
    record(0, true);
    for (int k = 1; k <= steps; ++k) {
        z = solver.solve(z);
        record(k, k % snapshot_every == 0 || k == steps);
    }
    return run;
}

inline constexpr double kKernelStep = 1.0 / 1024.0;
inline constexpr Index kDenseKernelLimit = 2304;
inline constexpr int kSampledColumns = 32;

/// Discrete transition matrix P = (I - dt A)^{-T/dt} of the implicit Euler
/// scheme for the time-T heat semigroup, with T/dt a power of two.
inline Eigen::MatrixXd heat_transition_matrix(const Discretization& disc, const SplitDrift& g, double T = 1.0,
                                              double dt = kKernelStep) {
    const Index N = disc.grid().size();
    require(N <= 4 * kDenseKernelLimit, "heat_transition_matrix: grid too large for a dense kernel");
    const double ratio = T / dt;
    const int squarings = static_cast<int>(std::lround(std::log2(ratio)));
    require(squarings >= 0 && std::abs(std::ldexp(1.0, squarings) - ratio) < 1e-9,
            "heat_transition_matrix: T/dt must be a power of two");
    const Eigen::MatrixXd M = Eigen::MatrixXd(shifted(1.0, disc.generator(g).matrix, -dt));
    Eigen::MatrixXd P = M.partialPivLu().inverse();
    for (int s = 0; s < squarings; ++s) P = (P * P).eval();
    return P;
}

/// Columns y of the time-T kernel as densities K(T, ., y) = P e_y / h^d.
inline Eigen::MatrixXd heat_kernel_columns(const Discretization& disc, const SplitDrift& g,
                                           const std::vector<Index>& columns, double T = 1.0,
                                           double dt = kKernelStep) {
    const TorusGrid& grid = disc.grid();
    const int steps = static_cast<int>(std::lround(T / dt));
    require(steps >= 1 && std::abs(steps * dt - T) < 1e-9, "heat_kernel_columns: T must be a multiple of dt");
    const LinearSolver solver(shifted(1.0, disc.generator(g).matrix, -dt));
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(grid.size(), static_cast<Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) Z(columns[c], static_cast<Index>(c)) = 1.0;
    for (int s = 0; s < steps; ++s)
        for (Index c = 0; c < Z.cols(); ++c) Z.col(c) = solver.solve(Z.col(c));
    return Z / grid.cell_volume();
}

struct DecayRecord {
    int n;
    double error;       ///< ||P^n phi - <phi, m>_h||_inf
    double theorem;     ///< C_thm exp(-k_thm n) ||phi||_inf
};

/// Doeblin constant and exponential decay of the time-1 semigroup.
struct ErgodicDecay {
    double delta = 0.0;       ///< min_{x,y} K(1, x, y), with U the whole torus
    bool sampled = false;     ///< delta from kSampledColumns random columns only
    double C_thm = 0.0;
    double k_thm = 0.0;
    double C_fit = 0.0;
    double k_fit = 0.0;
    int fit_points = 0;
    double floor = 0.0;       ///< round-off level below which errors are not fitted
    bool bound_holds = true;  ///< every e_n within the theorem's envelope
    bool monotone = true;     ///< e_n nonincreasing up to the floor
    std::vector<DecayRecord> errors;
};

/// Errors e_n = ||P^n phi - <phi, m>_h 1||_inf for n = 0..n_max, a fit
/// e_n ~ C exp(-k n) over the points above the round-off floor, and the
/// Doeblin pair C_thm = 2 / (1 - delta), k_thm = -ln(1 - delta).
inline ErgodicDecay ergodic_decay_estimate(const Discretization& disc, const SplitDrift& g,
                                          const GridFunction& phi, int n_max, const StationaryMeasure* measure = nullptr,
                                          std::uint64_t seed = 0) {
    require(n_max >= 3, "ergodic_decay_estimate: n_max must be at least 3");
    const TorusGrid& grid = disc.grid();
    const Index N = grid.size();
    ErgodicDecay out;

    std::optional<StationaryMeasure> own;
    if (!measure) {
        own.emplace(stationary_measure(disc, g));
        measure = &*own;
    }
    const double mean = grid.cell_volume() * phi.values().dot(measure->m.values());
    const double phinorm = phi.sup_norm();
    out.floor = 1e-12 * std::max(1.0, phinorm);

    std::vector<double> err;
    if (N <= kDenseKernelLimit) {
        const Eigen::MatrixXd P = heat_transition_matrix(disc, g);
        out.delta = P.minCoeff() / grid.cell_volume();
        Vec z = phi.values();
        for (int n = 1; n <= n_max; ++n) {
            z = P * z;
            err.push_back((z.array() - mean).abs().maxCoeff());
        }
    } else {
        out.sampled = true;
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<Index> pick(0, N - 1);
        std::vector<Index> cols;
        for (int c = 0; c < kSampledColumns; ++c) cols.push_back(pick(rng));
        out.delta = heat_kernel_columns(disc, g, cols).minCoeff();
        const LinearSolver solver(shifted(1.0, disc.generator(g).matrix, -kKernelStep));
        const int per_unit = static_cast<int>(std::lround(1.0 / kKernelStep));
        Vec z = phi.values();
        for (int n = 1; n <= n_max; ++n) {
            for (int s = 0; s < per_unit; ++s) z = solver.solve(z);
            err.push_back((z.array() - mean).abs().maxCoeff());
        }
    }
    if (!(out.delta > 0.0))
        throw SolverError("ergodic_decay_estimate: time-1 kernel is not strictly positive", out.delta);
    out.delta = std::min(out.delta, 1.0 - 1e-15);
    out.C_thm = 2.0 / (1.0 - out.delta);
    out.k_thm = -std::log1p(-out.delta);

    err.insert(err.begin(), (phi.values().array() - mean).abs().maxCoeff());
    std::vector<double> xs, ys;
    for (int n = 0; n <= n_max; ++n) {
        const double e = err[static_cast<std::size_t>(n)];
        const double bound = out.C_thm * std::exp(-out.k_thm * n) * phinorm;
        out.errors.push_back({n, e, bound});
        if (e > bound + out.floor) out.bound_holds = false;
        if (n > 0 && e > err[static_cast<std::size_t>(n - 1)] + out.floor) out.monotone = false;
        if (e > 100.0 * out.floor) {
            xs.push_back(n);
            ys.push_back(std::log(e));
        }
    }
    out.fit_points = static_cast<int>(xs.size());
    if (xs.size() >= 2) {
        const auto f = detail::fit_line(xs, ys);
        out.k_fit = -f.slope;
        out.C_fit = std::exp(f.intercept);
    }
    return out;
}

/// Affine envelopes of log K(t, x, y) against d_CC(x, y)^2 / t for one column y.
struct GaussianEnvelope {
    double slope = 0.0;        ///< least-squares slope (a stand-in for -M)
    double correlation = 0.0;  ///< Pearson correlation of log K with d^2 / t
    double lower = 0.0;        ///< min residual about the fit
    double upper = 0.0;        ///< max residual about the fit
    std::size_t points = 0;
};

/// Compare log K(t, ., y) with d_CC(., y)^2 / t. Nodes farther than
/// `max_distance` (where the torus wraps or round-off dominates) are skipped.
inline GaussianEnvelope gaussian_envelope(const Discretization& disc, const SplitDrift& g,
                                          const DistanceMap& dist, double t, double dt, double max_distance = 0.35) {
    const Eigen::MatrixXd K = heat_kernel_columns(disc, g, {dist.source}, t, dt);
    std::vector<double> xs, ys;
    for (Index r = 0; r < K.rows(); ++r) {
        const double d = dist[r];
        if (!std::isfinite(d) || d > max_distance || K(r, 0) <= 1e-200) continue;
        xs.push_back(d * d / t);
        ys.push_back(std::log(K(r, 0)));
    }
    GaussianEnvelope e;
    e.points = xs.size();
    require(e.points >= 3, "gaussian_envelope: too few points");
    const auto f = detail::fit_line(xs, ys);
    e.slope = f.slope;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxy = 0, sxx = 0, syy = 0;
    e.lower = std::numeric_limits<double>::infinity();
    e.upper = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
        const double res = ys[i] - (f.intercept + f.slope * xs[i]);
        e.lower = std::min(e.lower, res);
        e.upper = std::max(e.upper, res);
    }
    e.correlation = sxy / std::sqrt(sxx * syy);
    return e;
}

inline void write_decay_csv(const std::string& path, const ErgodicDecay& d) {
    std::ofstream os(path);
    if (!os) throw DomainError("cannot write " + path);
    os << "n,error,theorem_bound\n";
    char buf[128];
    for (const auto& e : d.errors) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.n, e.error, e.theorem);
        os << buf;
    }
}

}  // namespace hmfg
