#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hmfg/mfg.hpp"
#include "hmfg/transport.hpp"

namespace hmfg {

// ---------------------------------------------------------------------------
// Empirical-average coupling
// ---------------------------------------------------------------------------

enum class QuadratureMode { automatic, exact, tensor, monte_carlo };

struct EmpiricalCoupling {
    Vec V;
    double se = 0.0;      ///< max over nodes of the Monte Carlo standard error (0 when exact)
    std::string method;   ///< "exact", "tensor" or "monte-carlo"
    long samples = 0;     ///< quadrature nodes or Monte Carlo draws
    bool inconclusive = false;  ///< se above the requested target
};

struct EmpiricalOptions {
    QuadratureMode mode = QuadratureMode::automatic;
    long budget = 100000;         ///< Monte Carlo draws
    long tensor_limit = 200000;   ///< largest tensor grid used automatically
    double target_se = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 1;
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Kernel of a coupling as a dense density table phi(x - y) with row supports.
struct KernelTable {
    Eigen::MatrixXd phi;  // phi(x, y) as a density in y
    std::vector<std::vector<Index>> support;

    explicit KernelTable(const Coupling& W) {
        const Index N = W.grid().size();
        phi.resize(N, N);
        support.resize(static_cast<std::size_t>(N));
        for (Index x = 0; x < N; ++x)
            for (Index y = 0; y < N; ++y) {
                phi(x, y) = W.kernel(x, y);
                if (phi(x, y) != 0.0) support[static_cast<std::size_t>(x)].push_back(y);
            }
    }
};

/// W[(1/N)(delta_x + sum_a delta_{y_a})](x) at every x, for a smoothed-local
/// coupling. `base` holds sum_a phi(., y_a).
inline void smoothed_atoms(const Coupling& W, const KernelTable& K, int N, const Vec& base, Vec& out) {
    const double hd = W.grid().cell_volume();
    const auto& G = W.nonlinearity().f;
    for (Index x = 0; x < out.size(); ++x) {
        double s = 0.0;
        for (Index z : K.support[static_cast<std::size_t>(x)])
            s += K.phi(x, z) * hd * G((base[z] + K.phi(z, x)) / N);
        // Nodes outside the support contribute phi(x, z) = 0.
        out[x] = W.strength() * s;
    }
}

inline std::vector<double> cumulative(const TorusGrid& g, const Vec& m) {
    std::vector<double> c(static_cast<std::size_t>(m.size()));
    double acc = 0.0;
    for (Index i = 0; i < m.size(); ++i) {
        acc += g.cell_volume() * m[i];
        c[static_cast<std::size_t>(i)] = acc;
    }
    for (double& v : c) v /= acc;
    return c;
}

inline Index sample_node(const std::vector<double>& cdf, std::mt19937_64& rng) {
    const double u = unit_draw(rng);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<Index>(static_cast<Index>(it - cdf.begin()), static_cast<Index>(cdf.size()) - 1);
}

}  // namespace detail

/// Player-i coupling of the N-player game:
///   V_i(x) = E[ W[(1/N)(delta_x + sum_{j != i} delta_{X^j})](x) ],  X^j ~ m_j independent.
/// The own atom is always present, so N = 1 gives W[delta_x](x). Constant and
/// linear couplings are evaluated in closed form. Otherwise the expectation is
/// a tensor quadrature over the opponents' nodes when that grid is small
/// (N <= 3 on coarse grids), and a Monte Carlo average otherwise.
inline EmpiricalCoupling empirical_coupling(const Coupling& W, int N, const std::vector<Vec>& others,
                                            const EmpiricalOptions& opt = {}) {
    const TorusGrid& g = W.grid();
    const Index n = g.size();
    require(N >= 1, "empirical_coupling: N must be at least 1");
    require(static_cast<int>(others.size()) == N - 1, "empirical_coupling: need exactly N - 1 opponent densities");
    for (const Vec& m : others) {
        require(m.size() == n && m.allFinite() && m.minCoeff() >= 0.0, "empirical_coupling: invalid opponent density");
        require(std::abs(g.cell_volume() * m.sum() - 1.0) < 1e-8, "empirical_coupling: opponent density must have mass one");
    }
    EmpiricalCoupling out;
    out.V = Vec::Zero(n);

    const bool closed_form = W.kind() != CouplingKind::smoothed_local;
    if (opt.mode == QuadratureMode::exact) require(closed_form, "empirical_coupling: no closed form for this coupling");
    if (closed_form && (opt.mode == QuadratureMode::automatic || opt.mode == QuadratureMode::exact)) {
        out.method = "exact";
        if (W.kind() == CouplingKind::constant) {
            out.V.setConstant(W.constant());
            return out;
        }
        // W[mu] = kappa phi * mu is linear, so the expectation moves inside.
        Vec mbar = Vec::Zero(n);
        for (const Vec& m : others) mbar += m;
        Vec V = W(mbar.size() > 0 && N > 1 ? Vec(mbar / double(N - 1)) : Vec(Vec::Constant(n, 1.0)));
        V *= double(N - 1) / N;
        for (Index x = 0; x < n; ++x) V[x] += W.strength() * W.kernel(x, x) / N;
        out.V = V;
        return out;
    }

    const detail::KernelTable K(W);
    double tensor_size = 1.0;
    for (int j = 0; j < N - 1; ++j) tensor_size *= double(n);
    const bool use_tensor = opt.mode == QuadratureMode::tensor ||
                            (opt.mode == QuadratureMode::automatic && tensor_size <= double(opt.tensor_limit));
    Vec base(n), val(n);

    if (use_tensor) {
        out.method = "tensor";
        std::vector<Index> idx(static_cast<std::size_t>(N - 1), 0);
        const double hd = g.cell_volume();
        for (;;) {
            double w = 1.0;
            for (int j = 0; j < N - 1; ++j) w *= hd * others[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
            if (w > 0.0) {
                base.setZero();
                for (int j = 0; j < N - 1; ++j) {
                    const Index y = idx[static_cast<std::size_t>(j)];
                    for (Index z : K.support[static_cast<std::size_t>(y)]) base[z] += K.phi(z, y);
                }
                detail::smoothed_atoms(W, K, N, base, val);
                out.V += w * val;
            }
            ++out.samples;
            int j = 0;
            for (; j < N - 1; ++j) {
                if (++idx[static_cast<std::size_t>(j)] < n) break;
                idx[static_cast<std::size_t>(j)] = 0;
            }
            if (j == N - 1) break;
        }
        return out;
    }

    out.method = "monte-carlo";
    require(opt.budget >= 2, "empirical_coupling: Monte Carlo budget must be at least 2");
    std::vector<std::vector<double>> cdf;
    for (const Vec& m : others) cdf.push_back(detail::cumulative(g, m));
    std::mt19937_64 rng(opt.seed);
    Vec mean = Vec::Zero(n), m2 = Vec::Zero(n);
    for (long s = 1; s <= opt.budget; ++s) {
        base.setZero();
        for (int j = 0; j < N - 1; ++j) {
            const Index y = detail::sample_node(cdf[static_cast<std::size_t>(j)], rng);
            for (Index z : K.support[static_cast<std::size_t>(y)]) base[z] += K.phi(z, y);
        }
        detail::smoothed_atoms(W, K, N, base, val);
        const Vec delta = val - mean;
        mean += delta / double(s);
        m2.array() += delta.array() * (val - mean).array();
    }
    out.samples = opt.budget;
    out.V = mean;
    out.se = std::sqrt(m2.maxCoeff() / double(opt.budget - 1) / double(opt.budget));
    out.inconclusive = out.se > opt.target_se;
    return out;
}

// ---------------------------------------------------------------------------
// Symmetric N-player Nash system
// ---------------------------------------------------------------------------

struct NashPlayer {
    double lambda = 0.0;
    Vec u;   ///< mean zero
    Vec m;
    Vec V;   ///< empirical coupling seen by this player
    SplitDrift drift;
    double hjb_residual = 0.0;
    double fp_residual = 0.0;
};

struct NashOptions {
    double theta = 0.5;
    double min_theta = 1.0 / 64.0;
    double tol = 1e-10;
    int max_iter = 300;
    EmpiricalOptions coupling;
    HJBOptions hjb;
    StationaryOptions fp;
};

struct NashSolution {
    std::vector<NashPlayer> players;
    double lambda_spread = 0.0;  ///< max_{i,j} |lambda_i - lambda_j|
    double u_spread = 0.0;       ///< max_{i,j} ||u_i - u_j||_inf
    double kr_spread = 0.0;      ///< max_{i,j} d(m_i, m_j), flat-torus ground metric
    double coupling_se = 0.0;    ///< largest Monte Carlo error of the last sweep
    std::string coupling_method;
    int iterations = 0;
    std::vector<FixedPointEntry> log;
};

/// Damped Jacobi iteration over the N-tuple of measures. In each sweep every
/// player's V_i is rebuilt from the opponents' current measures, the
/// player's ergodic HJB is solved with that right-hand side, and the
/// invariant measure of the resulting feedback is relaxed into m_i. All
/// players share the Monte Carlo stream, so a symmetric start stays exactly
/// symmetric.
inline NashSolution solve_symmetric_nash(const Discretization& disc, const ControlModel& model, const Coupling& W,
                                         int N, const NashOptions& opt = {},
                                         const std::optional<std::vector<Vec>>& warm_m = std::nullopt) {
    require(N >= 1, "solve_symmetric_nash: N must be at least 1");
    require(opt.theta > 0.0 && opt.theta <= 1.0, "solve_symmetric_nash: damping must lie in (0, 1]");
    require(W.grid() == disc.grid(), "solve_symmetric_nash: coupling and discretization grids differ");
    const TorusGrid& g = disc.grid();
    const Index n = g.size();
    const auto P = static_cast<std::size_t>(N);

    std::vector<Vec> m(P, Vec::Constant(n, 1.0));
    if (warm_m) {
        require(warm_m->size() == P, "solve_symmetric_nash: warm start needs one density per player");
        m = *warm_m;
    }
    std::vector<NashPlayer> players(P);
    std::vector<double> lambda_prev(P, std::numeric_limits<double>::quiet_NaN());
    std::vector<Vec> u_prev(P);
    NashSolution sol;
    double theta = opt.theta;
    double prev_change = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= opt.max_iter; ++k) {
        double change = 0.0;
        sol.coupling_se = 0.0;
        std::vector<Vec> m_new(P);
        for (std::size_t i = 0; i < P; ++i) {
            std::vector<Vec> others;
            for (std::size_t j = 0; j < P; ++j)
                if (j != i) others.push_back(m[j]);
            const EmpiricalCoupling Vi = empirical_coupling(W, N, others, opt.coupling);
            sol.coupling_se = std::max(sol.coupling_se, Vi.se);
            sol.coupling_method = Vi.method;
            const std::optional<Vec> warm_u = u_prev[i].size() ? std::optional<Vec>(u_prev[i]) : std::nullopt;
            const HJBSolution hs = solve_ergodic_hjb(disc, model, Vi.V, opt.hjb, warm_u);
            const Policy pol = evaluate_policy(disc, model, hs.u.values());
            const StationaryMeasure mi = stationary_measure(disc, pol.split, opt.fp, m[i]);

            NashPlayer& pl = players[i];
            pl.lambda = hs.lambda;
            pl.u = hs.u.values();
            pl.m = mi.m.values();
            pl.V = Vi.V;
            pl.drift = pol.split;
            pl.hjb_residual = hs.residual;
            pl.fp_residual = (disc.generator(pol.split).matrix.transpose() * pl.m).lpNorm<Eigen::Infinity>();

            double c = g.cell_volume() * (pl.m - m[i]).lpNorm<1>();
            c += std::isnan(lambda_prev[i]) ? 1.0 : std::abs(pl.lambda - lambda_prev[i]);
            c += u_prev[i].size() ? (pl.u - u_prev[i]).lpNorm<Eigen::Infinity>() : 1.0;
            change = std::max(change, c);
            lambda_prev[i] = pl.lambda;
            u_prev[i] = pl.u;
            m_new[i] = pl.m;
        }
        sol.log.push_back({k, change, theta});
        if (change < opt.tol) {
            sol.players = std::move(players);
            sol.iterations = k;
            const GroundMetric flat = GroundMetric::flat(g);
            for (std::size_t i = 0; i < P; ++i)
                for (std::size_t j = i + 1; j < P; ++j) {
                    const NashPlayer &a = sol.players[i], &b = sol.players[j];
                    sol.lambda_spread = std::max(sol.lambda_spread, std::abs(a.lambda - b.lambda));
                    sol.u_spread = std::max(sol.u_spread, (a.u - b.u).lpNorm<Eigen::Infinity>());
                    if (a.m != b.m) sol.kr_spread = std::max(sol.kr_spread, kr_distance(a.m, b.m, flat));
                }
            return sol;
        }
        if (change > prev_change) theta = std::max(opt.min_theta, 0.5 * theta);
        prev_change = change;
        for (std::size_t i = 0; i < P; ++i) m[i] = (1.0 - theta) * m[i] + theta * m_new[i];
    }
    throw SolverError("Nash system: outer iteration did not converge", prev_change);
}

// ---------------------------------------------------------------------------
// Stratonovich path simulation
// ---------------------------------------------------------------------------

/// Drift coefficients g(x) in front of X_1..X_m.
using FeedbackFn = std::function<void(const Point&, double*)>;
/// Running payoff f(x, g(x)) accumulated along paths.
using PayoffFn = std::function<double(const Point&, const double*)>;

struct SimulationOptions {
    double T = 10.0;
    double dt = 1e-2;
    long paths = 1000;
    std::uint64_t seed = 1;
    double noise = 1.0;          ///< scale of the Brownian increments
    double average_from = 0.5;   ///< payoff and occupation averaged over [average_from T, T]
};

struct PathEnsemble {
    long paths = 0;
    long steps = 0;
    long accumulated_steps = 0;     ///< steps per path inside the averaging window
    double dt = 0.0;
    double T = 0.0;
    std::vector<Point> final_state;   ///< wrapped to [0, 1)^d
    std::vector<Point> displacement;  ///< unwrapped xi_T - xi_0
    std::vector<double> path_average; ///< time average of the payoff per path
    double mean = 0.0;                ///< mean of path_average
    double se = 0.0;                  ///< standard error across paths
    GridFunction occupation;          ///< occupation density over the averaging window

    explicit PathEnsemble(const TorusGrid& g) : occupation(g) {}
    long accumulator_count() const { return accumulated_steps * paths; }
};

/// Euler-Heun scheme for d xi = sum_k g_k X_k(xi) dt + sum_k X_k(xi) o dW^k,
/// one mt19937_64 stream per path seeded by (seed, path). Initial states are
/// uniform on the torus.
inline PathEnsemble simulate_dynamics(const VectorFieldFamily& family, const TorusGrid& grid, const FeedbackFn& feedback,
                                      const PayoffFn& payoff, const SimulationOptions& opt) {
    require(opt.dt > 0.0 && std::isfinite(opt.dt), "simulate_dynamics: dt must be positive");
    require(opt.T > 0.0 && opt.paths >= 1, "simulate_dynamics: need T > 0 and at least one path");
    require(opt.average_from >= 0.0 && opt.average_from < 1.0, "simulate_dynamics: averaging window must be nonempty");
    require(grid.dim() == family.dim(), "simulate_dynamics: grid and family dimension differ");
    const int d = family.dim(), m = family.size();
    const FieldEvaluator X(family);
    PathEnsemble ens(grid);
    ens.paths = opt.paths;
    ens.dt = opt.dt;
    ens.steps = std::max<long>(1, std::lround(opt.T / opt.dt));
    ens.T = ens.steps * opt.dt;
    const long first = std::min(ens.steps - 1, static_cast<long>(std::floor(opt.average_from * ens.steps)));
    ens.accumulated_steps = ens.steps - first;
    const double sq = std::sqrt(opt.dt) * opt.noise;
    std::vector<double> counts(static_cast<std::size_t>(grid.size()), 0.0);

    for (long p = 0; p < opt.paths; ++p) {
        std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                          static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(static_cast<std::uint64_t>(p) >> 32)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        Point x{}, lift{};
        for (int j = 0; j < d; ++j) x[j] = detail::unit_draw(rng);
        double acc = 0.0;
        std::array<double, kMaxDim> gk{}, dW{};
        for (long s = 0; s < ens.steps; ++s) {
            feedback(x, gk.data());
            if (s >= first) {
                acc += payoff(x, gk.data());
                counts[static_cast<std::size_t>(grid.nearest(x))] += 1.0;
            }
            for (int k = 0; k < m; ++k) dW[static_cast<std::size_t>(k)] = sq * normal(rng);
            const Point drift = X.combination(gk.data(), x);
            const Point noise0 = X.combination(dW.data(), x);
            Point pred{};
            for (int j = 0; j < d; ++j) pred[j] = x[j] + drift[j] * opt.dt + noise0[j];
            const Point noise1 = X.combination(dW.data(), pred);
            for (int j = 0; j < d; ++j) {
                const double step = drift[j] * opt.dt + 0.5 * (noise0[j] + noise1[j]);
                lift[j] += step;
                x[j] = wrap_unit(x[j] + step);
            }
            for (int j = 0; j < d; ++j)
                if (!std::isfinite(x[j]))
                    throw SolverError("simulate_dynamics: non-finite state on path " + std::to_string(p), double(s));
        }
        ens.final_state.push_back(x);
        ens.displacement.push_back(lift);
        ens.path_average.push_back(acc / double(ens.accumulated_steps));
    }
    double mean = 0.0;
    for (double v : ens.path_average) mean += v;
    mean /= double(opt.paths);
    double var = 0.0;
    for (double v : ens.path_average) var += (v - mean) * (v - mean);
    ens.mean = mean;
    ens.se = opt.paths > 1 ? std::sqrt(var / double(opt.paths - 1) / double(opt.paths)) : 0.0;
    const double total = double(ens.accumulator_count());
    for (Index i = 0; i < grid.size(); ++i) ens.occupation[i] = counts[static_cast<std::size_t>(i)] / (total * grid.cell_volume());
    return ens;
}

/// Interpolated feedback drift g = (net drift of a policy).
inline FeedbackFn interpolated_feedback(const TorusGrid& g, const std::vector<Vec>& drift) {
    std::vector<GridFunction> f;
    for (const Vec& v : drift) f.emplace_back(g, v);
    return [f](const Point& x, double* out) {
        for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i].interpolate(x);
    };
}

/// Running payoff L(x, a(x)) + V(x) with a = g (drift equals control for the
/// built-in continuous models) and V interpolated from the grid.
inline PayoffFn model_payoff(const ControlModel& model, const TorusGrid& g, const Vec& V) {
    const GridFunction Vf(g, V);
    const int m = model.fields();
    return [&model, Vf, m](const Point& x, const double* a) {
        HVec c{};
        for (int i = 0; i < m; ++i) c[static_cast<std::size_t>(i)] = a[i];
        return model.running_cost(x, c) + Vf.interpolate(x);
    };
}

// ---------------------------------------------------------------------------
// Verification and unilateral deviation
// ---------------------------------------------------------------------------

struct VerificationOptions {
    SimulationOptions sim;
    double allowance_constant = 1.0;     ///< C in the discretization allowance C (h + dt)
    double max_se = 0.05;                ///< larger standard errors make the report inconclusive
    double deviation_tol = 1e-6;
    double deviation_allowance = 0.0;
    HJBOptions hjb;
};

struct VerificationReport {
    double lambda = 0.0;
    double J_mean = 0.0;
    double J_se = 0.0;
    double gap = 0.0;          ///< |J - lambda|
    double allowance = 0.0;    ///< C (h + dt)
    bool J_ok = false;
    bool inconclusive = false;
    double best_response_lambda = 0.0;
    double deviation_gap = 0.0;  ///< lambda - lambda(best response); no profitable deviation when small
    bool deviation_ok = false;
    PathEnsemble ensemble;

    explicit VerificationReport(const TorusGrid& g) : ensemble(g) {}
    bool passed() const { return !inconclusive && J_ok && deviation_ok; }
};

/// Closed-loop Monte Carlo estimate of the long-run average cost of the
/// feedback of u against the frozen field V, compared with lambda, and the
/// best-response HJB against the same V.
inline VerificationReport verify_equilibrium(const Discretization& disc, const ControlModel& model, const Vec& V,
                                             double lambda, const Vec& u, const VerificationOptions& opt = {}) {
    const TorusGrid& g = disc.grid();
    require(opt.sim.dt <= g.h() + 1e-15, "verify_equilibrium: dt must not exceed the grid spacing");
    VerificationReport r(g);
    r.lambda = lambda;
    const Policy pol = evaluate_policy(disc, model, u);
    r.ensemble = simulate_dynamics(disc.family(), g, interpolated_feedback(g, pol.drift), model_payoff(model, g, V), opt.sim);
    r.J_mean = r.ensemble.mean;
    r.J_se = r.ensemble.se;
    r.gap = std::abs(r.J_mean - lambda);
    r.allowance = opt.allowance_constant * (g.h() + opt.sim.dt);
    r.J_ok = r.gap <= 3.0 * r.J_se + r.allowance;
    r.inconclusive = r.J_se > opt.max_se;

    const HJBSolution br = solve_ergodic_hjb(disc, model, V, opt.hjb, u);
    r.best_response_lambda = br.lambda;
    r.deviation_gap = lambda - br.lambda;
    r.deviation_ok = r.deviation_gap <= opt.deviation_tol + opt.deviation_allowance;
    return r;
}

inline VerificationReport verify_equilibrium(const Discretization& disc, const ControlModel& model, const Coupling& W,
                                             const MFGSolution& s, const VerificationOptions& opt = {}) {
    return verify_equilibrium(disc, model, W(s.m.m.values()), s.lambda, s.w.size() ? s.w : s.u.values(), opt);
}

inline VerificationReport verify_equilibrium(const Discretization& disc, const ControlModel& model, const NashPlayer& p,
                                             const VerificationOptions& opt = {}) {
    return verify_equilibrium(disc, model, p.V, p.lambda, p.u, opt);
}

}  // namespace hmfg
