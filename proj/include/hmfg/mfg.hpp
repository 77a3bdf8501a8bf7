#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hmfg/coupling.hpp"
#include "hmfg/fpstat.hpp"
#include "hmfg/hjb.hpp"

namespace hmfg {

/// One step of the discount continuation.
struct RhoStep {
    double rho;
    double lambda;        ///< rho <u_rho>
    double w_sup;         ///< ||u_rho - <u_rho>||_inf
    int iterations;       ///< fixed-point iterations of the discounted solve
    double bound;         ///< ||H(., 0) - V[m_rho]||_inf
    double residual;      ///< ergodic residual of (lambda, w_rho, m_rho)
};

struct FixedPointEntry {
    int iteration;
    double change;  ///< ||w~^k - w~^{k-1}||_inf + rho |<u~^k> - <u~^{k-1}>| + ||V[m^k] - V[m^{k-1}]||_inf
    double theta;
};

struct MFGSolution {
    bool ergodic = false;
    double rho = 0.0;     ///< discount (last schedule value for ergodic solves)
    double lambda = 0.0;
    GridFunction u;       ///< mean zero for ergodic solves
    Vec w;                ///< u - <u>, kept apart from the mean to full precision
    StationaryMeasure m;
    SplitDrift drift;  ///< optimal feedback drift
    double hjb_residual = 0.0;
    double fp_residual = 0.0;
    int iterations = 0;
    std::vector<FixedPointEntry> log;
    std::vector<RhoStep> rho_path;
    std::vector<std::string> warnings;

    explicit MFGSolution(const TorusGrid& g) : u(g), m(g) {}
};

struct MFGOptions {
    double theta = 0.5;
    double min_theta = 1.0 / 64.0;
    double tol = 1e-8;
    int max_iter = 500;
    HJBOptions hjb;
    StationaryOptions fp;
};

/// Pointwise residuals of the discrete MFG system.
struct SystemResidual {
    double hjb = 0.0;       ///< sup of the HJB line
    double fp = 0.0;        ///< ||A_b^T m||_inf for the feedback drift of u
    double mass = 0.0;      ///< h^d sum m - 1
    double mean = 0.0;      ///< h^d sum u (ergodic only)
    double min_m = 0.0;
};

enum class SystemKind { discounted, ergodic };

/// Evaluate both lines of the system at (lambda, u, m): the discounted line
/// rho u - (diffusion) u + H_h(D u) - V[m], or the ergodic line
/// lambda - (diffusion) u + H_h(D u) - V[m], and the FP line A_b^T m.
inline SystemResidual system_residual(SystemKind kind, const Discretization& disc, const ControlModel& model,
                                      const Coupling& V, double rho_or_lambda, const Vec& u, const Vec& m) {
    const TorusGrid& g = disc.grid();
    const Policy p = evaluate_policy(disc, model, u);
    const Vec Vm = V(m);
    Vec line = -(disc.diffusion() * u) + p.hamiltonian - Vm;
    if (kind == SystemKind::discounted)
        line += rho_or_lambda * u;
    else
        line.array() += rho_or_lambda;
    SystemResidual r;
    r.hjb = line.lpNorm<Eigen::Infinity>();
    r.fp = (disc.generator(p.split).matrix.transpose() * m).lpNorm<Eigen::Infinity>();
    r.mass = g.cell_volume() * m.sum() - 1.0;
    r.mean = kind == SystemKind::ergodic ? g.cell_volume() * u.sum() : 0.0;
    r.min_m = m.minCoeff();
    return r;
}

/// Discounted MFG: rho u - (diffusion) u + H_h(D u) = V[m], A_b^T m = 0, mass one,
/// with b the feedback drift of u.
///
/// Damped fixed point: m^k is the invariant measure for the feedback drift of
/// v^k, u~ solves the HJB line with rhs V[m^k], and v^{k+1} = (1 - theta) v^k + theta u~.
/// theta is halved whenever the change grows. The iterate is stored as a
/// constant c plus a fluctuation, and the HJB solve runs on u - c, so that the
/// O(1/rho) mean never enters the finite differences. On exit u is the last
/// HJB solve u~ and m is recomputed from its feedback drift.
inline MFGSolution solve_discounted_mfg(const Discretization& disc, const ControlModel& model, const Coupling& V,
                                       double rho, const MFGOptions& opt = {},
                                       const std::optional<Vec>& warm_u = std::nullopt,
                                       const std::optional<Vec>& warm_m = std::nullopt) {
    require(rho > 0.0, "solve_discounted_mfg: rho must be positive");
    require(opt.theta > 0.0 && opt.theta <= 1.0, "solve_discounted_mfg: damping must lie in (0, 1]");
    const TorusGrid& g = disc.grid();
    const Index N = g.size();
    MFGSolution sol(g);
    sol.rho = rho;

    double c = warm_u ? warm_u->mean() : 0.0;
    Vec v = warm_u ? Vec(warm_u->array() - c) : Vec::Zero(N);
    std::optional<Vec> m_prev = warm_m;
    std::optional<Vec> z_prev, rhs_prev;
    double mean_prev = 0.0;
    double theta = opt.theta;
    double prev_change = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= opt.max_iter; ++k) {
        const Policy pv = evaluate_policy(disc, model, v);
        const StationaryMeasure m = stationary_measure(disc, pv.split, opt.fp, m_prev);
        const Vec rhs = V(m.m.values());
        const HJBSolution ut = solve_discounted_hjb(disc, model, rho, Vec(rhs.array() - rho * c), opt.hjb, v);
        const Vec& z = ut.u.values();  // u~ - c
        m_prev = m.m.values();

        double change = std::numeric_limits<double>::infinity();
        if (z_prev) {
            const double mz = z.mean(), mp = z_prev->mean();
            change = (z.array() - mz - (z_prev->array() - mp)).abs().maxCoeff() + rho * std::abs(c + mz - mean_prev) +
                     (rhs - *rhs_prev).lpNorm<Eigen::Infinity>();
        }
        sol.log.push_back({k, change, theta});
        if (change < opt.tol) {
            const Policy pu = evaluate_policy(disc, model, z);
            StationaryMeasure mf = stationary_measure(disc, pu.split, opt.fp, m.m.values());
            if ((V(mf.m.values()) - rhs).lpNorm<Eigen::Infinity>() < opt.tol) {
                const double mz = z.mean();
                const Vec w = z.array() - mz;
                sol.m = std::move(mf);
                sol.u.values() = z.array() + c;
                sol.w = w;
                sol.drift = pu.split;
                sol.iterations = k;
                sol.lambda = rho * (c + mz);
                // rho u - Du + H(u) - V = rho w + lambda - Dw + H(w) - V
                const auto r = system_residual(SystemKind::ergodic, disc, model, V, sol.lambda, w, sol.m.m.values());
                const Vec line = ergodic_hjb_defect(disc, model, sol.lambda, w, V(sol.m.m.values())) + rho * w;
                sol.hjb_residual = line.lpNorm<Eigen::Infinity>();
                sol.fp_residual = r.fp;
                return sol;
            }
        }
        if (change > prev_change) theta = std::max(opt.min_theta, 0.5 * theta);
        prev_change = change;
        mean_prev = c + z.mean();
        z_prev = z;
        rhs_prev = rhs;
        v = (1.0 - theta) * v + theta * z;
        const double shift = v.mean();
        c += shift;
        v.array() -= shift;
    }
    throw SolverError("discounted MFG: fixed point did not converge", prev_change);
}

struct ErgodicOptions {
    double rho0 = 0.5;
    int min_steps = 13;   ///< schedule rho_n = rho0 2^-n, n = 0..min_steps-1 at least
    int max_steps = 40;
    double tol = 1e-6;    ///< ergodic residual and lambda Cauchy gap
    double w_divergence = 1e8;
    MFGOptions inner;
};

/// Ergodic MFG by vanishing discount: solve the discounted system along
/// rho_n = rho0 2^-n, each warm-started from the previous step through
/// v = w + lambda / rho, until the ergodic residual of (rho <u>, u - <u>, m)
/// and the gap |lambda_n - lambda_{n-1}| are both below tol.
inline MFGSolution solve_ergodic_mfg(const Discretization& disc, const ControlModel& model, const Coupling& V,
                                    const ErgodicOptions& opt = {}, const std::optional<Vec>& warm_u = std::nullopt,
                                    const std::optional<Vec>& warm_m = std::nullopt) {
    require(opt.rho0 > 0.0, "solve_ergodic_mfg: rho0 must be positive");
    require(opt.min_steps >= 2 && opt.max_steps >= opt.min_steps, "solve_ergodic_mfg: invalid schedule length");
    const TorusGrid& g = disc.grid();
    MFGSolution out(g);
    out.ergodic = true;
    if (model.growth() == Growth::quadratic)
        out.warnings.push_back("quadratic-growth Hamiltonian: the w bound is not guaranteed as rho -> 0");
    const Vec H0 = hamiltonian_at_zero(g, model);

    std::optional<Vec> w = warm_u;
    std::optional<Vec> m = warm_m;
    double lambda = 0.0;
    for (int n = 0; n < opt.max_steps; ++n) {
        const double rho = opt.rho0 * std::ldexp(1.0, -n);
        std::optional<Vec> v;
        if (w) v = (*w).array() + lambda / rho;
        const MFGSolution d = solve_discounted_mfg(disc, model, V, rho, opt.inner, v, m);
        const double new_lambda = d.lambda;
        const Vec& wn = d.w;
        const Vec Vm = V(d.m.m.values());
        const double res = ergodic_hjb_defect(disc, model, new_lambda, wn, Vm).lpNorm<Eigen::Infinity>();
        const double bound = (H0 - Vm).lpNorm<Eigen::Infinity>();
        const double w_sup = wn.lpNorm<Eigen::Infinity>();
        out.rho_path.push_back({rho, new_lambda, w_sup, d.iterations, bound, res});
        out.iterations += d.iterations;
        if (!(w_sup < opt.w_divergence)) throw SolverError("ergodic MFG: ||w_rho|| diverges along the schedule", w_sup);
        const double gap = n > 0 ? std::abs(new_lambda - lambda) : std::numeric_limits<double>::infinity();
        lambda = new_lambda;
        w = wn;
        m = d.m.m.values();
        if (n + 1 >= opt.min_steps && res < opt.tol && gap < opt.tol) {
            out.rho = rho;
            out.lambda = lambda;
            out.u.values() = wn;
            out.w = wn;
            out.m = d.m;
            out.drift = d.drift;
            const auto r = system_residual(SystemKind::ergodic, disc, model, V, lambda, wn, d.m.m.values());
            out.hjb_residual = r.hjb;
            out.fp_residual = r.fp;
            return out;
        }
    }
    throw SolverError("ergodic MFG: schedule exhausted before the ergodic residual reached tolerance",
                      out.rho_path.empty() ? 0.0 : out.rho_path.back().residual);
}

/// Outcome of the sampled structural checks behind uniqueness.
struct UniquenessReport {
    bool monotone = true;
    bool strictly_monotone = true;
    double monotone_min = std::numeric_limits<double>::infinity();  ///< min of int (V1 - V2)(m1 - m2)
    bool g_convex = true;
    bool strictly_g_convex = true;
    double g_convex_min = std::numeric_limits<double>::infinity();  ///< min gap over samples
    int density_pairs = 0;
    int covector_triples = 0;
};

/// Random positive unit-mass density exp(smooth random field).
inline Vec random_density(const TorusGrid& g, std::mt19937_64& rng, double amplitude = 1.5) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Vec f = Vec::Zero(g.size());
    for (int mode = 0; mode < 4; ++mode) {
        std::array<int, kMaxDim> k{};
        for (int j = 0; j < g.dim(); ++j) k[static_cast<std::size_t>(j)] = static_cast<int>(std::floor(U(rng) * 7.0)) - 3;
        const double a = amplitude * N(rng) / (1 + mode), s = U(rng);
        for (Index r = 0; r < g.size(); ++r) {
            const Point x = g.point(r);
            double ph = s;
            for (int j = 0; j < g.dim(); ++j) ph += k[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
            f[r] += a * std::sin(kTwoPi * ph);
        }
    }
    Vec m = f.array().exp();
    return m / (g.cell_volume() * m.sum());
}

/// Sampled checks of monotonicity of V and (-g)-convexity of H:
///   int (V[m1] - V[m2]) (m1 - m2) >= -1e-12,
///   H(x, q2) - H(x, q1) + g(x, q1).(q2 - q1) >= -1e-12,
/// the latter strict when the gap exceeds 1e-10 |q2 - q1|^2 wherever
/// g(x, q1) != g(x, q2). A third of the co-vector pairs lie on rays
/// q2 = t q1, where the strict clause may be waived.
inline UniquenessReport check_uniqueness_conditions(const Coupling& V, const ControlModel& model, int density_pairs = 100,
                                                    int covector_triples = 1000, std::uint64_t seed = 1) {
    require(density_pairs >= 100 && covector_triples >= 100, "check_uniqueness_conditions: sampling budgets must be >= 100");
    const TorusGrid& g = V.grid();
    UniquenessReport rep;
    rep.density_pairs = density_pairs;
    rep.covector_triples = covector_triples;
    std::mt19937_64 rng(seed);
    for (int s = 0; s < density_pairs; ++s) {
        const Vec m1 = random_density(g, rng), m2 = random_density(g, rng);
        const double val = g.cell_volume() * (V(m1) - V(m2)).dot(m1 - m2);
        rep.monotone_min = std::min(rep.monotone_min, val);
        if (val < -1e-12) rep.monotone = false;
        if (!(val > 1e-12 * (m1 - m2).squaredNorm() * g.cell_volume())) rep.strictly_monotone = false;
    }
    std::normal_distribution<double> N(0.0, 2.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const int m = model.fields();
    for (int s = 0; s < covector_triples; ++s) {
        Point x{};
        for (int j = 0; j < g.dim(); ++j) x[static_cast<std::size_t>(j)] = U(rng);
        HVec q1{}, q2{};
        for (int i = 0; i < m; ++i) q1[static_cast<std::size_t>(i)] = N(rng);
        if (s % 3 == 2) {
            const double t = 0.1 + 3.0 * U(rng);
            for (int i = 0; i < m; ++i) q2[static_cast<std::size_t>(i)] = t * q1[static_cast<std::size_t>(i)];
        } else {
            for (int i = 0; i < m; ++i) q2[static_cast<std::size_t>(i)] = N(rng);
        }
        const HVec g1 = model.auxiliary(x, q1), g2 = model.auxiliary(x, q2);
        double gap = model.hamiltonian(x, q2) - model.hamiltonian(x, q1), dq2 = 0.0, dg = 0.0;
        for (int i = 0; i < m; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            gap += g1[k] * (q2[k] - q1[k]);
            dq2 += (q2[k] - q1[k]) * (q2[k] - q1[k]);
            dg = std::max(dg, std::abs(g1[k] - g2[k]));
        }
        rep.g_convex_min = std::min(rep.g_convex_min, gap);
        if (gap < -1e-12) rep.g_convex = false;
        if (dg > 1e-12 && !(gap > 1e-10 * dq2)) rep.strictly_g_convex = false;
    }
    rep.strictly_g_convex = rep.strictly_g_convex && rep.g_convex;
    rep.strictly_monotone = rep.strictly_monotone && rep.monotone;
    return rep;
}

}  // namespace hmfg
