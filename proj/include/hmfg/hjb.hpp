#pragma once

#include <fstream>
#include <optional>
#include <vector>

#include "hmfg/control.hpp"
#include "hmfg/mollify.hpp"
#include "hmfg/operators.hpp"

namespace hmfg {

/// Per-node optimal choice of the upwind discrete Hamiltonian at a given u.
struct Policy {
    SplitDrift split;          ///< forward and backward weights per field
    std::vector<Vec> drift;    ///< net drift, one grid function per field
    std::vector<Vec> control;  ///< maximizing control, per component
    Vec cost;                  ///< running cost at the chosen control
    Vec hamiltonian;           ///< H_h(x, D u)
};

/// Evaluate the discrete Hamiltonian of `model` at u on every node.
inline Policy evaluate_policy(const Discretization& disc, const ControlModel& model, const Vec& u) {
    require(model.fields() == disc.fields(), "evaluate_policy: model and family field counts differ");
    const int m = disc.fields();
    const Index N = disc.grid().size();
    std::vector<Vec> pp, pm;
    for (int i = 0; i < m; ++i) {
        pp.push_back(disc.forward(i) * u);
        pm.push_back(disc.backward(i) * u);
    }
    Policy p;
    p.drift.assign(static_cast<std::size_t>(m), Vec::Zero(N));
    p.split.forward.assign(static_cast<std::size_t>(m), Vec::Zero(N));
    p.split.backward.assign(static_cast<std::size_t>(m), Vec::Zero(N));
    p.control.assign(static_cast<std::size_t>(m), Vec::Zero(N));
    p.cost = Vec::Zero(N);
    p.hamiltonian = Vec::Zero(N);
    for (Index r = 0; r < N; ++r) {
        HVec a{}, b{};
        for (int i = 0; i < m; ++i) {
            a[static_cast<std::size_t>(i)] = pp[static_cast<std::size_t>(i)][r];
            b[static_cast<std::size_t>(i)] = pm[static_cast<std::size_t>(i)][r];
        }
        const UpwindChoice c = model.upwind(disc.grid().point(r), a, b);
        for (int i = 0; i < m; ++i) {
            p.drift[static_cast<std::size_t>(i)][r] = c.drift[static_cast<std::size_t>(i)];
            p.split.forward[static_cast<std::size_t>(i)][r] = c.forward[static_cast<std::size_t>(i)];
            p.split.backward[static_cast<std::size_t>(i)][r] = c.backward[static_cast<std::size_t>(i)];
            p.control[static_cast<std::size_t>(i)][r] = c.control[static_cast<std::size_t>(i)];
        }
        p.cost[r] = c.cost;
        p.hamiltonian[r] = c.value;
    }
    return p;
}

/// H(x, 0) on the grid.
inline Vec hamiltonian_at_zero(const TorusGrid& g, const ControlModel& model) {
    Vec h(g.size());
    for (Index r = 0; r < g.size(); ++r) h[r] = model.hamiltonian_at_zero(g.point(r));
    return h;
}

/// rho u - (diffusion) u + H_h(x, D u) - rhs, pointwise.
inline Vec discounted_hjb_defect(const Discretization& disc, const ControlModel& model, double rho, const Vec& u,
                                 const Vec& rhs) {
    const Policy p = evaluate_policy(disc, model, u);
    return rho * u - disc.diffusion() * u + p.hamiltonian - rhs;
}

/// lambda - (diffusion) w + H_h(x, D w) - rhs, pointwise.
inline Vec ergodic_hjb_defect(const Discretization& disc, const ControlModel& model, double lambda, const Vec& w,
                              const Vec& rhs) {
    const Policy p = evaluate_policy(disc, model, w);
    return Vec::Constant(w.size(), lambda) - disc.diffusion() * w + p.hamiltonian - rhs;
}

struct ConvergenceEntry {
    int iteration;
    double residual;
    Index policy_changes;
};

struct HJBOptions {
    double tol = 1e-9;
    int max_iter = 100;
    /// Relaxation and budget of the semi-implicit fixed-point fallback.
    double omega = 0.5;
    int fallback_iter = 20000;
};

struct HJBSolution {
    GridFunction u;
    double lambda = 0.0;  ///< ergodic constant (ergodic solves only)
    double residual = 0.0;
    int iterations = 0;
    Scheme scheme = Scheme::monotone;
    std::string method;
    std::vector<double> eps_path;
    std::vector<ConvergenceEntry> log;

    explicit HJBSolution(const TorusGrid& g) : u(g) {}

    void write_log(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw DomainError("cannot write " + path);
        os << "iteration,residual,policy_changes\n";
        char buf[96];
        for (const auto& e : log) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%ld\n", e.iteration, e.residual, static_cast<long>(e.policy_changes));
            os << buf;
        }
    }
};

namespace detail {

inline Index count_changes(const std::vector<Vec>& a, const std::vector<Vec>& b, const std::vector<Vec>& c,
                           const std::vector<Vec>& d) {
    if (a.empty()) return b.empty() ? 0 : b.front().size();
    Index n = 0;
    for (Index r = 0; r < a.front().size(); ++r) {
        bool diff = false;
        for (std::size_t i = 0; i < a.size(); ++i) diff = diff || a[i][r] != b[i][r] || c[i][r] != d[i][r];
        n += diff ? 1 : 0;
    }
    return n;
}

}  // namespace detail

/// Solve rho u - (diffusion) u + H_h(x, D u) = rhs.
///
/// Howard policy iteration: freeze the maximizing controls at the current
/// iterate, solve the linear M-matrix system (rho I - A_a) u = rhs + L_a, and
/// repeat until the residual drops below tol or the policy stops changing.
/// If the policy cycles past max_iter, a relaxed semi-implicit fixed point
/// (rho I - diffusion) u~ = rhs - H_h(u^k), u^{k+1} = (1 - omega) u^k + omega u~
/// takes over from the best iterate.
inline HJBSolution solve_discounted_hjb(const Discretization& disc, const ControlModel& model, double rho,
                                       const Vec& rhs, const HJBOptions& opt = {},
                                       const std::optional<Vec>& warm = std::nullopt) {
    require(rho > 0.0, "solve_discounted_hjb: rho must be positive");
    const TorusGrid& g = disc.grid();
    require(rhs.size() == g.size(), "solve_discounted_hjb: rhs size mismatch");
    HJBSolution sol(g);
    sol.scheme = disc.scheme();
    sol.method = "policy_iteration";
    sol.eps_path = {disc.viscosity()};

    Vec u = warm ? *warm : Vec::Zero(g.size());
    Vec best = u;
    double best_res = std::numeric_limits<double>::infinity();
    std::vector<Vec> prev_drift, prev_back;
    for (int k = 0; k <= opt.max_iter; ++k) {
        const Policy p = evaluate_policy(disc, model, u);
        const double res = (rho * u - disc.diffusion() * u + p.hamiltonian - rhs).lpNorm<Eigen::Infinity>();
        const Index changes = detail::count_changes(prev_drift, p.split.forward, prev_back, p.split.backward);
        sol.log.push_back({k, res, changes});
        if (res < best_res) {
            best_res = res;
            best = u;
        }
        if (res < opt.tol || (k > 0 && changes == 0)) {
            sol.u.values() = u;
            sol.residual = res;
            sol.iterations = k;
            return sol;
        }
        if (k == opt.max_iter) break;
        const SparseOperator A = disc.generator(p.split);
        const LinearSolver solver(shifted(rho, A.matrix, -1.0));
        u = solver.solve(rhs + p.cost);
        prev_drift = p.split.forward;
        prev_back = p.split.backward;
    }

    // Fallback from the best iterate.
    sol.method = "fixed_point";
    u = best;
    const LinearSolver base(shifted(rho, disc.diffusion(), -1.0));
    for (int k = 0; k < opt.fallback_iter; ++k) {
        const Policy p = evaluate_policy(disc, model, u);
        const double res = (rho * u - disc.diffusion() * u + p.hamiltonian - rhs).lpNorm<Eigen::Infinity>();
        sol.log.push_back({opt.max_iter + 1 + k, res, 0});
        if (res < opt.tol) {
            sol.u.values() = u;
            sol.residual = res;
            sol.iterations = opt.max_iter + 1 + k;
            return sol;
        }
        const Vec ut = base.solve(rhs - p.hamiltonian);
        u = (1.0 - opt.omega) * u + opt.omega * ut;
    }
    throw SolverError("discounted HJB: no convergence", best_res);
}

/// Ergodic HJB: find (lambda, w) with lambda - (diffusion) w + H_h(x, D w) = rhs and
/// h^d sum w = 0, by policy iteration on the bordered system
///   [ -A_a  1 ] [w]   [rhs + L_a]
///   [ h^d 1^T 0 ] [l] = [   0     ].
inline HJBSolution solve_ergodic_hjb(const Discretization& disc, const ControlModel& model, const Vec& rhs,
                                    const HJBOptions& opt = {}, const std::optional<Vec>& warm = std::nullopt) {
    const TorusGrid& g = disc.grid();
    const Index N = g.size();
    require(rhs.size() == N, "solve_ergodic_hjb: rhs size mismatch");
    HJBSolution sol(g);
    sol.scheme = disc.scheme();
    sol.method = "policy_iteration_ergodic";
    sol.eps_path = {disc.viscosity()};

    Vec w = warm ? *warm : Vec::Zero(N);
    double lambda = 0.0;
    {
        const Policy p0 = evaluate_policy(disc, model, w);
        lambda = g.cell_volume() * (rhs - p0.hamiltonian + disc.diffusion() * w).sum();
    }
    std::vector<Vec> prev_drift, prev_back;
    double best_res = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= opt.max_iter; ++k) {
        const Policy p = evaluate_policy(disc, model, w);
        const double res =
            (Vec::Constant(N, lambda) - disc.diffusion() * w + p.hamiltonian - rhs).lpNorm<Eigen::Infinity>();
        const Index changes = detail::count_changes(prev_drift, p.split.forward, prev_back, p.split.backward);
        sol.log.push_back({k, res, changes});
        best_res = std::min(best_res, res);
        if (k > 0 && (res < opt.tol || changes == 0)) {
            sol.u.values() = w;
            sol.lambda = lambda;
            sol.residual = res;
            sol.iterations = k;
            return sol;
        }
        if (k == opt.max_iter) break;
        const SparseMatrix A = disc.generator(p.split).matrix;
        std::vector<Triplet> t;
        t.reserve(static_cast<std::size_t>(A.nonZeros() + 3 * N));
        for (Index r = 0; r < A.outerSize(); ++r)
            for (SparseMatrix::InnerIterator it(A, r); it; ++it) t.emplace_back(it.row(), it.col(), -it.value());
        for (Index r = 0; r < N; ++r) {
            t.emplace_back(r, N, 1.0);
            t.emplace_back(N, r, g.cell_volume());
        }
        SparseMatrix B(N + 1, N + 1);
        B.setFromTriplets(t.begin(), t.end());
        B.makeCompressed();
        Vec b(N + 1);
        b.head(N) = rhs + p.cost;
        b[N] = 0.0;
        const Vec x = LinearSolver(B).solve(b);
        w = x.head(N);
        lambda = x[N];
        prev_drift = p.split.forward;
        prev_back = p.split.backward;
    }
    throw SolverError("ergodic HJB: policy iteration did not converge", best_res);
}

/// Gap record of a parameter continuation: ||u_param - u_0||_inf and the
/// increment from the previous parameter.
struct ContinuationEntry {
    double parameter;
    double gap;
    double increment;
};

struct LinearDiscountedReport {
    HJBSolution solution;                   ///< u with eps = 0 and no mollification
    std::vector<ContinuationEntry> viscosity;
    std::vector<ContinuationEntry> mollification;
    explicit LinearDiscountedReport(const TorusGrid& g) : solution(g) {}
};

/// Solve (rho I - A) u = f for the generator A of `disc` with optional drift.
/// eps > 0 additionally solves along eps, eps/10, eps/100, eps/1000 with
/// viscosity eps Laplacian; zeta > 0 along zeta_n = min(zeta, 0.1) 2^-n,
/// n = 0..4, with f replaced by its mollification. Gaps are relative to the
/// unregularized solution.
inline LinearDiscountedReport solve_linear_discounted(const Discretization& disc, double rho, const Vec& f,
                                                      const std::vector<Vec>& drift = {}, double eps = 0.0,
                                                      double zeta = 0.0) {
    require(rho > 0.0, "solve_linear_discounted: rho must be positive");
    require(eps >= 0.0 && zeta >= 0.0, "solve_linear_discounted: eps and zeta must be nonnegative");
    const TorusGrid& g = disc.grid();
    require(f.size() == g.size(), "solve_linear_discounted: f size mismatch");
    auto solve = [&](const Discretization& d, const Vec& rhs) {
        return LinearSolver(shifted(rho, d.generator(drift).matrix, -1.0)).solve(rhs);
    };
    LinearDiscountedReport rep(g);
    const Vec u0 = solve(disc, f);
    rep.solution.u.values() = u0;
    rep.solution.method = "linear";
    rep.solution.scheme = disc.scheme();
    rep.solution.eps_path = {disc.viscosity()};
    const SparseMatrix M = shifted(rho, disc.generator(drift).matrix, -1.0);
    rep.solution.residual = (M * u0 - f).lpNorm<Eigen::Infinity>();

    if (eps > 0.0) {
        Vec prev = u0;
        for (int k = 0; k < 4; ++k) {
            const double e = eps * std::pow(10.0, -k);
            const Vec ue = solve(disc.with_viscosity(disc.viscosity() + e), f);
            rep.viscosity.push_back({e, (ue - u0).lpNorm<Eigen::Infinity>(), (ue - prev).lpNorm<Eigen::Infinity>()});
            rep.solution.eps_path.push_back(disc.viscosity() + e);
            prev = ue;
        }
    }
    if (zeta > 0.0) {
        Vec prev = u0;
        const double z0 = std::min(zeta, 0.1);
        for (int k = 0; k < 5; ++k) {
            const double z = z0 * std::pow(2.0, -k);
            const Vec fz = convolution_matrix(g, z) * f;
            const Vec uz = solve(disc, fz);
            rep.mollification.push_back({z, (uz - u0).lpNorm<Eigen::Infinity>(), (uz - prev).lpNorm<Eigen::Infinity>()});
            prev = uz;
        }
    }
    return rep;
}

}  // namespace hmfg
