#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <algorithm>
#include <queue>
#include <random>
#include <vector>

#include "hmfg/grid.hpp"
#include "hmfg/vfields.hpp"

namespace hmfg {

/// Parameters of the horizontal-move graph used to approximate d_CC.
///
/// Edges leave every node x along the RK4 flow of sum_i alpha_i X_i for unit
/// alpha, with step lengths tau = h, 2h, 4h, ... up to max_step. Finer steps
/// use `directions` samples of the unit sphere; longer steps use more
/// (about 2 pi tau / h, capped at `max_directions`) so that endpoints stay
/// roughly one cell apart. Endpoints are snapped to the nearest node.
struct CCGraphOptions {
    int directions = 16;
    int max_directions = 64;
    double max_step = 0.25;
    int substeps = 4;
    /// Stop expanding once the frontier exceeds this distance; farther nodes
    /// are left at +infinity.
    double cutoff = std::numeric_limits<double>::infinity();
};

/// Approximate Carnot-Caratheodory distances from one node.
struct DistanceMap {
    Index source = 0;
    GridFunction values;
    std::string family;
    CCGraphOptions options;
    Index unreachable = 0;  ///< nodes left at +infinity inside the cutoff

    DistanceMap(const TorusGrid& g) : values(g) {}
    const TorusGrid& grid() const { return values.grid(); }
    double operator[](Index i) const { return values[i]; }
    /// Discretization error bar attached to every value.
    double error_bar() const { return 3.0 * grid().h(); }
};

namespace detail {

/// Deterministic sample of unit vectors in R^m.
inline std::vector<std::array<double, kMaxDim>> sphere_directions(int m, int count) {
    std::vector<std::array<double, kMaxDim>> out;
    if (m == 1) {
        out.push_back({1.0});
        out.push_back({-1.0});
        return out;
    }
    if (m == 2) {
        for (int k = 0; k < count; ++k) {
            const double t = kTwoPi * k / count;
            out.push_back({std::cos(t), std::sin(t)});
        }
        return out;
    }
    for (int i = 0; i < m; ++i) {
        std::array<double, kMaxDim> e{};
        e[static_cast<std::size_t>(i)] = 1.0;
        out.push_back(e);
        e[static_cast<std::size_t>(i)] = -1.0;
        out.push_back(e);
    }
    std::mt19937_64 rng(0x5eedULL + static_cast<unsigned>(m));
    std::normal_distribution<double> N(0.0, 1.0);
    while (static_cast<int>(out.size()) < count) {
        std::array<double, kMaxDim> v{};
        double s = 0.0;
        for (int i = 0; i < m; ++i) {
            v[static_cast<std::size_t>(i)] = N(rng);
            s += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
        }
        s = std::sqrt(s);
        for (int i = 0; i < m; ++i) v[static_cast<std::size_t>(i)] /= s;
        out.push_back(v);
    }
    return out;
}

struct EdgeLevel {
    double tau;
    std::vector<std::array<double, kMaxDim>> dirs;
};

inline std::vector<EdgeLevel> edge_levels(const TorusGrid& g, int m, const CCGraphOptions& o) {
    std::vector<EdgeLevel> levels;
    for (double tau = g.h(); tau <= o.max_step * (1.0 + 1e-12); tau *= 2.0) {
        const int count = std::max(o.directions, std::min(o.max_directions, static_cast<int>(std::ceil(kTwoPi * tau / g.h()))));
        levels.push_back({tau, sphere_directions(m, count)});
    }
    require(!levels.empty(), "cc_distance_map: max_step below the grid spacing");
    return levels;
}

/// Coefficients beta with flow^1_{sum beta_i X_i}(x) = target (torus-wise),
/// started from beta = tau * alpha. Returns |beta| or nothing when Gauss-Newton
/// fails to land within 1e-11 or wanders beyond twice the nominal step.
inline std::optional<double> landing_length(const FieldEvaluator& X, const Point& x, const Point& target,
                                            const std::array<double, kMaxDim>& alpha, double tau, int substeps) {
    using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
    using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
    const int d = X.dim(), m = X.size();
    std::array<double, kMaxDim> beta{};
    for (int i = 0; i < m; ++i) beta[static_cast<std::size_t>(i)] = tau * alpha[static_cast<std::size_t>(i)];
    auto residual = [&](const std::array<double, kMaxDim>& b) {
        const Point e = X.flow(b.data(), x, 1.0, substeps);
        SmallVec r(d);
        for (int j = 0; j < d; ++j) r(j) = torus_delta(e[j], target[j]);
        return r;
    };
    auto norm = [m](const std::array<double, kMaxDim>& b) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += b[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
        return std::sqrt(s);
    };
    SmallVec r = residual(beta);
    SmallMat J(d, m);
    for (int it = 0; it < 6 && r.norm() >= 1e-11; ++it) {
        const double s = 1e-7;
        for (int i = 0; i < m; ++i) {
            auto b = beta;
            b[static_cast<std::size_t>(i)] += s;
            J.col(i) = (residual(b) - r) / s;
        }
        // Minimum-norm step J^T (J J^T)^{-1} r; square systems reduce to J^{-1} r.
        const SmallMat JJt = J * J.transpose();
        Eigen::FullPivLU<SmallMat> lu(JJt);
        if (!lu.isInvertible()) return std::nullopt;
        const SmallVec step = J.transpose() * lu.solve(r);
        for (int i = 0; i < m; ++i) beta[static_cast<std::size_t>(i)] -= step(i);
        if (!(norm(beta) <= 2.0 * tau)) return std::nullopt;
        r = residual(beta);
    }
    if (!(r.norm() < 1e-11)) return std::nullopt;
    return norm(beta);
}

}  // namespace detail

/// Dijkstra on the horizontal-move graph, ties broken by node index.
///
inline DistanceMap cc_distance_map(const TorusGrid& grid, const VectorFieldFamily& family, Index source,
                                   const CCGraphOptions& options = {}) {
    require(grid.dim() == family.dim(), "cc_distance_map: grid and family dimension differ");
    require(source >= 0 && source < grid.size(), "cc_distance_map: source outside the grid");
    require(options.directions >= 1 && options.substeps >= 1, "cc_distance_map: invalid graph parameters");

    const int d = grid.dim();
    const int m = family.size();
    const FieldEvaluator X(family);
    const auto levels = detail::edge_levels(grid, m, options);

    // With at least as many fields as dimensions, every snapped endpoint is
    // re-targeted exactly: Gauss-Newton on the coefficients beta so that the
    // time-1 flow of sum_i beta_i X_i lands on the node. The edge weight |beta|
    // is then the length of an admissible curve, so graph distances never cut
    // corners. With fewer fields than dimensions the snapping offset is charged
    // as a Euclidean penalty instead.
    const bool exact_landing = m >= d;

    DistanceMap out(grid);
    out.source = source;
    out.family = family.name();
    out.options = options;
    Vec& dist = out.values.values();
    dist.setConstant(std::numeric_limits<double>::infinity());
    dist[source] = 0.0;

    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    pq.push({0.0, source});
    std::vector<char> done(static_cast<std::size_t>(grid.size()), 0);
    std::vector<Index> seen_by(static_cast<std::size_t>(grid.size()), -1);

    while (!pq.empty()) {
        const auto [du, u] = pq.top();
        pq.pop();
        if (done[static_cast<std::size_t>(u)]) continue;
        done[static_cast<std::size_t>(u)] = 1;
        if (du > options.cutoff) break;
        const Point x = grid.point(u);
        for (const auto& lv : levels) {
            for (const auto& a : lv.dirs) {
                const Point y = X.flow(a.data(), x, lv.tau, options.substeps);
                const Index v = grid.nearest(y);
                if (v == u || done[static_cast<std::size_t>(v)]) continue;
                if (seen_by[static_cast<std::size_t>(v)] == u) continue;
                seen_by[static_cast<std::size_t>(v)] = u;
                double w;
                if (exact_landing) {
                    const auto len = detail::landing_length(X, x, grid.point(v), a, lv.tau, options.substeps);
                    if (!len) continue;
                    w = *len;
                } else {
                    w = lv.tau + torus_distance(y, grid.point(v), d);
                }
                const double nd = du + w;
                if (nd < dist[v]) {
                    dist[v] = nd;
                    pq.push({nd, v});
                }
            }
        }
    }
    const bool truncated = options.cutoff < std::numeric_limits<double>::infinity();
    for (Index i = 0; i < grid.size(); ++i) {
        if (truncated && !done[static_cast<std::size_t>(i)]) dist[i] = std::numeric_limits<double>::infinity();
        if (!truncated && std::isinf(dist[i])) ++out.unreachable;
    }
    return out;
}

/// Outcome of a log-log fit d_CC ~ C |x - y|^exponent.
struct DistanceEquivalenceFit {
    double exponent = 0.0;
    double C_lower = 0.0;     ///< max |x - y| / d_CC over pairs
    double C_upper = 0.0;     ///< d_CC <= C_upper |x - y|^exponent on every fitted pair
    double min_ratio = 0.0;   ///< min d_CC / |x - y| over pairs
    double rmse = 0.0;
    std::size_t pairs = 0;
    int k_max = 1;
    bool consistent_with_step = false;  ///< 1/k_max - 0.1 <= exponent <= 1.1
};

/// Pair selector: (source point, target point) -> include?
using PairFilter = std::function<bool(const Point&, const Point&)>;

/// Targets that differ from the source only along one axis.
inline PairFilter along_axis(int axis, int d) {
    return [axis, d](const Point& s, const Point& t) {
        for (int j = 0; j < d; ++j)
            if (j != axis && std::abs(torus_delta(s[j], t[j])) > 1e-12) return false;
        return true;
    };
}

namespace detail {

struct LineFit {
    double slope, intercept, rmse, max_resid;
};

inline LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) throw DomainError("degenerate regression: abscissae coincide");
    LineFit f{};
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0, mr = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (f.intercept + f.slope * xs[i]);
        ss += r * r;
        mr = std::max(mr, r);
    }
    f.rmse = std::sqrt(ss / static_cast<double>(n));
    f.max_resid = mr;
    return f;
}

}  // namespace detail

/// Fit C^{-1}|x - y| <= d_CC(x, y) <= C |x - y|^{1/k} over pairs (source, target)
/// with flat separation in [min_sep, max_sep] (min_sep defaults to 2h).
inline DistanceEquivalenceFit distance_equivalence_fit(const std::vector<DistanceMap>& maps, int k_max,
                                                       double max_sep = 0.1, PairFilter filter = {},
                                                       double min_sep = -1.0) {
    require(maps.size() >= 1, "distance_equivalence_fit: need at least one distance map");
    require(k_max >= 1, "distance_equivalence_fit: k_max must be >= 1");
    DistanceEquivalenceFit fit;
    fit.k_max = k_max;
    fit.min_ratio = std::numeric_limits<double>::infinity();
    std::vector<double> lx, ly;
    for (const auto& mp : maps) {
        const TorusGrid& g = mp.grid();
        const double lo = min_sep < 0 ? 2.0 * g.h() : min_sep;
        const Point s = g.point(mp.source);
        for (Index i = 0; i < g.size(); ++i) {
            if (i == mp.source || !std::isfinite(mp[i])) continue;
            const Point t = g.point(i);
            const double e = torus_distance(s, t, g.dim());
            if (e < lo || e > max_sep) continue;
            if (filter && !filter(s, t)) continue;
            fit.C_lower = std::max(fit.C_lower, e / mp[i]);
            fit.min_ratio = std::min(fit.min_ratio, mp[i] / e);
            lx.push_back(std::log(e));
            ly.push_back(std::log(mp[i]));
        }
    }
    require(lx.size() >= 3, "distance_equivalence_fit: fewer than 3 usable pairs");
    const auto f = detail::fit_line(lx, ly);
    if (!(f.slope == f.slope)) throw DomainError("degenerate regression");
    fit.exponent = f.slope;
    fit.C_upper = std::exp(f.intercept + std::max(0.0, f.max_resid));
    fit.rmse = f.rmse;
    fit.pairs = lx.size();
    fit.consistent_with_step = fit.exponent >= 1.0 / k_max - 0.1 && fit.exponent <= 1.1;
    return fit;
}

struct HomogeneousDimensionFit {
    double Q = 0.0;
    double residual = 0.0;  ///< RMSE of the log-log regression
    std::vector<double> radii;
    std::vector<double> volumes;
};

/// Q from |B(x, r)| ~ r^Q with |B| = (#nodes within r) h^d; radii outside (3h, 0.25) are skipped.
inline HomogeneousDimensionFit homogeneous_dimension_fit(const DistanceMap& map, const std::vector<double>& radii) {
    const TorusGrid& g = map.grid();
    HomogeneousDimensionFit out;
    std::vector<double> lx, ly;
    for (double r : radii) {
        if (!(r > 3.0 * g.h() && r < 0.25 + 1e-12)) continue;
        Index count = 0;
        for (Index i = 0; i < g.size(); ++i)
            if (map[i] <= r) ++count;
        const double vol = count * g.cell_volume();
        out.radii.push_back(r);
        out.volumes.push_back(vol);
        lx.push_back(std::log(r));
        ly.push_back(std::log(vol));
    }
    require(lx.size() >= 3, "homogeneous_dimension_fit: fewer than 3 usable radii");
    const auto f = detail::fit_line(lx, ly);
    out.Q = f.slope;
    out.residual = f.rmse;
    return out;
}

}  // namespace hmfg
