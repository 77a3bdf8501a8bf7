#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "hmfg/operators.hpp"

namespace hmfg {

/// Distance between two grid nodes; the default is the flat-torus metric.
using NodeDistance = std::function<double(Index, Index)>;

inline NodeDistance flat_torus_distance(const TorusGrid& g) {
    return [g](Index a, Index b) { return torus_distance(g.point(a), g.point(b), g.dim()); };
}

struct SobolevNorm {
    double p;      ///< exponent; infinity for the sup version
    double value;  ///< ||u||_p + sum_i ||X_i u||_p
};

struct RegularityNorms {
    double sup = 0.0;
    double alpha = 1.0;
    double holder_seminorm = 0.0;
    std::size_t pairs = 0;
    std::vector<SobolevNorm> sobolev;
};

inline constexpr std::size_t kMaxHolderPairs = 100000;

namespace detail {

inline double lp_norm(const TorusGrid& g, const Vec& v, double p) {
    if (std::isinf(p)) return v.lpNorm<Eigen::Infinity>();
    return std::pow(g.cell_volume() * v.array().abs().pow(p).sum(), 1.0 / p);
}

}  // namespace detail

/// Sup norm, alpha-Holder seminorm max |u(x) - u(y)| / d(x, y)^alpha over node
/// pairs, and discrete W^{1,p}_X norms built from the horizontal gradient.
/// When the number of pairs exceeds kMaxHolderPairs, every s-th pair in
/// lexicographic order is used, with s the smallest stride that fits.
inline RegularityNorms regularity_norms(const GridFunction& u, double alpha, const VectorFieldFamily& family,
                                        NodeDistance dist = {}, const std::vector<double>& exponents = {2.0, std::numeric_limits<double>::infinity()},
                                        Scheme scheme = Scheme::centered) {
    require(alpha > 0.0 && alpha <= 1.0, "regularity_norms: alpha must lie in (0, 1]");
    const TorusGrid& g = u.grid();
    require(g.size() >= 2, "regularity_norms: empty sample set");
    if (!dist) dist = flat_torus_distance(g);

    RegularityNorms r;
    r.alpha = alpha;
    r.sup = u.sup_norm();

    const long long N = g.size();
    const long long total = N * (N - 1) / 2;
    const long long stride = std::max<long long>(1, (total + static_cast<long long>(kMaxHolderPairs) - 1) /
                                                        static_cast<long long>(kMaxHolderPairs));
    // Row i holds pairs (i, j > i) and starts at offset(i) = i N - i (i + 1) / 2.
    auto offset = [N](long long i) { return i * N - i * (i + 1) / 2; };
    long long i = 0;
    for (long long k = 0; k < total; k += stride) {
        while (offset(i + 1) <= k) ++i;
        const long long j = i + 1 + (k - offset(i));
        const double dxy = dist(static_cast<Index>(i), static_cast<Index>(j));
        if (!(dxy > 0.0)) continue;
        const double q = std::abs(u[static_cast<Index>(i)] - u[static_cast<Index>(j)]) / std::pow(dxy, alpha);
        r.holder_seminorm = std::max(r.holder_seminorm, q);
        ++r.pairs;
    }
    require(r.pairs > 0, "regularity_norms: empty sample set");

    const auto grad = horizontal_gradient(u, family, scheme);
    for (double p : exponents) {
        double s = detail::lp_norm(g, u.values(), p);
        for (const auto& gi : grad) s += detail::lp_norm(g, gi.values(), p);
        r.sobolev.push_back({p, s});
    }
    return r;
}

}  // namespace hmfg
