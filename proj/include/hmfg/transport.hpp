#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <vector>

#include "hmfg/ccgeom.hpp"
#include "hmfg/grid.hpp"

namespace hmfg {

/// Ground metric between grid nodes for the Kantorovich-Rubinstein distance.
class GroundMetric {
public:
    /// Flat-torus (Euclidean with wrap-around) distance.
    static GroundMetric flat(const TorusGrid& g) {
        GroundMetric gm(g);
        gm.label_ = "flat-torus";
        return gm;
    }

    /// Tabulated Carnot-Caratheodory distances, one graph search per node.
    /// The table is symmetrized and closed under the triangle inequality so
    /// that the result is a metric on the nodes. Exploratory: the Lipschitz
    /// class of the KR duality is the Euclidean one.
    static GroundMetric carnot_caratheodory(const TorusGrid& g, const VectorFieldFamily& family,
                                            const CCGraphOptions& opt = {}) {
        GroundMetric gm(g);
        gm.label_ = "carnot-caratheodory(" + family.name() + ")";
        const Index N = g.size();
        Eigen::MatrixXd D(N, N);
        for (Index s = 0; s < N; ++s) D.row(s) = cc_distance_map(g, family, s, opt).values.values().transpose();
        D = 0.5 * (D + D.transpose()).eval();
        for (Index k = 0; k < N; ++k)
            for (Index i = 0; i < N; ++i)
                for (Index j = 0; j < N; ++j) D(i, j) = std::min(D(i, j), D(i, k) + D(k, j));
        require(D.allFinite(), "GroundMetric: Carnot-Caratheodory table has unreachable nodes");
        gm.table_ = std::move(D);
        return gm;
    }

    double operator()(Index i, Index j) const {
        if (table_.size() > 0) return table_(i, j);
        return torus_distance(grid_.point(i), grid_.point(j), grid_.dim());
    }
    const TorusGrid& grid() const { return grid_; }
    const std::string& label() const { return label_; }

private:
    explicit GroundMetric(const TorusGrid& g) : grid_(g) {}
    TorusGrid grid_;
    std::string label_;
    Eigen::MatrixXd table_;
};

struct KRResult {
    double value = 0.0;
    int augmentations = 0;
    Index sources = 0;
    Index sinks = 0;
};

/// Exact optimal transport cost between two grid densities (masses h^d m)
/// under a metric ground cost. Mass common to both sides stays in place,
/// the rest moves by successive shortest augmenting paths with node
/// potentials on the complete bipartite source-sink graph. The arguments are
/// put in a canonical order first, so the value is symmetric to the last bit.
inline KRResult kr_transport(const Vec& a, const Vec& b, const GroundMetric& metric) {
    const TorusGrid& g = metric.grid();
    require(a.size() == b.size(), "kr_distance: density size mismatch");
    const bool swap = std::lexicographical_compare(b.data(), b.data() + b.size(), a.data(), a.data() + a.size());
    const Vec& m1 = swap ? b : a;
    const Vec& m2 = swap ? a : b;
    require(m1.size() == g.size() && m2.size() == g.size(), "kr_distance: density size mismatch");
    require(m1.allFinite() && m2.allFinite() && m1.minCoeff() >= 0.0 && m2.minCoeff() >= 0.0,
            "kr_distance: densities must be finite and nonnegative");
    const double hd = g.cell_volume();
    const double mass1 = hd * m1.sum(), mass2 = hd * m2.sum();
    require(std::abs(mass1 - mass2) <= 1e-9 * std::max(1.0, mass1), "kr_distance: masses differ");

    std::vector<Index> src, snk;
    std::vector<double> supply, demand;
    for (Index i = 0; i < g.size(); ++i) {
        const double e = hd * (m1[i] - m2[i]);
        if (e > 0.0) {
            src.push_back(i);
            supply.push_back(e);
        } else if (e < 0.0) {
            snk.push_back(i);
            demand.push_back(-e);
        }
    }
    KRResult res;
    const std::size_t S = src.size(), T = snk.size();
    res.sources = static_cast<Index>(S);
    res.sinks = static_cast<Index>(T);
    if (S == 0 || T == 0) return res;

    Eigen::MatrixXd C(S, T), F = Eigen::MatrixXd::Zero(S, T);
    for (std::size_t k = 0; k < S; ++k)
        for (std::size_t l = 0; l < T; ++l) C(k, l) = metric(src[k], snk[l]);

    double remaining = 0.0;
    for (double s : supply) remaining += s;
    const double eps = 1e-15 * std::max(mass1, 1e-300);
    const double inf = std::numeric_limits<double>::infinity();
    // Nodes 0..S-1 are sources, S..S+T-1 sinks.
    const std::size_t V = S + T;
    std::vector<double> pot(V, 0.0), dist(V);
    std::vector<long> parent(V);
    std::vector<char> done(V);
    while (remaining > eps) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(parent.begin(), parent.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        for (std::size_t k = 0; k < S; ++k)
            if (supply[k] > eps) dist[k] = 0.0;
        long target = -1;
        for (;;) {
            long u = -1;
            for (std::size_t v = 0; v < V; ++v)
                if (!done[v] && dist[v] < inf && (u < 0 || dist[v] < dist[static_cast<std::size_t>(u)])) u = static_cast<long>(v);
            if (u < 0) break;
            const auto uu = static_cast<std::size_t>(u);
            done[uu] = 1;
            if (uu >= S && demand[uu - S] > eps) {
                target = u;
                break;
            }
            if (uu < S) {
                for (std::size_t l = 0; l < T; ++l) {
                    const std::size_t v = S + l;
                    if (done[v]) continue;
                    const double nd = dist[uu] + std::max(0.0, C(uu, l) + pot[uu] - pot[v]);
                    if (nd < dist[v]) {
                        dist[v] = nd;
                        parent[v] = u;
                    }
                }
            } else {
                const std::size_t l = uu - S;
                for (std::size_t k = 0; k < S; ++k) {
                    if (done[k] || F(k, l) <= 0.0) continue;
                    const double nd = dist[uu] + std::max(0.0, -C(k, l) + pot[uu] - pot[k]);
                    if (nd < dist[k]) {
                        dist[k] = nd;
                        parent[k] = u;
                    }
                }
            }
        }
        if (target < 0 && remaining <= 1e-12 * mass1) break;
        if (target < 0) throw SolverError("kr_distance: no augmenting path", remaining);
        const double dt = dist[static_cast<std::size_t>(target)];
        for (std::size_t v = 0; v < V; ++v) pot[v] += std::min(dist[v], dt);

        // Bottleneck along the path back to its source.
        double amount = demand[static_cast<std::size_t>(target) - S];
        long v = target;
        while (parent[static_cast<std::size_t>(v)] >= 0) {
            const long p = parent[static_cast<std::size_t>(v)];
            if (static_cast<std::size_t>(p) >= S)  // reverse edge sink p -> source v
                amount = std::min(amount, F(v, p - static_cast<long>(S)));
            v = p;
        }
        amount = std::min(amount, supply[static_cast<std::size_t>(v)]);
        supply[static_cast<std::size_t>(v)] -= amount;
        demand[static_cast<std::size_t>(target) - S] -= amount;
        remaining -= amount;
        v = target;
        while (parent[static_cast<std::size_t>(v)] >= 0) {
            const long p = parent[static_cast<std::size_t>(v)];
            if (static_cast<std::size_t>(p) < S)
                F(p, v - static_cast<long>(S)) += amount;
            else
                F(v, p - static_cast<long>(S)) = std::max(0.0, F(v, p - static_cast<long>(S)) - amount);
            v = p;
        }
        ++res.augmentations;
    }
    res.value = (C.array() * F.array()).sum();
    return res;
}

/// Kantorovich-Rubinstein (Wasserstein-1) distance between grid densities;
/// flat-torus ground metric unless one is supplied.
inline double kr_distance(const Vec& m1, const Vec& m2, const GroundMetric& metric) {
    return kr_transport(m1, m2, metric).value;
}
inline double kr_distance(const TorusGrid& g, const Vec& m1, const Vec& m2) {
    return kr_distance(m1, m2, GroundMetric::flat(g));
}

}  // namespace hmfg
