#pragma once

#include <Eigen/Sparse>
#include <cmath>
#include <vector>

#include "hmfg/grid.hpp"

namespace hmfg {

/// Smooth compactly supported bump exp(-1 / (1 - r^2)) for r < 1, zero otherwise.
inline double bump(double r) {
    if (r >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r * r));
}

/// Lattice offsets and weights of a periodic bump kernel of radius zeta.
/// Weights sum to one on the grid, so convolution preserves the discrete mean.
struct KernelStencil {
    std::vector<std::array<int, kMaxDim>> offsets;
    std::vector<double> weights;
    double radius = 0.0;

    static KernelStencil bump_kernel(const TorusGrid& g, double zeta) {
        require(zeta > 0.0, "mollifier radius must be positive");
        require(zeta < 0.5, "mollifier radius must be below 1/2");
        KernelStencil k;
        k.radius = zeta;
        const int d = g.dim();
        const int reach = static_cast<int>(std::floor(zeta / g.h()));
        std::array<int, kMaxDim> off{};
        for (int j = 0; j < d; ++j) off[static_cast<std::size_t>(j)] = -reach;
        double total = 0.0;
        while (true) {
            double r2 = 0.0;
            for (int j = 0; j < d; ++j) r2 += std::pow(off[static_cast<std::size_t>(j)] * g.h(), 2);
            const double w = bump(std::sqrt(r2) / zeta);
            if (w > 0.0) {
                k.offsets.push_back(off);
                k.weights.push_back(w);
                total += w;
            }
            int j = d - 1;
            while (j >= 0 && off[static_cast<std::size_t>(j)] == reach) off[static_cast<std::size_t>(j--)] = -reach;
            if (j < 0) break;
            ++off[static_cast<std::size_t>(j)];
        }
        if (k.weights.empty()) {  // radius below one cell: identity
            k.offsets.push_back({});
            k.weights.push_back(1.0);
            total = 1.0;
        }
        for (double& w : k.weights) w /= total;
        return k;
    }

    /// Value of the kernel density (weight / h^d) at a lattice offset, 0 off support.
    double density(const TorusGrid& g, const std::array<int, kMaxDim>& off) const {
        for (std::size_t s = 0; s < offsets.size(); ++s) {
            bool same = true;
            for (int j = 0; j < g.dim(); ++j) {
                int a = offsets[s][static_cast<std::size_t>(j)] - off[static_cast<std::size_t>(j)];
                a %= g.n();
                if (a != 0) same = false;
            }
            if (same) return weights[s] / g.cell_volume();
        }
        return 0.0;
    }
};

/// Symmetric sparse matrix of periodic convolution with the bump kernel.
inline Eigen::SparseMatrix<double, Eigen::RowMajor> convolution_matrix(const TorusGrid& g, double zeta) {
    const KernelStencil k = KernelStencil::bump_kernel(g, zeta);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(g.size()) * k.weights.size());
    for (Index r = 0; r < g.size(); ++r) {
        const auto base = g.multi_index(r);
        for (std::size_t s = 0; s < k.weights.size(); ++s) {
            auto ijk = base;
            for (int j = 0; j < g.dim(); ++j) ijk[static_cast<std::size_t>(j)] += k.offsets[s][static_cast<std::size_t>(j)];
            t.emplace_back(r, g.index(ijk), k.weights[s]);
        }
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> m(g.size(), g.size());
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

/// f * phi_zeta on the torus.
inline GridFunction mollify(const GridFunction& f, double zeta) {
    return GridFunction(f.grid(), Vec(convolution_matrix(f.grid(), zeta) * f.values()));
}

}  // namespace hmfg
