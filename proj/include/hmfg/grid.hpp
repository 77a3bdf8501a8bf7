#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "hmfg/core.hpp"

namespace hmfg {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;

/// Uniform periodic lattice with n points per axis on T^d.
/// Nodes are ordered lexicographically: the last coordinate varies fastest.
class TorusGrid {
public:
    TorusGrid(int d, int n) : d_(d), n_(n) {
        require(d >= 1 && d <= kMaxDim, "TorusGrid: dimension out of range");
        require(n >= 4, "TorusGrid: need at least 4 points per axis");
        size_ = 1;
        for (int j = 0; j < d; ++j) size_ *= n;
    }

    int dim() const { return d_; }
    int n() const { return n_; }
    double h() const { return 1.0 / n_; }
    Index size() const { return size_; }
    double cell_volume() const { return std::pow(h(), d_); }

    Index index(const std::array<int, kMaxDim>& ijk) const {
        Index idx = 0;
        for (int j = 0; j < d_; ++j) {
            int v = ijk[static_cast<std::size_t>(j)] % n_;
            if (v < 0) v += n_;
            idx = idx * n_ + v;
        }
        return idx;
    }

    std::array<int, kMaxDim> multi_index(Index idx) const {
        std::array<int, kMaxDim> ijk{};
        for (int j = d_ - 1; j >= 0; --j) {
            ijk[static_cast<std::size_t>(j)] = static_cast<int>(idx % n_);
            idx /= n_;
        }
        return ijk;
    }

    Point point(Index idx) const {
        const auto ijk = multi_index(idx);
        Point x{};
        for (int j = 0; j < d_; ++j) x[j] = ijk[static_cast<std::size_t>(j)] * h();
        return x;
    }

    /// Node shifted by `steps` along axis j, with periodic wraparound.
    Index shift(Index idx, int axis, int steps) const {
        auto ijk = multi_index(idx);
        ijk[static_cast<std::size_t>(axis)] += steps;
        return index(ijk);
    }

    /// Nearest node to an arbitrary point.
    Index nearest(const Point& x) const {
        std::array<int, kMaxDim> ijk{};
        for (int j = 0; j < d_; ++j)
            ijk[static_cast<std::size_t>(j)] = static_cast<int>(std::lround(wrap_unit(x[j]) * n_)) % n_;
        return index(ijk);
    }

    bool operator==(const TorusGrid& o) const { return d_ == o.d_ && n_ == o.n_; }

private:
    int d_;
    int n_;
    Index size_;
};

/// One node of an interpolation stencil.
struct StencilEntry {
    Index node;
    double weight;
};

/// Periodic multilinear interpolation weights at x (nonnegative, summing to 1).
/// Fractions within 1e-12 of a node are snapped so lattice-aligned points
/// produce a single unit weight.
inline void interpolation_stencil(const TorusGrid& g, const Point& x, std::vector<StencilEntry>& out) {
    out.clear();
    const int d = g.dim();
    std::array<int, kMaxDim> base{};
    std::array<double, kMaxDim> frac{};
    for (int j = 0; j < d; ++j) {
        const double s = wrap_unit(x[j]) * g.n();
        double f = std::floor(s);
        double t = s - f;
        if (t < 1e-12) t = 0.0;
        if (t > 1.0 - 1e-12) {
            t = 0.0;
            f += 1.0;
        }
        base[static_cast<std::size_t>(j)] = static_cast<int>(f);
        frac[static_cast<std::size_t>(j)] = t;
    }
    for (int corner = 0; corner < (1 << d); ++corner) {
        double w = 1.0;
        std::array<int, kMaxDim> ijk = base;
        for (int j = 0; j < d; ++j) {
            const bool up = (corner >> j) & 1;
            const double t = frac[static_cast<std::size_t>(j)];
            w *= up ? t : 1.0 - t;
            if (up) ijk[static_cast<std::size_t>(j)] += 1;
        }
        if (w > 0.0) out.push_back({g.index(ijk), w});
    }
}

/// Real-valued lattice function.
class GridFunction {
public:
    GridFunction(const TorusGrid& grid, double fill = 0.0) : grid_(grid), values_(Vec::Constant(grid.size(), fill)) {}
    GridFunction(const TorusGrid& grid, Vec values) : grid_(grid), values_(std::move(values)) {
        require(values_.size() == grid_.size(), "GridFunction: size mismatch");
    }

    static GridFunction from(const TorusGrid& grid, const std::function<double(const Point&)>& f) {
        GridFunction u(grid);
        for (Index i = 0; i < grid.size(); ++i) u[i] = f(grid.point(i));
        return u;
    }

    const TorusGrid& grid() const { return grid_; }
    const Vec& values() const { return values_; }
    Vec& values() { return values_; }
    Index size() const { return values_.size(); }

    double& operator[](Index i) { return values_[i]; }
    double operator[](Index i) const { return values_[i]; }

    /// h^d sum u, the grid approximation of the integral.
    double integral() const { return grid_.cell_volume() * values_.sum(); }
    double mean() const { return integral(); }
    double sup_norm() const { return values_.lpNorm<Eigen::Infinity>(); }
    double l1_norm() const { return grid_.cell_volume() * values_.lpNorm<1>(); }
    double min() const { return values_.minCoeff(); }
    double max() const { return values_.maxCoeff(); }

    bool all_finite() const { return values_.allFinite(); }

    /// Multilinear interpolation at an arbitrary point.
    double interpolate(const Point& x) const {
        thread_local std::vector<StencilEntry> st;
        interpolation_stencil(grid_, x, st);
        double s = 0.0;
        for (const auto& e : st) s += e.weight * values_[e.node];
        return s;
    }

    /// CSV with one row per node: coordinates then value.
    void write_csv(const std::string& path, const std::string& value_name = "value") const {
        std::ofstream os(path);
        if (!os) throw DomainError("cannot write " + path);
        write_csv(os, value_name);
    }

    void write_csv(std::ostream& os, const std::string& value_name = "value") const {
        static const char* axes[] = {"x", "y", "z", "w"};
        for (int j = 0; j < grid_.dim(); ++j) os << axes[j] << ',';
        os << value_name << '\n';
        char buf[64];
        for (Index i = 0; i < size(); ++i) {
            const Point x = grid_.point(i);
            for (int j = 0; j < grid_.dim(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g,", x[j]);
                os << buf;
            }
            std::snprintf(buf, sizeof buf, "%.17g\n", values_[i]);
            os << buf;
        }
    }

private:
    TorusGrid grid_;
    Vec values_;
};

/// <u, v>_h = h^d sum u v.
inline double inner(const GridFunction& u, const GridFunction& v) {
    require(u.grid() == v.grid(), "inner: grid mismatch");
    return u.grid().cell_volume() * u.values().dot(v.values());
}

inline double inner(const TorusGrid& g, const Vec& u, const Vec& v) {
    return g.cell_volume() * u.dot(v);
}

/// All lattice nodes of an n-per-axis grid on T^d, as points.
inline std::vector<Point> lattice_points(int d, int n) {
    TorusGrid g(d, n);
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(g.size()));
    for (Index i = 0; i < g.size(); ++i) pts.push_back(g.point(i));
    return pts;
}

}  // namespace hmfg
