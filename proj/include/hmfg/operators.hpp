#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hmfg/grid.hpp"
#include "hmfg/vfields.hpp"

namespace hmfg {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

enum class Scheme { centered, monotone };

inline const char* to_string(Scheme s) { return s == Scheme::centered ? "centered" : "monotone"; }

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "centered") return Scheme::centered;
    if (s == "monotone") return Scheme::monotone;
    throw DomainError("unknown scheme '" + s + "'");
}

/// A square sparse linear map on grid functions, tagged with how it was built.
struct SparseOperator {
    SparseMatrix matrix;
    Scheme scheme = Scheme::monotone;
    std::string family;
    double viscosity = 0.0;
    bool transposed = false;

    Index rows() const { return matrix.rows(); }
    Vec apply(const Vec& u) const { return matrix * u; }
};

/// Exact transpose: every (row, col, value) becomes (col, row, value).
inline SparseOperator adjoint_of(const SparseOperator& op) {
    require(op.matrix.rows() == op.matrix.cols(), "adjoint_of: operator must be square");
    SparseOperator t = op;
    t.matrix = SparseMatrix(op.matrix.transpose());
    t.transposed = !op.transposed;
    return t;
}

/// Coordinate-format dump (row col value), one nonzero per line.
inline void write_coo(const std::string& path, const SparseMatrix& m) {
    std::ofstream os(path);
    if (!os) throw DomainError("cannot write " + path);
    char buf[96];
    for (Index r = 0; r < m.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
            std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", static_cast<long>(it.row()),
                          static_cast<long>(it.col()), it.value());
            os << buf;
        }
}

/// Time-t flow of a vector field by classical RK4 with a fixed number of substeps.
inline Point flow(const VectorField& X, const Point& x0, double t, int substeps = 4) {
    const int d = X.dim();
    const double dt = t / substeps;
    Point x = x0;
    for (int s = 0; s < substeps; ++s) {
        const Point k1 = X.eval(x);
        Point y{};
        for (int j = 0; j < d; ++j) y[j] = x[j] + 0.5 * dt * k1[j];
        const Point k2 = X.eval(y);
        for (int j = 0; j < d; ++j) y[j] = x[j] + 0.5 * dt * k2[j];
        const Point k3 = X.eval(y);
        for (int j = 0; j < d; ++j) y[j] = x[j] + dt * k3[j];
        const Point k4 = X.eval(y);
        for (int j = 0; j < d; ++j) x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    return x;
}

/// Grid, field family and scheme, with the drift-independent pieces of the
/// discrete generator assembled once:
///   diffusion()   ~ (1/2) sum_i X_i^2 + eps * Laplacian
///   forward(i)    ~ X_i, one-sided along the flow of +X_i (monotone scheme)
///   backward(i)   ~ X_i, one-sided along the flow of -X_i (monotone scheme)
/// For the centered scheme forward(i) == backward(i) == sum_j sigma_ij D_j^c.
///
/// The generator for a drift g is  diffusion + sum_i g_i^+ forward_i - g_i^- backward_i,
/// which for the monotone scheme has nonnegative off-diagonals and zero row sums.
/// Horizontal drift split into nonnegative weights on the forward and the
/// backward difference of each field; the net drift is forward - backward.
/// A signed drift g converts to forward = g^+, backward = g^-.
struct SplitDrift {
    std::vector<Vec> forward;
    std::vector<Vec> backward;

    SplitDrift() = default;
    SplitDrift(std::vector<Vec> fw, std::vector<Vec> bw) : forward(std::move(fw)), backward(std::move(bw)) {}
    SplitDrift(const std::vector<Vec>& g) {  // NOLINT(google-explicit-constructor)
        for (const Vec& gi : g) {
            forward.push_back(gi.cwiseMax(0.0));
            backward.push_back((-gi).cwiseMax(0.0));
        }
    }

    bool empty() const { return forward.empty(); }
    std::vector<Vec> net() const {
        std::vector<Vec> out;
        for (std::size_t i = 0; i < forward.size(); ++i) out.push_back(forward[i] - backward[i]);
        return out;
    }
    /// max_x |forward(x)| + |backward(x)| in the Euclidean norm over fields.
    double sup() const {
        double s = 0.0;
        if (empty()) return s;
        for (Index r = 0; r < forward.front().size(); ++r) {
            double n2 = 0.0;
            for (std::size_t i = 0; i < forward.size(); ++i) n2 += std::pow(forward[i][r] + backward[i][r], 2);
            s = std::max(s, std::sqrt(n2));
        }
        return s;
    }
};

class Discretization {
public:
    Discretization(TorusGrid grid, VectorFieldFamily family, Scheme scheme = Scheme::monotone,
                   double viscosity = 0.0)
        : grid_(grid), family_(std::move(family)), scheme_(scheme), viscosity_(viscosity) {
        require(viscosity >= 0.0, "Discretization: viscosity must be nonnegative");
        require(grid_.dim() == family_.dim(), "Discretization: grid and family dimension differ");
        if (scheme_ == Scheme::monotone)
            assemble_monotone();
        else
            assemble_centered();
    }

    const TorusGrid& grid() const { return grid_; }
    const VectorFieldFamily& family() const { return family_; }
    Scheme scheme() const { return scheme_; }
    double viscosity() const { return viscosity_; }
    int fields() const { return family_.size(); }

    const SparseMatrix& diffusion() const { return diffusion_; }
    const SparseMatrix& forward(int i) const { return forward_[static_cast<std::size_t>(i)]; }
    const SparseMatrix& backward(int i) const { return backward_[static_cast<std::size_t>(i)]; }

    /// Semi-Lagrangian step used for the second-order part of field i.
    double diffusion_step(int i) const { return steps_[static_cast<std::size_t>(i)]; }

    /// Same grid and fields with a different viscosity.
    Discretization with_viscosity(double eps) const { return {grid_, family_, scheme_, eps}; }

    /// Generator (1/2) sum X_i^2 + g.D_X + eps Laplacian for the drift g
    /// (one grid function per field; empty means no drift).
    SparseOperator generator(const SplitDrift& g = {}) const {
        SparseOperator op;
        op.scheme = scheme_;
        op.family = family_.name();
        op.viscosity = viscosity_;
        op.matrix = diffusion_;
        if (g.empty()) return op;
        require(static_cast<int>(g.forward.size()) == fields() && g.backward.size() == g.forward.size(),
                "generator: drift needs one component per field");
        for (int i = 0; i < fields(); ++i) {
            const Vec& fw = g.forward[static_cast<std::size_t>(i)];
            const Vec& bw = g.backward[static_cast<std::size_t>(i)];
            require(fw.size() == grid_.size() && bw.size() == grid_.size(), "generator: drift size mismatch");
            if (scheme_ == Scheme::centered) {
                op.matrix += SparseMatrix((fw - bw).asDiagonal() * forward(i));
            } else {
                op.matrix += SparseMatrix(fw.asDiagonal() * forward(i));
                op.matrix -= SparseMatrix(bw.asDiagonal() * backward(i));
            }
        }
        op.matrix.prune(0.0);
        return op;
    }

    /// Horizontal gradient (X_1 u, ..., X_m u). The monotone scheme averages
    /// the two one-sided differences.
    std::vector<Vec> gradient(const Vec& u) const {
        std::vector<Vec> out;
        for (int i = 0; i < fields(); ++i) {
            if (scheme_ == Scheme::centered)
                out.push_back(forward(i) * u);
            else
                out.push_back(0.5 * (forward(i) * u + backward(i) * u));
        }
        return out;
    }

private:
    void assemble_monotone() {
        const double h = grid_.h();
        const Index N = grid_.size();
        std::vector<Triplet> diff;
        std::vector<StencilEntry> st;
        for (int i = 0; i < fields(); ++i) {
            const VectorField& X = family_.field(i);
            const double delta = X.is_lattice_aligned() ? h : 0.5 * std::sqrt(h);
            steps_.push_back(delta);
            VectorField minusX = X;
            for (int j = 0; j < X.dim(); ++j) minusX[j] *= -1.0;

            std::vector<Triplet> fw, bw;
            const double cd = 1.0 / (2.0 * delta * delta);
            for (Index r = 0; r < N; ++r) {
                const Point x = grid_.point(r);
                for (const VectorField* F : {&X, static_cast<const VectorField*>(&minusX)}) {
                    interpolation_stencil(grid_, flow(*F, x, delta), st);
                    for (const auto& e : st) diff.emplace_back(r, e.node, cd * e.weight);
                }
                diff.emplace_back(r, r, -2.0 * cd);

                interpolation_stencil(grid_, flow(X, x, h), st);
                for (const auto& e : st) fw.emplace_back(r, e.node, e.weight / h);
                fw.emplace_back(r, r, -1.0 / h);

                interpolation_stencil(grid_, flow(minusX, x, h), st);
                for (const auto& e : st) bw.emplace_back(r, e.node, -e.weight / h);
                bw.emplace_back(r, r, 1.0 / h);
            }
            forward_.push_back(from_triplets(fw));
            backward_.push_back(from_triplets(bw));
        }
        add_viscosity(diff);
        diffusion_ = from_triplets(diff);
    }

    void assemble_centered() {
        const Index N = grid_.size();
        const double h = grid_.h();
        for (int i = 0; i < fields(); ++i) {
            std::vector<Triplet> t;
            for (Index r = 0; r < N; ++r) {
                const Point x = grid_.point(r);
                const Point c = family_.field(i).eval(x);
                for (int j = 0; j < grid_.dim(); ++j) {
                    if (c[j] == 0.0) continue;
                    t.emplace_back(r, grid_.shift(r, j, 1), c[j] / (2.0 * h));
                    t.emplace_back(r, grid_.shift(r, j, -1), -c[j] / (2.0 * h));
                }
            }
            forward_.push_back(from_triplets(t));
            backward_.push_back(forward_.back());
        }
        steps_.resize(static_cast<std::size_t>(fields()), h);
        SparseMatrix d(N, N);
        for (int i = 0; i < fields(); ++i) d += SparseMatrix(0.5 * (forward(i) * forward(i)));
        std::vector<Triplet> visc;
        add_viscosity(visc);
        d += from_triplets(visc);
        d.prune(0.0);
        diffusion_ = d;
    }

    void add_viscosity(std::vector<Triplet>& t) const {
        if (viscosity_ == 0.0) return;
        const double c = viscosity_ / (grid_.h() * grid_.h());
        for (Index r = 0; r < grid_.size(); ++r)
            for (int j = 0; j < grid_.dim(); ++j) {
                t.emplace_back(r, grid_.shift(r, j, 1), c);
                t.emplace_back(r, grid_.shift(r, j, -1), c);
                t.emplace_back(r, r, -2.0 * c);
            }
    }

    SparseMatrix from_triplets(const std::vector<Triplet>& t) const {
        SparseMatrix m(grid_.size(), grid_.size());
        m.setFromTriplets(t.begin(), t.end());
        m.makeCompressed();
        return m;
    }

    TorusGrid grid_;
    VectorFieldFamily family_;
    Scheme scheme_;
    double viscosity_;
    SparseMatrix diffusion_;
    std::vector<SparseMatrix> forward_, backward_;
    std::vector<double> steps_;
};

/// Convenience wrapper matching the one-shot assembly contract.
inline SparseOperator build_generator(const TorusGrid& grid, const VectorFieldFamily& family,
                                      const std::vector<Vec>& g, Scheme scheme, double eps) {
    require(eps >= 0.0, "build_generator: viscosity must be nonnegative");
    return Discretization(grid, family, scheme, eps).generator(g);
}

inline std::vector<GridFunction> horizontal_gradient(const GridFunction& u, const VectorFieldFamily& family,
                                                     Scheme scheme) {
    require(u.grid().dim() == family.dim(), "horizontal_gradient: dimension mismatch");
    Discretization disc(u.grid(), family, scheme);
    std::vector<GridFunction> out;
    for (auto& v : disc.gradient(u.values())) out.emplace_back(u.grid(), std::move(v));
    return out;
}

/// Sparse direct solver with a BiCGSTAB fallback for systems too large to factor.
class LinearSolver {
public:
    static constexpr Index kDirectLimit = 20000;

    explicit LinearSolver(const SparseMatrix& a) {
        require(a.rows() == a.cols(), "LinearSolver: matrix must be square");
        n_ = a.rows();
        if (n_ <= kDirectLimit) {
            lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
            Eigen::SparseMatrix<double> cm(a);
            lu_->analyzePattern(cm);
            lu_->factorize(cm);
            if (lu_->info() != Eigen::Success) throw SolverError("sparse LU factorization failed", 0.0);
        } else {
            it_ = std::make_unique<Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>>>();
            it_->setTolerance(1e-14);
            it_->setMaxIterations(2000);
            it_->compute(a);
            if (it_->info() != Eigen::Success) throw SolverError("preconditioner setup failed", 0.0);
        }
    }

    Vec solve(const Vec& b) const {
        if (lu_) return lu_->solve(b);
        Vec x = it_->solve(b);
        if (it_->info() != Eigen::Success && it_->error() > 1e-10)
            throw SolverError("BiCGSTAB did not converge", it_->error());
        return x;
    }

private:
    Index n_ = 0;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
    std::unique_ptr<Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>>> it_;
};

/// Identity minus/plus a scaled operator, as a sparse matrix.
inline SparseMatrix shifted(double diag, const SparseMatrix& a, double scale) {
    SparseMatrix id(a.rows(), a.cols());
    id.setIdentity();
    SparseMatrix r = diag * id + scale * a;
    r.makeCompressed();
    return r;
}

}  // namespace hmfg
