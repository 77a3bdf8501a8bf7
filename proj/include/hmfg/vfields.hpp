#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "hmfg/core.hpp"
#include "hmfg/trig_poly.hpp"

namespace hmfg {

/// A smooth 1-periodic vector field on T^d with trigonometric-polynomial
/// coefficients, X = sum_j c_j(x) d/dx_j.
class VectorField {
public:
    VectorField() = default;
    explicit VectorField(int d) : coeffs_(static_cast<std::size_t>(d)) {
        require(d >= 1 && d <= kMaxDim, "VectorField: dimension out of range");
    }
    explicit VectorField(std::vector<TrigPoly> coeffs) : coeffs_(std::move(coeffs)) {
        require(!coeffs_.empty() && static_cast<int>(coeffs_.size()) <= kMaxDim,
                "VectorField: dimension out of range");
    }

    int dim() const { return static_cast<int>(coeffs_.size()); }
    const TrigPoly& operator[](int j) const { return coeffs_[static_cast<std::size_t>(j)]; }
    TrigPoly& operator[](int j) { return coeffs_[static_cast<std::size_t>(j)]; }

    Point eval(const Point& x) const {
        Point v{};
        for (int j = 0; j < dim(); ++j) v[j] = (*this)[j](x);
        return v;
    }

    /// J(j, k) = d c_j / d x_k at x.
    Eigen::MatrixXd jacobian(const Point& x) const {
        Eigen::MatrixXd J(dim(), dim());
        for (int j = 0; j < dim(); ++j)
            for (int k = 0; k < dim(); ++k) J(j, k) = (*this)[j].derivative(k)(x);
        return J;
    }

    /// Euclidean divergence sum_j d c_j / d x_j.
    TrigPoly divergence() const {
        TrigPoly s;
        for (int j = 0; j < dim(); ++j) s += (*this)[j].derivative(j);
        return s;
    }

    /// Directional derivative of a scalar polynomial along this field.
    TrigPoly apply(const TrigPoly& f) const {
        TrigPoly s;
        for (int j = 0; j < dim(); ++j) s += (*this)[j] * f.derivative(j);
        s.prune();
        return s;
    }

    bool is_zero() const {
        for (const auto& c : coeffs_)
            if (!c.is_zero()) return false;
        return true;
    }

    /// Constant coefficients with integer values: the time-h flow maps
    /// lattice nodes onto lattice nodes.
    bool is_lattice_aligned() const {
        for (const auto& c : coeffs_) {
            if (!c.is_constant()) return false;
            const double v = c.constant_term();
            if (v != std::round(v)) return false;
        }
        return true;
    }

    const std::vector<TrigPoly>& coefficients() const { return coeffs_; }

private:
    std::vector<TrigPoly> coeffs_;
};

/// [a, b](x) = Db(x) a(x) - Da(x) b(x), computed symbolically.
inline VectorField lie_bracket(const VectorField& a, const VectorField& b) {
    require(a.dim() == b.dim(), "lie_bracket: dimension mismatch");
    VectorField out(a.dim());
    for (int j = 0; j < a.dim(); ++j) {
        TrigPoly c = a.apply(b[j]) - b.apply(a[j]);
        c.prune();
        out[j] = std::move(c);
    }
    return out;
}

/// A family X_1..X_m of vector fields on T^d.
class VectorFieldFamily {
public:
    VectorFieldFamily(std::string name, std::vector<VectorField> fields, int documented_step)
        : name_(std::move(name)), fields_(std::move(fields)), step_(documented_step) {
        require(!fields_.empty(), "VectorFieldFamily: need at least one field");
        d_ = fields_.front().dim();
        for (const auto& f : fields_)
            require(f.dim() == d_, "VectorFieldFamily: fields of mixed dimension");
        for (const auto& f : fields_) divs_.push_back(f.divergence());
    }

    const std::string& name() const { return name_; }
    int dim() const { return d_; }
    int size() const { return static_cast<int>(fields_.size()); }
    const VectorField& field(int i) const { return fields_[static_cast<std::size_t>(i)]; }
    const std::vector<VectorField>& fields() const { return fields_; }

    /// Step of the Hormander condition as documented for the built-in family
    /// (0 when unknown); verify_hormander measures the actual value.
    int documented_step() const { return step_; }

    /// sigma(x): row i holds X_i(x).
    Eigen::MatrixXd sigma(const Point& x) const {
        Eigen::MatrixXd s(size(), d_);
        for (int i = 0; i < size(); ++i) {
            const Point v = field(i).eval(x);
            for (int j = 0; j < d_; ++j) s(i, j) = v[j];
        }
        return s;
    }

    Eigen::MatrixXd jacobian(int i, const Point& x) const { return field(i).jacobian(x); }

    double div(int i, const Point& x) const { return divs_[static_cast<std::size_t>(i)](x); }

    bool divergence_free() const {
        for (const auto& dv : divs_)
            if (!dv.is_zero()) return false;
        return true;
    }

private:
    std::string name_;
    std::vector<VectorField> fields_;
    std::vector<TrigPoly> divs_;
    int d_ = 0;
    int step_ = 0;
};

namespace families {

inline WaveVector wave(int axis, int k = 1) {
    WaveVector w{};
    w[static_cast<std::size_t>(axis)] = k;
    return w;
}

inline VectorField axis_field(int d, int axis) {
    VectorField f(d);
    f[axis] = TrigPoly::constant(1.0);
    return f;
}

/// Canonical basis d/dx_1 .. d/dx_d.
inline VectorFieldFamily euclidean(int d) {
    require(d >= 1 && d <= kMaxDim, "euclidean: dimension out of range");
    std::vector<VectorField> fs;
    for (int j = 0; j < d; ++j) fs.push_back(axis_field(d, j));
    return {"euclidean", std::move(fs), 1};
}

/// {d/dx, sin(2 pi x) d/dy} on T^2; step 2 on the lines sin(2 pi x) = 0.
inline VectorFieldFamily grushin() {
    VectorField x2(2);
    x2[1] = TrigPoly::sine(wave(0));
    return {"grushin", {axis_field(2, 0), std::move(x2)}, 2};
}

/// {d/dx - sin(2 pi y) d/dz, d/dy + sin(2 pi x) d/dz} on T^3.
inline VectorFieldFamily heisenberg_periodic() {
    VectorField x1 = axis_field(3, 0);
    x1[2] = TrigPoly::sine(wave(1), -1.0);
    VectorField x2 = axis_field(3, 1);
    x2[2] = TrigPoly::sine(wave(0), 1.0);
    return {"heisenberg_periodic", {std::move(x1), std::move(x2)}, 4};
}

/// Look up a built-in family; `d` is used only by "euclidean".
inline VectorFieldFamily by_name(const std::string& name, int d = 2) {
    if (name == "euclidean") return euclidean(d);
    if (name == "grushin") return grushin();
    if (name == "heisenberg_periodic") return heisenberg_periodic();
    throw DomainError("unknown vector-field family '" + name + "'");
}

}  // namespace families

/// Flattened copy of a family's coefficients for fast repeated evaluation
/// (inner loops of flows, shortest paths and path simulation).
class FieldEvaluator {
public:
    explicit FieldEvaluator(const VectorFieldFamily& family) : d_(family.dim()), m_(family.size()) {
        comps_.resize(static_cast<std::size_t>(d_ * m_));
        for (int i = 0; i < m_; ++i)
            for (int j = 0; j < d_; ++j) {
                auto& terms = comps_[static_cast<std::size_t>(i * d_ + j)];
                for (const auto& [k, c] : family.field(i)[j].terms()) {
                    Term t;
                    for (int a = 0; a < kMaxDim; ++a) t.w[static_cast<std::size_t>(a)] = kTwoPi * k[static_cast<std::size_t>(a)];
                    t.a = c.cos_coeff;
                    t.b = c.sin_coeff;
                    t.constant = k == WaveVector{};
                    terms.push_back(t);
                }
            }
    }

    int dim() const { return d_; }
    int size() const { return m_; }

    /// sum_i alpha_i X_i(x).
    Point combination(const double* alpha, const Point& x) const {
        Point v{};
        for (int i = 0; i < m_; ++i) {
            if (alpha[i] == 0.0) continue;
            for (int j = 0; j < d_; ++j) v[j] += alpha[i] * component(i, j, x);
        }
        return v;
    }

    Point field(int i, const Point& x) const {
        Point v{};
        for (int j = 0; j < d_; ++j) v[j] = component(i, j, x);
        return v;
    }

    double component(int i, int j, const Point& x) const {
        double s = 0.0;
        for (const Term& t : comps_[static_cast<std::size_t>(i * d_ + j)]) {
            if (t.constant) {
                s += t.a;
                continue;
            }
            double ph = 0.0;
            for (int a = 0; a < d_; ++a) ph += t.w[static_cast<std::size_t>(a)] * x[a];
            if (t.a != 0.0) s += t.a * std::cos(ph);
            if (t.b != 0.0) s += t.b * std::sin(ph);
        }
        return s;
    }

    /// RK4 flow of sum_i alpha_i X_i for time t.
    Point flow(const double* alpha, const Point& x0, double t, int substeps = 4) const {
        const double dt = t / substeps;
        Point x = x0;
        for (int s = 0; s < substeps; ++s) {
            const Point k1 = combination(alpha, x);
            Point y{};
            for (int j = 0; j < d_; ++j) y[j] = x[j] + 0.5 * dt * k1[j];
            const Point k2 = combination(alpha, y);
            for (int j = 0; j < d_; ++j) y[j] = x[j] + 0.5 * dt * k2[j];
            const Point k3 = combination(alpha, y);
            for (int j = 0; j < d_; ++j) y[j] = x[j] + dt * k3[j];
            const Point k4 = combination(alpha, y);
            for (int j = 0; j < d_; ++j) x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        return x;
    }

private:
    struct Term {
        std::array<double, kMaxDim> w{};
        double a = 0.0;
        double b = 0.0;
        bool constant = false;
    };
    int d_;
    int m_;
    std::vector<std::vector<Term>> comps_;
};

/// Iterated left-normed brackets [X_{w1}, [X_{w2}, ... X_{wk}]] up to a depth.
struct BracketTree {
    struct Entry {
        std::vector<int> word;
        VectorField field;
    };
    std::vector<Entry> entries;
    int depth = 0;

    static BracketTree build(const VectorFieldFamily& family, int depth) {
        require(depth >= 1, "BracketTree: depth must be >= 1");
        BracketTree t;
        t.depth = depth;
        std::vector<Entry> level;
        for (int i = 0; i < family.size(); ++i) level.push_back({{i}, family.field(i)});
        t.entries = level;
        for (int k = 2; k <= depth; ++k) {
            std::vector<Entry> next;
            for (int i = 0; i < family.size(); ++i) {
                for (const auto& e : level) {
                    if (e.word.size() == 1 && e.word.front() == i) continue;  // [X_i, X_i] = 0
                    VectorField b = lie_bracket(family.field(i), e.field);
                    if (b.is_zero()) continue;
                    std::vector<int> w{i};
                    w.insert(w.end(), e.word.begin(), e.word.end());
                    next.push_back({std::move(w), std::move(b)});
                }
            }
            t.entries.insert(t.entries.end(), next.begin(), next.end());
            level = std::move(next);
        }
        return t;
    }

    std::size_t count_up_to(int length) const {
        std::size_t c = 0;
        for (const auto& e : entries)
            if (static_cast<int>(e.word.size()) <= length) ++c;
        return c;
    }
};

/// Outcome of a Hormander-condition check over a sample set.
struct HormanderReport {
    bool satisfied = false;
    int step = 0;                    ///< least k spanning at every sample (if satisfied)
    std::vector<int> step_at;        ///< per-sample local step, 0 = deficient at max_step
    std::vector<Point> deficient;    ///< samples with rank < d at max_step
    std::vector<Point> borderline;   ///< samples whose deciding singular value is near the cutoff
};

/// Rank cutoff relative to the largest singular value.
inline constexpr double kSpanRankTolerance = 1e-10;

inline HormanderReport verify_hormander(const VectorFieldFamily& family,
                                        const std::vector<Point>& samples, int max_step) {
    require(max_step >= 1, "verify_hormander: max_step must be >= 1");
    require(!samples.empty(), "verify_hormander: empty sample set");
    const BracketTree tree = BracketTree::build(family, max_step);
    const int d = family.dim();

    HormanderReport rep;
    rep.step_at.reserve(samples.size());
    int global = 1;
    for (const Point& x : samples) {
        std::vector<Point> vals;
        vals.reserve(tree.entries.size());
        for (const auto& e : tree.entries) vals.push_back(e.field.eval(x));

        int local = 0;
        bool border = false;
        for (int k = 1; k <= max_step; ++k) {
            std::vector<int> cols;
            for (std::size_t c = 0; c < tree.entries.size(); ++c)
                if (static_cast<int>(tree.entries[c].word.size()) <= k) cols.push_back(static_cast<int>(c));
            Eigen::MatrixXd M(d, static_cast<Eigen::Index>(cols.size()));
            for (std::size_t c = 0; c < cols.size(); ++c)
                for (int j = 0; j < d; ++j)
                    M(j, static_cast<Eigen::Index>(c)) = vals[static_cast<std::size_t>(cols[c])][j];
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
            const auto& s = svd.singularValues();
            if (s.size() < d || s(0) <= 0.0) continue;
            const double ratio = s(d - 1) / s(0);
            if (ratio > kSpanRankTolerance) {
                local = k;
                border = ratio < 1e3 * kSpanRankTolerance;
                break;
            }
            if (ratio > 1e-3 * kSpanRankTolerance) border = true;
        }
        rep.step_at.push_back(local);
        if (border) rep.borderline.push_back(x);
        if (local == 0)
            rep.deficient.push_back(x);
        else
            global = std::max(global, local);
    }
    rep.satisfied = rep.deficient.empty();
    rep.step = rep.satisfied ? global : 0;
    return rep;
}

}  // namespace hmfg
