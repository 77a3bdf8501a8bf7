#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "hmfg/core.hpp"

namespace hmfg {

/// Horizontal vectors (controls, drifts, co-vectors) of length m <= kMaxDim.
using HVec = std::array<double, kMaxDim>;

/// Growth class of a Hamiltonian in q: quadratic or linear.
enum class Growth { quadratic, linear };

inline const char* to_string(Growth g) { return g == Growth::quadratic ? "quadratic" : "linear"; }

/// Maximizer of the upwind discrete Hamiltonian at one node.
///
/// The discrete Hamiltonian is max over split drifts (f, k) >= 0 of
///   -sum_i (f_i p_i^+ - k_i p_i^-) - cost(f, k),
/// where f_i weights the forward difference p_i^+ along X_i and k_i the
/// backward difference p_i^-. A control a with drift b enters as f = b^+,
/// k = b^-; models may also use both sides at once.
struct UpwindChoice {
    double value = 0.0;
    HVec control{};      ///< maximizing control
    HVec drift{};        ///< net drift f - k
    HVec forward{};      ///< f
    HVec backward{};     ///< k
    double cost = 0.0;
};

/// Controlled horizontal drift b(x, a) with running cost L(x, a) and the
/// Hamiltonian H(x, q) = max_a [ -b(x, a).q - L(x, a) ].
class ControlModel {
public:
    ControlModel(std::string name, int m, Growth growth, double growth_constant)
        : name_(std::move(name)), m_(m), growth_(growth), growth_constant_(growth_constant) {
        require(m >= 1 && m <= kMaxDim, "ControlModel: number of fields out of range");
        require(growth_constant >= 0.0, "ControlModel: growth constant must be nonnegative");
    }
    virtual ~ControlModel() = default;

    const std::string& name() const { return name_; }
    int fields() const { return m_; }
    Growth growth() const { return growth_; }
    double growth_constant() const { return growth_constant_; }

    virtual HVec drift(const Point& x, const HVec& a) const = 0;
    virtual double running_cost(const Point& x, const HVec& a) const = 0;
    virtual HVec argmax(const Point& x, const HVec& q) const = 0;
    virtual double hamiltonian(const Point& x, const HVec& q) const = 0;

    /// Discrete Hamiltonian with one-sided differences p^+ (along +X_i) and
    /// p^- (along -X_i): each drift component sees the difference on its own side.
    virtual UpwindChoice upwind(const Point& x, const HVec& p_plus, const HVec& p_minus) const = 0;

    /// g(x, q) = b(x, argmax(x, q)).
    HVec auxiliary(const Point& x, const HVec& q) const { return drift(x, argmax(x, q)); }

    /// H(x, 0) = -min_a L(x, a).
    double hamiltonian_at_zero(const Point& x) const { return hamiltonian(x, HVec{}); }

private:
    std::string name_;
    int m_;
    Growth growth_;
    double growth_constant_;
};

using Potential = std::function<double(const Point&)>;

/// b(x, a) = a, L = |a|^2 / 2 + F(x), A = R^m: H = |q|^2 / 2 - F(x), argmax = -q.
/// F is an optional state potential (zero by default).
class QuadraticModel final : public ControlModel {
public:
    explicit QuadraticModel(int m, Potential F = {})
        : ControlModel("quadratic", m, Growth::quadratic, 1.0), F_(std::move(F)) {}

    double potential(const Point& x) const { return F_ ? F_(x) : 0.0; }
    HVec drift(const Point&, const HVec& a) const override { return a; }
    double running_cost(const Point& x, const HVec& a) const override { return 0.5 * sq(a) + potential(x); }
    HVec argmax(const Point&, const HVec& q) const override {
        HVec a{};
        for (int i = 0; i < fields(); ++i) a[static_cast<std::size_t>(i)] = -q[static_cast<std::size_t>(i)];
        return a;
    }
    double hamiltonian(const Point& x, const HVec& q) const override { return 0.5 * sq(q) - potential(x); }

    // Two-sided upwinding with cost (f^2 + k^2)/2 per field:
    // H_h = sum_i [ min(p_i^+, 0)^2 + max(p_i^-, 0)^2 ] / 2 - F, which is C^1 in
    // (p^+, p^-) and equals |q|^2/2 - F when p^+ = p^- = q.
    UpwindChoice upwind(const Point& x, const HVec& pp, const HVec& pm) const override {
        UpwindChoice c;
        const double F = potential(x);
        double half_sq = 0.0;
        for (int i = 0; i < fields(); ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            c.forward[k] = std::max(0.0, -pp[k]);
            c.backward[k] = std::max(0.0, pm[k]);
            c.drift[k] = c.forward[k] - c.backward[k];
            c.control[k] = c.drift[k];
            half_sq += 0.5 * (c.forward[k] * c.forward[k] + c.backward[k] * c.backward[k]);
        }
        c.value = half_sq - F;
        c.cost = half_sq + F;
        return c;
    }

private:
    double sq(const HVec& v) const {
        double s = 0.0;
        for (int i = 0; i < fields(); ++i) s += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
        return s;
    }
    Potential F_;
};

/// b(x, a) = a on the closed ball |a| <= R, L = F(x): H = R|q| - F(x),
/// argmax = -R q / |q| (0 at q = 0).
class LinearModel final : public ControlModel {
public:
    explicit LinearModel(int m, double radius = 1.0, Potential F = {})
        : ControlModel("linear", m, Growth::linear, radius), radius_(radius), F_(std::move(F)) {
        require(radius > 0.0, "LinearModel: radius must be positive");
    }

    double radius() const { return radius_; }
    double potential(const Point& x) const { return F_ ? F_(x) : 0.0; }
    HVec drift(const Point&, const HVec& a) const override { return a; }
    double running_cost(const Point& x, const HVec&) const override { return potential(x); }
    HVec argmax(const Point&, const HVec& q) const override {
        const double n = norm(q);
        HVec a{};
        if (n == 0.0) return a;
        for (int i = 0; i < fields(); ++i) a[static_cast<std::size_t>(i)] = -radius_ * q[static_cast<std::size_t>(i)] / n;
        return a;
    }
    double hamiltonian(const Point& x, const HVec& q) const override { return radius_ * norm(q) - potential(x); }

    // Two-sided upwinding over split drifts with |(f, k)| <= R: with gains
    // s^+ = max(0, -p^+), s^- = max(0, p^-) the maximum is R |(s^+, s^-)| - F,
    // which reduces to R|q| - F when p^+ = p^- = q.
    UpwindChoice upwind(const Point& x, const HVec& pp, const HVec& pm) const override {
        UpwindChoice c;
        double n2 = 0.0;
        for (int i = 0; i < fields(); ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            c.forward[k] = std::max(0.0, -pp[k]);
            c.backward[k] = std::max(0.0, pm[k]);
            n2 += c.forward[k] * c.forward[k] + c.backward[k] * c.backward[k];
        }
        const double n = std::sqrt(n2);
        c.cost = potential(x);
        c.value = radius_ * n - c.cost;
        for (int i = 0; i < fields(); ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            c.forward[k] = n > 0.0 ? radius_ * c.forward[k] / n : 0.0;
            c.backward[k] = n > 0.0 ? radius_ * c.backward[k] / n : 0.0;
            c.drift[k] = c.forward[k] - c.backward[k];
            c.control[k] = c.drift[k];
        }
        return c;
    }

private:
    double norm(const HVec& v) const {
        double s = 0.0;
        for (int i = 0; i < fields(); ++i) s += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
        return std::sqrt(s);
    }
    double radius_;
    Potential F_;
};

/// A = {0}, b = 0, L = 0: the uncontrolled diffusion, H = 0.
class TrivialModel final : public ControlModel {
public:
    explicit TrivialModel(int m) : ControlModel("trivial", m, Growth::linear, 0.0) {}
    HVec drift(const Point&, const HVec&) const override { return {}; }
    double running_cost(const Point&, const HVec&) const override { return 0.0; }
    HVec argmax(const Point&, const HVec&) const override { return {}; }
    double hamiltonian(const Point&, const HVec&) const override { return 0.0; }
    UpwindChoice upwind(const Point&, const HVec&, const HVec&) const override { return {}; }
};

using DriftFunction = std::function<HVec(const Point&, const HVec&)>;
using CostFunction = std::function<double(const Point&, const HVec&)>;

/// Control set given by finitely many samples; maxima are taken by
/// enumeration with ties resolved towards the smallest sample index.
class FiniteModel final : public ControlModel {
public:
    FiniteModel(std::string name, int m, std::vector<HVec> samples, DriftFunction b, CostFunction L, Growth growth,
                double growth_constant)
        : ControlModel(std::move(name), m, growth, growth_constant),
          samples_(std::move(samples)),
          b_(std::move(b)),
          L_(std::move(L)) {
        require(!samples_.empty(), "FiniteModel: empty control set");
        require(static_cast<bool>(b_) && static_cast<bool>(L_), "FiniteModel: drift and cost are required");
    }

    const std::vector<HVec>& samples() const { return samples_; }
    HVec drift(const Point& x, const HVec& a) const override { return b_(x, a); }
    double running_cost(const Point& x, const HVec& a) const override { return L_(x, a); }

    HVec argmax(const Point& x, const HVec& q) const override { return samples_[best(x, q)]; }
    double hamiltonian(const Point& x, const HVec& q) const override { return objective(x, q, samples_[best(x, q)]); }

    UpwindChoice upwind(const Point& x, const HVec& pp, const HVec& pm) const override {
        UpwindChoice c;
        c.value = -std::numeric_limits<double>::infinity();
        for (const HVec& a : samples_) {
            const HVec b = b_(x, a);
            const double L = L_(x, a);
            double v = -L;
            for (int i = 0; i < fields(); ++i) {
                const std::size_t k = static_cast<std::size_t>(i);
                v -= std::max(b[k], 0.0) * pp[k] - std::max(-b[k], 0.0) * pm[k];
            }
            if (v > c.value) {
                c.value = v;
                c.control = a;
                c.drift = b;
                c.cost = L;
                for (int i = 0; i < fields(); ++i) {
                    const std::size_t k = static_cast<std::size_t>(i);
                    c.forward[k] = std::max(b[k], 0.0);
                    c.backward[k] = std::max(-b[k], 0.0);
                }
            }
        }
        return c;
    }

private:
    double objective(const Point& x, const HVec& q, const HVec& a) const {
        const HVec b = b_(x, a);
        double v = -L_(x, a);
        for (int i = 0; i < fields(); ++i) v -= b[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)];
        return v;
    }
    std::size_t best(const Point& x, const HVec& q) const {
        std::size_t arg = 0;
        double val = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < samples_.size(); ++s) {
            const double v = objective(x, q, samples_[s]);
            if (v > val) {
                val = v;
                arg = s;
            }
        }
        return arg;
    }

    std::vector<HVec> samples_;
    DriftFunction b_;
    CostFunction L_;
};

/// Build a sampled-control model, validating that the running cost is finite
/// on the control samples at a probe set of states.
inline std::shared_ptr<ControlModel> make_control_hamiltonian(DriftFunction b, CostFunction L, std::vector<HVec> A,
                                                              int m, Growth growth, double growth_constant,
                                                              const std::vector<Point>& probes = {Point{}}) {
    require(!A.empty(), "make_control_hamiltonian: empty control set");
    for (const Point& x : probes)
        for (const HVec& a : A) {
            const double c = L(x, a);
            require(std::isfinite(c), "make_control_hamiltonian: running cost is not bounded below on A");
        }
    return std::make_shared<FiniteModel>("finite", m, std::move(A), std::move(b), std::move(L), growth, growth_constant);
}

/// Uniform samples of the closed ball of radius R in R^m with `per_axis` points per axis.
inline std::vector<HVec> ball_samples(int m, double R, int per_axis) {
    require(per_axis >= 2, "ball_samples: need at least 2 points per axis");
    std::vector<HVec> out;
    std::array<int, kMaxDim> idx{};
    while (true) {
        HVec a{};
        double r2 = 0.0;
        for (int i = 0; i < m; ++i) {
            a[static_cast<std::size_t>(i)] = -R + 2.0 * R * idx[static_cast<std::size_t>(i)] / (per_axis - 1);
            r2 += a[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
        }
        if (r2 <= R * R * (1.0 + 1e-12)) out.push_back(a);
        int i = 0;
        while (i < m && ++idx[static_cast<std::size_t>(i)] == per_axis) idx[static_cast<std::size_t>(i++)] = 0;
        if (i == m) break;
    }
    return out;
}

/// Built-in models by name: "quadratic", "linear" (ball radius R), "trivial".
/// The potential F is ignored by "trivial".
inline std::shared_ptr<ControlModel> make_model(const std::string& kind, int m, double radius = 1.0, Potential F = {}) {
    if (kind == "quadratic") return std::make_shared<QuadraticModel>(m, std::move(F));
    if (kind == "linear") return std::make_shared<LinearModel>(m, radius, std::move(F));
    if (kind == "trivial") return std::make_shared<TrivialModel>(m);
    throw DomainError("unknown control model '" + kind + "'");
}

}  // namespace hmfg
