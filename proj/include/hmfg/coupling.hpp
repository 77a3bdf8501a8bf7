#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "hmfg/mollify.hpp"
#include "hmfg/operators.hpp"

namespace hmfg {

enum class CouplingKind { smoothed_local, constant, linear_convolution };

inline const char* to_string(CouplingKind k) {
    switch (k) {
        case CouplingKind::smoothed_local: return "smoothed-local";
        case CouplingKind::constant: return "constant";
        case CouplingKind::linear_convolution: return "linear-convolution";
    }
    return "?";
}

inline CouplingKind coupling_kind_from_string(const std::string& s) {
    if (s == "smoothed-local") return CouplingKind::smoothed_local;
    if (s == "constant") return CouplingKind::constant;
    if (s == "linear-convolution") return CouplingKind::linear_convolution;
    throw DomainError("unknown coupling kind '" + s + "'");
}

/// Scalar nonlinearity G applied between the two smoothings.
struct Nonlinearity {
    std::string name;
    std::function<double(double)> f;
    double lipschitz;  ///< Lip(G) on [0, inf)
    bool increasing;

    static Nonlinearity by_name(const std::string& n) {
        if (n == "identity") return {n, [](double s) { return s; }, 1.0, true};
        if (n == "arctan") return {n, [](double s) { return std::atan(s); }, 1.0, true};
        if (n == "log1p") return {n, [](double s) { return std::log1p(s); }, 1.0, true};
        if (n == "negative") return {n, [](double s) { return -s; }, 1.0, false};
        throw DomainError("unknown nonlinearity '" + n + "'");
    }
};

/// Mean-field coupling V acting on probability densities:
///   smoothed-local      V[m] = kappa phi * G(phi * m)
///   linear-convolution  V[m] = kappa phi * m
///   constant            V[m] = c
/// with phi the periodic bump kernel of radius sigma.
class Coupling {
public:
    Coupling(const TorusGrid& grid, CouplingKind kind, double sigma = 0.1, Nonlinearity G = Nonlinearity::by_name("identity"),
             double strength = 1.0, double constant = 0.0)
        : grid_(grid), kind_(kind), sigma_(sigma), G_(std::move(G)), strength_(strength), constant_(constant) {
        if (kind_ != CouplingKind::constant) {
            require(sigma > 0.0 && sigma < 0.5, "Coupling: sigma_V must lie in (0, 1/2)");
            K_ = convolution_matrix(grid_, sigma_);
            kernel_sup_ = 0.0;
            const auto st = KernelStencil::bump_kernel(grid_, sigma_);
            for (double w : st.weights) kernel_sup_ = std::max(kernel_sup_, w / grid_.cell_volume());
        }
        require(std::isfinite(strength) && std::isfinite(constant), "Coupling: parameters must be finite");
    }

    static Coupling constant_value(const TorusGrid& g, double c) {
        return Coupling(g, CouplingKind::constant, 0.1, Nonlinearity::by_name("identity"), 1.0, c);
    }

    CouplingKind kind() const { return kind_; }
    double sigma() const { return sigma_; }
    const Nonlinearity& nonlinearity() const { return G_; }
    double strength() const { return strength_; }
    double constant() const { return constant_; }
    const TorusGrid& grid() const { return grid_; }

    /// Evaluate V on a density given by its grid values.
    Vec operator()(const Vec& m) const {
        require(m.size() == grid_.size(), "Coupling: density size mismatch");
        switch (kind_) {
            case CouplingKind::constant: return Vec::Constant(m.size(), constant_);
            case CouplingKind::linear_convolution: return strength_ * (K_ * m);
            case CouplingKind::smoothed_local: {
                Vec s = K_ * m;
                for (Index i = 0; i < s.size(); ++i) s[i] = G_.f(s[i]);
                return strength_ * (K_ * s);
            }
        }
        return {};
    }
    GridFunction operator()(const GridFunction& m) const { return GridFunction(grid_, (*this)(m.values())); }

    /// L for ||V[m1] - V[m2]||_inf <= L ||m1 - m2||_1 over densities.
    double lipschitz_l1() const {
        if (kind_ == CouplingKind::constant) return 0.0;
        const double lg = kind_ == CouplingKind::smoothed_local ? G_.lipschitz : 1.0;
        return std::abs(strength_) * lg * kernel_sup_;
    }

    /// sup over probability densities of ||V[m]||_inf.
    double sup_bound() const {
        switch (kind_) {
            case CouplingKind::constant: return std::abs(constant_);
            case CouplingKind::linear_convolution: return std::abs(strength_) * kernel_sup_;
            case CouplingKind::smoothed_local:
                return std::abs(strength_) * std::max(std::abs(G_.f(0.0)), std::abs(G_.f(kernel_sup_)));
        }
        return 0.0;
    }

    /// Monotone by construction: symmetric kernel with increasing G and kappa >= 0.
    bool monotone_by_construction() const {
        if (kind_ == CouplingKind::constant) return true;
        if (strength_ < 0.0) return false;
        return kind_ == CouplingKind::linear_convolution || G_.increasing;
    }

    /// Kernel phi as a density at the lattice offset between two nodes.
    double kernel(Index x, Index y) const {
        if (kind_ == CouplingKind::constant) return 0.0;
        return K_.coeff(x, y) / grid_.cell_volume();
    }

    std::string describe() const {
        std::string s = to_string(kind_);
        if (kind_ == CouplingKind::constant) return s + "(c=" + std::to_string(constant_) + ")";
        s += "(sigma=" + std::to_string(sigma_) + ", kappa=" + std::to_string(strength_);
        if (kind_ == CouplingKind::smoothed_local) s += ", G=" + G_.name;
        return s + ")";
    }

private:
    TorusGrid grid_;
    CouplingKind kind_;
    double sigma_;
    Nonlinearity G_;
    double strength_;
    double constant_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> K_;
    double kernel_sup_ = 0.0;
};

/// Build a coupling; `for_uniqueness` rejects non-monotone choices.
inline Coupling make_coupling(const TorusGrid& g, const std::string& kind, double sigma, const std::string& G = "identity",
                              double strength = 1.0, double constant = 0.0, bool for_uniqueness = false) {
    Coupling c(g, coupling_kind_from_string(kind), sigma, Nonlinearity::by_name(G), strength, constant);
    if (for_uniqueness && !c.monotone_by_construction())
        throw DomainError("make_coupling: non-monotone coupling requested for a uniqueness test");
    return c;
}

}  // namespace hmfg
