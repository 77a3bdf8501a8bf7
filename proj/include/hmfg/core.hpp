#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hmfg {

/// Largest ambient dimension supported by the grid and field machinery.
inline constexpr int kMaxDim = 4;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// A point of the flat torus, stored in a fixed-capacity array; only the first
/// `d` coordinates are meaningful for a d-dimensional problem.
using Point = std::array<double, kMaxDim>;

/// Thrown when arguments violate a documented precondition.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an iterative solver exhausts its budget or stagnates.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DomainError(msg);
}

/// Wrap a coordinate into [0, 1).
inline double wrap_unit(double x) {
    double r = x - std::floor(x);
    if (r >= 1.0) r = 0.0;  // floor(-tiny) case
    return r;
}

/// Signed minimal-image difference on the unit circle, in [-1/2, 1/2).
inline double torus_delta(double a, double b) {
    double d = a - b;
    d -= std::floor(d + 0.5);
    return d;
}

/// Flat-torus distance between two points of T^d.
inline double torus_distance(const Point& x, const Point& y, int d) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
        const double t = torus_delta(x[j], y[j]);
        s += t * t;
    }
    return std::sqrt(s);
}

}  // namespace hmfg
