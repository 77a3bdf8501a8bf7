#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "hmfg/core.hpp"

namespace hmfg {

/// Integer wave vector of a Fourier mode on T^d.
using WaveVector = std::array<int, kMaxDim>;

/// Real trigonometric polynomial on T^d:
///   p(x) = sum_k  a_k cos(2 pi k.x) + b_k sin(2 pi k.x).
///
/// Wave vectors are kept in canonical form (first nonzero entry positive), so
/// every polynomial has a unique representation up to pruned round-off.
/// Products and partial derivatives are exact, which is what makes iterated
/// Lie brackets of the built-in vector fields available in closed form.
class TrigPoly {
public:
    struct Coeffs {
        double cos_coeff = 0.0;
        double sin_coeff = 0.0;
    };

    TrigPoly() = default;

    static TrigPoly constant(double c) {
        TrigPoly p;
        p.add_term(WaveVector{}, c, 0.0);
        return p;
    }

    static TrigPoly cosine(const WaveVector& k, double amplitude = 1.0) {
        TrigPoly p;
        p.add_term(k, amplitude, 0.0);
        return p;
    }

    static TrigPoly sine(const WaveVector& k, double amplitude = 1.0) {
        TrigPoly p;
        p.add_term(k, 0.0, amplitude);
        return p;
    }

    /// Accumulate a*cos(2 pi k.x) + b*sin(2 pi k.x).
    void add_term(WaveVector k, double a, double b) {
        int sign = 0;
        for (int v : k) {
            if (v != 0) {
                sign = v > 0 ? 1 : -1;
                break;
            }
        }
        if (sign < 0) {
            for (int& v : k) v = -v;
            b = -b;
        }
        if (sign == 0) b = 0.0;
        if (a == 0.0 && b == 0.0) return;
        auto& c = terms_[k];
        c.cos_coeff += a;
        c.sin_coeff += b;
        if (c.cos_coeff == 0.0 && c.sin_coeff == 0.0) terms_.erase(k);
    }

    double operator()(const Point& x) const {
        double s = 0.0;
        for (const auto& [k, c] : terms_) {
            double phase = 0.0;
            bool zero = true;
            for (int j = 0; j < kMaxDim; ++j) {
                if (k[j] != 0) {
                    phase += k[j] * x[j];
                    zero = false;
                }
            }
            if (zero) {
                s += c.cos_coeff;
                continue;
            }
            phase *= kTwoPi;
            if (c.cos_coeff != 0.0) s += c.cos_coeff * std::cos(phase);
            if (c.sin_coeff != 0.0) s += c.sin_coeff * std::sin(phase);
        }
        return s;
    }

    /// d/dx_j, exact.
    TrigPoly derivative(int j) const {
        TrigPoly out;
        for (const auto& [k, c] : terms_) {
            if (k[j] == 0) continue;
            const double w = kTwoPi * k[j];
            out.add_term(k, w * c.sin_coeff, -w * c.cos_coeff);
        }
        return out;
    }

    bool is_zero() const { return terms_.empty(); }

    bool is_constant() const {
        return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first == WaveVector{});
    }

    double constant_term() const {
        auto it = terms_.find(WaveVector{});
        return it == terms_.end() ? 0.0 : it->second.cos_coeff;
    }

    /// Largest wave-vector component; bounds the oscillation scale.
    int max_frequency() const {
        int f = 0;
        for (const auto& [k, c] : terms_)
            for (int v : k) f = std::max(f, std::abs(v));
        return f;
    }

    double max_abs_coefficient() const {
        double m = 0.0;
        for (const auto& [k, c] : terms_)
            m = std::max({m, std::abs(c.cos_coeff), std::abs(c.sin_coeff)});
        return m;
    }

    /// Drop coefficients below `rel` times the largest one.
    void prune(double rel = 1e-13) {
        const double cut = rel * max_abs_coefficient();
        for (auto it = terms_.begin(); it != terms_.end();) {
            if (std::abs(it->second.cos_coeff) <= cut) it->second.cos_coeff = 0.0;
            if (std::abs(it->second.sin_coeff) <= cut) it->second.sin_coeff = 0.0;
            if (it->second.cos_coeff == 0.0 && it->second.sin_coeff == 0.0)
                it = terms_.erase(it);
            else
                ++it;
        }
    }

    const std::map<WaveVector, Coeffs>& terms() const { return terms_; }

    TrigPoly& operator+=(const TrigPoly& o) {
        for (const auto& [k, c] : o.terms_) add_term(k, c.cos_coeff, c.sin_coeff);
        return *this;
    }
    TrigPoly& operator-=(const TrigPoly& o) {
        for (const auto& [k, c] : o.terms_) add_term(k, -c.cos_coeff, -c.sin_coeff);
        return *this;
    }
    TrigPoly& operator*=(double s) {
        if (s == 0.0) {
            terms_.clear();
            return *this;
        }
        for (auto& [k, c] : terms_) {
            c.cos_coeff *= s;
            c.sin_coeff *= s;
        }
        return *this;
    }

    friend TrigPoly operator+(TrigPoly a, const TrigPoly& b) { return a += b; }
    friend TrigPoly operator-(TrigPoly a, const TrigPoly& b) { return a -= b; }
    friend TrigPoly operator*(TrigPoly a, double s) { return a *= s; }
    friend TrigPoly operator*(double s, TrigPoly a) { return a *= s; }
    friend TrigPoly operator-(TrigPoly a) { return a *= -1.0; }

    friend TrigPoly operator*(const TrigPoly& p, const TrigPoly& q) {
        TrigPoly out;
        for (const auto& [k1, c1] : p.terms_) {
            for (const auto& [k2, c2] : q.terms_) {
                WaveVector sum{}, diff{};
                for (int j = 0; j < kMaxDim; ++j) {
                    sum[j] = k1[j] + k2[j];
                    diff[j] = k1[j] - k2[j];
                }
                const double a1 = c1.cos_coeff, b1 = c1.sin_coeff;
                const double a2 = c2.cos_coeff, b2 = c2.sin_coeff;
                // cos.cos, sin.sin, sin.cos, cos.sin product-to-sum identities
                out.add_term(diff, 0.5 * (a1 * a2 + b1 * b2), 0.5 * (b1 * a2 - a1 * b2));
                out.add_term(sum, 0.5 * (a1 * a2 - b1 * b2), 0.5 * (b1 * a2 + a1 * b2));
            }
        }
        out.prune();
        return out;
    }

private:
    std::map<WaveVector, Coeffs> terms_;
};

}  // namespace hmfg
