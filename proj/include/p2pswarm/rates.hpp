#pragma once

// Pairwise bit rate functions f(r) = g(r) 1{r <= R} and their integral
// summaries: the rate-area gamma = 2 pi int r f(r) dr and the typical range
// int r^2 f / int r f.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "p2pswarm/quadrature.hpp"

namespace p2pswarm {

enum class RateKind { Tcp, Udp, AffineRtt, Overhead, PerFlowCap, SnrRange, SnrInfinite };

inline std::string_view to_string(RateKind k) {
    switch (k) {
        case RateKind::Tcp: return "tcp";
        case RateKind::Udp: return "udp";
        case RateKind::AffineRtt: return "affine_rtt";
        case RateKind::Overhead: return "overhead";
        case RateKind::PerFlowCap: return "per_flow_cap";
        case RateKind::SnrRange: return "snr_range";
        case RateKind::SnrInfinite: return "snr_infinite";
    }
    return "unknown";
}

inline RateKind rate_kind_from_string(std::string_view s) {
    for (auto k : {RateKind::Tcp, RateKind::Udp, RateKind::AffineRtt, RateKind::Overhead,
                   RateKind::PerFlowCap, RateKind::SnrRange, RateKind::SnrInfinite}) {
        if (s == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown rate kind '" + std::string(s) + "'");
}

/// Tagged rate function description. Only the fields relevant to `kind` are
/// read; the factories below fill them in.
struct RateModel {
    RateKind kind = RateKind::Tcp;
    double C = 1.0;      ///< rate constant; SNR at 1 m for the Snr kinds
    double q = 0.0;      ///< AffineRtt offset (m)
    double c = 0.0;      ///< Overhead cost (bits/s)
    double U = 0.0;      ///< PerFlowCap per-flow cap (bits/s)
    double alpha = 4.0;  ///< Snr path-loss exponent
    double R = 1.0;      ///< range (m); infinite for SnrInfinite

    static RateModel tcp(double C, double R) { return checked({RateKind::Tcp, C, 0, 0, 0, 0, R}); }
    static RateModel udp(double C, double R) { return checked({RateKind::Udp, C, 0, 0, 0, 0, R}); }
    static RateModel affine_rtt(double C, double q, double R) {
        return checked({RateKind::AffineRtt, C, q, 0, 0, 0, R});
    }
    static RateModel overhead(double C, double c, double R) {
        return checked({RateKind::Overhead, C, 0, c, 0, 0, R});
    }
    static RateModel per_flow_cap(double C, double U, double R) {
        return checked({RateKind::PerFlowCap, C, 0, 0, U, 0, R});
    }
    static RateModel snr_range(double C, double alpha, double R) {
        return checked({RateKind::SnrRange, C, 0, 0, 0, alpha, R});
    }
    static RateModel snr_infinite(double C, double alpha) {
        return checked({RateKind::SnrInfinite, C, 0, 0, 0, alpha,
                        std::numeric_limits<double>::infinity()});
    }

    bool finite_range() const noexcept { return std::isfinite(R); }

    /// Throws std::invalid_argument when the parameters violate the model's constraints.
    void validate() const {
        auto positive = [](double v, const char* what) {
            if (!(v > 0.0) || std::isnan(v)) {
                throw std::invalid_argument(std::string(what) + " must be strictly positive");
            }
        };
        positive(C, "rate constant C");
        positive(R, "range R");
        if (kind != RateKind::SnrInfinite && !std::isfinite(R)) {
            throw std::invalid_argument("range R must be finite for this rate kind");
        }
        switch (kind) {
            case RateKind::AffineRtt: positive(q, "RTT offset q"); break;
            case RateKind::Overhead:
                positive(c, "overhead rate c");
                if (R > C / c * (1.0 + 1e-12)) {
                    throw std::invalid_argument("overhead model requires R <= C/c");
                }
                break;
            case RateKind::PerFlowCap:
                if (!(U > 0.0)) throw std::invalid_argument("per-flow cap U must be strictly positive");
                break;
            case RateKind::SnrRange:
            case RateKind::SnrInfinite:
                if (!(alpha > 2.0)) throw std::invalid_argument("path-loss exponent must exceed 2");
                break;
            default: break;
        }
    }

    /// Same model with the range cut to min(R, radius).
    RateModel truncated(double radius) const {
        RateModel m = *this;
        m.R = std::min(R, radius);
        if (m.kind == RateKind::SnrInfinite && std::isfinite(m.R)) m.kind = RateKind::SnrRange;
        return m;
    }

private:
    static RateModel checked(RateModel m) {
        m.validate();
        return m;
    }
};

/// Distances below this are evaluated at the clamp, keeping singular profiles finite.
inline double singularity_clamp(const RateModel& m) noexcept {
    return 1e-9 * (m.finite_range() ? m.R : 1.0);
}

/// g(r) without the range indicator.
inline double rate_profile(const RateModel& m, double r) noexcept {
    r = std::max(r, singularity_clamp(m));
    switch (m.kind) {
        case RateKind::Tcp: return m.C / r;
        case RateKind::Udp: return m.C;
        case RateKind::AffineRtt: return m.C / (r + m.q);
        case RateKind::Overhead: return std::max(m.C / r - m.c, 0.0);
        case RateKind::PerFlowCap: return std::min(m.C / r, m.U);
        case RateKind::SnrRange:
        case RateKind::SnrInfinite: return 0.5 * std::log1p(m.C / std::pow(r, m.alpha));
    }
    return 0.0;
}

/// f(r) = g(r) 1{r <= R}, closed-ball convention.
inline double pair_rate(const RateModel& m, double r) noexcept {
    if (r > m.R) return 0.0;
    return rate_profile(m, r);
}

namespace detail {

// x - log1p(x), accurate for small x
inline double x_minus_log1p(double x) {
    if (std::abs(x) < 1e-3) {
        double term = x * x, sum = 0.0;
        for (int k = 2; k < 12; ++k) {
            sum += ((k % 2 == 0) ? 1.0 : -1.0) * term / k;
            term *= x;
        }
        return sum;
    }
    return x - std::log1p(x);
}

// log1p(x) - x + x^2/2, accurate for small x
inline double log1p_minus_quadratic(double x) {
    if (std::abs(x) < 1e-2) {
        double term = x * x * x, sum = 0.0;
        for (int k = 3; k < 14; ++k) {
            sum += ((k % 2 == 1) ? 1.0 : -1.0) * term / k;
            term *= x;
        }
        return sum;
    }
    return std::log1p(x) - x + 0.5 * x * x;
}

// r * f(r) without clamping; finite at r = 0 for every kind.
inline double first_moment_integrand(const RateModel& m, double r) {
    if (r > m.R) return 0.0;
    switch (m.kind) {
        case RateKind::Tcp: return m.C;
        case RateKind::Udp: return m.C * r;
        case RateKind::AffineRtt: return m.C * r / (r + m.q);
        case RateKind::Overhead: return std::max(m.C - m.c * r, 0.0);
        case RateKind::PerFlowCap: return std::min(m.C, m.U * r);
        case RateKind::SnrRange:
        case RateKind::SnrInfinite:
            if (r <= 0.0) return 0.0;
            return 0.5 * r * std::log1p(m.C / std::pow(r, m.alpha));
    }
    return 0.0;
}

// int_0^R r^k f(r) dr by adaptive Simpson, k in {1, 2}.
inline double moment_quadrature(const RateModel& m, int k, double rel_tol) {
    auto integrand = [&](double r) {
        const double v = first_moment_integrand(m, r);
        return k == 1 ? v : v * r;
    };
    auto integrate = [&](double a, double b, double scale) {
        return adaptive_simpson(integrand, a, b, std::max(rel_tol * scale, 1e-300));
    };
    auto coarse = [&](double a, double b) {
        constexpr int n = 512;
        const double h = (b - a) / n;
        double s = integrand(a) + integrand(b);
        for (int i = 1; i < n; ++i) s += integrand(a + i * h) * ((i % 2) ? 4.0 : 2.0);
        return std::abs(s * h / 3.0);
    };

    if (m.finite_range()) {
        // split at the kink of the per-flow cap so both pieces are smooth
        double kink = -1.0;
        if (m.kind == RateKind::PerFlowCap && m.C / m.U < m.R) kink = m.C / m.U;
        const double scale = 0.1 * coarse(0.0, m.R);
        if (kink > 0.0) return integrate(0.0, kink, scale) + integrate(kink, m.R, scale);
        return integrate(0.0, m.R, scale);
    }

    // infinite range: log-spaced panels until the analytic tail bound is negligible
    const double s = std::pow(m.C, 1.0 / m.alpha);
    const double excess = m.alpha - (k == 1 ? 2.0 : 3.0);
    if (!(excess > 0.0)) throw std::invalid_argument("moment diverges for this path-loss exponent");
    double total = integrate(0.0, s, 0.1 * coarse(0.0, s));
    double lo = s;
    for (int panel = 0; panel < 2000; ++panel) {
        // tail beyond lo: int 0.5 C r^{k-alpha} dr
        const double tail = 0.5 * m.C * std::pow(lo, -excess) / excess;
        if (tail < 0.01 * rel_tol * total) return total;
        const double hi = lo * 10.0;
        total += integrate(lo, hi, 0.01 * total);
        lo = hi;
    }
    throw QuadratureError("infinite-range quadrature did not reach its tail tolerance");
}

}  // namespace detail

/// 2 pi int_0^R r f(r) dr, closed form for every kind except SnrRange with alpha != 4.
inline double gamma(const RateModel& m) {
    m.validate();
    constexpr double pi = std::numbers::pi;
    const double C = m.C, R = m.R;
    switch (m.kind) {
        case RateKind::Tcp: return 2.0 * pi * C * R;
        case RateKind::Udp: return pi * C * R * R;
        case RateKind::AffineRtt: return 2.0 * pi * C * m.q * detail::x_minus_log1p(R / m.q);
        case RateKind::Overhead: return 2.0 * pi * (R * C - R * R * m.c / 2.0);
        case RateKind::PerFlowCap:
            if (C >= m.U * R) return pi * m.U * R * R;
            return pi * (2.0 * C * R - C * C / m.U);
        case RateKind::SnrRange:
            if (m.alpha == 4.0) {
                const double sc = std::sqrt(C);
                return pi * (0.5 * R * R * std::log1p(C / (R * R * R * R)) + sc * std::atan(R * R / sc));
            }
            return 2.0 * pi * detail::moment_quadrature(m, 1, 1e-12);
        case RateKind::SnrInfinite:
            return pi * pi * std::pow(C, 2.0 / m.alpha) / (2.0 * std::sin(2.0 * pi / m.alpha));
    }
    return 0.0;
}

/// Quadrature value of gamma, independent of the closed forms.
inline double gamma_quadrature(const RateModel& m, double rel_tol = 1e-10) {
    m.validate();
    if (!(rel_tol > 0.0 && rel_tol <= 1e-4)) throw std::invalid_argument("rel_tol must lie in (0, 1e-4]");
    return 2.0 * std::numbers::pi * detail::moment_quadrature(m, 1, rel_tol);
}

/// int_0^R r^2 f(r) dr.
inline double second_moment(const RateModel& m) {
    m.validate();
    constexpr double pi = std::numbers::pi;
    const double C = m.C, R = m.R;
    switch (m.kind) {
        case RateKind::Tcp: return C * R * R / 2.0;
        case RateKind::Udp: return C * R * R * R / 3.0;
        case RateKind::AffineRtt:
            return C * m.q * m.q * detail::log1p_minus_quadratic(R / m.q);
        case RateKind::Overhead: return C * R * R / 2.0 - m.c * R * R * R / 3.0;
        case RateKind::PerFlowCap: {
            const double r0 = C / m.U;
            if (R <= r0) return m.U * R * R * R / 3.0;
            return m.U * r0 * r0 * r0 / 3.0 + C * (R * R - r0 * r0) / 2.0;
        }
        case RateKind::SnrRange: return detail::moment_quadrature(m, 2, 1e-12);
        case RateKind::SnrInfinite:
            if (!(m.alpha > 3.0)) throw std::invalid_argument("second moment diverges for alpha <= 3");
            return std::pow(C, 3.0 / m.alpha) * pi / (6.0 * std::sin(3.0 * pi / m.alpha));
    }
    return 0.0;
}

inline double second_moment_quadrature(const RateModel& m, double rel_tol = 1e-10) {
    m.validate();
    if (m.kind == RateKind::SnrInfinite && !(m.alpha > 3.0)) {
        throw std::invalid_argument("second moment diverges for alpha <= 3");
    }
    return detail::moment_quadrature(m, 2, rel_tol);
}

/// Typical range (int r^2 f)/(int r f).
inline double typical_range(const RateModel& m) {
    if (m.kind == RateKind::SnrInfinite && !(m.alpha > 3.0)) {
        throw std::invalid_argument("typical range undefined for alpha <= 3");
    }
    return second_moment(m) / (gamma(m) / (2.0 * std::numbers::pi));
}

/// Integral of f over a disk of the given radius centred at a peer.
inline double disk_integral(const RateModel& m, double radius) {
    if (!(radius > 0.0)) return 0.0;
    return gamma(m.truncated(radius));
}

/// True when gamma scales linearly with C.
inline bool linear_in_C(RateKind k) noexcept {
    return k == RateKind::Tcp || k == RateKind::Udp || k == RateKind::AffineRtt;
}

}  // namespace p2pswarm
