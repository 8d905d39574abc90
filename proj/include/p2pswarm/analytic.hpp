#pragma once

// Closed-form equilibrium laws of the spatial peer-to-peer model: fluid and
// hard-core limits, the heuristic M function, the dimensionless scenario
// algebra, the exactly solvable toy chain and the model extensions.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "p2pswarm/rates.hpp"

namespace p2pswarm {

struct SystemParams {
    double lambda = 1.0;  ///< arrivals per m^2 per s
    double F = 1.0;       ///< mean file size (bits)
    RateModel rate;

    void validate() const {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
        if (!(F > 0.0) || !std::isfinite(F)) throw std::invalid_argument("F must be positive");
        rate.validate();
    }
};

struct FluidMetrics {
    double gamma = 0.0;   ///< rate-area (bits s^-1 m^2)
    double beta_f = 0.0;  ///< peer density
    double mu_f = 0.0;    ///< mean peer rate
    double W_f = 0.0;     ///< mean latency
    /// Mean in-range neighbour count; uses the typical range for infinite-range models.
    std::optional<double> N_f;
    /// Dimensionless load: lambda F R^3 / C (Tcp), lambda F R^2 / C (Udp),
    /// lambda F R^4 / gamma otherwise.
    std::optional<double> rho;
    std::optional<double> R_tilde;
};

inline FluidMetrics fluid_metrics(const SystemParams& p) {
    p.validate();
    FluidMetrics m;
    m.gamma = gamma(p.rate);
    if (!std::isfinite(m.gamma) || !(m.gamma > 0.0)) throw std::invalid_argument("gamma must be finite");
    const double load = p.lambda * p.F;
    m.beta_f = std::sqrt(load / m.gamma);
    m.mu_f = std::sqrt(load * m.gamma);
    m.W_f = std::sqrt(p.F / (p.lambda * m.gamma));

    const auto& r = p.rate;
    if (r.kind != RateKind::SnrInfinite || r.alpha > 3.0) m.R_tilde = typical_range(r);
    const std::optional<double> reach = r.finite_range() ? std::optional<double>(r.R) : m.R_tilde;
    if (reach) {
        m.N_f = std::numbers::pi * *reach * *reach * m.beta_f;
        switch (r.kind) {
            case RateKind::Tcp: m.rho = load * r.R * r.R * r.R / r.C; break;
            case RateKind::Udp: m.rho = load * r.R * r.R / r.C; break;
            default: m.rho = load * std::pow(*reach, 4) / m.gamma; break;
        }
    }
    return m;
}

struct HardCoreMetrics {
    double beta_h = 0.0;
    double W_h = 0.0;
};

inline HardCoreMetrics hardcore_metrics(const SystemParams& p) {
    p.validate();
    if (!p.rate.finite_range()) throw std::invalid_argument("hard-core limit needs a finite range");
    const double disk = std::numbers::pi * p.rate.R * p.rate.R;
    return {1.0 / disk, 1.0 / (p.lambda * disk)};
}

/// Limiting latency law in the hard-core regime: an atom of 1/2 at zero and
/// an exponential of mean 2 W_h otherwise.
inline double hardcore_latency_cdf(double t, double W_h) {
    if (t < 0.0) return 0.0;
    return 1.0 - 0.5 * std::exp(-t / (2.0 * W_h));
}

// ---------------------------------------------------------------------------
// Heuristic M

namespace detail {

// 1 - ln(1+x)/x, with a series near zero where the direct form cancels.
inline double one_minus_log1p_over_x(double x) {
    if (x < 1e-3) {
        double term = x, sum = 0.0;
        for (int k = 2; k < 12; ++k) {
            sum += ((k % 2 == 0) ? 1.0 : -1.0) * term / k;
            term *= x;
        }
        return sum;
    }
    return 1.0 - std::log1p(x) / x;
}

}  // namespace detail

/// Residual of the Tcp fixed-point equation M^2 (1 - (M/2N) ln(1 + 2N/M)) = 1.
inline double heuristic_residual_tcp(double M, double N_f) {
    return M * M * detail::one_minus_log1p_over_x(2.0 * N_f / M) - 1.0;
}

inline double heuristic_M(RateKind kind, double N_f) {
    if (!(N_f > 0.0) || !std::isfinite(N_f)) throw std::invalid_argument("N_f must be positive");
    if (kind == RateKind::Udp) {
        const double h = 1.0 / (2.0 * N_f);
        return std::sqrt(1.0 + h * h) + h;
    }
    if (kind != RateKind::Tcp) {
        throw std::invalid_argument("heuristic M is only defined for the tcp and udp kinds");
    }
    auto h = [N_f](double M) { return heuristic_residual_tcp(M, N_f); };
    double lo = 1.0;
    double hi = 1.0 + 1.0 / N_f;
    while (h(hi) < 0.0) hi *= 2.0;
    // bisection keeps the bracket; a Newton step from the midpoint is taken when it stays inside
    double M = 0.5 * (lo + hi);
    for (int it = 0; it < 400; ++it) {
        const double v = h(M);
        if (v == 0.0) return M;
        if (v < 0.0) lo = M; else hi = M;
        if (std::abs(v) <= 1e-12 && (hi - lo) <= 1e-13 * M) break;
        const double step = 1e-7 * M;
        const double deriv = (h(M + step) - h(M - step)) / (2.0 * step);
        double next = M - v / deriv;
        if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
        if (next == M) break;
        M = next;
    }
    return M;
}

/// Heuristic stationary latency M(N_f) W_f.
inline double latency_law(const SystemParams& p, RateKind kind) {
    const auto fm = fluid_metrics(p);
    if (!fm.N_f) throw std::invalid_argument("latency law needs a finite (typical) range");
    return heuristic_M(kind, *fm.N_f) * fm.W_f;
}

// ---------------------------------------------------------------------------
// Dimensionless scenario

struct Scenario {
    double N_f = 0.0;
    double W_f = 0.0;
    double R = 0.0;
    double C = 0.0;
    RateKind kind = RateKind::Tcp;
    double lambda = 0.0;
    double F = 0.0;

    SystemParams params() const {
        const RateModel m = kind == RateKind::Udp ? RateModel::udp(C, R) : RateModel::tcp(C, R);
        return {lambda, F, m};
    }
};

inline Scenario scenario_from_dimensionless(double N_f, double W_f, double R, double C, RateKind kind) {
    if (!(N_f > 0.0 && W_f > 0.0 && R > 0.0 && C > 0.0)) {
        throw std::invalid_argument("scenario parameters must be positive");
    }
    if (kind != RateKind::Tcp && kind != RateKind::Udp) {
        throw std::invalid_argument("dimensionless scenarios are defined for tcp and udp only");
    }
    Scenario s{N_f, W_f, R, C, kind, 0.0, 0.0};
    s.lambda = N_f / (std::numbers::pi * R * R * W_f);
    s.F = kind == RateKind::Tcp ? 2.0 * N_f * C * W_f / R : N_f * C * W_f;
    return s;
}

// ---------------------------------------------------------------------------
// Toy birth-death chain and Bessel functions

/// Largest argument accepted by bessel_i; I_0(700) is about 1.5e302.
inline constexpr double kBesselMaxArgument = 700.0;

/// Modified Bessel function of the first kind, order 0 or 1, by power series.
inline double bessel_i(int order, double x) {
    if (order != 0 && order != 1) throw std::invalid_argument("bessel_i supports orders 0 and 1");
    if (!(x >= 0.0)) throw std::invalid_argument("bessel_i needs x >= 0");
    if (x > kBesselMaxArgument) throw std::overflow_error("bessel_i argument too large");
    if (x == 0.0) return order == 0 ? 1.0 : 0.0;
    const double half = 0.5 * x;
    const double q = half * half;
    double term = order == 0 ? 1.0 : half;
    double sum = term;
    for (int k = 1; k <= 500; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k + order));
        sum += term;
        if (term < 1e-16 * sum) return sum;
    }
    if (term < 1e-14 * sum) return sum;
    throw std::runtime_error("bessel_i series did not converge in 500 terms");
}

enum class DeathMode { Pairwise, Proportional };

inline std::string_view to_string(DeathMode m) {
    return m == DeathMode::Pairwise ? "pairwise" : "proportional";
}

class ChainCutoffError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unnormalised stationary weights of the truncated toy chain, obtained by
/// local balance pi(i-1) lambda = pi(i) delta(i). Index i holds state i.
inline std::vector<double> toy_chain_weights(double rho, DeathMode mode, std::size_t cutoff) {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    std::vector<double> w(cutoff + 1, 0.0);
    if (mode == DeathMode::Pairwise) {
        // state 0 is unreachable; a lone peer cannot leave
        if (cutoff < 1) throw ChainCutoffError("cutoff must be at least 1");
        w[1] = 1.0;
        for (std::size_t i = 2; i <= cutoff; ++i) {
            w[i] = w[i - 1] * rho / (static_cast<double>(i) * static_cast<double>(i - 1));
        }
    } else {
        w[0] = 1.0;
        for (std::size_t i = 1; i <= cutoff; ++i) w[i] = w[i - 1] * rho / static_cast<double>(i);
    }
    return w;
}

/// Mean population of the toy chain. Pairwise death rate i(i-1) C/F gives the
/// super-scalable chain; proportional death rate i mu is the M/M/inf queue,
/// whose mean is rho. cutoff = 0 grows the truncation automatically.
inline double toy_chain_mean(double rho, DeathMode mode, std::size_t cutoff = 0) {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    if (mode == DeathMode::Proportional) return rho;
    auto mean_of = [](const std::vector<double>& w) {
        double s = 0.0, m = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            s += w[i];
            m += static_cast<double>(i) * w[i];
        }
        return std::pair{m / s, s};
    };
    auto tail_ok = [](const std::vector<double>& w, double total) {
        return w.back() * static_cast<double>(w.size()) < 1e-15 * total;
    };
    if (cutoff != 0) {
        const auto w = toy_chain_weights(rho, mode, cutoff);
        const auto [m, s] = mean_of(w);
        if (!tail_ok(w, s)) throw ChainCutoffError("chain cutoff too small for the requested rho");
        return m;
    }
    std::size_t n = 16;
    for (;;) {
        const auto w = toy_chain_weights(rho, mode, n);
        const auto [m, s] = mean_of(w);
        if (tail_ok(w, s)) return m;
        n *= 2;
        if (n > (std::size_t{1} << 24)) throw ChainCutoffError("chain cutoff could not be grown enough");
    }
}

/// Bessel-function closed form of the pairwise toy chain mean.
inline double toy_bessel_mean(double rho) {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    const double x = 2.0 * std::sqrt(rho);
    return std::sqrt(rho) * bessel_i(0, x) / bessel_i(1, x);
}

// ---------------------------------------------------------------------------
// Extensions

/// Leecher latency with seeding time T_S: positive root of W^2 + W T_S = W_f^2.
inline double seeder_latency(double W_f, double T_S) {
    if (!(T_S >= 0.0)) throw std::invalid_argument("seeding time must be non-negative");
    const double h = 0.5 * T_S;
    // rationalised form avoids cancellation when T_S >> W_f
    return W_f * W_f / (std::sqrt(W_f * W_f + h * h) + h);
}

struct ServerLatency {
    double chi_C = 0.0;
    std::optional<double> W_fluid_assisted;  ///< only for chi_C < 1; meaningful for chi_C << 1
    double W_server_dominated = 0.0;         ///< meaningful for chi_C >> 1
    double beta_fluid_assisted = 0.0;
};

inline ServerLatency server_latency(const SystemParams& p, double U_C) {
    if (!(U_C >= 0.0)) throw std::invalid_argument("server rate density must be non-negative");
    const auto fm = fluid_metrics(p);
    if (!p.rate.finite_range()) throw std::invalid_argument("server latency needs a finite range");
    ServerLatency s;
    s.chi_C = U_C / (p.lambda * p.F);
    if (s.chi_C < 1.0) {
        s.W_fluid_assisted = fm.W_f * std::sqrt(1.0 - s.chi_C);
        s.beta_fluid_assisted = p.lambda * *s.W_fluid_assisted;
    }
    s.W_server_dominated = p.F / (std::numbers::pi * p.rate.R * p.rate.R * U_C);
    return s;
}

struct AbandonmentMetrics {
    double mu_f = 0.0;
    double abandonment_ratio = 0.0;
    double beta_f = 0.0;
    double W_f = 0.0;
};

/// Fluid rate with abandonment rate a: positive root of mu^2 + mu a F = lambda F gamma.
inline AbandonmentMetrics abandonment_metrics(const SystemParams& p, double a) {
    if (!(a >= 0.0)) throw std::invalid_argument("abandonment rate must be non-negative");
    p.validate();
    const double g = gamma(p.rate);
    const double h = 0.5 * a * p.F;
    const double load = p.lambda * p.F * g;
    AbandonmentMetrics out;
    out.mu_f = load / (std::sqrt(load + h * h) + h);
    out.abandonment_ratio = a * p.F / (out.mu_f + a * p.F);
    out.beta_f = out.mu_f / g;
    out.W_f = out.beta_f / p.lambda;
    return out;
}

/// Range at which the Tcp fluid rate equals the upload capacity U.
inline double per_peer_range(double lambda, double F, double C, double U) {
    if (!(lambda > 0.0 && F > 0.0 && C > 0.0 && U > 0.0)) {
        throw std::invalid_argument("per_peer_range parameters must be positive");
    }
    return U * U / (lambda * F * 2.0 * std::numbers::pi * C);
}

enum class FlashRegime { HeavensFlash, SwarmFlash, Critical, NonFluid };

inline std::string_view to_string(FlashRegime r) {
    switch (r) {
        case FlashRegime::HeavensFlash: return "heavens_flash";
        case FlashRegime::SwarmFlash: return "swarm_flash";
        case FlashRegime::Critical: return "critical";
        case FlashRegime::NonFluid: return "non_fluid";
    }
    return "unknown";
}

struct AdaptiveRangeMetrics {
    double beta_f = 0.0;
    double W_f = 0.0;
    double mu_f = 0.0;
    double R = 0.0;  ///< fixed point of R = kappa beta^-alpha
    double d = 0.0;  ///< density exponent
    double l = 0.0;  ///< latency exponent
    double r = 0.0;  ///< radius exponent
    FlashRegime regime = FlashRegime::NonFluid;
};

/// Tcp fluid limit with density-adaptive range R = kappa beta^-alpha.
inline AdaptiveRangeMetrics adaptive_range_metrics(double lambda, double F, double C, double kappa,
                                                   double alpha) {
    if (alpha == 2.0) throw std::invalid_argument("alpha = 2 is a degenerate exponent");
    if (!(lambda > 0.0 && F > 0.0 && C > 0.0 && kappa > 0.0)) {
        throw std::invalid_argument("adaptive range parameters must be positive");
    }
    AdaptiveRangeMetrics m;
    const double base = lambda * F / (2.0 * std::numbers::pi * C * kappa);
    m.beta_f = std::pow(base, 1.0 / (2.0 - alpha));
    m.W_f = m.beta_f / lambda;
    m.mu_f = lambda * F / m.beta_f;
    m.R = kappa * std::pow(m.beta_f, -alpha);
    m.d = 1.0 / (2.0 - alpha);
    m.l = (alpha - 1.0) / (2.0 - alpha);
    m.r = alpha / (alpha - 2.0);
    if (alpha > 2.0) m.regime = FlashRegime::HeavensFlash;
    else if (alpha < 0.5) m.regime = FlashRegime::SwarmFlash;
    else if (alpha == 0.5) m.regime = FlashRegime::Critical;
    else m.regime = FlashRegime::NonFluid;
    return m;
}

/// kappa of the L-nearest-peers rule, pi R^2 beta = L.
inline double kappa_for_nearest(double L) { return std::sqrt(L / std::numbers::pi); }

struct MixedSeederMetrics {
    double beta_f = 0.0;
    double W_f = 0.0;
    double xi = 0.0;
};

/// Leechers with seeding time T_S under a per-flow uplink cap.
inline MixedSeederMetrics mixed_seeder_uplink(const SystemParams& p, double T_S) {
    p.validate();
    if (p.rate.kind != RateKind::PerFlowCap) throw std::invalid_argument("mixed seeder model needs a per-flow cap rate");
    if (!(T_S >= 0.0)) throw std::invalid_argument("seeding time must be non-negative");
    MixedSeederMetrics m;
    m.xi = gamma(p.rate);
    if (T_S == 0.0) {
        const auto fm = fluid_metrics(p);
        m.beta_f = fm.beta_f;
        m.W_f = fm.W_f;
        return m;
    }
    // beta (beta + lambda T_S) = lambda F / xi
    const double s = p.lambda * T_S;
    const double c = p.lambda * p.F / m.xi;
    m.beta_f = 2.0 * c / (std::sqrt(s * s + 4.0 * c) + s);
    m.W_f = m.beta_f / p.lambda;
    return m;
}

}  // namespace p2pswarm
