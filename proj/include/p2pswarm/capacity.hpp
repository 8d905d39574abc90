#pragma once

// Load of the peer-to-peer traffic on the underlying network: flux through a
// line versus the linear capacity of a Poisson router field.

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "p2pswarm/analytic.hpp"
#include "p2pswarm/rates.hpp"

namespace p2pswarm {

struct NetworkModel {
    double theta = 1.0;  ///< router density (m^-2)
    double K = 1.0;      ///< link capacity (bits/s)

    void validate() const {
        if (!(theta > 0.0) || !(K > 0.0)) throw std::invalid_argument("network parameters must be positive");
    }
};

/// Capacity per unit length of line: 2 sqrt(theta) edge crossings per metre times K.
inline double linear_capacity(const NetworkModel& n) {
    n.validate();
    return 2.0 * std::sqrt(n.theta) * n.K;
}

/// Fluid flux per unit length through any line, (2/pi) lambda F * typical range.
inline double line_flux(const SystemParams& p) {
    p.validate();
    return 2.0 / std::numbers::pi * p.lambda * p.F * typical_range(p.rate);
}

struct Feasibility {
    double psi = 0.0;
    double xi = 0.0;
    bool network_ok = false;
    /// K sqrt(theta) must exceed this (2 lambda F / gamma) int r^2 f; equals psi / 2.
    double link_threshold = 0.0;
    /// Per-peer upload capacity must exceed this; equals the fluid rate.
    double access_threshold = 0.0;
};

/// Necessary conditions only; flow decomposition into links is not modelled.
inline Feasibility feasibility(const SystemParams& p, const NetworkModel& n) {
    Feasibility f;
    f.psi = line_flux(p);
    f.xi = linear_capacity(n);
    f.network_ok = f.psi <= f.xi;
    const double g = gamma(p.rate);
    f.link_threshold = 2.0 * p.lambda * p.F / g * second_moment(p.rate);
    f.access_threshold = std::sqrt(p.lambda * p.F * g);
    return f;
}

enum class DimensionFix { Theta, K };

/// Smallest K (when theta is fixed) or theta (when K is fixed) with Xi = Psi.
inline double min_dimensioning(const SystemParams& p, DimensionFix fix, double value) {
    if (!(value > 0.0)) throw std::invalid_argument("fixed network parameter must be positive");
    const double psi = line_flux(p);
    if (fix == DimensionFix::Theta) return psi / (2.0 * std::sqrt(value));
    const double root = psi / (2.0 * value);
    return root * root;
}

}  // namespace p2pswarm
