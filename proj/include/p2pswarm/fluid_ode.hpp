#pragma once

// Explicit integration of the fluid density equation on a torus grid,
//   d beta(x)/dt = lambda - beta(x)/F * int f(|x - y|) beta(y) dy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "p2pswarm/geometry.hpp"
#include "p2pswarm/rates.hpp"

namespace p2pswarm {

class OdeInstability : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FluidOdeConfig {
    double lambda = 0.0;  ///< may be zero (pure decay)
    double F = 1.0;
    RateModel rate;
    double side = 1.0;
    int grid_n = 64;
    double dt = 0.0;  ///< 0 picks 5% of the shortest initial service time
    double t_end = 1.0;
};

/// Row-major grid_n x grid_n field of densities.
using DensityField = std::vector<double>;

struct FluidOdeResult {
    DensityField field;
    bool converged = false;
    double residual = 0.0;  ///< max |d beta/dt| scaled by F / (gamma mean^2)
    double t = 0.0;
    std::size_t steps = 0;
    double dt = 0.0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Translation-invariant interaction kernel on the cell lattice. Off-diagonal
/// weights are f(centre distance) * cell area; the self weight integrates f
/// over a disk of one cell area. Off-diagonal weights are rescaled so the
/// total equals gamma, which keeps the uniform fluid density an exact
/// fixed point of the discrete system.
class DiscreteKernel {
public:
    struct Tap {
        int dx;
        int dy;
        double weight;
    };

    DiscreteKernel(const RateModel& rate, double side, int n) : n_(n) {
        if (n < 16) throw std::invalid_argument("fluid ODE grid must be at least 16x16");
        const double delta = side / n;
        const double cell_area = delta * delta;
        self_weight_ = disk_integral(rate, delta / std::sqrt(std::numbers::pi));
        const int reach = rate.finite_range()
            ? std::min(n / 2, static_cast<int>(std::ceil(rate.R / delta)))
            : n / 2;
        // offsets are minimal images, so each torus cell appears once
        const int lo = 2 * reach + 1 > n ? -((n - 1) / 2) : -reach;
        const int hi = 2 * reach + 1 > n ? n / 2 : reach;
        double off_sum = 0.0;
        for (int dy = lo; dy <= hi; ++dy) {
            for (int dx = lo; dx <= hi; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const double r = delta * std::hypot(dx, dy);
                const double w = pair_rate(rate, r) * cell_area;
                if (w > 0.0) {
                    taps_.push_back({dx, dy, w});
                    off_sum += w;
                }
            }
        }
        const double target = gamma(rate) - self_weight_;
        if (off_sum > 0.0 && target > 0.0) {
            for (auto& t : taps_) t.weight *= target / off_sum;
        }
        total_ = self_weight_;
        for (const auto& t : taps_) total_ += t.weight;
    }

    double total() const noexcept { return total_; }
    double self_weight() const noexcept { return self_weight_; }
    const std::vector<Tap>& taps() const noexcept { return taps_; }

    /// out[x] = sum_y w(x - y) field[y]
    void apply(const DensityField& field, DensityField& out) const {
        const int n = n_;
        out.assign(field.size(), 0.0);
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                double s = self_weight_ * field[static_cast<std::size_t>(y * n + x)];
                for (const auto& t : taps_) {
                    const int xx = (x + t.dx + n) % n;
                    const int yy = (y + t.dy + n) % n;
                    s += t.weight * field[static_cast<std::size_t>(yy * n + xx)];
                }
                out[static_cast<std::size_t>(y * n + x)] = s;
            }
        }
    }

private:
    int n_;
    double self_weight_ = 0.0;
    double total_ = 0.0;
    std::vector<Tap> taps_;
};

inline DensityField uniform_field(int n, double value) {
    return DensityField(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), value);
}

/// mean * (1 + amplitude * sin(2 pi x / side)), one period across the torus.
inline DensityField sinusoidal_field(int n, double mean, double amplitude) {
    DensityField f(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            f[static_cast<std::size_t>(y * n + x)] =
                mean * (1.0 + amplitude * std::sin(2.0 * std::numbers::pi * (x + 0.5) / n));
    return f;
}

class FluidOde {
public:
    explicit FluidOde(FluidOdeConfig cfg)
        : cfg_(std::move(cfg)), kernel_(cfg_.rate, cfg_.side, cfg_.grid_n) {
        cfg_.rate.validate();
        if (!(cfg_.lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
        if (!(cfg_.F > 0.0)) throw std::invalid_argument("F must be positive");
        gamma_ = gamma(cfg_.rate);
    }

    const DiscreteKernel& kernel() const noexcept { return kernel_; }

    /// Time derivative of the field; also reports the largest per-cell death rate mu(x)/F.
    void derivative(const DensityField& b, DensityField& out, double* max_rate = nullptr) const {
        kernel_.apply(b, scratch_);
        out.resize(b.size());
        double m = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double death = scratch_[i] / cfg_.F;
            out[i] = cfg_.lambda - b[i] * death;
            m = std::max(m, death);
        }
        if (max_rate) *max_rate = m;
    }

    double residual(const DensityField& b) const {
        DensityField d;
        derivative(b, d);
        double worst = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            worst = std::max(worst, std::abs(d[i]));
            mean += b[i];
        }
        mean /= static_cast<double>(b.size());
        const double scale = gamma_ * mean * mean / cfg_.F;
        return scale > 0.0 ? worst / scale : worst;
    }

    FluidOdeResult run(DensityField init) const {
        const std::size_t cells = static_cast<std::size_t>(cfg_.grid_n) * static_cast<std::size_t>(cfg_.grid_n);
        if (init.size() != cells) throw std::invalid_argument("initial field has the wrong size");
        for (double v : init) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("initial field must be non-negative");
        }
        FluidOdeResult res;
        DensityField k1, k2, k3, k4, tmp(cells);
        double max_rate = 0.0;
        derivative(init, k1, &max_rate);
        double dt = cfg_.dt;
        if (dt <= 0.0) dt = max_rate > 0.0 ? 0.05 / max_rate : cfg_.t_end / 100.0;
        res.dt = dt;
        DensityField b = std::move(init);
        double t = 0.0;
        const double eps = 1e-12 * cfg_.t_end;
        while (t < cfg_.t_end - eps) {
            const double h = std::min(dt, cfg_.t_end - t);
            derivative(b, k1, &max_rate);
            if (h * max_rate >= 0.1) {
                throw OdeInstability("time step too large: dt * max rate / F = " +
                                     std::to_string(h * max_rate) + " at t = " + std::to_string(t));
            }
            for (std::size_t i = 0; i < cells; ++i) tmp[i] = b[i] + 0.5 * h * k1[i];
            derivative(tmp, k2);
            for (std::size_t i = 0; i < cells; ++i) tmp[i] = b[i] + 0.5 * h * k2[i];
            derivative(tmp, k3);
            for (std::size_t i = 0; i < cells; ++i) tmp[i] = b[i] + h * k3[i];
            derivative(tmp, k4);
            for (std::size_t i = 0; i < cells; ++i) {
                b[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                if (!(b[i] >= 0.0) || !std::isfinite(b[i])) {
                    throw OdeInstability("density left the admissible range at t = " + std::to_string(t));
                }
            }
            t += h;
            ++res.steps;
        }
        res.t = t;
        res.residual = residual(b);
        res.converged = cfg_.lambda > 0.0 && res.residual < 1e-6;
        res.mean = 0.0;
        res.min = b.front();
        res.max = b.front();
        for (double v : b) {
            res.mean += v;
            res.min = std::min(res.min, v);
            res.max = std::max(res.max, v);
        }
        res.mean /= static_cast<double>(cells);
        res.field = std::move(b);
        return res;
    }

private:
    FluidOdeConfig cfg_;
    DiscreteKernel kernel_;
    double gamma_ = 0.0;
    mutable DensityField scratch_;
};

inline FluidOdeResult fluid_ode_run(const FluidOdeConfig& cfg, DensityField init) {
    return FluidOde(cfg).run(std::move(init));
}

}  // namespace p2pswarm
