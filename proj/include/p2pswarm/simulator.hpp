#pragma once

// Discrete-time spatial birth-and-death simulator of the peer-to-peer model
// on a square torus.
//
// Each step of length tau:
//   1. Poisson(lambda * area * tau) leechers arrive at uniform positions, each
//      stamped with a uniform arrival epoch inside the step and an exponential
//      service requirement of mean F;
//   2. every leecher's rate is summed over its neighbours (fixed range or its
//      L nearest peers), plus an equal share of the server capacity;
//   3. service is applied to all leechers with those start-of-step rates;
//   4. leechers that did not finish may abandon;
//   5. finished leechers become seeders for T_S (or leave), expired seeders leave.
// All departures of a step happen together at its end.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "p2pswarm/analytic.hpp"
#include "p2pswarm/geometry.hpp"
#include "p2pswarm/rates.hpp"

namespace p2pswarm {

enum class ServiceMode { Accumulate, Hazard };
enum class NeighborRule { FixedRange, KNearest };
enum class Role : std::uint8_t { Leecher, Seeder };

inline std::string_view to_string(ServiceMode m) { return m == ServiceMode::Accumulate ? "accumulate" : "hazard"; }
inline std::string_view to_string(NeighborRule r) { return r == NeighborRule::FixedRange ? "fixed_range" : "k_nearest"; }

class SimulationAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Peer {
    PeerId id = 0;
    Point pos;
    double arrival_time = 0.0;
    double remaining = 0.0;  ///< bits still to download (accumulate mode)
    Role role = Role::Leecher;
    double seed_until = 0.0;
    bool tracked = false;  ///< arrived inside the measurement window
};

struct Extensions {
    double T_S = 0.0;  ///< seeding time
    double U_C = 0.0;  ///< server rate density (bits s^-1 m^-2)
    double a = 0.0;    ///< abandonment rate (s^-1)
};

struct SimConfig {
    SystemParams params;
    Torus torus{1.0};
    double tau = 1.0;
    double warmup = 1.0;
    double measure = 1.0;
    /// Extra time after the measurement window during which peers that arrived
    /// inside it may still finish; the run stops early once all have left.
    double drain = 0.0;
    std::uint64_t seed = 1;
    ServiceMode service_mode = ServiceMode::Accumulate;
    NeighborRule neighbor_rule = NeighborRule::FixedRange;
    std::size_t L = 8;
    double snapshot_every = 0.0;  ///< 0 selects max(tau, W_f / 20)
    Extensions extensions;
    std::size_t population_cap = 1'000'000;
    std::size_t probes_per_snapshot = 1000;
    int flux_lines = 8;
    bool record_snapshots = true;

    /// lambda = 0 is allowed here (no arrivals), unlike in the analytic laws.
    void validate() const {
        params.rate.validate();
        if (!(params.F > 0.0) || !std::isfinite(params.F)) throw std::invalid_argument("F must be positive");
        if (!(params.lambda >= 0.0) || !std::isfinite(params.lambda)) {
            throw std::invalid_argument("lambda must be non-negative");
        }
        if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
        if (!(warmup > 0.0) || !(measure > 0.0)) throw std::invalid_argument("warmup and measure must be positive");
        if (!(drain >= 0.0)) throw std::invalid_argument("drain must be non-negative");
        if (!params.rate.finite_range() && neighbor_rule == NeighborRule::FixedRange) {
            throw std::invalid_argument("fixed-range rule needs a finite range");
        }
        if (neighbor_rule == NeighborRule::FixedRange && torus.side() < 2.0 * params.rate.R) {
            throw std::invalid_argument("torus side must be at least twice the range");
        }
        if (neighbor_rule == NeighborRule::KNearest && L == 0) throw std::invalid_argument("L must be positive");
        if (extensions.T_S < 0.0 || extensions.U_C < 0.0 || extensions.a < 0.0) {
            throw std::invalid_argument("extension parameters must be non-negative");
        }
        if (snapshot_every < 0.0) throw std::invalid_argument("snapshot cadence must be non-negative");
    }

    double snapshot_interval() const {
        if (snapshot_every > 0.0) return snapshot_every;
        if (!(params.lambda > 0.0)) return tau;
        return std::max(tau, fluid_metrics(params).W_f / 20.0);
    }
};

/// Cross-section of the population at one instant of the measurement period.
struct Snapshot {
    double time = 0.0;
    std::size_t leechers = 0;
    std::size_t seeders = 0;
    std::vector<double> nn_distances;           ///< per peer, unbounded search
    std::vector<double> peer_rates;             ///< per peer, sum of f over its neighbours
    std::vector<double> probe_rates;            ///< per uniform probe location
    std::vector<std::uint32_t> in_range_counts; ///< per peer, neighbours within R
    double flux = 0.0;                          ///< line-flux estimate
};

struct DensityPoint {
    double time = 0.0;
    std::size_t leechers = 0;
    std::size_t seeders = 0;
};

struct SimStats {
    std::vector<double> latency_samples;   ///< in departure order
    std::vector<double> latency_arrivals;  ///< arrival epoch of each sample
    std::uint64_t arrivals = 0;
    std::uint64_t completions = 0;
    std::uint64_t abandonments = 0;
    std::uint64_t seeds_started = 0;
    std::uint64_t seeder_expiries = 0;
    std::uint64_t abandon_count = 0;  ///< abandonments among measured peers
    std::size_t initial_leechers = 0;
    std::size_t initial_seeders = 0;
    std::size_t final_leechers = 0;
    std::size_t final_seeders = 0;
    std::uint64_t cohort_size = 0;
    std::uint64_t cohort_unfinished = 0;
    double leecher_time_in_window = 0.0;  ///< integral of leecher count over the measurement window
    double window_length = 0.0;
    double end_time = 0.0;
    std::uint64_t steps = 0;
    std::vector<DensityPoint> density_trace;
    std::vector<Snapshot> snapshots;
    std::vector<std::string> warnings;

    double time_average_leechers() const {
        return window_length > 0.0 ? leecher_time_in_window / window_length : 0.0;
    }

    bool conserved() const {
        const auto l_delta = static_cast<std::int64_t>(final_leechers) - static_cast<std::int64_t>(initial_leechers);
        const auto s_delta = static_cast<std::int64_t>(final_seeders) - static_cast<std::int64_t>(initial_seeders);
        return l_delta == static_cast<std::int64_t>(arrivals) - static_cast<std::int64_t>(completions) -
                              static_cast<std::int64_t>(abandonments) &&
               s_delta == static_cast<std::int64_t>(seeds_started) - static_cast<std::int64_t>(seeder_expiries);
    }
};

class Simulator {
public:
    explicit Simulator(SimConfig cfg)
        : cfg_(std::move(cfg)),
          grid_(make_grid(cfg_)),
          rng_(cfg_.seed),
          probe_rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
        warmup_steps_ = steps_for(cfg_.warmup);
        window_end_steps_ = warmup_steps_ + steps_for(cfg_.measure);
        drain_steps_ = static_cast<std::uint64_t>(std::ceil(cfg_.drain / cfg_.tau - 1e-9));
        snapshot_interval_ = cfg_.snapshot_interval();
        next_snapshot_ = cfg_.tau * static_cast<double>(warmup_steps_) + snapshot_interval_;
        next_trace_ = 0.0;
    }

    const SimConfig& config() const noexcept { return cfg_; }
    const std::vector<Peer>& peers() const noexcept { return peers_; }
    const SimStats& stats() const noexcept { return stats_; }
    const CellGrid& grid() const noexcept { return grid_; }
    double time() const noexcept { return cfg_.tau * static_cast<double>(step_index_); }
    std::uint64_t step_index() const noexcept { return step_index_; }

    std::size_t leecher_count() const noexcept { return leechers_; }
    std::size_t seeder_count() const noexcept { return peers_.size() - leechers_; }

    /// Places a peer directly, outside the arrival process. Must be called
    /// before the first step so it counts towards the initial population.
    PeerId add_peer(Point pos, Role role = Role::Leecher, std::optional<double> remaining = std::nullopt) {
        Peer p;
        p.id = next_id_++;
        p.pos = cfg_.torus.reduce(pos);
        p.arrival_time = time();
        p.role = role;
        p.remaining = remaining ? *remaining : draw_requirement();
        if (role == Role::Seeder) {
            p.seed_until = time() + cfg_.extensions.T_S;
            ++stats_.initial_seeders;
        } else {
            ++leechers_;
            ++stats_.initial_leechers;
        }
        insert(p);
        return p.id;
    }

    /// Download rate of a leecher at pos from the current population, excluding `self`.
    double neighbour_rate(Point pos, PeerId self) const {
        const auto& m = cfg_.params.rate;
        double mu = 0.0;
        if (cfg_.neighbor_rule == NeighborRule::FixedRange) {
            grid_.for_each_within(pos, m.R, self, [&](const CellGrid::Entry&, double d) { mu += pair_rate(m, d); });
        } else {
            for (double d : grid_.nearest_distances(pos, cfg_.L, self)) mu += rate_profile(m, d);
        }
        return mu;
    }

    void step() {
        const double t0 = time();
        const double t1 = t0 + cfg_.tau;
        const bool in_window = step_index_ >= warmup_steps_ && step_index_ < window_end_steps_;
        double arrival_offsets = 0.0;

        // 1. arrivals
        const auto n_new = poisson_count(rng_, cfg_.params.lambda * cfg_.torus.area() * cfg_.tau);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::uint64_t k = 0; k < n_new; ++k) {
            Peer p;
            p.id = next_id_++;
            p.pos = uniform_point(rng_, cfg_.torus);
            const double offset = unit(rng_) * cfg_.tau;
            p.arrival_time = t0 + offset;
            p.remaining = draw_requirement();
            p.tracked = in_window;
            if (in_window) {
                ++stats_.cohort_size;
                ++cohort_outstanding_;
                arrival_offsets += offset;
            }
            insert(p);
            ++leechers_;
            ++stats_.arrivals;
        }
        if (peers_.size() > cfg_.population_cap) {
            throw SimulationAbort("population " + std::to_string(peers_.size()) + " exceeds the hard cap of " +
                                  std::to_string(cfg_.population_cap));
        }
        if (in_window) {
            stats_.leecher_time_in_window += static_cast<double>(leechers_) * cfg_.tau - arrival_offsets;
        }

        // 2. start-of-step rates
        rates_.assign(peers_.size(), 0.0);
        const double server_share =
            (cfg_.extensions.U_C > 0.0 && leechers_ > 0)
                ? cfg_.extensions.U_C * cfg_.torus.area() / static_cast<double>(leechers_)
                : 0.0;
        for (std::size_t i = 0; i < peers_.size(); ++i) {
            if (peers_[i].role != Role::Leecher) continue;
            rates_[i] = neighbour_rate(peers_[i].pos, peers_[i].id) + server_share;
        }

        // 3-5. service, abandonment, seeder ageing
        departing_.clear();
        const double abandon_p = cfg_.extensions.a > 0.0 ? -std::expm1(-cfg_.extensions.a * cfg_.tau) : 0.0;
        for (std::size_t i = 0; i < peers_.size(); ++i) {
            Peer& p = peers_[i];
            if (p.role == Role::Seeder) {
                if (p.seed_until <= t1) {
                    departing_.push_back(i);
                    ++stats_.seeder_expiries;
                }
                continue;
            }
            bool done = false;
            if (cfg_.service_mode == ServiceMode::Accumulate) {
                p.remaining -= rates_[i] * cfg_.tau;
                done = p.remaining <= 0.0;
            } else if (rates_[i] > 0.0) {
                done = unit(rng_) < -std::expm1(-rates_[i] * cfg_.tau / cfg_.params.F);
            }
            if (done) {
                ++stats_.completions;
                --leechers_;
                if (p.tracked) {
                    stats_.latency_samples.push_back(t1 - p.arrival_time);
                    stats_.latency_arrivals.push_back(p.arrival_time);
                    --cohort_outstanding_;
                    p.tracked = false;
                }
                if (cfg_.extensions.T_S > 0.0) {
                    p.role = Role::Seeder;
                    p.seed_until = t1 + cfg_.extensions.T_S;
                    ++stats_.seeds_started;
                } else {
                    departing_.push_back(i);
                }
                continue;
            }
            if (abandon_p > 0.0 && unit(rng_) < abandon_p) {
                ++stats_.abandonments;
                --leechers_;
                if (p.tracked) {
                    ++stats_.abandon_count;
                    --cohort_outstanding_;
                    p.tracked = false;
                }
                departing_.push_back(i);
            }
        }
        // indices were collected in ascending order; remove from the back
        for (auto it = departing_.rbegin(); it != departing_.rend(); ++it) remove_at(*it);

        ++step_index_;
        ++stats_.steps;
        const double now = time();
        if (now + 1e-9 * cfg_.tau >= next_trace_) {
            stats_.density_trace.push_back({now, leechers_, seeder_count()});
            next_trace_ += snapshot_interval_;
        }
        if (cfg_.record_snapshots && step_index_ > warmup_steps_ && step_index_ <= window_end_steps_ && now + 1e-9 * cfg_.tau >= next_snapshot_) {
            stats_.snapshots.push_back(take_snapshot());
            next_snapshot_ += snapshot_interval_;
        }
    }

    /// Runs warm-up, measurement window and drain, then returns the statistics.
    SimStats run() {
        const std::uint64_t hard_end = window_end_steps_ + drain_steps_;
        while (step_index_ < window_end_steps_) step();
        while (step_index_ < hard_end && cohort_outstanding_ > 0) step();
        finish();
        return stats_;
    }

    void finish() {
        stats_.final_leechers = leechers_;
        stats_.final_seeders = seeder_count();
        stats_.cohort_unfinished = cohort_outstanding_;
        stats_.window_length = cfg_.tau * static_cast<double>(window_end_steps_ - warmup_steps_);
        stats_.end_time = time();
        if (stats_.latency_samples.size() < 100) {
            stats_.warnings.push_back("low sample count: only " + std::to_string(stats_.latency_samples.size()) +
                                      " latencies recorded");
        }
        if (cohort_outstanding_ > 0) {
            stats_.warnings.push_back(std::to_string(cohort_outstanding_) +
                                      " measured peers had not finished at the end of the drain period");
        }
    }

    Snapshot take_snapshot() {
        Snapshot s;
        s.time = time();
        s.leechers = leechers_;
        s.seeders = seeder_count();
        const auto& m = cfg_.params.rate;
        const bool fixed = cfg_.neighbor_rule == NeighborRule::FixedRange;
        s.nn_distances.reserve(peers_.size());
        s.peer_rates.reserve(peers_.size());
        s.in_range_counts.reserve(peers_.size());
        for (const auto& p : peers_) {
            s.nn_distances.push_back(grid_.nearest_distance(p.pos, p.id));
            s.peer_rates.push_back(neighbour_rate(p.pos, p.id));
            if (fixed) {
                std::uint32_t c = 0;
                grid_.for_each_within(p.pos, m.R, p.id, [&](const CellGrid::Entry&, double) { ++c; });
                s.in_range_counts.push_back(c);
            }
        }
        constexpr PeerId no_peer = ~PeerId{0};
        s.probe_rates.reserve(cfg_.probes_per_snapshot);
        for (std::size_t k = 0; k < cfg_.probes_per_snapshot; ++k) {
            const Point probe = uniform_point(probe_rng_, cfg_.torus);
            s.probe_rates.push_back(neighbour_rate(probe, no_peer));
        }
        if (fixed) s.flux = line_flux_sample();
        return s;
    }

    /// Flux per unit length through the circles x = k side / lines, averaged.
    /// Each leecher downloads f(d) from every in-range peer, so a leecher pair
    /// carries 2 f(d) and a leecher-seeder pair f(d).
    double line_flux_sample() const {
        const auto& m = cfg_.params.rate;
        const double side = cfg_.torus.side();
        const int lines = std::max(1, cfg_.flux_lines);
        // role lookup keyed by id
        std::vector<std::pair<PeerId, Role>> roles;
        roles.reserve(peers_.size());
        for (const auto& p : peers_) roles.emplace_back(p.id, p.role);
        std::sort(roles.begin(), roles.end());
        auto role_of = [&](PeerId id) {
            return std::lower_bound(roles.begin(), roles.end(), std::pair{id, Role::Leecher})->second;
        };
        double total = 0.0;
        for (const auto& p : peers_) {
            const double own = p.role == Role::Leecher ? 1.0 : 0.0;
            grid_.for_each_within(p.pos, m.R, p.id, [&](const CellGrid::Entry& e, double d) {
                if (e.id < p.id) return;  // each unordered pair once
                const double weight = own + (role_of(e.id) == Role::Leecher ? 1.0 : 0.0);
                if (weight == 0.0) return;
                const double a = p.pos.x;
                const double b = a + cfg_.torus.delta(p.pos.x, e.pos.x);
                int crossings = 0;
                for (int k = 0; k < lines; ++k) {
                    const double x0 = side * k / lines;
                    if (std::floor((a - x0) / side) != std::floor((b - x0) / side)) ++crossings;
                }
                total += weight * pair_rate(m, d) * crossings;
            });
        }
        return total / (side * lines);
    }

private:
    static CellGrid make_grid(const SimConfig& cfg) {
        cfg.validate();
        if (cfg.neighbor_rule == NeighborRule::FixedRange && cfg.params.rate.finite_range()) {
            return CellGrid(cfg.torus, std::min(cfg.params.rate.R, cfg.torus.side()));
        }
        // roughly a handful of peers per cell at the fluid density
        const double expected = cfg.params.lambda > 0.0
            ? std::max(1.0, fluid_metrics(cfg.params).beta_f * cfg.torus.area())
            : 64.0;
        const auto cells = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::sqrt(expected / 4.0)));
        return CellGrid::with_cells(cfg.torus, std::min<std::int64_t>(cells, 512));
    }

    std::uint64_t steps_for(double duration) const {
        return static_cast<std::uint64_t>(std::ceil(duration / cfg_.tau - 1e-9));
    }

    double draw_requirement() {
        std::exponential_distribution<double> e(1.0 / cfg_.params.F);
        double v = e(rng_);
        while (!(v > 0.0)) v = e(rng_);
        return v;
    }

    void insert(const Peer& p) {
        grid_.insert(p.id, p.pos);
        peers_.push_back(p);
    }

    void remove_at(std::size_t i) {
        grid_.erase(peers_[i].id);
        if (i + 1 != peers_.size()) peers_[i] = std::move(peers_.back());
        peers_.pop_back();
    }

    SimConfig cfg_;
    CellGrid grid_;
    Rng rng_;
    Rng probe_rng_;
    std::vector<Peer> peers_;
    std::vector<double> rates_;
    std::vector<std::size_t> departing_;
    SimStats stats_;
    PeerId next_id_ = 0;
    std::uint64_t step_index_ = 0;
    std::uint64_t warmup_steps_ = 0;
    std::uint64_t window_end_steps_ = 0;
    std::uint64_t drain_steps_ = 0;
    std::uint64_t cohort_outstanding_ = 0;
    std::size_t leechers_ = 0;
    double snapshot_interval_ = 1.0;
    double next_snapshot_ = 0.0;
    double next_trace_ = 0.0;
};

inline SimStats run(const SimConfig& cfg) { return Simulator(cfg).run(); }

}  // namespace p2pswarm
