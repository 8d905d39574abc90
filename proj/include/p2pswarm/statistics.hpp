#pragma once

// Estimators over simulator output: latency ratio, empirical CDFs, nearest
// neighbour distances, Palm versus stationary rates, line flux, Little's law.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "p2pswarm/analytic.hpp"
#include "p2pswarm/simulator.hpp"

namespace p2pswarm {

struct MeanEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

/// Mean with the standard error from batch means, which tolerates the mild
/// serial correlation of consecutive departures.
inline MeanEstimate batch_mean(const std::vector<double>& xs, std::size_t batches = 20) {
    MeanEstimate e;
    e.n = xs.size();
    if (xs.empty()) return e;
    e.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    batches = std::min(batches, xs.size());
    if (batches < 2) return e;
    const std::size_t per = xs.size() / batches;
    std::vector<double> means;
    for (std::size_t b = 0; b < batches; ++b) {
        const auto first = xs.begin() + static_cast<std::ptrdiff_t>(b * per);
        const auto last = b + 1 == batches ? xs.end() : first + static_cast<std::ptrdiff_t>(per);
        means.push_back(std::accumulate(first, last, 0.0) / static_cast<double>(last - first));
    }
    double ss = 0.0;
    for (double m : means) ss += (m - e.mean) * (m - e.mean);
    e.stderr_ = std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
    return e;
}

struct MEstimate {
    double M_sim = 0.0;
    double stderr_ = 0.0;
    double W_sim = 0.0;
    std::size_t samples = 0;
    bool low_sample = false;
};

inline MEstimate estimate_M(const SimStats& stats, const SystemParams& p) {
    const double wf = fluid_metrics(p).W_f;
    // batch in arrival order: departure order puts the long sojourns last
    std::vector<double> xs = stats.latency_samples;
    if (stats.latency_arrivals.size() == xs.size()) {
        std::vector<std::size_t> idx(xs.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return stats.latency_arrivals[a] < stats.latency_arrivals[b];
        });
        for (std::size_t k = 0; k < idx.size(); ++k) xs[k] = stats.latency_samples[idx[k]];
    }
    const auto e = batch_mean(xs);
    MEstimate m;
    m.W_sim = e.mean;
    m.M_sim = e.mean / wf;
    m.stderr_ = e.stderr_ / wf;
    m.samples = e.n;
    m.low_sample = e.n < 100;
    return m;
}

struct EcdfPoint {
    double value;
    double p;
};

/// Right-continuous empirical CDF at the sorted sample points (ties collapse
/// to their last index).
inline std::vector<EcdfPoint> ecdf(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    std::vector<EcdfPoint> out;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i + 1 < xs.size() && xs[i + 1] == xs[i]) continue;
        out.push_back({xs[i], static_cast<double>(i + 1) / n});
    }
    return out;
}

inline std::vector<EcdfPoint> latency_ecdf(const SimStats& stats) { return ecdf(stats.latency_samples); }

/// Evenly thinned copy keeping the first and last points.
inline std::vector<EcdfPoint> downsample(const std::vector<EcdfPoint>& pts, std::size_t max_points) {
    if (pts.size() <= max_points || max_points < 2) return pts;
    std::vector<EcdfPoint> out;
    out.reserve(max_points);
    const double step = static_cast<double>(pts.size() - 1) / static_cast<double>(max_points - 1);
    std::size_t last = pts.size();
    for (std::size_t k = 0; k < max_points; ++k) {
        const auto i = static_cast<std::size_t>(std::llround(step * static_cast<double>(k)));
        if (i != last) out.push_back(pts[i]);
        last = i;
    }
    return out;
}

/// sup |F_n - F| over the sample, checking both sides of each jump.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
    if (xs.empty()) throw std::invalid_argument("KS distance of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// KS distance to the exponential law with the sample's own mean.
inline double ks_exponential_fit(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("KS distance of an empty sample");
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    return ks_distance(xs, [mean](double t) { return t <= 0.0 ? 0.0 : -std::expm1(-t / mean); });
}

struct SplitLatency {
    double instant_fraction = 0.0;  ///< share of latencies at most the threshold
    double rest_mean = 0.0;         ///< mean of the others
};

inline SplitLatency split_latency(const std::vector<double>& xs, double threshold) {
    SplitLatency s;
    if (xs.empty()) return s;
    std::size_t quick = 0;
    double rest = 0.0;
    for (double x : xs) {
        if (x <= threshold) ++quick;
        else rest += x;
    }
    s.instant_fraction = static_cast<double>(quick) / static_cast<double>(xs.size());
    const std::size_t slow = xs.size() - quick;
    s.rest_mean = slow ? rest / static_cast<double>(slow) : 0.0;
    return s;
}

struct NnStats {
    std::vector<double> distances;  ///< pooled over peers and snapshots, finite only
    double mean = 0.0;
    double density = 0.0;           ///< time-averaged peer density over the snapshots
    double poisson_mean = 0.0;      ///< 1 / (2 sqrt(density))
    double within_range = 0.0;      ///< fraction of distances at most R
};

inline double poisson_nn_cdf(double beta, double d) { return d <= 0.0 ? 0.0 : -std::expm1(-beta * std::numbers::pi * d * d); }

inline NnStats nn_distance_stats(const SimStats& stats, const SimConfig& cfg) {
    NnStats s;
    double peers = 0.0;
    std::size_t within = 0;
    for (const auto& snap : stats.snapshots) {
        peers += static_cast<double>(snap.leechers + snap.seeders);
        for (double d : snap.nn_distances) {
            if (!std::isfinite(d)) continue;
            s.distances.push_back(d);
            if (d <= cfg.params.rate.R) ++within;
        }
    }
    if (!stats.snapshots.empty()) {
        s.density = peers / static_cast<double>(stats.snapshots.size()) / cfg.torus.area();
    }
    if (!s.distances.empty()) {
        s.mean = std::accumulate(s.distances.begin(), s.distances.end(), 0.0) / static_cast<double>(s.distances.size());
        s.within_range = static_cast<double>(within) / static_cast<double>(s.distances.size());
    }
    if (s.density > 0.0) s.poisson_mean = 0.5 / std::sqrt(s.density);
    return s;
}

struct Repulsion {
    double palm_mean = 0.0;
    double stationary_mean = 0.0;
};

inline Repulsion repulsion_estimates(const Snapshot& snap) {
    if (snap.peer_rates.size() < 2) throw std::invalid_argument("repulsion estimate needs at least two peers");
    if (snap.probe_rates.empty()) throw std::invalid_argument("snapshot has no probe locations");
    Repulsion r;
    r.palm_mean = std::accumulate(snap.peer_rates.begin(), snap.peer_rates.end(), 0.0) /
                  static_cast<double>(snap.peer_rates.size());
    r.stationary_mean = std::accumulate(snap.probe_rates.begin(), snap.probe_rates.end(), 0.0) /
                        static_cast<double>(snap.probe_rates.size());
    return r;
}

struct RepulsionSummary {
    std::size_t batches = 0;
    std::size_t batches_repulsive = 0;  ///< batches with palm mean at most the stationary mean
    double palm_mean = 0.0;
    double stationary_mean = 0.0;

    double fraction_repulsive() const {
        return batches ? static_cast<double>(batches_repulsive) / static_cast<double>(batches) : 0.0;
    }
    double ratio() const { return palm_mean > 0.0 ? stationary_mean / palm_mean : 0.0; }
};

/// Averages over consecutive batches of snapshots; a trailing partial batch is dropped.
inline RepulsionSummary repulsion_summary(const SimStats& stats, std::size_t batch = 50) {
    if (batch == 0) throw std::invalid_argument("batch size must be positive");
    RepulsionSummary s;
    std::vector<Repulsion> per;
    for (const auto& snap : stats.snapshots) {
        if (snap.peer_rates.size() < 2 || snap.probe_rates.empty()) continue;
        per.push_back(repulsion_estimates(snap));
    }
    for (const auto& r : per) {
        s.palm_mean += r.palm_mean;
        s.stationary_mean += r.stationary_mean;
    }
    if (!per.empty()) {
        s.palm_mean /= static_cast<double>(per.size());
        s.stationary_mean /= static_cast<double>(per.size());
    }
    for (std::size_t b = 0; b + batch <= per.size(); b += batch) {
        double palm = 0.0, stat = 0.0;
        for (std::size_t i = b; i < b + batch; ++i) {
            palm += per[i].palm_mean;
            stat += per[i].stationary_mean;
        }
        ++s.batches;
        if (palm <= stat) ++s.batches_repulsive;
    }
    return s;
}

inline double line_flux_estimate(const Snapshot& snap) { return snap.flux; }

inline MeanEstimate mean_line_flux(const SimStats& stats) {
    std::vector<double> xs;
    xs.reserve(stats.snapshots.size());
    for (const auto& s : stats.snapshots) xs.push_back(line_flux_estimate(s));
    return batch_mean(xs, 10);
}

struct LittleCheck {
    double time_average_population = 0.0;
    double predicted = 0.0;  ///< lambda * area * mean latency
    double relative_error = 0.0;
};

/// Compares the leecher count averaged over the measurement window with
/// arrival rate times mean sojourn. Sojourns ending in abandonment are not
/// in the latency sample, so the check is meaningful without abandonment.
inline LittleCheck littles_law(const SimStats& stats, const SimConfig& cfg) {
    LittleCheck c;
    c.time_average_population = stats.time_average_leechers();
    const double mean = stats.latency_samples.empty()
        ? 0.0
        : std::accumulate(stats.latency_samples.begin(), stats.latency_samples.end(), 0.0) /
              static_cast<double>(stats.latency_samples.size());
    c.predicted = cfg.params.lambda * cfg.torus.area() * mean;
    c.relative_error = c.predicted > 0.0 ? std::abs(c.time_average_population - c.predicted) / c.predicted : 0.0;
    return c;
}

}  // namespace p2pswarm
