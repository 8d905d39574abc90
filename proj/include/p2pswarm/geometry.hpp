#pragma once

// Square torus geometry, uniform sampling and a bucketed spatial index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

namespace p2pswarm {

/// Seedable generator used everywhere a random stream is needed.
using Rng = std::mt19937_64;

using PeerId = std::uint64_t;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// The square torus [0, side)^2.
class Torus {
public:
    explicit Torus(double side = 1.0) : side_(side) {
        if (!(side > 0.0) || !std::isfinite(side)) {
            throw std::invalid_argument("torus side must be positive and finite");
        }
    }

    double side() const noexcept { return side_; }
    double area() const noexcept { return side_ * side_; }

    double wrap(double c) const noexcept {
        double r = std::fmod(c, side_);
        if (r < 0.0) r += side_;
        // fmod of a value just below zero can round up to side
        if (r >= side_) r = 0.0;
        return r;
    }

    Point reduce(Point p) const noexcept { return {wrap(p.x), wrap(p.y)}; }

    /// Signed minimal-image displacement from a to b along one axis, in [-side/2, side/2].
    double delta(double a, double b) const noexcept {
        double d = b - a;
        const double half = 0.5 * side_;
        if (d > half) d -= side_;
        else if (d < -half) d += side_;
        return d;
    }

private:
    double side_;
};

inline double torus_distance(Point p, Point q, const Torus& t) noexcept {
    const double dx = t.delta(p.x, q.x);
    const double dy = t.delta(p.y, q.y);
    return std::sqrt(dx * dx + dy * dy);
}

inline Point uniform_point(Rng& rng, const Torus& t) {
    std::uniform_real_distribution<double> u(0.0, t.side());
    const double x = u(rng);
    const double y = u(rng);
    return t.reduce({x, y});
}

inline std::uint64_t poisson_count(Rng& rng, double mean) {
    if (!(mean >= 0.0)) throw std::invalid_argument("poisson mean must be non-negative");
    if (mean == 0.0) return 0;
    std::poisson_distribution<std::uint64_t> d(mean);
    return d(rng);
}

/// Uniform grid of square buckets covering the torus. Every inserted id lives
/// in exactly one bucket; range queries visit the 3x3 block of buckets around
/// the query cell, so the query radius may not exceed the cell size.
class CellGrid {
public:
    struct Entry {
        PeerId id;
        Point pos;
    };

    CellGrid(const Torus& torus, double min_cell_size) : torus_(torus) {
        if (!(min_cell_size > 0.0)) throw std::invalid_argument("cell size must be positive");
        cells_per_side_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(
            std::floor(torus_.side() / min_cell_size)));
        cell_size_ = torus_.side() / static_cast<double>(cells_per_side_);
        buckets_.resize(static_cast<std::size_t>(cells_per_side_ * cells_per_side_));
    }

    /// Grid with an explicit number of cells per side.
    static CellGrid with_cells(const Torus& torus, std::int64_t cells_per_side) {
        if (cells_per_side < 1) throw std::invalid_argument("need at least one cell");
        return CellGrid(torus, torus.side() / static_cast<double>(cells_per_side) * (1.0 - 1e-12));
    }

    const Torus& torus() const noexcept { return torus_; }
    double cell_size() const noexcept { return cell_size_; }
    std::int64_t cells_per_side() const noexcept { return cells_per_side_; }
    std::size_t size() const noexcept { return where_.size(); }
    bool contains(PeerId id) const { return where_.count(id) != 0; }

    void clear() {
        for (auto& b : buckets_) b.clear();
        where_.clear();
    }

    void insert(PeerId id, Point p) {
        p = torus_.reduce(p);
        const std::size_t c = cell_of(p);
        auto [it, fresh] = where_.try_emplace(id, Slot{c, buckets_[c].size()});
        if (!fresh) throw std::invalid_argument("duplicate id inserted into grid");
        buckets_[c].push_back({id, p});
    }

    void erase(PeerId id) {
        const auto it = where_.find(id);
        if (it == where_.end()) throw std::out_of_range("id not present in grid");
        const Slot s = it->second;
        auto& bucket = buckets_[s.cell];
        if (s.index + 1 != bucket.size()) {
            bucket[s.index] = bucket.back();
            where_[bucket[s.index].id].index = s.index;
        }
        bucket.pop_back();
        where_.erase(it);
    }

    /// Calls fn(entry, distance) for every entry other than `self` within the
    /// closed ball of the given radius around p.
    template <typename Fn>
    void for_each_within(Point p, double radius, PeerId self, Fn&& fn) const {
        if (radius > cell_size_ * (1.0 + 1e-12)) {
            throw std::invalid_argument("query radius exceeds grid cell size");
        }
        p = torus_.reduce(p);
        const auto [cx, cy] = coords_of(p);
        const std::int64_t span = cells_per_side_ >= 3 ? 1 : 0;
        if (span == 0) {
            for (const auto& bucket : buckets_) scan(bucket, p, radius, self, fn);
            return;
        }
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                scan(buckets_[index(cx + dx, cy + dy)], p, radius, self, fn);
            }
        }
    }

    std::vector<PeerId> neighbors_within(Point p, double radius, PeerId self) const {
        std::vector<PeerId> out;
        for_each_within(p, radius, self, [&](const Entry& e, double) { out.push_back(e.id); });
        return out;
    }

    /// Distances to the k nearest entries other than `self`, ascending. Fewer
    /// than k are returned when the grid holds fewer other entries.
    std::vector<double> nearest_distances(Point p, std::size_t k, PeerId self) const {
        std::vector<double> best;
        if (k == 0) return best;
        p = torus_.reduce(p);
        const auto [cx, cy] = coords_of(p);
        const std::int64_t n = cells_per_side_;
        const std::int64_t max_ring = n / 2;
        auto consider = [&](const std::vector<Entry>& bucket) {
            for (const auto& e : bucket) {
                if (e.id == self) continue;
                const double d = torus_distance(p, e.pos, torus_);
                if (best.size() < k) {
                    best.insert(std::upper_bound(best.begin(), best.end(), d), d);
                } else if (d < best.back()) {
                    best.pop_back();
                    best.insert(std::upper_bound(best.begin(), best.end(), d), d);
                }
            }
        };
        std::vector<char> seen;
        for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
            if (2 * ring + 1 <= n) {
                visit_ring(cx, cy, ring, [&](std::size_t c) { consider(buckets_[c]); });
            } else {
                // the ring wraps onto cells already visited
                if (seen.empty()) {
                    seen.assign(buckets_.size(), 0);
                    for (std::int64_t r = 0; r < ring; ++r)
                        visit_ring(cx, cy, r, [&](std::size_t c) { seen[c] = 1; });
                }
                visit_ring(cx, cy, ring, [&](std::size_t c) {
                    if (!seen[c]) {
                        seen[c] = 1;
                        consider(buckets_[c]);
                    }
                });
            }
            // anything in ring+1 or beyond is at least ring*cell_size away
            if (best.size() == k && best.back() <= static_cast<double>(ring) * cell_size_) break;
        }
        return best;
    }

    double nearest_distance(Point p, PeerId self) const {
        const auto d = nearest_distances(p, 1, self);
        return d.empty() ? std::numeric_limits<double>::infinity() : d.front();
    }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& bucket : buckets_)
            for (const auto& e : bucket) fn(e);
    }

private:
    struct Slot {
        std::size_t cell;
        std::size_t index;
    };

    std::pair<std::int64_t, std::int64_t> coords_of(Point p) const noexcept {
        auto c = [&](double v) {
            auto i = static_cast<std::int64_t>(v / cell_size_);
            return std::clamp<std::int64_t>(i, 0, cells_per_side_ - 1);
        };
        return {c(p.x), c(p.y)};
    }

    std::size_t cell_of(Point p) const noexcept {
        const auto [cx, cy] = coords_of(p);
        return index(cx, cy);
    }

    std::size_t index(std::int64_t cx, std::int64_t cy) const noexcept {
        const std::int64_t n = cells_per_side_;
        cx = ((cx % n) + n) % n;
        cy = ((cy % n) + n) % n;
        return static_cast<std::size_t>(cy * n + cx);
    }

    template <typename Fn>
    void visit_ring(std::int64_t cx, std::int64_t cy, std::int64_t ring, Fn&& fn) const {
        if (ring == 0) {
            fn(index(cx, cy));
            return;
        }
        for (std::int64_t d = -ring; d <= ring; ++d) {
            fn(index(cx + d, cy - ring));
            fn(index(cx + d, cy + ring));
        }
        for (std::int64_t d = -ring + 1; d <= ring - 1; ++d) {
            fn(index(cx - ring, cy + d));
            fn(index(cx + ring, cy + d));
        }
    }

    template <typename Fn>
    void scan(const std::vector<Entry>& bucket, Point p, double radius, PeerId self, Fn& fn) const {
        // squared pre-test with slack; the decision itself is on the distance
        const double r2 = radius * radius * (1.0 + 1e-12);
        for (const auto& e : bucket) {
            const double dx = torus_.delta(p.x, e.pos.x);
            const double dy = torus_.delta(p.y, e.pos.y);
            const double d2 = dx * dx + dy * dy;
            if (d2 > r2 || e.id == self) continue;
            const double d = std::sqrt(d2);
            if (d <= radius) fn(e, d);
        }
    }

    Torus torus_;
    std::int64_t cells_per_side_ = 1;
    double cell_size_ = 1.0;
    std::vector<std::vector<Entry>> buckets_;
    std::unordered_map<PeerId, Slot> where_;
};

}  // namespace p2pswarm
