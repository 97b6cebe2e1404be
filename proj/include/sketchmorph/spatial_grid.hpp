#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace sketchmorph {

/// Uniform bucket grid over a fixed point set in `Dim` dimensions.
///
/// Supports ring-expanding nearest queries with an arbitrary per-point score
/// that is bounded below by a multiple of the Euclidean distance, and
/// fixed-radius ball queries. Point order is preserved so ties can be broken
/// by index.
template <std::size_t Dim>
class UniformGrid {
public:
    using Point = std::array<double, Dim>;

    UniformGrid() = default;

    explicit UniformGrid(std::vector<Point> points) : points_(std::move(points)) {
        if (points_.empty()) return;
        lo_ = points_.front();
        Point hi = points_.front();
        for (const auto& p : points_) {
            for (std::size_t d = 0; d < Dim; ++d) {
                lo_[d] = std::min(lo_[d], p[d]);
                hi[d] = std::max(hi[d], p[d]);
            }
        }
        double volume = 1.0;
        double max_extent = 0.0;
        for (std::size_t d = 0; d < Dim; ++d) {
            max_extent = std::max(max_extent, hi[d] - lo_[d]);
        }
        if (max_extent <= 0.0) max_extent = 1.0;
        for (std::size_t d = 0; d < Dim; ++d) {
            volume *= std::max(hi[d] - lo_[d], max_extent * 1e-3);
        }
        // about two points per cell
        cell_ = std::pow(volume * 2.0 / static_cast<double>(points_.size()), 1.0 / Dim);
        if (!(cell_ > 0.0) || !std::isfinite(cell_)) cell_ = max_extent;
        std::size_t total = 1;
        for (std::size_t d = 0; d < Dim; ++d) {
            dims_[d] = static_cast<std::int64_t>(std::floor((hi[d] - lo_[d]) / cell_)) + 1;
            total *= static_cast<std::size_t>(dims_[d]);
        }
        start_.assign(total + 1, 0);
        std::vector<std::size_t> cell_of(points_.size());
        for (std::size_t i = 0; i < points_.size(); ++i) {
            cell_of[i] = flat(cell_coords(points_[i]));
            ++start_[cell_of[i] + 1];
        }
        for (std::size_t c = 0; c < total; ++c) start_[c + 1] += start_[c];
        members_.resize(points_.size());
        std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
        for (std::size_t i = 0; i < points_.size(); ++i) members_[fill[cell_of[i]]++] = i;
    }

    [[nodiscard]] bool empty() const { return points_.empty(); }
    [[nodiscard]] std::size_t size() const { return points_.size(); }
    [[nodiscard]] std::span<const Point> points() const { return points_; }

    /// Index minimizing `score(i, euclidean_distance)`, lowest index on ties.
    /// `lipschitz` must satisfy score >= lipschitz * distance + floor for
    /// every point, where `floor` is the minimum of the non-distance part.
    /// With lipschitz == 0 every point is scanned.
    template <class Score>
    [[nodiscard]] std::size_t argmin(const Point& query, Score&& score, double lipschitz,
                                     double floor) const {
        std::size_t best = points_.size();
        double best_score = std::numeric_limits<double>::infinity();
        auto consider = [&](std::size_t i) {
            const double s = score(i, dist(points_[i], query));
            if (s < best_score || (s == best_score && i < best)) {
                best_score = s;
                best = i;
            }
        };
        if (lipschitz <= 0.0) {
            for (std::size_t i = 0; i < points_.size(); ++i) consider(i);
            return best;
        }
        const auto centre = cell_coords(query);
        std::int64_t max_ring = 0;
        for (std::size_t d = 0; d < Dim; ++d) {
            max_ring = std::max({max_ring, centre[d], dims_[d] - 1 - centre[d]});
        }
        for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
            // unvisited points sit in rings >= ring, at least (ring - 1) cells away
            const double lower = lipschitz * (static_cast<double>(ring - 1) * cell_ - slack(query, centre)) + floor;
            if (best < points_.size() && ring > 0 && lower > best_score) break;
            visit_ring(centre, ring, [&](std::size_t c) {
                for (std::size_t k = start_[c]; k < start_[c + 1]; ++k) consider(members_[k]);
            });
        }
        return best;
    }

    /// Calls `fn(index, distance)` for every point strictly closer than `radius`,
    /// in ascending index order.
    template <class Fn>
    void for_each_within(const Point& query, double radius, Fn&& fn) const {
        if (points_.empty() || radius <= 0.0) return;
        std::array<std::int64_t, Dim> lo{};
        std::array<std::int64_t, Dim> hi{};
        for (std::size_t d = 0; d < Dim; ++d) {
            lo[d] = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(std::floor((query[d] - radius - lo_[d]) / cell_)), 0, dims_[d] - 1);
            hi[d] = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(std::floor((query[d] + radius - lo_[d]) / cell_)), 0, dims_[d] - 1);
            if (query[d] + radius < lo_[d] || query[d] - radius > lo_[d] + cell_ * dims_[d]) return;
        }
        std::vector<std::pair<std::size_t, double>> hits;
        std::array<std::int64_t, Dim> c = lo;
        while (true) {
            const std::size_t cell = flat(c);
            for (std::size_t k = start_[cell]; k < start_[cell + 1]; ++k) {
                const std::size_t i = members_[k];
                const double r = dist(points_[i], query);
                if (r < radius) hits.emplace_back(i, r);
            }
            std::size_t d = 0;
            for (; d < Dim; ++d) {
                if (++c[d] <= hi[d]) break;
                c[d] = lo[d];
            }
            if (d == Dim) break;
        }
        std::sort(hits.begin(), hits.end());
        for (const auto& [i, r] : hits) fn(i, r);
    }

private:
    static double dist(const Point& a, const Point& b) {
        double s = 0.0;
        for (std::size_t d = 0; d < Dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
        return std::sqrt(s);
    }

    std::array<std::int64_t, Dim> cell_coords(const Point& p) const {
        std::array<std::int64_t, Dim> c{};
        for (std::size_t d = 0; d < Dim; ++d) {
            const double f = std::floor((p[d] - lo_[d]) / cell_);
            c[d] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::clamp(f, -1e15, 1e15)), 0, dims_[d] - 1);
        }
        return c;
    }

    // Distance the query sits outside its (clamped) home cell; queries outside
    // the grid need the ring bound relaxed by that amount.
    double slack(const Point& q, const std::array<std::int64_t, Dim>& c) const {
        double s = 0.0;
        for (std::size_t d = 0; d < Dim; ++d) {
            const double a = lo_[d] + cell_ * static_cast<double>(c[d]);
            const double b = a + cell_;
            s = std::max({s, a - q[d], q[d] - b});
        }
        return s;
    }

    std::size_t flat(const std::array<std::int64_t, Dim>& c) const {
        std::size_t idx = 0;
        for (std::size_t d = Dim; d-- > 0;) idx = idx * static_cast<std::size_t>(dims_[d]) + static_cast<std::size_t>(c[d]);
        return idx;
    }

    template <class Fn>
    void visit_ring(const std::array<std::int64_t, Dim>& centre, std::int64_t ring, Fn&& fn) const {
        std::array<std::int64_t, Dim> lo{};
        std::array<std::int64_t, Dim> hi{};
        for (std::size_t d = 0; d < Dim; ++d) {
            lo[d] = centre[d] - ring;
            hi[d] = centre[d] + ring;
        }
        std::array<std::int64_t, Dim> c = lo;
        while (true) {
            bool on_shell = false;
            bool inside = true;
            for (std::size_t d = 0; d < Dim; ++d) {
                if (c[d] == lo[d] || c[d] == hi[d]) on_shell = true;
                if (c[d] < 0 || c[d] >= dims_[d]) inside = false;
            }
            if (on_shell && inside) fn(flat(c));
            std::size_t d = 0;
            for (; d < Dim; ++d) {
                if (++c[d] <= hi[d]) break;
                c[d] = lo[d];
            }
            if (d == Dim) break;
        }
    }

    std::vector<Point> points_;
    Point lo_{};
    double cell_ = 1.0;
    std::array<std::int64_t, Dim> dims_{};
    std::vector<std::size_t> start_;
    std::vector<std::size_t> members_;
};

}  // namespace sketchmorph
