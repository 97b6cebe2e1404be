#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "sketchmorph/image.hpp"
#include "sketchmorph/imageproc.hpp"
#include "sketchmorph/tweakables.hpp"

namespace sketchmorph {

struct Snake {
    std::vector<Vec2> points;
    SnakeMode mode = SnakeMode::Free;

    friend bool operator==(const Snake&, const Snake&) = default;
};

/// Scalar field the snake climbs, with its central-difference partials.
struct ForceField {
    GrayImage combined;
    GrayImage dx;
    GrayImage dy;

    [[nodiscard]] Vec2 force(Vec2 p) const { return {dx.sample(p), dy.sample(p)}; }
    [[nodiscard]] double value(Vec2 p) const { return combined.sample(p); }
    [[nodiscard]] int width() const { return combined.width; }
    [[nodiscard]] int height() const { return combined.height; }
};

/// F = w_brightness * I + w_edge * |Sobel(I)|. Snakes ascend F, so a negative
/// brightness weight pulls toward dark pixels.
inline ForceField build_force_field(const GrayImage& reference, const Tweakables& tw) {
    if (reference.width < 3 || reference.height < 3) throw Error("reference image must be at least 3x3");
    ForceField f{GrayImage(reference.width, reference.height, 0.0), GrayImage(reference.width, reference.height, 0.0),
                 GrayImage(reference.width, reference.height, 0.0)};
    if (tw.w_edge != 0.0) {
        const GrayImage edges = gradient_magnitude(reference);
        for (std::size_t i = 0; i < f.combined.pixels.size(); ++i) {
            f.combined.pixels[i] = tw.w_brightness * reference.pixels[i] + tw.w_edge * edges.pixels[i];
        }
    } else {
        for (std::size_t i = 0; i < f.combined.pixels.size(); ++i) {
            f.combined.pixels[i] = tw.w_brightness * reference.pixels[i];
        }
    }
    for (int y = 0; y < reference.height; ++y) {
        for (int x = 0; x < reference.width; ++x) {
            f.dx.at(x, y) = 0.5 * (f.combined.clamped(x + 1, y) - f.combined.clamped(x - 1, y));
            f.dy.at(x, y) = 0.5 * (f.combined.clamped(x, y + 1) - f.combined.clamped(x, y - 1));
        }
    }
    return f;
}

/// Internal-energy stiffness matrix alpha * D1'D1 + beta * D2'D2, where D1 and
/// D2 are first and second difference operators over the chain. Periodic
/// chains wrap; open chains keep only the differences that fit.
inline Eigen::SparseMatrix<double> internal_energy_matrix(std::size_t n, SnakeMode mode, double alpha, double beta) {
    const bool wrap = mode == SnakeMode::Periodic;
    std::vector<Eigen::Triplet<double>> t;
    auto idx = [n](std::ptrdiff_t i) { return static_cast<int>((i % static_cast<std::ptrdiff_t>(n) + n) % n); };
    // D1 rows: v[i+1] - v[i]
    const std::size_t rows1 = wrap ? n : n - 1;
    for (std::size_t r = 0; r < rows1; ++r) {
        const int a = idx(r), b = idx(r + 1);
        const int cols[2] = {a, b};
        const double coef[2] = {-1.0, 1.0};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) t.emplace_back(cols[i], cols[j], alpha * coef[i] * coef[j]);
    }
    // D2 rows: v[i-1] - 2 v[i] + v[i+1]
    const std::size_t rows2 = wrap ? n : (n >= 3 ? n - 2 : 0);
    for (std::size_t r = 0; r < rows2; ++r) {
        const std::ptrdiff_t c = wrap ? static_cast<std::ptrdiff_t>(r) : static_cast<std::ptrdiff_t>(r) + 1;
        const int cols[3] = {idx(c - 1), idx(c), idx(c + 1)};
        const double coef[3] = {1.0, -2.0, 1.0};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t.emplace_back(cols[i], cols[j], beta * coef[i] * coef[j]);
    }
    Eigen::SparseMatrix<double> a(static_cast<int>(n), static_cast<int>(n));
    a.setFromTriplets(t.begin(), t.end());
    return a;
}

struct SnakeEvolution {
    Snake snake;
    int iterations = 0;
    bool converged = false;
};

struct EvolveOptions {
    /// Called after every iteration with the new point positions.
    std::function<void(int iteration, std::span<const Vec2> points)> on_iteration;
    std::stop_token stop;
    /// Configurations compared for convergence.
    int convergence_window = 10;
};

class Cancelled : public Error {
public:
    Cancelled() : Error("cancelled") {}
};

/// Semi-implicit snake evolution:
///   (A + gamma I) x' = gamma x + f_x(x, y), likewise for y,
/// with each point's step clamped to max_step_px and points kept inside the
/// image. Fixed snakes keep both end points exactly. Stops after
/// max_iterations, or once no point has moved more than `convergence` pixels
/// relative to the configuration `convergence_window` iterations earlier.
inline SnakeEvolution evolve(const Snake& init, const ForceField& field, const Tweakables& tw,
                             const EvolveOptions& opts = {}) {
    validate(tw);
    const std::size_t n = init.points.size();
    const std::size_t min_points = init.mode == SnakeMode::Periodic ? 3 : 2;
    if (n < min_points) {
        throw Error("snake needs at least " + std::to_string(min_points) + " points, got " + std::to_string(n));
    }
    const double gamma = tw.time_step;
    const bool pinned = init.mode == SnakeMode::Fixed;
    const double xmax = field.width() - 1.0;
    const double ymax = field.height() - 1.0;

    Eigen::SparseMatrix<double> system = internal_energy_matrix(n, init.mode, tw.continuity, tw.smoothness);
    // pinned columns move to the right-hand side
    std::vector<std::pair<int, double>> couple_first, couple_last;
    if (pinned) {
        const int last = static_cast<int>(n) - 1;
        for (Eigen::SparseMatrix<double>::InnerIterator it(system, 0); it; ++it) {
            if (it.row() != 0 && it.row() != last) couple_first.emplace_back(static_cast<int>(it.row()), it.value());
        }
        for (Eigen::SparseMatrix<double>::InnerIterator it(system, last); it; ++it) {
            if (it.row() != 0 && it.row() != last) couple_last.emplace_back(static_cast<int>(it.row()), it.value());
        }
        system.prune([last](Eigen::Index r, Eigen::Index c, double) {
            return r != 0 && c != 0 && r != last && c != last;
        });
    }
    Eigen::SparseMatrix<double> identity(static_cast<int>(n), static_cast<int>(n));
    identity.setIdentity();
    system += gamma * identity;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(system);
    if (solver.info() != Eigen::Success) throw Error("snake system matrix is not invertible");

    std::vector<Vec2> pts = init.points;
    for (auto& p : pts) p = {std::clamp(p.x, 0.0, xmax), std::clamp(p.y, 0.0, ymax)};
    const Vec2 first = pts.front();
    const Vec2 last = pts.back();

    const int window = std::max(1, opts.convergence_window);
    std::vector<std::vector<Vec2>> history;  // ring of past configurations
    history.reserve(static_cast<std::size_t>(window));
    history.push_back(pts);
    std::size_t history_head = 0;  // oldest entry once full

    Eigen::VectorXd bx(static_cast<Eigen::Index>(n)), by(static_cast<Eigen::Index>(n));
    SnakeEvolution result;
    for (int it = 0; it < tw.max_iterations; ++it) {
        if (opts.stop.stop_requested()) throw Cancelled();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 f = field.force(pts[i]);
            bx[static_cast<Eigen::Index>(i)] = gamma * pts[i].x + f.x;
            by[static_cast<Eigen::Index>(i)] = gamma * pts[i].y + f.y;
        }
        if (pinned) {
            const Eigen::Index e = static_cast<Eigen::Index>(n) - 1;
            bx[0] = gamma * first.x;
            by[0] = gamma * first.y;
            bx[e] = gamma * last.x;
            by[e] = gamma * last.y;
            for (const auto& [r, v] : couple_first) {
                bx[r] -= v * first.x;
                by[r] -= v * first.y;
            }
            for (const auto& [r, v] : couple_last) {
                bx[r] -= v * last.x;
                by[r] -= v * last.y;
            }
        }
        const Eigen::VectorXd nx = solver.solve(bx);
        const Eigen::VectorXd ny = solver.solve(by);
        for (std::size_t i = 0; i < n; ++i) {
            Vec2 step{nx[static_cast<Eigen::Index>(i)] - pts[i].x, ny[static_cast<Eigen::Index>(i)] - pts[i].y};
            const double len = norm(step);
            if (len > tw.max_step_px) step = step * (tw.max_step_px / len);
            pts[i] = {std::clamp(pts[i].x + step.x, 0.0, xmax), std::clamp(pts[i].y + step.y, 0.0, ymax)};
        }
        if (pinned) {
            pts.front() = first;
            pts.back() = last;
        }
        result.iterations = it + 1;
        if (opts.on_iteration) opts.on_iteration(it, pts);

        if (history.size() == static_cast<std::size_t>(window)) {
            const auto& old = history[history_head];
            double moved = 0.0;
            for (std::size_t i = 0; i < n; ++i) moved = std::max(moved, distance(pts[i], old[i]));
            if (moved < tw.convergence) {
                result.converged = true;
                break;
            }
            history[history_head] = pts;
            history_head = (history_head + 1) % history.size();
        } else {
            history.push_back(pts);
        }
    }
    result.snake = {std::move(pts), init.mode};
    return result;
}

inline Snake evolve_snake(const Snake& init, const ForceField& field, const Tweakables& tw) {
    return evolve(init, field, tw).snake;
}

struct SnakePair {
    std::size_t contour_id = 0;
    Snake input;
    Snake output;
    int iterations = 0;
    bool converged = false;
};

struct SkippedContour {
    std::size_t contour_id = 0;
    std::string reason;
};

struct SnakeRun {
    std::vector<SnakePair> pairs;
    std::vector<SkippedContour> skipped;
};

/// Runs every contour as a snake over `reference`, in input order. Closed
/// contours run periodic unless tw.closed_contours_periodic is off; a contour
/// that cannot form a snake is skipped and reported.
inline SnakeRun run_snakes(const std::vector<Contour>& contours, const GrayImage& reference, const Tweakables& tw,
                           std::stop_token stop = {}) {
    validate(tw);
    SnakeRun run;
    if (contours.empty()) return run;
    const ForceField field = build_force_field(reference, tw);
    EvolveOptions opts;
    opts.stop = stop;
    for (std::size_t id = 0; id < contours.size(); ++id) {
        const Contour& c = contours[id];
        Snake snake;
        snake.mode = (c.closed && tw.closed_contours_periodic) ? SnakeMode::Periodic : tw.snake_mode;
        snake.points = dedup_points(c.points, c.closed || snake.mode == SnakeMode::Periodic);
        try {
            auto evo = evolve(snake, field, tw, opts);
            run.pairs.push_back({id, std::move(snake), std::move(evo.snake), evo.iterations, evo.converged});
        } catch (const Cancelled&) {
            throw;
        } catch (const Error& e) {
            run.skipped.push_back({id, e.what()});
        }
    }
    return run;
}

}  // namespace sketchmorph
