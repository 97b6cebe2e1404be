#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

#include "sketchmorph/mesh.hpp"
#include "sketchmorph/raster.hpp"
#include "sketchmorph/snake.hpp"

namespace sketchmorph {

struct PixelKey {
    int x = 0;
    int y = 0;
    friend auto operator<=>(const PixelKey&, const PixelKey&) = default;
};

struct PixelDelta {
    Vec2 delta;  // mean of input - output, pixels
    std::size_t count = 0;
};

/// Averaged snake displacement per target pixel (image coordinates).
struct DeltaField {
    std::map<PixelKey, PixelDelta> entries;
};

struct RejectedSample {
    std::size_t contour_id = 0;
    std::size_t point_index = 0;
    double magnitude = 0.0;
};

struct DeltaCollection {
    DeltaField field;
    std::vector<RejectedSample> rejected;
    std::size_t total_samples = 0;
};

/// Per point: delta = input - output. Samples longer than max_delta_px are
/// rejected and reported; the rest are averaged per rounded output pixel.
inline DeltaCollection collect_deltas(const std::vector<SnakePair>& pairs, const Tweakables& tw) {
    DeltaCollection out;
    std::map<PixelKey, std::pair<Vec2, std::size_t>> sums;
    for (const auto& pair : pairs) {
        if (pair.input.points.size() != pair.output.points.size()) {
            throw Error("snake pair for contour " + std::to_string(pair.contour_id) + " has mismatched point counts");
        }
        for (std::size_t i = 0; i < pair.input.points.size(); ++i) {
            const Vec2 target = pair.output.points[i];
            const Vec2 delta = pair.input.points[i] - target;
            ++out.total_samples;
            if (!is_finite(delta) || !is_finite(target)) {
                throw Error("non-finite snake point in contour " + std::to_string(pair.contour_id));
            }
            const double mag = norm(delta);
            if (mag > tw.max_delta_px) {
                out.rejected.push_back({pair.contour_id, i, mag});
                continue;
            }
            const PixelKey key{static_cast<int>(std::lround(target.x)), static_cast<int>(std::lround(target.y))};
            auto& [sum, count] = sums[key];
            sum += delta;
            ++count;
        }
    }
    for (const auto& [key, acc] : sums) {
        out.field.entries[key] = {acc.first * (1.0 / static_cast<double>(acc.second)), acc.second};
    }
    return out;
}

struct VertexDisplacement {
    std::size_t vertex = 0;
    Vec3 displacement;  // model units, z always 0

    friend bool operator==(const VertexDisplacement&, const VertexDisplacement&) = default;
};

/// Maps every delta pixel to its vertex and converts the delta to model units.
/// Displacements landing on the same vertex are averaged. Sorted by vertex.
inline std::vector<VertexDisplacement> resolve_vertex_displacements(const DeltaField& field, const VertexPixelMap& map,
                                                                    const CameraFront& cam, const Tweakables& tw) {
    if (map.empty()) throw Error("vertex map is empty");
    std::map<std::size_t, std::pair<Vec2, std::size_t>> per_vertex;
    for (const auto& [key, entry] : field.entries) {
        // image pixel centre (x, y) sits at camera coordinate (x + 0.5, y + 0.5)
        const Vec2 at{key.x + 0.5, key.y + 0.5};
        const std::size_t v = nearest_vertex_for_pixel(map, at, tw.low_depth_preference);
        auto& [sum, count] = per_vertex[v];
        sum += entry.delta;
        ++count;
    }
    std::vector<VertexDisplacement> out;
    out.reserve(per_vertex.size());
    for (const auto& [v, acc] : per_vertex) {
        const Vec2 mean = acc.first * (1.0 / static_cast<double>(acc.second));
        out.push_back({v, {mean.x / cam.scale, -mean.y / cam.scale, 0.0}});
    }
    return out;
}

inline double soft_select_weight(SoftSelectCurve curve, double dist, double ssd) {
    if (dist >= ssd) return 0.0;
    const double t = 1.0 - dist / ssd;
    switch (curve) {
        case SoftSelectCurve::Linear: return t;
    }
    return t;
}

/// Applies all displacements at once with soft-select falloff. Weights come
/// from the undeformed positions, and the list is canonicalised first, so
/// the result does not depend on input order.
inline Mesh apply_soft_transforms(const Mesh& mesh, std::vector<VertexDisplacement> disps, const Tweakables& tw) {
    const double ssd = tw.soft_select_distance;
    if (!(ssd > 0.0)) throw Error("soft_select_distance must be > 0");
    Mesh out = mesh;
    if (!disps.empty()) {
        for (const auto& d : disps) {
            if (d.vertex >= mesh.vertices.size()) throw Error("displacement references a missing vertex");
            if (!is_finite(d.displacement)) throw Error("non-finite displacement");
        }
        std::sort(disps.begin(), disps.end(), [](const VertexDisplacement& a, const VertexDisplacement& b) {
            return std::tie(a.vertex, a.displacement.x, a.displacement.y, a.displacement.z) <
                   std::tie(b.vertex, b.displacement.x, b.displacement.y, b.displacement.z);
        });
        std::vector<UniformGrid<3>::Point> pts;
        pts.reserve(mesh.vertices.size());
        for (const auto& v : mesh.vertices) pts.push_back({v.x, v.y, v.z});
        const UniformGrid<3> grid(std::move(pts));
        std::vector<Vec3> offset(mesh.vertices.size());
        for (const auto& d : disps) {
            const Vec3 c = mesh.vertices[d.vertex];
            grid.for_each_within({c.x, c.y, c.z}, ssd, [&](std::size_t i, double dist) {
                offset[i] += soft_select_weight(tw.soft_select_curve, dist, ssd) * d.displacement;
            });
        }
        for (std::size_t i = 0; i < out.vertices.size(); ++i) out.vertices[i] += offset[i];
    }
    if (tw.mirror_output) {
        const double plane = bounding_box(mesh).center().x;
        out = mirror_average(out, plane, mirror_partners(mesh, plane));
    }
    return out;
}

}  // namespace sketchmorph
