#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <vector>

#include "sketchmorph/image.hpp"
#include "sketchmorph/mesh.hpp"
#include "sketchmorph/spatial_grid.hpp"

namespace sketchmorph {

/// Orthographic front view looking down -Z.
///
/// Camera pixel coordinates are continuous with the image rectangle spanning
/// [0, width] x [0, height]; the centre of pixel (col, row) sits at
/// (col + 0.5, row + 0.5). The mesh bounding box height fills the image
/// height and the box centre lands on the image centre.
struct CameraFront {
    int width = 0;
    int height = 0;
    Vec2 center;         // bbox centre in model units
    double scale = 1.0;  // pixels per model unit

    static CameraFront fit(const BoundingBox& box, int width, int height) {
        if (width <= 0 || height <= 0) throw Error("camera image size must be positive");
        const double span = box.max.y - box.min.y;
        if (!(span > 0.0)) throw Error("degenerate bounding box: zero height");
        const Vec3 c = box.center();
        return {width, height, {c.x, c.y}, height / span};
    }

    [[nodiscard]] Vec2 to_pixel(Vec3 v) const {
        return {(v.x - center.x) * scale + width / 2.0, height / 2.0 - (v.y - center.y) * scale};
    }
    [[nodiscard]] Vec2 to_model(Vec2 px) const {
        return {(px.x - width / 2.0) / scale + center.x, center.y - (px.y - height / 2.0) / scale};
    }
    /// Smaller is nearer the camera.
    [[nodiscard]] static double depth(Vec3 v) { return -v.z; }
};

struct VertexProjection {
    Vec2 pixel;
    double depth = 0.0;
};

/// Per-vertex projections plus a bucket grid for reverse lookups.
class VertexPixelMap {
public:
    VertexPixelMap() = default;
    VertexPixelMap(std::vector<VertexProjection> projections, int width, int height)
        : projections_(std::move(projections)), diagonal_(std::hypot(width, height)) {
        std::vector<UniformGrid<2>::Point> pts;
        pts.reserve(projections_.size());
        min_depth_ = std::numeric_limits<double>::infinity();
        double max_depth = -std::numeric_limits<double>::infinity();
        for (const auto& p : projections_) {
            pts.push_back({p.pixel.x, p.pixel.y});
            min_depth_ = std::min(min_depth_, p.depth);
            max_depth = std::max(max_depth, p.depth);
        }
        depth_range_ = projections_.empty() ? 0.0 : max_depth - min_depth_;
        grid_ = UniformGrid<2>(std::move(pts));
    }

    [[nodiscard]] bool empty() const { return projections_.empty(); }
    [[nodiscard]] std::size_t size() const { return projections_.size(); }
    [[nodiscard]] const std::vector<VertexProjection>& projections() const { return projections_; }
    [[nodiscard]] double diagonal() const { return diagonal_; }

    /// 0 at the camera-nearest vertex, 1 at the farthest.
    [[nodiscard]] double depth_norm(std::size_t i) const {
        return depth_range_ > 0.0 ? (projections_[i].depth - min_depth_) / depth_range_ : 0.0;
    }

    [[nodiscard]] const UniformGrid<2>& grid() const { return grid_; }

    /// FNV-1a over the raw projection bits.
    [[nodiscard]] std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](double d) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, &d, sizeof bits);
            for (int k = 0; k < 8; ++k) {
                h ^= (bits >> (8 * k)) & 0xffu;
                h *= 1099511628211ull;
            }
        };
        for (const auto& p : projections_) {
            mix(p.pixel.x);
            mix(p.pixel.y);
            mix(p.depth);
        }
        return h;
    }

private:
    std::vector<VertexProjection> projections_;
    double diagonal_ = 1.0;
    double min_depth_ = 0.0;
    double depth_range_ = 0.0;
    UniformGrid<2> grid_;
};

inline VertexPixelMap project_vertices(const Mesh& mesh, const CameraFront& cam) {
    if (mesh.vertices.empty()) throw Error("cannot project an empty mesh");
    std::vector<VertexProjection> proj;
    proj.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) proj.push_back({cam.to_pixel(v), CameraFront::depth(v)});
    return {std::move(proj), cam.width, cam.height};
}

/// argmin over vertices of (1-p) * screen_distance / diagonal + p * depth_norm,
/// lowest index on ties. `pixel` is in camera pixel coordinates.
inline std::size_t nearest_vertex_for_pixel(const VertexPixelMap& map, Vec2 pixel, double low_depth_preference) {
    if (map.empty()) throw Error("vertex map is empty");
    const double p = std::clamp(low_depth_preference, 0.0, 1.0);
    const double diag = map.diagonal();
    const auto score = [&](std::size_t i, double d) { return (1.0 - p) * (d / diag) + p * map.depth_norm(i); };
    return map.grid().argmin({pixel.x, pixel.y}, score, (1.0 - p) / diag, 0.0);
}

/// Unit face normal from Newell's method; zero for degenerate faces.
inline Vec3 face_normal(const Mesh& mesh, const Face& face) {
    Vec3 n;
    const auto idx = face.indices();
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const Vec3 a = mesh.vertices[idx[k]];
        const Vec3 b = mesh.vertices[idx[(k + 1) % idx.size()]];
        n.x += (a.y - b.y) * (a.z + b.z);
        n.y += (a.z - b.z) * (a.x + b.x);
        n.z += (a.x - b.x) * (a.y + b.y);
    }
    const double len = norm(n);
    return len > 0.0 ? n * (1.0 / len) : Vec3{};
}

/// Z-buffered flat-shaded render. Lambert term against a light pointing at
/// the camera, lifted by an ambient floor; background is white.
inline GrayImage shade_render(const Mesh& mesh, const CameraFront& cam, double ambient = 0.1) {
    GrayImage img(cam.width, cam.height, 1.0);
    std::vector<double> zbuf(img.pixels.size(), std::numeric_limits<double>::infinity());
    const Vec3 light{0.0, 0.0, 1.0};

    std::vector<Vec2> px(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) px[i] = cam.to_pixel(mesh.vertices[i]);

    for (const auto& face : mesh.faces) {
        const double lambert = std::clamp(dot(face_normal(mesh, face), light), 0.0, 1.0);
        const double shade = lambert * (1.0 - ambient) + ambient;
        const auto idx = face.indices();
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
            const std::size_t tri[3] = {idx[0], idx[k], idx[k + 1]};
            const Vec2 a = px[tri[0]], b = px[tri[1]], c = px[tri[2]];
            const double za = CameraFront::depth(mesh.vertices[tri[0]]);
            const double zb = CameraFront::depth(mesh.vertices[tri[1]]);
            const double zc = CameraFront::depth(mesh.vertices[tri[2]]);
            const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
            if (area == 0.0) continue;
            const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
            const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}) - 0.5)));
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
            const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}) - 0.5)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const Vec2 p{x + 0.5, y + 0.5};
                    const double w0 = ((b.x - p.x) * (c.y - p.y) - (b.y - p.y) * (c.x - p.x)) / area;
                    const double w1 = ((c.x - p.x) * (a.y - p.y) - (c.y - p.y) * (a.x - p.x)) / area;
                    const double w2 = 1.0 - w0 - w1;
                    if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
                    const double z = w0 * za + w1 * zb + w2 * zc;
                    double& zref = zbuf[static_cast<std::size_t>(y) * cam.width + x];
                    if (z < zref) {
                        zref = z;
                        img.at(x, y) = shade;
                    }
                }
            }
        }
    }
    return img;
}

}  // namespace sketchmorph
