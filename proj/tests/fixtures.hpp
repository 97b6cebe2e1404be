#pragma once

// Test-only fixtures and independent oracles. Nothing here calls into the
// code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <queue>
#include <random>
#include <vector>

#include "sketchmorph/image.hpp"
#include "sketchmorph/mesh.hpp"

namespace fixtures {

using namespace sketchmorph;

inline Mesh random_mesh(std::mt19937& rng, std::size_t n_vertices, std::size_t n_faces) {
    std::uniform_real_distribution<double> coord(-5.0, 5.0);
    std::uniform_int_distribution<std::size_t> pick(0, n_vertices - 1);
    Mesh m;
    for (std::size_t i = 0; i < n_vertices; ++i) m.vertices.push_back({coord(rng), coord(rng), coord(rng)});
    for (std::size_t f = 0; f < n_faces; ++f) {
        const std::size_t k = (rng() % 2 == 0) ? 3 : 4;
        std::vector<std::size_t> idx;
        while (idx.size() < k) {
            const std::size_t v = pick(rng);
            if (std::find(idx.begin(), idx.end(), v) == idx.end()) idx.push_back(v);
        }
        m.faces.push_back(k == 3 ? Face(idx[0], idx[1], idx[2]) : Face(idx[0], idx[1], idx[2], idx[3]));
    }
    return m;
}

/// Axis-aligned cube centred at the origin with outward quads.
inline Mesh unit_cube(double side = 1.0) {
    const double h = side / 2.0;
    Mesh m;
    m.vertices = {{-h, -h, -h}, {h, -h, -h}, {h, h, -h}, {-h, h, -h},
                  {-h, -h, h},  {h, -h, h},  {h, h, h},  {-h, h, h}};
    m.faces = {Face(0, 3, 2, 1), Face(4, 5, 6, 7), Face(0, 1, 5, 4),
               Face(2, 3, 7, 6), Face(1, 2, 6, 5), Face(0, 4, 7, 3)};
    return m;
}

/// Latitude/longitude sphere with outward counter-clockwise faces.
inline Mesh uv_sphere(double radius, int stacks, int slices, Vec3 centre = {}) {
    Mesh m;
    m.vertices.push_back(centre + Vec3{0.0, radius, 0.0});
    for (int i = 1; i < stacks; ++i) {
        const double phi = std::numbers::pi * i / stacks;
        for (int j = 0; j < slices; ++j) {
            const double theta = 2.0 * std::numbers::pi * j / slices;
            m.vertices.push_back(centre + Vec3{radius * std::sin(phi) * std::sin(theta), radius * std::cos(phi),
                                               radius * std::sin(phi) * std::cos(theta)});
        }
    }
    m.vertices.push_back(centre + Vec3{0.0, -radius, 0.0});
    const std::size_t south = m.vertices.size() - 1;
    auto ring = [slices](int i, int j) { return 1 + static_cast<std::size_t>((i - 1) * slices + (j % slices)); };
    for (int j = 0; j < slices; ++j) m.faces.push_back(Face(0, ring(1, j), ring(1, j + 1)));
    for (int i = 1; i + 1 < stacks; ++i) {
        for (int j = 0; j < slices; ++j) {
            m.faces.push_back(Face(ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1)));
        }
    }
    for (int j = 0; j < slices; ++j) m.faces.push_back(Face(south, ring(stacks - 1, j + 1), ring(stacks - 1, j)));
    return m;
}

/// Flat plate facing the camera, spanning x in [-half_w, half_w] and y in
/// [-1, 1], carved with V grooves of the given depth wherever `groove`
/// returns a distance below half_width.
inline Mesh relief_plate(double half_w, double spacing, double groove_half_width, double depth,
                         const std::function<double(double, double)>& groove_distance) {
    Mesh m;
    const int nx = static_cast<int>(std::lround(2.0 * half_w / spacing)) + 1;
    const int ny = static_cast<int>(std::lround(2.0 / spacing)) + 1;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const double x = -half_w + 2.0 * half_w * i / (nx - 1);
            const double y = 1.0 - 2.0 * j / (ny - 1);
            const double d = groove_distance(x, y);
            const double z = d < groove_half_width ? -depth * (1.0 - d / groove_half_width) : 0.0;
            m.vertices.push_back({x, y, z});
        }
    }
    auto id = [nx](int i, int j) { return static_cast<std::size_t>(j * nx + i); };
    for (int j = 0; j + 1 < ny; ++j) {
        for (int i = 0; i + 1 < nx; ++i) {
            // y decreases with j, so this order faces +z
            m.faces.push_back(Face(id(i, j), id(i, j + 1), id(i + 1, j + 1), id(i + 1, j)));
        }
    }
    return m;
}

inline double segment_distance(double x, double y, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double t = std::clamp(((x - a.x) * ab.x + (y - a.y) * ab.y) / (ab.x * ab.x + ab.y * ab.y), 0.0, 1.0);
    return std::hypot(x - (a.x + t * ab.x), y - (a.y + t * ab.y));
}

/// Face-like plate: two eye rings, a nose line and a mouth line whose
/// corners rise by `smile`.
inline std::function<double(double, double)> face_features(double smile) {
    return [smile](double x, double y) {
        const double eye_l = std::abs(std::hypot(x + 0.17, y - 0.35) - 0.08);
        const double eye_r = std::abs(std::hypot(x - 0.17, y - 0.35) - 0.08);
        const double nose = segment_distance(x, y, {0.0, 0.2}, {0.0, -0.15});
        const double mouth = std::min(segment_distance(x, y, {-0.2, -0.45 + smile}, {0.0, -0.5}),
                                      segment_distance(x, y, {0.0, -0.5}, {0.2, -0.45 + smile}));
        return std::min({eye_l, eye_r, nose, mouth});
    };
}

/// Face-sized relief rig, 20 units tall, with a "smile" target.
inline BlendshapeRig face_rig(double height = 20.0) {
    const double half_w = 0.42, spacing = 0.01, hw = 0.03, depth = 0.09, k = height / 2.0;
    BlendshapeRig rig;
    rig.base = relief_plate(half_w, spacing, hw, depth, face_features(0.0));
    rig.targets.emplace_back("smile", relief_plate(half_w, spacing, hw, depth, face_features(0.12)));
    for (auto& v : rig.base.vertices) v = v * k;
    for (auto& v : rig.targets[0].second.vertices) v = v * k;
    rig.max_level = 10.0;
    return rig;
}

/// Stroke drawing of a face in a 91x200 frame: eyes with pupils, brows,
/// nose with nostrils, smiling mouth, cheek and forehead lines.
inline GrayImage face_sketch(int width = 91, int height = 200) {
    const double sx = width / 91.0, sy = height / 200.0;
    auto P = [&](double x, double y) { return Vec2{x * sx, y * sy}; };
    struct Ring {
        Vec2 c;
        double r;
    };
    const std::vector<Ring> rings{{P(28.5, 65), 8 * sy}, {P(62.5, 65), 8 * sy}, {P(28.5, 65), 2.5 * sy},
                                  {P(62.5, 65), 2.5 * sy}, {P(40, 112), 2.5 * sy}, {P(51, 112), 2.5 * sy}};
    const std::vector<std::pair<Vec2, Vec2>> segs{
        {P(19, 50), P(36, 47)},  {P(55, 47), P(72, 50)},    // brows
        {P(45.5, 80), P(45.5, 112)},                       // nose
        {P(25.5, 133), P(45.5, 150)}, {P(45.5, 150), P(65.5, 133)},  // mouth
        {P(14, 120), P(20, 140)}, {P(77, 120), P(71, 140)},          // cheeks
        {P(25, 25), P(66, 25)},  {P(30, 32), P(61, 32)},  {P(35, 39), P(56, 39)}};  // forehead
    GrayImage img(width, height, 1.0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double d = 1e9;
            for (const auto& r : rings) d = std::min(d, std::abs(std::hypot(x - r.c.x, y - r.c.y) - r.r));
            for (const auto& [a, b] : segs) d = std::min(d, segment_distance(x, y, a, b));
            if (d < 1.0) img.at(x, y) = 0.0;
        }
    return img;
}

/// Circle outline matching a centred sphere's silhouette in a size x size
/// frame, pushed `depth` px inward over +-`half_angle` radians around the
/// leftmost point.
inline GrayImage dent_sketch(int size = 200, double depth = 8.0, double half_angle = 0.45) {
    const double c = size / 2.0, r0 = size / 2.0;
    GrayImage img(size, size, 1.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dx = x + 0.5 - c, dy = y + 0.5 - c;
            const double off = std::remainder(std::atan2(dy, dx) - std::numbers::pi, 2.0 * std::numbers::pi);
            const double push =
                std::abs(off) < half_angle ? depth * 0.5 * (1.0 + std::cos(std::numbers::pi * off / half_angle)) : 0.0;
            if (std::abs(std::hypot(dx, dy) - (r0 - push)) < 1.0) img.at(x, y) = 0.0;
        }
    return img;
}

inline GrayImage disk_image(int w, int h, Vec2 centre, double radius, double inside = 0.0, double outside = 1.0) {
    GrayImage img(w, h, outside);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (std::hypot(x - centre.x, y - centre.y) <= radius) img.at(x, y) = inside;
    return img;
}

/// Separable Gaussian blur with replicate borders.
inline GrayImage blur(const GrayImage& img, double sigma) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= sum;
    GrayImage tmp(img.width, img.height, 0.0), out(img.width, img.height, 0.0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int i = -r; i <= r; ++i) tmp.at(x, y) += k[i + r] * img.clamped(x + i, y);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int i = -r; i <= r; ++i) out.at(x, y) += k[i + r] * tmp.clamped(x, y + i);
    return out;
}

inline std::vector<Vec2> circle_points(Vec2 centre, double radius, int n) {
    std::vector<Vec2> pts;
    for (int i = 0; i < n; ++i) {
        const double t = 2.0 * std::numbers::pi * i / n;
        pts.push_back({centre.x + radius * std::cos(t), centre.y + radius * std::sin(t)});
    }
    return pts;
}

inline BinaryImage random_binary(std::mt19937& rng, int w, int h, double density) {
    std::bernoulli_distribution ink(density);
    BinaryImage img(w, h);
    for (auto& b : img.bits) b = ink(rng) ? 1 : 0;
    return img;
}

inline GrayImage random_gray(std::mt19937& rng, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GrayImage img(w, h);
    for (auto& v : img.pixels) v = u(rng);
    return img;
}

// ---------------------------------------------------------------------------
// Oracles

/// Brute-force dilation/erosion by the square with offsets {-lo..hi} on an
/// unbounded canvas restricted to a margin around the image.
inline BinaryImage brute_close(const BinaryImage& img, int side) {
    const int lo = (side - 1) / 2, hi = side - 1 - lo, m = side + 2;
    const int w = img.width + 2 * m, h = img.height + 2 * m;
    std::vector<int> src(static_cast<std::size_t>(w * h), 0), dil(src.size(), 0), ero(src.size(), 0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) src[(y + m) * w + x + m] = img.at(x, y);
    auto get = [&](const std::vector<int>& v, int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && v[y * w + x]; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool any = false;
            for (int by = -lo; by <= hi; ++by)
                for (int bx = -lo; bx <= hi; ++bx) any = any || get(src, x - bx, y - by);
            dil[y * w + x] = any;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool all = true;
            for (int by = -lo; by <= hi; ++by)
                for (int bx = -lo; bx <= hi; ++bx) all = all && get(dil, x + bx, y + by);
            ero[y * w + x] = all;
        }
    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.set(x, y, ero[(y + m) * w + x + m] != 0);
    return out;
}

/// Connected components of pixels equal to `value`; 8- or 4-connectivity.
/// Returns one label per pixel (-1 for other pixels) and the count.
inline std::pair<std::vector<int>, int> label_components(const BinaryImage& img, bool value, bool eight) {
    std::vector<int> label(img.bits.size(), -1);
    int count = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.at(x, y) != value || label[y * img.width + x] >= 0) continue;
            std::queue<std::pair<int, int>> q;
            q.push({x, y});
            label[y * img.width + x] = count;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if ((dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0)) continue;
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height) continue;
                        if (img.at(nx, ny) != value || label[ny * img.width + nx] >= 0) continue;
                        label[ny * img.width + nx] = count;
                        q.push({nx, ny});
                    }
            }
            ++count;
        }
    }
    return {label, count};
}

/// Copy of `img` with a `margin`-pixel background border.
inline BinaryImage pad(const BinaryImage& img, int margin) {
    BinaryImage out(img.width + 2 * margin, img.height + 2 * margin);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.set(x + margin, y + margin, img.at(x, y));
    return out;
}

/// Even-odd test of point p against a set of closed polygons.
inline bool inside_even_odd(Vec2 p, const std::vector<std::vector<Vec2>>& polys) {
    bool inside = false;
    for (const auto& poly : polys) {
        for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
            const Vec2 a = poly[i], b = poly[j];
            if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
        }
    }
    return inside;
}

/// Direct 3x3 Sobel convolution with replicate padding, unnormalised.
inline std::vector<double> naive_sobel(const GrayImage& img) {
    static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    std::vector<double> out(img.pixels.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double gx = 0, gy = 0;
            for (int j = -1; j <= 1; ++j)
                for (int i = -1; i <= 1; ++i) {
                    const int sx = std::clamp(x + i, 0, img.width - 1);
                    const int sy = std::clamp(y + j, 0, img.height - 1);
                    gx += kx[j + 1][i + 1] * img.pixels[sy * img.width + sx];
                    gy += ky[j + 1][i + 1] * img.pixels[sy * img.width + sx];
                }
            out[y * img.width + x] = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

}  // namespace fixtures
