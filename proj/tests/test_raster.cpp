#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "sketchmorph/raster.hpp"

using namespace sketchmorph;

namespace {

/// Quad in the plane z = z0 + slope * x over [x0, x1] x [y0, y1], facing +z.
Mesh tilted_quad(double x0, double x1, double y0, double y1, double z0, double slope) {
    Mesh m;
    auto z = [&](double x) { return z0 + slope * x; };
    m.vertices = {{x0, y0, z(x0)}, {x1, y0, z(x1)}, {x1, y1, z(x1)}, {x0, y1, z(x0)}};
    m.faces = {Face(0, 1, 2, 3)};
    return m;
}

Mesh merge(const Mesh& a, const Mesh& b) {
    Mesh m = a;
    const std::size_t off = a.vertices.size();
    m.vertices.insert(m.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (Face f : b.faces) {
        for (std::size_t k = 0; k < f.count; ++k) f.index[k] += off;
        m.faces.push_back(f);
    }
    return m;
}

}  // namespace

TEST(Camera, FitMapsBoxHeightToImageHeight) {
    const BoundingBox box{{-1.0, 2.0, -3.0}, {3.0, 6.0, 1.0}};
    const CameraFront cam = CameraFront::fit(box, 91, 200);
    EXPECT_DOUBLE_EQ(cam.scale, 50.0);
    const Vec2 top = cam.to_pixel({1.0, 6.0, 0.0});
    EXPECT_DOUBLE_EQ(top.x, 45.5);
    EXPECT_DOUBLE_EQ(top.y, 0.0);
    EXPECT_DOUBLE_EQ(cam.to_pixel({1.0, 2.0, 0.0}).y, 200.0);
    EXPECT_DOUBLE_EQ(cam.to_pixel({0.0, 4.0, 0.0}).x, 45.5 - 50.0);
    EXPECT_LT(CameraFront::depth({0, 0, 1.0}), CameraFront::depth({0, 0, -1.0}));
    EXPECT_THROW(CameraFront::fit({{0, 1, 0}, {1, 1, 0}}, 10, 10), Error);
}

TEST(Camera, ProjectionInvertsOnRandomPoints) {
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int i = 0; i < 1000; ++i) {
        const BoundingBox box{{u(rng), u(rng), 0.0}, {0.0, 0.0, 0.0}};
        BoundingBox b = box;
        b.max = b.min + Vec3{std::abs(u(rng)) + 0.1, std::abs(u(rng)) + 0.1, 1.0};
        const CameraFront cam = CameraFront::fit(b, 91, 200);
        const Vec3 p{u(rng), u(rng), u(rng)};
        const Vec2 back = cam.to_model(cam.to_pixel(p));
        EXPECT_NEAR(back.x, p.x, 1e-9);
        EXPECT_NEAR(back.y, p.y, 1e-9);
    }
}

TEST(VertexMap, NearestMatchesBruteForce) {
    std::mt19937 rng(31);
    const Mesh m = fixtures::random_mesh(rng, 400, 1);
    const CameraFront cam = CameraFront::fit(bounding_box(m), 91, 200);
    const VertexPixelMap map = project_vertices(m, cam);
    double zmin = 1e300, zmax = -1e300;
    for (const auto& v : m.vertices) {
        zmin = std::min(zmin, -v.z);
        zmax = std::max(zmax, -v.z);
    }
    std::uniform_real_distribution<double> ux(-10.0, 101.0), uy(-10.0, 210.0);
    for (double p : {0.0, 0.25, 0.7, 1.0}) {
        for (int q = 0; q < 300; ++q) {
            const Vec2 pix{ux(rng), uy(rng)};
            std::size_t best = 0;
            double best_score = 1e300;
            for (std::size_t i = 0; i < m.vertices.size(); ++i) {
                const Vec2 vp{(m.vertices[i].x - cam.center.x) * cam.scale + 45.5,
                              100.0 - (m.vertices[i].y - cam.center.y) * cam.scale};
                const double d = std::hypot(vp.x - pix.x, vp.y - pix.y);
                const double s = (1.0 - p) * d / std::hypot(91.0, 200.0) + p * (-m.vertices[i].z - zmin) / (zmax - zmin);
                if (s < best_score - 1e-12) {
                    best_score = s;
                    best = i;
                }
            }
            EXPECT_EQ(nearest_vertex_for_pixel(map, pix, p), best) << "p=" << p;
        }
    }
}

TEST(VertexMap, ChecksumTracksProjection) {
    const Mesh a = fixtures::unit_cube();
    Mesh b = a;
    b.vertices[3].z += 1e-9;
    const CameraFront cam = CameraFront::fit(bounding_box(a), 50, 50);
    EXPECT_EQ(project_vertices(a, cam).checksum(), project_vertices(a, cam).checksum());
    EXPECT_NE(project_vertices(a, cam).checksum(), project_vertices(b, cam).checksum());
}

TEST(Render, FaceNormalIsOutward) {
    const Mesh cube = fixtures::unit_cube();
    const Vec3 front = face_normal(cube, cube.faces[1]);
    EXPECT_NEAR(front.z, 1.0, 1e-12);
    const Vec3 back = face_normal(cube, cube.faces[0]);
    EXPECT_NEAR(back.z, -1.0, 1e-12);
}

TEST(Render, LambertShadeAndCoverage) {
    const double slope = 1.0;  // normal (-1, 0, 1)/sqrt2
    const Mesh q = tilted_quad(-1.0, 1.0, -1.0, 1.0, 0.0, slope);
    const CameraFront cam = CameraFront::fit(bounding_box(q), 40, 40);
    const GrayImage img = shade_render(q, cam, 0.1);
    const double expect = 0.1 + 0.9 / std::sqrt(2.0);
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) EXPECT_NEAR(img.at(x, y), expect, 1e-12);
    const Mesh small = merge(q, tilted_quad(-3.0, -2.0, -1.0, 1.0, 0.0, 0.0));
    const GrayImage img2 = shade_render(small, CameraFront::fit(bounding_box(small), 80, 40), 0.1);
    int covered = 0;
    for (double v : img2.pixels) covered += v < 0.999;
    EXPECT_EQ(covered, 40 * 40);  // the flat quad renders white like the background
}

TEST(Render, NearerSurfaceWins) {
    const Mesh back = tilted_quad(-1.0, 1.0, -1.0, 1.0, -3.0, 0.5);
    const Mesh front = tilted_quad(-0.5, 0.5, -0.5, 0.5, 0.0, 2.0);
    const CameraFront cam = CameraFront::fit(bounding_box(merge(back, front)), 40, 40);
    const double tilted = 0.1 + 0.9 / std::sqrt(5.0);
    for (const Mesh& m : {merge(back, front), merge(front, back)}) {
        const GrayImage img = shade_render(m, cam, 0.1);
        EXPECT_NEAR(img.at(20, 20), tilted, 1e-12);
        EXPECT_NEAR(img.at(2, 2), 0.1 + 0.9 / std::sqrt(1.25), 1e-12);
    }
}

TEST(Render, SphereDarkensTowardTheRim) {
    const Mesh s = fixtures::uv_sphere(1.0, 24, 48);
    const GrayImage img = shade_render(s, CameraFront::fit(bounding_box(s), 100, 100), 0.1);
    EXPECT_GT(img.at(50, 50), 0.95);
    EXPECT_LT(img.at(2, 50), 0.5);
    EXPECT_EQ(img.at(0, 0), 1.0);
}
