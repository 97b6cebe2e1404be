#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "sketchmorph/image.hpp"

namespace sketchmorph {

/// Ordered sub-pixel point chain in image coordinates. A closed contour
/// wraps from its last point back to its first; the first point is not
/// repeated.
struct Contour {
    std::vector<Vec2> points;
    bool closed = false;
};

/// Dark pixels become ink.
inline BinaryImage binarize(const GrayImage& img, double threshold = 0.5) {
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) out.bits[i] = img.pixels[i] < threshold ? 1 : 0;
    return out;
}

/// Morphological closing with a `side` x `side` square. Pixels outside the
/// image are background; the closing is evaluated on a padded canvas so it
/// stays extensive and idempotent up to the border.
inline BinaryImage close_gaps(const BinaryImage& img, int side) {
    if (side < 1) throw Error("structuring element side must be >= 1");
    if (side == 1) return img;
    // square offsets {-lo, ..., hi}
    const int lo = (side - 1) / 2;
    const int hi = side - 1 - lo;
    const int pad = side;
    const int w = img.width + 2 * pad;
    const int h = img.height + 2 * pad;
    auto index = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };

    // separable dilation: D(x) = OR_b X(x - b)
    std::vector<std::uint8_t> src(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) src[index(x + pad, y + pad)] = img.at(x, y) ? 1 : 0;

    auto pass = [&](const std::vector<std::uint8_t>& in, bool horizontal, bool dilate) {
        std::vector<std::uint8_t> out(in.size(), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                bool acc = !dilate;
                for (int b = -lo; b <= hi; ++b) {
                    // dilation reads x - b, erosion reads x + b
                    const int o = dilate ? -b : b;
                    const int sx = horizontal ? x + o : x;
                    const int sy = horizontal ? y : y + o;
                    const bool v = sx >= 0 && sy >= 0 && sx < w && sy < h && in[index(sx, sy)];
                    if (dilate) {
                        acc = acc || v;
                    } else {
                        acc = acc && v;
                    }
                }
                out[index(x, y)] = acc ? 1 : 0;
            }
        }
        return out;
    };
    auto dilated = pass(pass(src, true, true), false, true);
    auto closed = pass(pass(dilated, true, false), false, false);

    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.set(x, y, closed[index(x + pad, y + pad)] != 0);
    return out;
}

namespace detail {

/// Ring P2..P9 clockwise from north; even slots are the 4-neighbours.
inline std::array<bool, 8> ring(const BinaryImage& img, int x, int y) {
    return {img.get(x, y - 1),     img.get(x + 1, y - 1), img.get(x + 1, y), img.get(x + 1, y + 1),
            img.get(x, y + 1),     img.get(x - 1, y + 1), img.get(x - 1, y), img.get(x - 1, y - 1)};
}

/// Deleting the centre keeps the topology: one 8-connected ink component in
/// the ring and one 4-connected background component touching the centre.
inline bool is_simple(const std::array<bool, 8>& n) {
    auto components = [&](bool value, bool eight, bool need_edge_neighbour) {
        std::array<int, 8> label{};
        label.fill(-1);
        int count = 0;
        for (int s = 0; s < 8; ++s) {
            if (n[s] != value || label[s] >= 0) continue;
            std::array<int, 8> stack{};
            int top = 0;
            stack[top++] = s;
            label[s] = count;
            bool touches = s % 2 == 0;
            while (top > 0) {
                const int k = stack[--top];
                for (int m = 0; m < 8; ++m) {
                    if (n[m] != value || label[m] >= 0) continue;
                    const int gap = std::min((k - m + 8) % 8, (m - k + 8) % 8);
                    const bool adjacent = gap == 1 || (eight && gap == 2 && k % 2 == 0);
                    if (!adjacent) continue;
                    label[m] = count;
                    touches = touches || m % 2 == 0;
                    stack[top++] = m;
                }
            }
            if (touches || !need_edge_neighbour) ++count;
        }
        return count;
    };
    return components(true, true, false) == 1 && components(false, false, true) == 1;
}

}  // namespace detail

/// Zhang-Suen thinning; each iteration runs both sub-passes. Marked pixels
/// are removed in scan order and re-checked against the current image first,
/// so a block that the parallel rule would erase whole keeps a pixel.
inline BinaryImage thin(const BinaryImage& img, int iterations) {
    BinaryImage cur = img;
    std::vector<std::size_t> doomed;
    for (int it = 0; it < iterations; ++it) {
        bool changed = false;
        for (int sub = 0; sub < 2; ++sub) {
            doomed.clear();
            for (int y = 0; y < cur.height; ++y) {
                for (int x = 0; x < cur.width; ++x) {
                    if (!cur.at(x, y)) continue;
                    const auto n = detail::ring(cur, x, y);
                    const int b = static_cast<int>(std::count(n.begin(), n.end(), true));
                    if (b < 2 || b > 6) continue;
                    int a = 0;
                    for (int k = 0; k < 8; ++k) a += (!n[k] && n[(k + 1) % 8]) ? 1 : 0;
                    if (a != 1) continue;
                    const bool p2 = n[0], p4 = n[2], p6 = n[4], p8 = n[6];
                    if (sub == 0) {
                        if (p2 && p4 && p6) continue;
                        if (p4 && p6 && p8) continue;
                    } else {
                        if (p2 && p4 && p8) continue;
                        if (p2 && p6 && p8) continue;
                    }
                    doomed.push_back(static_cast<std::size_t>(y) * cur.width + x);
                }
            }
            for (auto i : doomed) {
                const int x = static_cast<int>(i % cur.width), y = static_cast<int>(i / cur.width);
                const auto n = detail::ring(cur, x, y);
                if (std::count(n.begin(), n.end(), true) < 2 || !detail::is_simple(n)) continue;
                cur.bits[i] = 0;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return cur;
}

/// Marching squares over the 0/1 field at level 0.5.
///
/// Crossings sit at edge midpoints (linear interpolation of a binary field).
/// Saddle cells use the cell-centre average (0.5, counted as ink), so
/// diagonal ink pixels connect. Segments are oriented with ink on the same
/// side, chained into contours, open ones first in scan order.
inline std::vector<Contour> extract_contours(const BinaryImage& img) {
    const int w = img.width;
    const int h = img.height;
    // Edge ids: horizontal edge (x,y)-(x+1,y) -> 2*(y*w+x); vertical (x,y)-(x,y+1) -> 2*(y*w+x)+1.
    auto h_edge = [w](int x, int y) { return 2 * (static_cast<std::int64_t>(y) * w + x); };
    auto v_edge = [w](int x, int y) { return 2 * (static_cast<std::int64_t>(y) * w + x) + 1; };
    auto edge_point = [w](std::int64_t id) {
        const std::int64_t cell = id / 2;
        const double x = static_cast<double>(cell % w);
        const double y = static_cast<double>(cell / w);
        return (id % 2 == 0) ? Vec2{x + 0.5, y} : Vec2{x, y + 0.5};
    };

    std::unordered_map<std::int64_t, std::int64_t> next;  // oriented segment start -> end
    std::unordered_map<std::int64_t, std::int64_t> prev;
    std::vector<std::int64_t> order;  // segment starts in creation order

    auto add_segment = [&](std::int64_t e0, std::int64_t e1, Vec2 corner, bool corner_ink) {
        const Vec2 p = edge_point(e0), q = edge_point(e1);
        const double cr = (q.x - p.x) * (corner.y - p.y) - (q.y - p.y) * (corner.x - p.x);
        if ((cr > 0.0) != corner_ink) std::swap(e0, e1);
        next[e0] = e1;
        prev[e1] = e0;
        order.push_back(e0);
    };

    for (int y = 0; y + 1 < h; ++y) {
        for (int x = 0; x + 1 < w; ++x) {
            const bool tl = img.at(x, y), tr = img.at(x + 1, y);
            const bool br = img.at(x + 1, y + 1), bl = img.at(x, y + 1);
            const int code = (tl ? 1 : 0) | (tr ? 2 : 0) | (br ? 4 : 0) | (bl ? 8 : 0);
            if (code == 0 || code == 15) continue;
            const std::int64_t top = h_edge(x, y), bottom = h_edge(x, y + 1);
            const std::int64_t left = v_edge(x, y), right = v_edge(x + 1, y);
            const Vec2 ctl{static_cast<double>(x), static_cast<double>(y)};
            const Vec2 ctr{x + 1.0, static_cast<double>(y)};
            const Vec2 cbr{x + 1.0, y + 1.0};
            const Vec2 cbl{static_cast<double>(x), y + 1.0};
            switch (code) {
                case 1: case 14: add_segment(left, top, ctl, tl); break;
                case 2: case 13: add_segment(top, right, ctr, tr); break;
                case 4: case 11: add_segment(right, bottom, cbr, br); break;
                case 8: case 7: add_segment(bottom, left, cbl, bl); break;
                case 3: case 12: add_segment(left, right, ctl, tl); break;
                case 6: case 9: add_segment(top, bottom, ctl, tl); break;
                case 5:  // tl, br ink; centre counts as ink so the background corners are cut off
                    add_segment(top, right, ctr, false);
                    add_segment(bottom, left, cbl, false);
                    break;
                case 10:  // tr, bl ink
                    add_segment(left, top, ctl, false);
                    add_segment(right, bottom, cbr, false);
                    break;
                default: break;
            }
        }
    }

    std::vector<Contour> contours;
    std::unordered_map<std::int64_t, bool> used;
    auto trace = [&](std::int64_t start) {
        Contour c;
        std::int64_t e = start;
        while (true) {
            used[e] = true;
            c.points.push_back(edge_point(e));
            auto it = next.find(e);
            if (it == next.end()) break;
            e = it->second;
            if (e == start) {
                c.closed = true;
                break;
            }
        }
        if (c.points.size() >= 2) contours.push_back(std::move(c));
    };
    // open chains start where nothing flows in
    for (auto s : order) {
        if (!used.contains(s) && !prev.contains(s)) trace(s);
    }
    for (auto s : order) {
        if (!used.contains(s)) trace(s);
    }
    return contours;
}

/// Sobel gradient magnitude scaled so the maximum is 1 (all zero for a flat image).
inline GrayImage gradient_magnitude(const GrayImage& img) {
    if (img.width < 3 || img.height < 3) throw Error("gradient needs an image of at least 3x3");
    GrayImage out(img.width, img.height, 0.0);
    double peak = 0.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            auto p = [&](int dx, int dy) { return img.clamped(x + dx, y + dy); };
            const double gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            const double gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            const double m = std::hypot(gx, gy);
            out.at(x, y) = m;
            peak = std::max(peak, m);
        }
    }
    if (peak > 0.0) {
        for (double& v : out.pixels) v /= peak;
    } else {
        std::fill(out.pixels.begin(), out.pixels.end(), 0.0);
    }
    return out;
}

/// Drops consecutive duplicates (and the wrap duplicate on closed chains).
inline std::vector<Vec2> dedup_points(const std::vector<Vec2>& pts, bool closed) {
    std::vector<Vec2> out;
    for (const auto& p : pts) {
        if (out.empty() || !(out.back() == p)) out.push_back(p);
    }
    if (closed) {
        while (out.size() > 1 && out.back() == out.front()) out.pop_back();
    }
    return out;
}

}  // namespace sketchmorph
