#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sketchmorph/geometry.hpp"
#include "sketchmorph/spatial_grid.hpp"
#include "sketchmorph/text_format.hpp"

namespace sketchmorph {

/// Triangle or quad, stored as vertex indices.
struct Face {
    std::array<std::size_t, 4> index{};
    std::size_t count = 3;

    Face() = default;
    Face(std::size_t a, std::size_t b, std::size_t c) : index{a, b, c, 0}, count(3) {}
    Face(std::size_t a, std::size_t b, std::size_t c, std::size_t d) : index{a, b, c, d}, count(4) {}

    [[nodiscard]] std::span<const std::size_t> indices() const { return {index.data(), count}; }
    friend bool operator==(const Face& a, const Face& b) {
        return a.count == b.count && std::equal(a.index.begin(), a.index.begin() + a.count, b.index.begin());
    }
};

struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    friend bool operator==(const Mesh&, const Mesh&) = default;
};

struct BoundingBox {
    Vec3 min;
    Vec3 max;

    [[nodiscard]] Vec3 center() const { return (min + max) * 0.5; }
    [[nodiscard]] Vec3 extent() const { return max - min; }
};

/// Throws unless every face has 3 or 4 distinct in-range indices.
inline void validate(const Mesh& mesh) {
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto idx = mesh.faces[f].indices();
        if (idx.size() != 3 && idx.size() != 4) throw Error("face " + std::to_string(f) + " is not a triangle or quad");
        for (std::size_t a = 0; a < idx.size(); ++a) {
            if (idx[a] >= mesh.vertices.size()) {
                throw Error("face " + std::to_string(f) + " references vertex " + std::to_string(idx[a]) +
                            " but the mesh has " + std::to_string(mesh.vertices.size()));
            }
            for (std::size_t b = a + 1; b < idx.size(); ++b) {
                if (idx[a] == idx[b]) throw Error("face " + std::to_string(f) + " repeats a vertex index");
            }
        }
    }
    for (const auto& v : mesh.vertices) {
        if (!is_finite(v)) throw Error("mesh has a non-finite vertex");
    }
}

namespace detail {

inline std::size_t resolve_obj_index(std::string_view token, std::size_t vertex_count, std::size_t line) {
    const auto slash = token.find('/');
    const std::string_view head = token.substr(0, slash);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
    if (ec != std::errc() || ptr != head.data() + head.size() || value == 0) {
        throw Error("obj line " + std::to_string(line) + ": bad face index '" + std::string(token) + "'");
    }
    const long long resolved = value > 0 ? value - 1 : static_cast<long long>(vertex_count) + value;
    if (resolved < 0 || resolved >= static_cast<long long>(vertex_count)) {
        throw Error("obj line " + std::to_string(line) + ": face index " + std::to_string(value) +
                    " out of range (" + std::to_string(vertex_count) + " vertices)");
    }
    return static_cast<std::size_t>(resolved);
}

}  // namespace detail

/// Parses the `v` and `f` records of an OBJ document. Everything else is ignored.
inline Mesh parse_obj(std::istream& in) {
    Mesh mesh;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto tokens = split_whitespace(raw);
        if (tokens.empty() || tokens[0].starts_with('#')) continue;
        if (tokens[0] == "v") {
            if (tokens.size() < 4) throw Error("obj line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
            Vec3 v;
            try {
                v = {parse_number(tokens[1]), parse_number(tokens[2]), parse_number(tokens[3])};
            } catch (const Error& e) {
                throw Error("obj line " + std::to_string(line_no) + ": " + e.what());
            }
            mesh.vertices.push_back(v);
        } else if (tokens[0] == "f") {
            const std::size_t n = tokens.size() - 1;
            if (n != 3 && n != 4) {
                throw Error("obj line " + std::to_string(line_no) + ": only triangles and quads are supported");
            }
            std::array<std::size_t, 4> idx{};
            for (std::size_t k = 0; k < n; ++k) {
                idx[k] = detail::resolve_obj_index(tokens[k + 1], mesh.vertices.size(), line_no);
            }
            Face face = n == 3 ? Face(idx[0], idx[1], idx[2]) : Face(idx[0], idx[1], idx[2], idx[3]);
            for (std::size_t a = 0; a < n; ++a) {
                for (std::size_t b = a + 1; b < n; ++b) {
                    if (idx[a] == idx[b]) throw Error("obj line " + std::to_string(line_no) + ": degenerate face");
                }
            }
            mesh.faces.push_back(face);
        }
    }
    if (mesh.vertices.empty()) throw Error("obj contains no vertices");
    return mesh;
}

inline Mesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return parse_obj(in);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

inline void write_obj(const Mesh& mesh, std::ostream& out) {
    if (mesh.vertices.empty()) throw Error("refusing to write a mesh with no vertices");
    validate(mesh);
    for (const auto& v : mesh.vertices) {
        out << "v " << format_number(v.x) << ' ' << format_number(v.y) << ' ' << format_number(v.z) << '\n';
    }
    for (const auto& f : mesh.faces) {
        out << 'f';
        for (auto i : f.indices()) out << ' ' << (i + 1);
        out << '\n';
    }
}

inline std::string to_obj_string(const Mesh& mesh) {
    std::ostringstream out;
    write_obj(mesh, out);
    return out.str();
}

inline void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
    const std::string text = to_obj_string(mesh);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

inline BoundingBox bounding_box(const Mesh& mesh) {
    if (mesh.vertices.empty()) throw Error("bounding box of an empty mesh");
    BoundingBox box{mesh.vertices.front(), mesh.vertices.front()};
    for (const auto& v : mesh.vertices) {
        box.min = {std::min(box.min.x, v.x), std::min(box.min.y, v.y), std::min(box.min.z, v.z)};
        box.max = {std::max(box.max.x, v.x), std::max(box.max.y, v.y), std::max(box.max.z, v.z)};
    }
    return box;
}

// ---------------------------------------------------------------------------
// Blendshapes

struct BlendshapeRig {
    Mesh base;
    std::vector<std::pair<std::string, Mesh>> targets;
    double max_level = 1.0;

    [[nodiscard]] const Mesh* find(std::string_view name) const {
        for (const auto& [n, m] : targets) {
            if (n == name) return &m;
        }
        return nullptr;
    }
};

/// Target name -> activation level in [0, max_level].
using ActivationVector = std::map<std::string, double, std::less<>>;

inline void validate(const BlendshapeRig& rig) {
    if (!(rig.max_level > 0.0) || !std::isfinite(rig.max_level)) throw Error("rig max_level must be positive");
    if (rig.base.vertices.empty()) throw Error("rig base mesh is empty");
    validate(rig.base);
    for (const auto& [name, target] : rig.targets) {
        if (target.vertices.size() != rig.base.vertices.size()) {
            throw Error("target '" + name + "' has " + std::to_string(target.vertices.size()) +
                        " vertices, base has " + std::to_string(rig.base.vertices.size()));
        }
        if (target.faces != rig.base.faces) throw Error("target '" + name + "' has a different face list");
    }
}

/// vertex_i = base_i + sum_t (level_t / max_level) * (target_t,i - base_i)
inline Mesh apply_blendshapes(const BlendshapeRig& rig, const ActivationVector& act) {
    std::vector<std::pair<const Mesh*, double>> weighted;
    for (const auto& [name, level] : act) {
        const Mesh* target = rig.find(name);
        if (target == nullptr) throw Error("unknown activation '" + name + "'");
        if (!std::isfinite(level) || level < 0.0 || level > rig.max_level) {
            throw Error("activation '" + name + "' level " + format_number(level) + " outside [0, " +
                        format_number(rig.max_level) + "]");
        }
        weighted.emplace_back(target, level / rig.max_level);
    }
    Mesh out{rig.base.vertices, rig.base.faces};
    for (std::size_t i = 0; i < out.vertices.size(); ++i) {
        const Vec3 base = rig.base.vertices[i];
        Vec3 v = base;
        for (const auto& [target, w] : weighted) {
            if (w != 0.0) v += w * (target->vertices[i] - base);
        }
        out.vertices[i] = v;
    }
    return out;
}

/// Builds a rig from manifest lines: `base = file.obj`, `max_level = N` and
/// one `name = target.obj` line per blendshape. `load` resolves mesh names.
inline BlendshapeRig parse_rig(std::istream& manifest, const std::function<Mesh(const std::string&)>& load) {
    BlendshapeRig rig;
    bool have_base = false;
    for (const auto& [key, value] : parse_key_values(manifest)) {
        if (key == "base") {
            rig.base = load(value);
            have_base = true;
        } else if (key == "max_level") {
            rig.max_level = parse_number(value);
        } else {
            if (rig.find(key) != nullptr) throw Error("duplicate target '" + key + "'");
            rig.targets.emplace_back(key, load(value));
        }
    }
    if (!have_base) throw Error("rig manifest is missing 'base = <file.obj>'");
    validate(rig);
    return rig;
}

/// Paths in the manifest are relative to the manifest itself.
inline BlendshapeRig load_rig(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw Error("cannot open " + manifest.string());
    const auto dir = manifest.parent_path();
    try {
        return parse_rig(in, [&dir](const std::string& name) { return load_obj(dir / name); });
    } catch (const Error& e) {
        throw Error(manifest.string() + ": " + e.what());
    }
}

inline ActivationVector parse_activations(std::istream& in) {
    ActivationVector act;
    for (const auto& [key, value] : parse_key_values(in)) {
        if (act.contains(key)) throw Error("duplicate activation '" + key + "'");
        act[key] = parse_number(value);
    }
    return act;
}

inline ActivationVector load_activations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return parse_activations(in);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Mirroring

inline Vec3 reflect_x(Vec3 v, double plane_x) { return {2.0 * plane_x - v.x, v.y, v.z}; }

/// Index of the vertex nearest to reflect(v) for every vertex v (lowest index on ties).
inline std::vector<std::size_t> mirror_partners(const Mesh& mesh, double plane_x) {
    std::vector<UniformGrid<3>::Point> pts;
    pts.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) pts.push_back({v.x, v.y, v.z});
    const UniformGrid<3> grid(std::move(pts));
    std::vector<std::size_t> partner(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3 r = reflect_x(mesh.vertices[i], plane_x);
        partner[i] = grid.argmin({r.x, r.y, r.z}, [](std::size_t, double d) { return d; }, 1.0, 0.0);
    }
    return partner;
}

/// Averages each vertex with the reflection of its mirror partner.
/// Pass partners taken from an undeformed mesh when `mesh` is no longer symmetric.
inline Mesh mirror_average(const Mesh& mesh, double plane_x, const std::vector<std::size_t>& partner) {
    if (partner.size() != mesh.vertices.size()) throw Error("mirror partner count does not match the mesh");
    Mesh out = mesh;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        out.vertices[i] = (mesh.vertices[i] + reflect_x(mesh.vertices[partner[i]], plane_x)) * 0.5;
    }
    return out;
}

inline Mesh mirror_average(const Mesh& mesh, double plane_x) {
    if (mesh.vertices.empty()) throw Error("mirror_average of an empty mesh");
    return mirror_average(mesh, plane_x, mirror_partners(mesh, plane_x));
}

}  // namespace sketchmorph
