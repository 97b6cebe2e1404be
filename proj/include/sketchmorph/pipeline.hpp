#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stop_token>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchmorph/deform.hpp"
#include "sketchmorph/imageproc.hpp"
#include "sketchmorph/mesh.hpp"
#include "sketchmorph/raster.hpp"
#include "sketchmorph/snake.hpp"
#include "sketchmorph/tweakables.hpp"

namespace sketchmorph {

// ---------------------------------------------------------------------------
// Alignment

/// Places the sketch in the render frame: a sketch pixel at p lands at
/// scale * p + translate (continuous pixel coordinates).
struct AlignmentTransform {
    Vec2 translate;
    double scale = 1.0;

    friend bool operator==(const AlignmentTransform&, const AlignmentTransform&) = default;
};

/// Resamples `sketch` into a `width` x `height` frame. Uncovered pixels are white.
inline GrayImage apply_alignment(const GrayImage& sketch, const AlignmentTransform& t, int width, int height) {
    if (!(t.scale > 0.0) || !std::isfinite(t.scale) || !is_finite(t.translate)) {
        throw Error("alignment scale must be positive and finite");
    }
    const double x0 = std::max(0.0, t.translate.x);
    const double x1 = std::min(static_cast<double>(width), t.translate.x + t.scale * sketch.width);
    const double y0 = std::max(0.0, t.translate.y);
    const double y1 = std::min(static_cast<double>(height), t.translate.y + t.scale * sketch.height);
    if (!(x1 > x0) || !(y1 > y0)) throw Error("alignment leaves no part of the sketch inside the frame");

    GrayImage out(width, height, 1.0);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double sx = (c + 0.5 - t.translate.x) / t.scale - 0.5;
            const double sy = (r + 0.5 - t.translate.y) / t.scale - 0.5;
            if (sx < -0.5 || sy < -0.5 || sx > sketch.width - 0.5 || sy > sketch.height - 0.5) continue;
            out.at(c, r) = sketch.sample({sx, sy});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text formats

/// Blocks of `x y` rows separated by blank lines; each block may start with
/// `# contour <id> <free|fixed|periodic|open|closed>`.
struct PointBlock {
    std::size_t id = 0;
    std::string tag;
    std::vector<Vec2> points;
};

inline void write_point_blocks(std::ostream& out, const std::vector<PointBlock>& blocks) {
    bool first = true;
    for (const auto& b : blocks) {
        if (!first) out << '\n';
        first = false;
        out << "# contour " << b.id << ' ' << b.tag << '\n';
        for (const auto& p : b.points) out << format_number(p.x) << ' ' << format_number(p.y) << '\n';
    }
}

inline std::vector<PointBlock> parse_point_blocks(std::istream& in) {
    std::vector<PointBlock> blocks;
    PointBlock cur;
    bool open_block = false;
    std::string raw;
    std::size_t line_no = 0;
    auto flush = [&]() {
        if (open_block && !cur.points.empty()) blocks.push_back(std::move(cur));
        cur = PointBlock{};
        cur.id = blocks.size();
        open_block = false;
    };
    while (std::getline(in, raw)) {
        ++line_no;
        const auto tokens = split_whitespace(raw);
        if (tokens.empty()) {
            flush();
            continue;
        }
        if (tokens[0] == "#") {
            if (tokens.size() >= 3 && tokens[1] == "contour") {
                if (open_block && !cur.points.empty()) flush();
                cur.id = static_cast<std::size_t>(parse_number(tokens[2]));
                if (tokens.size() >= 4) cur.tag = std::string(tokens[3]);
                open_block = true;
            }
            continue;
        }
        if (tokens[0].starts_with('#')) continue;
        if (tokens.size() != 2) throw Error("line " + std::to_string(line_no) + ": expected 'x y'");
        if (!open_block) {
            cur.id = blocks.size();
            open_block = true;
        }
        cur.points.push_back({parse_number(tokens[0]), parse_number(tokens[1])});
    }
    flush();
    return blocks;
}

inline std::vector<PointBlock> to_blocks(const std::vector<Contour>& contours) {
    std::vector<PointBlock> out;
    for (std::size_t i = 0; i < contours.size(); ++i) {
        out.push_back({i, contours[i].closed ? "closed" : "open", contours[i].points});
    }
    return out;
}

inline std::vector<Contour> contours_from_blocks(const std::vector<PointBlock>& blocks) {
    std::vector<Contour> out;
    for (const auto& b : blocks) out.push_back({b.points, b.tag == "closed" || b.tag == "periodic"});
    return out;
}

inline std::vector<PointBlock> to_blocks(const std::vector<SnakePair>& pairs, bool outputs) {
    std::vector<PointBlock> out;
    for (const auto& p : pairs) {
        const Snake& s = outputs ? p.output : p.input;
        out.push_back({p.contour_id, std::string(to_string(s.mode)), s.points});
    }
    return out;
}

/// Rebuilds snake pairs from matching input/output block lists.
inline std::vector<SnakePair> pairs_from_blocks(const std::vector<PointBlock>& in, const std::vector<PointBlock>& out) {
    if (in.size() != out.size()) throw Error("input and output snake files hold different numbers of snakes");
    std::vector<SnakePair> pairs;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const SnakeMode mode = in[i].tag.empty() ? SnakeMode::Free : parse_snake_mode(in[i].tag);
        pairs.push_back({in[i].id, {in[i].points, mode}, {out[i].points, mode}, 0, false});
    }
    return pairs;
}

inline void write_delta_field(std::ostream& out, const DeltaField& field) {
    out << "# x y dx dy count\n";
    for (const auto& [k, e] : field.entries) {
        out << k.x << ' ' << k.y << ' ' << format_number(e.delta.x) << ' ' << format_number(e.delta.y) << ' '
            << e.count << '\n';
    }
}

inline DeltaField parse_delta_field(std::istream& in) {
    DeltaField field;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto t = split_whitespace(raw);
        if (t.empty() || t[0].starts_with('#')) continue;
        if (t.size() != 5) throw Error("delta line " + std::to_string(line_no) + ": expected 'x y dx dy count'");
        const PixelKey key{static_cast<int>(parse_number(t[0])), static_cast<int>(parse_number(t[1]))};
        field.entries[key] = {{parse_number(t[2]), parse_number(t[3])}, static_cast<std::size_t>(parse_number(t[4]))};
    }
    return field;
}

inline void write_rejections(std::ostream& out, const std::vector<RejectedSample>& rejected) {
    out << "# contour point magnitude\n";
    for (const auto& r : rejected) out << r.contour_id << ' ' << r.point_index << ' ' << format_number(r.magnitude) << '\n';
}

inline void write_displacements(std::ostream& out, const std::vector<VertexDisplacement>& disps) {
    out << "# vertex dx dy dz\n";
    for (const auto& d : disps) {
        out << d.vertex << ' ' << format_number(d.displacement.x) << ' ' << format_number(d.displacement.y) << ' '
            << format_number(d.displacement.z) << '\n';
    }
}

inline std::vector<VertexDisplacement> parse_displacements(std::istream& in) {
    std::vector<VertexDisplacement> out;
    std::string raw;
    while (std::getline(in, raw)) {
        const auto t = split_whitespace(raw);
        if (t.empty() || t[0].starts_with('#')) continue;
        if (t.size() != 4) throw Error("expected 'vertex dx dy dz'");
        out.push_back({static_cast<std::size_t>(parse_number(t[0])),
                       {parse_number(t[1]), parse_number(t[2]), parse_number(t[3])}});
    }
    return out;
}

template <class Writer>
std::string to_text(Writer&& w) {
    std::ostringstream s;
    w(s);
    return s.str();
}

// ---------------------------------------------------------------------------
// Diagnostics images

inline void draw_polyline(GrayImage& img, const std::vector<Vec2>& pts, bool closed, double value) {
    auto plot = [&](Vec2 p) {
        const int x = static_cast<int>(std::lround(p.x));
        const int y = static_cast<int>(std::lround(p.y));
        if (img.contains(x, y)) img.at(x, y) = value;
    };
    const std::size_t segs = closed ? pts.size() : (pts.empty() ? 0 : pts.size() - 1);
    for (std::size_t i = 0; i < segs; ++i) {
        const Vec2 a = pts[i];
        const Vec2 b = pts[(i + 1) % pts.size()];
        const int steps = std::max(1, static_cast<int>(std::ceil(distance(a, b) * 2.0)));
        for (int s = 0; s <= steps; ++s) plot(a + (b - a) * (static_cast<double>(s) / steps));
    }
    if (pts.size() == 1) plot(pts.front());
}

/// Render faded to light gray, input snakes mid gray, output snakes black.
inline GrayImage snake_overlay(const GrayImage& reference, const std::vector<SnakePair>& pairs) {
    GrayImage img = reference;
    for (double& v : img.pixels) v = 0.75 + 0.25 * v;
    for (const auto& p : pairs) draw_polyline(img, p.input.points, p.input.mode == SnakeMode::Periodic, 0.5);
    for (const auto& p : pairs) draw_polyline(img, p.output.points, p.output.mode == SnakeMode::Periodic, 0.0);
    return img;
}

/// White where there is no delta; darker for larger magnitudes.
inline GrayImage delta_magnitude_image(const DeltaField& field, int width, int height, double max_delta) {
    GrayImage img(width, height, 1.0);
    for (const auto& [k, e] : field.entries) {
        if (img.contains(k.x, k.y)) img.at(k.x, k.y) = 1.0 - std::min(1.0, norm(e.delta) / max_delta) * 0.9 - 0.1;
    }
    return img;
}

// ---------------------------------------------------------------------------
// Orchestration

struct StageTimings {
    double pose_render = 0.0;
    double preprocess = 0.0;
    double snakes_deltas = 0.0;
    double deform = 0.0;
};

struct RunReport {
    StageTimings seconds;
    std::size_t contours = 0;
    std::size_t snakes_run = 0;
    std::size_t contours_skipped = 0;
    std::size_t samples = 0;
    std::size_t samples_rejected = 0;
    std::size_t delta_pixels = 0;
    std::size_t displacement_entries = 0;
    std::size_t displaced_vertices = 0;
    std::vector<std::string> outputs;
};

inline nlohmann::json to_json(const RunReport& r, bool with_timings = true) {
    nlohmann::json j;
    if (with_timings) {
        j["seconds"] = {{"pose_render", r.seconds.pose_render},
                        {"preprocess", r.seconds.preprocess},
                        {"snakes_deltas", r.seconds.snakes_deltas},
                        {"deform", r.seconds.deform}};
    }
    j["counts"] = {{"contours", r.contours},
                   {"snakes_run", r.snakes_run},
                   {"contours_skipped", r.contours_skipped},
                   {"samples", r.samples},
                   {"samples_rejected", r.samples_rejected},
                   {"delta_pixels", r.delta_pixels},
                   {"displacement_entries", r.displacement_entries},
                   {"displaced_vertices", r.displaced_vertices}};
    j["outputs"] = r.outputs;
    return j;
}

/// A failure inside a named pipeline stage.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct PipelineInputs {
    GrayImage sketch;
    BlendshapeRig rig;
    ActivationVector activations;
    AlignmentTransform alignment;
    int width = 91;
    int height = 200;
    Tweakables tw;
};

struct PoseStage {
    Mesh posed;
    BoundingBox bbox;
    CameraFront camera;
    GrayImage render;
    VertexPixelMap vertex_map;
};

struct SnakesStage {
    GrayImage aligned;
    BinaryImage binary;
    BinaryImage closed;
    BinaryImage thinned;
    std::vector<Contour> contours;
    SnakeRun run;
    DeltaCollection deltas;
};

struct DeformStage {
    std::vector<VertexDisplacement> displacements;
    Mesh output;
};

struct PipelineResult {
    PoseStage pose;
    SnakesStage snakes;
    DeformStage deform;
    RunReport report;
};

/// Receives each named artifact as soon as it exists.
using ArtifactSink = std::function<void(const std::string& name, const std::string& bytes)>;

namespace detail {

template <class Fn>
auto timed_stage(const std::string& name, double& seconds, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        auto r = fn();
        seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    } catch (const Cancelled&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline void check_stop(std::stop_token stop) {
    if (stop.stop_requested()) throw Cancelled();
}

}  // namespace detail

inline PoseStage pose_and_render(const BlendshapeRig& rig, const ActivationVector& act, int width, int height,
                                 const Tweakables& tw) {
    PoseStage s;
    s.posed = apply_blendshapes(rig, act);
    s.bbox = bounding_box(s.posed);
    s.camera = CameraFront::fit(s.bbox, width, height);
    // snakes see the same 8-bit render that is saved and shown
    s.render = quantized(shade_render(s.posed, s.camera, tw.shade_ambient));
    // built once, from the undeformed pose
    s.vertex_map = project_vertices(s.posed, s.camera);
    return s;
}

/// Binarize, close gaps, thin and extract contours from an aligned sketch.
inline SnakesStage preprocess_sketch(const GrayImage& aligned, const Tweakables& tw) {
    SnakesStage s;
    s.aligned = aligned;
    s.binary = binarize(aligned, tw.binarize_threshold);
    s.closed = close_gaps(s.binary, tw.gap_close_side);
    s.thinned = thin(s.closed, tw.thin_iterations);
    s.contours = extract_contours(s.thinned);
    return s;
}

inline void snake_and_collect(SnakesStage& s, const GrayImage& reference, const Tweakables& tw, std::stop_token stop) {
    s.run = run_snakes(s.contours, reference, tw, stop);
    s.deltas = collect_deltas(s.run.pairs, tw);
}

inline DeformStage deform_mesh(const PoseStage& pose, const SnakesStage& snakes, const Tweakables& tw) {
    DeformStage d;
    if (snakes.deltas.field.entries.empty()) {
        d.output = tw.mirror_output ? apply_soft_transforms(pose.posed, {}, tw) : pose.posed;
        return d;
    }
    d.displacements = resolve_vertex_displacements(snakes.deltas.field, pose.vertex_map, pose.camera, tw);
    d.output = apply_soft_transforms(pose.posed, d.displacements, tw);
    return d;
}

/// Full chain: pose, render, align, preprocess, snakes, deltas, deform.
/// Artifacts go to `sink` (if set) as each stage finishes, so a failure keeps
/// everything produced before it.
inline PipelineResult run_pipeline(const PipelineInputs& in, const ArtifactSink& sink = {}, std::stop_token stop = {}) {
    validate(in.tw);
    PipelineResult res;
    RunReport& rep = res.report;
    auto emit = [&](const std::string& name, auto&& make) {
        if (!sink) return;
        sink(name, make());
        rep.outputs.push_back(name);
    };

    res.pose = detail::timed_stage("pose_render", rep.seconds.pose_render,
                                   [&] { return pose_and_render(in.rig, in.activations, in.width, in.height, in.tw); });
    emit("posed.obj", [&] { return to_obj_string(res.pose.posed); });
    emit("render.pgm", [&] { return encode_pgm(res.pose.render); });
    detail::check_stop(stop);

    res.snakes = detail::timed_stage("preprocess", rep.seconds.preprocess, [&] {
        return preprocess_sketch(apply_alignment(in.sketch, in.alignment, in.width, in.height), in.tw);
    });
    emit("sketch_aligned.pgm", [&] { return encode_pgm(res.snakes.aligned); });
    emit("binary.pgm", [&] { return encode_pgm(to_gray(res.snakes.binary)); });
    emit("closed.pgm", [&] { return encode_pgm(to_gray(res.snakes.closed)); });
    emit("thinned.pgm", [&] { return encode_pgm(to_gray(res.snakes.thinned)); });
    emit("contours.txt", [&] { return to_text([&](std::ostream& o) { write_point_blocks(o, to_blocks(res.snakes.contours)); }); });
    detail::check_stop(stop);

    detail::timed_stage("snakes_deltas", rep.seconds.snakes_deltas, [&] {
        snake_and_collect(res.snakes, res.pose.render, in.tw, stop);
        return 0;
    });
    const auto& run = res.snakes.run;
    emit("snakes_input.txt", [&] { return to_text([&](std::ostream& o) { write_point_blocks(o, to_blocks(run.pairs, false)); }); });
    emit("snakes_output.txt", [&] { return to_text([&](std::ostream& o) { write_point_blocks(o, to_blocks(run.pairs, true)); }); });
    emit("overlay.pgm", [&] { return encode_pgm(snake_overlay(res.pose.render, run.pairs)); });
    emit("deltas.txt", [&] { return to_text([&](std::ostream& o) { write_delta_field(o, res.snakes.deltas.field); }); });
    emit("deltas.pgm", [&] {
        return encode_pgm(delta_magnitude_image(res.snakes.deltas.field, in.width, in.height, in.tw.max_delta_px));
    });
    emit("rejections.txt", [&] { return to_text([&](std::ostream& o) { write_rejections(o, res.snakes.deltas.rejected); }); });
    detail::check_stop(stop);

    res.deform = detail::timed_stage("deform", rep.seconds.deform, [&] { return deform_mesh(res.pose, res.snakes, in.tw); });
    emit("displacements.txt", [&] { return to_text([&](std::ostream& o) { write_displacements(o, res.deform.displacements); }); });
    emit("output.obj", [&] { return to_obj_string(res.deform.output); });

    rep.contours = res.snakes.contours.size();
    rep.snakes_run = run.pairs.size();
    rep.contours_skipped = run.skipped.size();
    rep.samples = res.snakes.deltas.total_samples;
    rep.samples_rejected = res.snakes.deltas.rejected.size();
    rep.delta_pixels = res.snakes.deltas.field.entries.size();
    rep.displacement_entries = res.deform.displacements.size();
    for (std::size_t i = 0; i < res.pose.posed.vertices.size(); ++i) {
        if (!(res.deform.output.vertices[i] == res.pose.posed.vertices[i])) ++rep.displaced_vertices;
    }
    if (sink) {
        rep.outputs.push_back("report.json");
        sink("report.json", to_json(rep).dump(2) + "\n");
    }
    return res;
}

// ---------------------------------------------------------------------------
// File-driven configuration

/// Pipeline settings as read from a flat `key = value` file: input paths,
/// frame size, alignment and every tweakable.
struct PipelineConfig {
    std::filesystem::path sketch;
    std::filesystem::path rig;
    std::filesystem::path activations;
    std::filesystem::path out_dir = "out";
    int width = 91;
    int height = 200;
    AlignmentTransform alignment;
    Tweakables tw;
};

/// Applies one setting; relative paths resolve against `base_dir`.
inline void apply_config_setting(PipelineConfig& cfg, std::string_view key, std::string_view value,
                                 const std::filesystem::path& base_dir = {}) {
    auto path = [&](std::string_view v) {
        std::filesystem::path p{std::string(v)};
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    if (apply_setting(cfg.tw, key, value)) return;
    if (key == "sketch") cfg.sketch = path(value);
    else if (key == "rig") cfg.rig = path(value);
    else if (key == "activations") cfg.activations = path(value);
    else if (key == "out_dir") cfg.out_dir = path(value);
    else if (key == "width") cfg.width = detail::parse_int(value);
    else if (key == "height") cfg.height = detail::parse_int(value);
    else if (key == "align_translate_x") cfg.alignment.translate.x = parse_number(value);
    else if (key == "align_translate_y") cfg.alignment.translate.y = parse_number(value);
    else if (key == "align_scale") cfg.alignment.scale = parse_number(value);
    else throw Error("unknown config key '" + std::string(key) + "'");
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    PipelineConfig cfg;
    for (const auto& [k, v] : read_key_values(path)) {
        try {
            apply_config_setting(cfg, k, v, path.parent_path());
        } catch (const Error& e) {
            throw Error(path.string() + ": " + e.what());
        }
    }
    return cfg;
}

inline std::string to_config_text(const PipelineConfig& cfg) {
    std::ostringstream out;
    out << "sketch = " << cfg.sketch.string() << '\n'
        << "rig = " << cfg.rig.string() << '\n'
        << "activations = " << cfg.activations.string() << '\n'
        << "out_dir = " << cfg.out_dir.string() << '\n'
        << "width = " << cfg.width << '\n'
        << "height = " << cfg.height << '\n'
        << "align_translate_x = " << format_number(cfg.alignment.translate.x) << '\n'
        << "align_translate_y = " << format_number(cfg.alignment.translate.y) << '\n'
        << "align_scale = " << format_number(cfg.alignment.scale) << '\n';
    for (const auto& [k, v] : to_settings(cfg.tw)) out << k << " = " << v << '\n';
    return out.str();
}

inline PipelineInputs load_inputs(const PipelineConfig& cfg) {
    PipelineInputs in;
    in.sketch = load_image(cfg.sketch);
    in.rig = load_rig(cfg.rig);
    if (!cfg.activations.empty()) in.activations = load_activations(cfg.activations);
    in.alignment = cfg.alignment;
    in.width = cfg.width;
    in.height = cfg.height;
    in.tw = cfg.tw;
    return in;
}

inline ArtifactSink directory_sink(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    return [dir](const std::string& name, const std::string& bytes) { write_file(dir / name, bytes); };
}

/// Loads every input named by `cfg`, runs the chain and writes all artifacts
/// into cfg.out_dir.
inline RunReport run_pipeline(const PipelineConfig& cfg, std::stop_token stop = {}) {
    PipelineInputs in;
    try {
        in = load_inputs(cfg);
    } catch (const std::exception& e) {
        throw StageError("load", e.what());
    }
    return run_pipeline(in, directory_sink(cfg.out_dir), stop).report;
}

/// Poses the rig and writes the OBJ.
inline void pose_only(const std::filesystem::path& rig_manifest, const std::filesystem::path& activations,
                      const std::filesystem::path& out_obj) {
    const BlendshapeRig rig = load_rig(rig_manifest);
    const ActivationVector act = activations.empty() ? ActivationVector{} : load_activations(activations);
    save_obj(apply_blendshapes(rig, act), out_obj);
}

}  // namespace sketchmorph
