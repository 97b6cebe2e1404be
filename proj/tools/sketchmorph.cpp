// Command-line front end: one subcommand per pipeline stage plus `run` and `serve`.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sketchmorph/pipeline.hpp"
#include "sketchmorph/service.hpp"

namespace fs = std::filesystem;
using namespace sketchmorph;

namespace {

struct CommonOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("-c,--config", opt.config, "pipeline config file (key = value)")->check(CLI::ExistingFile);
    cmd->add_option("-s,--set", opt.overrides, "override a config key, e.g. --set snake_max_step=0.3");
}

PipelineConfig resolve_config(const CommonOptions& opt) {
    PipelineConfig cfg = opt.config.empty() ? PipelineConfig{} : load_config(opt.config);
    for (const auto& kv : opt.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
        apply_config_setting(cfg, trim(std::string_view(kv).substr(0, eq)), trim(std::string_view(kv).substr(eq + 1)));
    }
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    validate(cfg.tw);
    return cfg;
}

std::vector<PointBlock> read_blocks(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    return parse_point_blocks(in);
}

template <class Writer>
void write_text(const fs::path& p, Writer&& w) {
    write_file(p, to_text(std::forward<Writer>(w)));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contour-guided mesh deformation from sketches"};
    app.require_subcommand(1);

    // pose
    std::string rig_path, act_path, out_obj;
    auto* pose = app.add_subcommand("pose", "apply blendshape activations and write the posed OBJ");
    pose->add_option("--rig", rig_path, "rig manifest")->required()->check(CLI::ExistingFile);
    pose->add_option("--activations", act_path, "activation file (name = level)")->check(CLI::ExistingFile);
    pose->add_option("-o,--out", out_obj, "output OBJ")->required();

    // render
    std::string mesh_path, render_out;
    CommonOptions render_opt;
    auto* render = app.add_subcommand("render", "flat-shaded front render of a mesh");
    render->add_option("--mesh", mesh_path, "input OBJ")->required()->check(CLI::ExistingFile);
    render->add_option("-o,--out", render_out, "output image (.pgm or .png)")->required();
    add_common(render, render_opt);

    // preprocess
    std::string sketch_path;
    CommonOptions pre_opt;
    auto* pre = app.add_subcommand("preprocess", "align, binarize, close, thin and extract sketch contours");
    pre->add_option("--sketch", sketch_path, "sketch image (overrides config)")->check(CLI::ExistingFile);
    pre->add_option("-o,--out-dir", pre_opt.out_dir, "output directory");
    add_common(pre, pre_opt);

    // snakes
    std::string contours_path, reference_path;
    CommonOptions snake_opt;
    auto* snakes = app.add_subcommand("snakes", "evolve contours as snakes over a reference render");
    snakes->add_option("--contours", contours_path, "contour file from preprocess")->required()->check(CLI::ExistingFile);
    snakes->add_option("--reference", reference_path, "reference render")->required()->check(CLI::ExistingFile);
    snakes->add_option("-o,--out-dir", snake_opt.out_dir, "output directory");
    add_common(snakes, snake_opt);

    // deltas
    std::string snakes_in, snakes_out;
    CommonOptions delta_opt;
    auto* deltas = app.add_subcommand("deltas", "average snake displacements per target pixel");
    deltas->add_option("--input", snakes_in, "input snakes file")->required()->check(CLI::ExistingFile);
    deltas->add_option("--output", snakes_out, "evolved snakes file")->required()->check(CLI::ExistingFile);
    deltas->add_option("-o,--out-dir", delta_opt.out_dir, "output directory");
    add_common(deltas, delta_opt);

    // deform
    std::string deform_mesh_path, deltas_path, deform_out;
    CommonOptions deform_opt;
    auto* deform = app.add_subcommand("deform", "map pixel deltas to vertices and apply soft-select transforms");
    deform->add_option("--mesh", deform_mesh_path, "posed OBJ the deltas were measured against")
        ->required()
        ->check(CLI::ExistingFile);
    deform->add_option("--deltas", deltas_path, "delta field from `deltas`")->required()->check(CLI::ExistingFile);
    deform->add_option("-o,--out", deform_out, "output OBJ")->required();
    add_common(deform, deform_opt);

    // run
    CommonOptions run_opt;
    auto* run = app.add_subcommand("run", "full pipeline from a config file");
    add_common(run, run_opt);
    run->add_option("-o,--out-dir", run_opt.out_dir, "output directory (overrides config)");

    // serve
    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "HTTP session service for the browser UI");
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "port");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pose) {
            pose_only(rig_path, act_path, out_obj);
            std::cout << "wrote " << out_obj << '\n';
        } else if (*render) {
            const PipelineConfig cfg = resolve_config(render_opt);
            const Mesh mesh = load_obj(mesh_path);
            const CameraFront cam = CameraFront::fit(bounding_box(mesh), cfg.width, cfg.height);
            save_image(shade_render(mesh, cam, cfg.tw.shade_ambient), render_out);
            std::cout << "wrote " << render_out << '\n';
        } else if (*pre) {
            PipelineConfig cfg = resolve_config(pre_opt);
            if (!sketch_path.empty()) cfg.sketch = sketch_path;
            if (cfg.sketch.empty()) throw Error("no sketch given (--sketch or config 'sketch')");
            const auto aligned = apply_alignment(load_image(cfg.sketch), cfg.alignment, cfg.width, cfg.height);
            const SnakesStage st = preprocess_sketch(aligned, cfg.tw);
            fs::create_directories(cfg.out_dir);
            save_image(st.aligned, cfg.out_dir / "sketch_aligned.pgm");
            save_image(to_gray(st.binary), cfg.out_dir / "binary.pgm");
            save_image(to_gray(st.closed), cfg.out_dir / "closed.pgm");
            save_image(to_gray(st.thinned), cfg.out_dir / "thinned.pgm");
            write_text(cfg.out_dir / "contours.txt", [&](std::ostream& o) { write_point_blocks(o, to_blocks(st.contours)); });
            std::cout << st.contours.size() << " contours -> " << (cfg.out_dir / "contours.txt").string() << '\n';
        } else if (*snakes) {
            const PipelineConfig cfg = resolve_config(snake_opt);
            const auto contours = contours_from_blocks(read_blocks(contours_path));
            const GrayImage reference = load_image(reference_path);
            const SnakeRun result = run_snakes(contours, reference, cfg.tw);
            fs::create_directories(cfg.out_dir);
            write_text(cfg.out_dir / "snakes_input.txt",
                       [&](std::ostream& o) { write_point_blocks(o, to_blocks(result.pairs, false)); });
            write_text(cfg.out_dir / "snakes_output.txt",
                       [&](std::ostream& o) { write_point_blocks(o, to_blocks(result.pairs, true)); });
            save_image(snake_overlay(reference, result.pairs), cfg.out_dir / "overlay.pgm");
            for (const auto& s : result.skipped) std::cerr << "skipped contour " << s.contour_id << ": " << s.reason << '\n';
            std::cout << result.pairs.size() << " snakes, " << result.skipped.size() << " skipped\n";
        } else if (*deltas) {
            const PipelineConfig cfg = resolve_config(delta_opt);
            const auto pairs = pairs_from_blocks(read_blocks(snakes_in), read_blocks(snakes_out));
            const DeltaCollection dc = collect_deltas(pairs, cfg.tw);
            fs::create_directories(cfg.out_dir);
            write_text(cfg.out_dir / "deltas.txt", [&](std::ostream& o) { write_delta_field(o, dc.field); });
            write_text(cfg.out_dir / "rejections.txt", [&](std::ostream& o) { write_rejections(o, dc.rejected); });
            save_image(delta_magnitude_image(dc.field, cfg.width, cfg.height, cfg.tw.max_delta_px),
                       cfg.out_dir / "deltas.pgm");
            std::cout << dc.field.entries.size() << " delta pixels, " << dc.rejected.size() << " of " << dc.total_samples
                      << " samples rejected\n";
        } else if (*deform) {
            const PipelineConfig cfg = resolve_config(deform_opt);
            const Mesh mesh = load_obj(deform_mesh_path);
            const CameraFront cam = CameraFront::fit(bounding_box(mesh), cfg.width, cfg.height);
            std::ifstream in(deltas_path);
            const DeltaField field = parse_delta_field(in);
            const auto map = project_vertices(mesh, cam);
            const auto disps = field.entries.empty() ? std::vector<VertexDisplacement>{}
                                                     : resolve_vertex_displacements(field, map, cam, cfg.tw);
            save_obj(apply_soft_transforms(mesh, disps, cfg.tw), deform_out);
            std::cout << disps.size() << " vertex displacements -> " << deform_out << '\n';
        } else if (*run) {
            const PipelineConfig cfg = resolve_config(run_opt);
            const RunReport rep = run_pipeline(cfg);
            std::cout << to_json(rep).dump(2) << '\n';
        } else if (*serve) {
            Service service;
            std::cout << "serving /v1/ on " << host << ':' << port << std::endl;
            service.listen(host, port);
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
