#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "sketchmorph/text_format.hpp"

namespace sketchmorph {

enum class SnakeMode { Free, Fixed, Periodic };
enum class SoftSelectCurve { Linear };

inline std::string_view to_string(SnakeMode m) {
    switch (m) {
        case SnakeMode::Free: return "free";
        case SnakeMode::Fixed: return "fixed";
        case SnakeMode::Periodic: return "periodic";
    }
    return "free";
}

inline SnakeMode parse_snake_mode(std::string_view s) {
    if (s == "free") return SnakeMode::Free;
    if (s == "fixed") return SnakeMode::Fixed;
    if (s == "periodic") return SnakeMode::Periodic;
    throw Error("unknown snake type '" + std::string(s) + "' (free, fixed, periodic)");
}

inline std::string_view to_string(SoftSelectCurve) { return "linear"; }

inline SoftSelectCurve parse_soft_select_curve(std::string_view s) {
    if (s == "linear") return SoftSelectCurve::Linear;
    throw Error("unknown soft select curve '" + std::string(s) + "' (linear)");
}

/// Every user-tunable knob of the contour-to-mesh transfer.
struct Tweakables {
    int gap_close_side = 2;
    int thin_iterations = 1;
    SnakeMode snake_mode = SnakeMode::Free;
    double smoothness = 1.0;   // beta, thin-plate weight
    double continuity = 0.1;   // alpha, membrane weight
    double time_step = 2.0;    // gamma
    double max_step_px = 1.0;
    int max_iterations = 3000;
    double convergence = 0.1;
    double w_brightness = -5.0;
    double w_edge = 1.0;
    double max_delta_px = 15.0;
    double low_depth_preference = 0.0;
    double soft_select_distance = 1.0;
    SoftSelectCurve soft_select_curve = SoftSelectCurve::Linear;
    bool mirror_output = false;

    // not table rows, still user-settable
    bool closed_contours_periodic = true;
    double binarize_threshold = 0.5;
    double shade_ambient = 0.1;

    friend bool operator==(const Tweakables&, const Tweakables&) = default;
};

inline void validate(const Tweakables& tw) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw Error(std::string("invalid tweakable: ") + what);
    };
    require(tw.gap_close_side >= 1, "gap_closing_side must be >= 1");
    require(tw.thin_iterations >= 0, "thinning_iterations must be >= 0");
    require(tw.max_iterations >= 1, "snake_max_iterations must be >= 1");
    require(tw.max_step_px > 0.0, "snake_max_step must be > 0");
    require(tw.convergence > 0.0, "snake_convergence must be > 0");
    require(tw.time_step > 0.0, "snake_time_stepping must be > 0");
    require(tw.smoothness >= 0.0 && tw.continuity >= 0.0, "snake smoothness/continuity must be >= 0");
    require(tw.max_delta_px > 0.0, "max_delta must be > 0");
    require(tw.soft_select_distance > 0.0, "soft_select_distance must be > 0");
    require(tw.low_depth_preference >= 0.0 && tw.low_depth_preference <= 1.0, "low_depth_preference must be in [0, 1]");
    require(tw.binarize_threshold > 0.0 && tw.binarize_threshold < 1.0, "binarize_threshold must be in (0, 1)");
    require(tw.shade_ambient >= 0.0 && tw.shade_ambient <= 1.0, "shade_ambient must be in [0, 1]");
}

namespace detail {

inline int parse_int(std::string_view v) {
    const double d = parse_number(v);
    if (d != std::floor(d) || std::abs(d) > 1e9) throw Error("expected an integer, got '" + std::string(v) + "'");
    return static_cast<int>(d);
}

inline bool parse_bool(std::string_view v) {
    if (v == "true" || v == "True" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "False" || v == "0" || v == "no") return false;
    throw Error("expected true/false, got '" + std::string(v) + "'");
}

}  // namespace detail

/// Applies one `key = value` setting. Returns false for keys it does not own.
inline bool apply_setting(Tweakables& tw, std::string_view key, std::string_view value) {
    using detail::parse_bool;
    using detail::parse_int;
    if (key == "gap_closing_side") tw.gap_close_side = parse_int(value);
    else if (key == "thinning_iterations") tw.thin_iterations = parse_int(value);
    else if (key == "snake_type") tw.snake_mode = parse_snake_mode(value);
    else if (key == "snake_smoothness") tw.smoothness = parse_number(value);
    else if (key == "snake_continuity") tw.continuity = parse_number(value);
    else if (key == "snake_time_stepping") tw.time_step = parse_number(value);
    else if (key == "snake_max_step") tw.max_step_px = parse_number(value);
    else if (key == "snake_max_iterations") tw.max_iterations = parse_int(value);
    else if (key == "snake_convergence") tw.convergence = parse_number(value);
    else if (key == "snake_brightness_weight") tw.w_brightness = parse_number(value);
    else if (key == "snake_edge_weight") tw.w_edge = parse_number(value);
    else if (key == "max_delta") tw.max_delta_px = parse_number(value);
    else if (key == "low_depth_preference") tw.low_depth_preference = parse_number(value);
    else if (key == "soft_select_distance") tw.soft_select_distance = parse_number(value);
    else if (key == "soft_select_curve") tw.soft_select_curve = parse_soft_select_curve(value);
    else if (key == "mirror_output") tw.mirror_output = parse_bool(value);
    else if (key == "closed_contours_periodic") tw.closed_contours_periodic = parse_bool(value);
    else if (key == "binarize_threshold") tw.binarize_threshold = parse_number(value);
    else if (key == "shade_ambient") tw.shade_ambient = parse_number(value);
    else return false;
    return true;
}

inline std::vector<std::pair<std::string, std::string>> to_settings(const Tweakables& tw) {
    auto num = [](double v) { return format_number(v); };
    auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
    return {
        {"gap_closing_side", std::to_string(tw.gap_close_side)},
        {"thinning_iterations", std::to_string(tw.thin_iterations)},
        {"snake_type", std::string(to_string(tw.snake_mode))},
        {"snake_smoothness", num(tw.smoothness)},
        {"snake_continuity", num(tw.continuity)},
        {"snake_time_stepping", num(tw.time_step)},
        {"snake_max_step", num(tw.max_step_px)},
        {"snake_max_iterations", std::to_string(tw.max_iterations)},
        {"snake_convergence", num(tw.convergence)},
        {"snake_brightness_weight", num(tw.w_brightness)},
        {"snake_edge_weight", num(tw.w_edge)},
        {"max_delta", num(tw.max_delta_px)},
        {"low_depth_preference", num(tw.low_depth_preference)},
        {"soft_select_distance", num(tw.soft_select_distance)},
        {"soft_select_curve", std::string(to_string(tw.soft_select_curve))},
        {"mirror_output", flag(tw.mirror_output)},
        {"closed_contours_periodic", flag(tw.closed_contours_periodic)},
        {"binarize_threshold", num(tw.binarize_threshold)},
        {"shade_ambient", num(tw.shade_ambient)},
    };
}

}  // namespace sketchmorph
