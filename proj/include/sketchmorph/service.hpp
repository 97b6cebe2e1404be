#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "sketchmorph/pipeline.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

namespace sketchmorph {

inline std::string base64_encode(const std::string& bytes) {
    using namespace boost::archive::iterators;
    using It = base64_from_binary<transform_width<std::string::const_iterator, 6, 8>>;
    std::string out(It(bytes.begin()), It(bytes.end()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

inline std::string base64_decode(std::string text) {
    using namespace boost::archive::iterators;
    using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
    std::erase_if(text, [](char c) { return c == '\n' || c == '\r' || c == ' '; });
    if (text.size() % 4 != 0) throw Error("base64 payload length is not a multiple of 4");
    const std::size_t pad = text.size() >= 2 && text[text.size() - 2] == '=' ? 2 : (!text.empty() && text.back() == '=' ? 1 : 0);
    std::replace(text.end() - static_cast<std::ptrdiff_t>(pad), text.end(), '=', 'A');
    std::string out;
    try {
        out.assign(It(text.begin()), It(text.end()));
    } catch (const std::exception&) {
        throw Error("malformed base64 payload");
    }
    out.resize(out.size() - pad);
    return out;
}

/// HTTP session service behind the `/v1/` endpoints.
///
/// A session owns uploaded assets, alignment, tweakables and at most one
/// running job. Jobs run on their own thread and honour cancel requests
/// between and inside stages.
class Service {
public:
    struct JobState {
        std::string id;
        std::string kind;
        std::string status = "queued";  // queued, running, done, failed, cancelled
        std::string stage;
        std::string error;
        nlohmann::json result;
        std::stop_source stop;
    };

    struct Session {
        std::mutex mutex;
        std::string sketch_name;
        std::string sketch_bytes;
        std::optional<GrayImage> sketch;
        std::string rig_manifest;
        std::map<std::string, std::string> rig_files;
        std::optional<BlendshapeRig> rig;
        std::string activations_text;
        ActivationVector activations;
        AlignmentTransform alignment;
        Tweakables tw;
        int width = 91;
        int height = 200;
        std::map<std::string, std::shared_ptr<JobState>> jobs;
        std::shared_ptr<JobState> active;
        std::jthread worker;
        int next_job = 1;
    };

    Service() { routes(); }
    ~Service() { stop(); }
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port) {
        if (!server_.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
        std::map<std::string, std::shared_ptr<Session>> sessions;
        {
            std::lock_guard lock(mutex_);
            sessions.swap(sessions_);
        }
        for (auto& [id, s] : sessions) shutdown(*s);
    }

private:
    using Request = httplib::Request;
    using Response = httplib::Response;

    static void reply(Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void fail(Response& res, int status, const std::string& message) {
        reply(res, status, {{"error", message}});
    }

    static void shutdown(Session& s) {
        std::jthread worker;
        {
            std::lock_guard lock(s.mutex);
            if (s.active) s.active->stop.request_stop();
            worker = std::move(s.worker);
        }
        if (worker.joinable()) worker.join();
    }

    std::shared_ptr<Session> find(const std::string& id) {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    /// Resolves the session named in the path, answering 404 when absent.
    template <class Fn>
    auto with_session(Fn fn) {
        return [this, fn](const Request& req, Response& res) {
            auto s = find(req.path_params.at("id"));
            if (!s) return fail(res, 404, "no such session");
            try {
                fn(*s, req, res);
            } catch (const nlohmann::json::exception& e) {
                fail(res, 400, std::string("bad request body: ") + e.what());
            } catch (const Error& e) {
                fail(res, 400, e.what());
            }
        };
    }

    static nlohmann::json alignment_json(const AlignmentTransform& t) {
        return {{"translate", {t.translate.x, t.translate.y}}, {"scale", t.scale}};
    }

    static nlohmann::json tweakables_json(const Tweakables& tw) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : to_settings(tw)) j[k] = v;
        return j;
    }

    static std::string json_scalar_text(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        if (v.is_number()) return format_number(v.get<double>());
        throw Error("tweakable values must be strings, numbers or booleans");
    }

    /// Snapshot of everything a job needs, taken under the session lock.
    static PipelineInputs snapshot(Session& s) {
        if (!s.sketch) throw Error("no sketch uploaded");
        if (!s.rig) throw Error("no rig uploaded");
        PipelineInputs in;
        in.sketch = *s.sketch;
        in.rig = *s.rig;
        in.activations = s.activations;
        in.alignment = s.alignment;
        in.width = s.width;
        in.height = s.height;
        in.tw = s.tw;
        return in;
    }

    static nlohmann::json snakes_result(const PipelineInputs& in, const PoseStage& pose, const SnakesStage& st) {
        double mean = 0.0;
        double peak = 0.0;
        for (const auto& [k, e] : st.deltas.field.entries) {
            mean += norm(e.delta);
            peak = std::max(peak, norm(e.delta));
        }
        if (!st.deltas.field.entries.empty()) mean /= static_cast<double>(st.deltas.field.entries.size());
        nlohmann::json rejected = nlohmann::json::array();
        for (const auto& r : st.deltas.rejected) rejected.push_back({r.contour_id, r.point_index, r.magnitude});
        return {{"overlay", base64_encode(encode_pgm(snake_overlay(pose.render, st.run.pairs)))},
                {"deltas_image", base64_encode(encode_pgm(delta_magnitude_image(st.deltas.field, in.width, in.height,
                                                                               in.tw.max_delta_px)))},
                {"stats",
                 {{"contours", st.contours.size()},
                  {"snakes_run", st.run.pairs.size()},
                  {"contours_skipped", st.run.skipped.size()},
                  {"samples", st.deltas.total_samples},
                  {"samples_rejected", st.deltas.rejected.size()},
                  {"delta_pixels", st.deltas.field.entries.size()},
                  {"mean_delta_px", mean},
                  {"max_delta_px", peak}}},
                {"rejected", rejected}};
    }

    void launch(Session& s, const std::string& kind, Response& res) {
        std::lock_guard lock(s.mutex);
        if (s.active && (s.active->status == "queued" || s.active->status == "running")) {
            return fail(res, 409, "a job is already running in this session");
        }
        PipelineInputs in = snapshot(s);
        validate(in.tw);
        if (s.worker.joinable()) s.worker.join();
        auto job = std::make_shared<JobState>();
        job->id = "j" + std::to_string(s.next_job++);
        job->kind = kind;
        s.jobs[job->id] = job;
        s.active = job;
        s.worker = std::jthread([job, &s, in = std::move(in), kind] {
            {
                std::lock_guard l(s.mutex);
                job->status = "running";
            }
            nlohmann::json result;
            std::string status = "done", error, stage;
            try {
                const auto stop = job->stop.get_token();
                if (kind == "snakes") {
                    StageTimings t;
                    PoseStage pose = detail::timed_stage("pose_render", t.pose_render, [&] {
                        return pose_and_render(in.rig, in.activations, in.width, in.height, in.tw);
                    });
                    SnakesStage st = detail::timed_stage("preprocess", t.preprocess, [&] {
                        return preprocess_sketch(apply_alignment(in.sketch, in.alignment, in.width, in.height), in.tw);
                    });
                    detail::timed_stage("snakes_deltas", t.snakes_deltas, [&] {
                        snake_and_collect(st, pose.render, in.tw, stop);
                        return 0;
                    });
                    result = snakes_result(in, pose, st);
                } else {
                    const PipelineResult r = run_pipeline(in, {}, stop);
                    result = {{"obj", to_obj_string(r.deform.output)}, {"report", to_json(r.report)}};
                }
            } catch (const Cancelled&) {
                status = "cancelled";
            } catch (const StageError& e) {
                status = "failed";
                stage = e.stage();
                error = e.what();
            } catch (const std::exception& e) {
                status = "failed";
                error = e.what();
            }
            std::lock_guard l(s.mutex);
            job->status = status;
            job->error = error;
            job->stage = stage;
            if (status == "done") job->result = std::move(result);
        });
        reply(res, 202, {{"job", job->id}});
    }

    void routes() {
        server_.Post("/v1/sessions", [this](const Request&, Response& res) {
            std::lock_guard lock(mutex_);
            const std::string id = "s" + std::to_string(next_session_++);
            sessions_[id] = std::make_shared<Session>();
            reply(res, 201, {{"session", id}});
        });

        server_.Delete("/v1/sessions/:id", [this](const Request& req, Response& res) {
            std::shared_ptr<Session> s;
            {
                std::lock_guard lock(mutex_);
                auto it = sessions_.find(req.path_params.at("id"));
                if (it == sessions_.end()) return fail(res, 404, "no such session");
                s = it->second;
                sessions_.erase(it);
            }
            shutdown(*s);
            reply(res, 200, {{"deleted", true}});
        });

        server_.Get("/v1/sessions/:id", with_session([](Session& s, const Request& req, Response& res) {
            std::lock_guard lock(s.mutex);
            nlohmann::json jobs = nlohmann::json::object();
            for (const auto& [id, j] : s.jobs) jobs[id] = {{"kind", j->kind}, {"status", j->status}};
            reply(res, 200,
                  {{"session", req.path_params.at("id")},
                   {"assets",
                    {{"sketch", s.sketch ? s.sketch_name : ""},
                     {"rig", s.rig ? nlohmann::json(s.rig_files.size()) : nlohmann::json(0)},
                     {"activations", s.activations.size()}}},
                   {"frame", {{"width", s.width}, {"height", s.height}}},
                   {"alignment", alignment_json(s.alignment)},
                   {"tweakables", tweakables_json(s.tw)},
                   {"jobs", jobs}});
        }));

        server_.Put("/v1/sessions/:id/sketch", with_session([](Session& s, const Request& req, Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            std::string bytes = base64_decode(body.at("image").get<std::string>());
            GrayImage img = decode_image(bytes);
            std::lock_guard lock(s.mutex);
            const bool png = bytes.size() >= 4 && bytes.compare(0, 4, "\x89PNG") == 0;
            s.sketch_name = body.value("name", png ? std::string("sketch.png") : std::string("sketch.pgm"));
            s.sketch_bytes = std::move(bytes);
            s.sketch = std::move(img);
            reply(res, 200, {{"width", s.sketch->width}, {"height", s.sketch->height}});
        }));

        server_.Put("/v1/sessions/:id/rig", with_session([](Session& s, const Request& req, Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            const std::string manifest = body.at("manifest").get<std::string>();
            std::map<std::string, std::string> files;
            for (const auto& [name, text] : body.at("files").items()) files[name] = text.get<std::string>();
            std::istringstream in(manifest);
            BlendshapeRig rig = parse_rig(in, [&files](const std::string& name) {
                auto it = files.find(name);
                if (it == files.end()) throw Error("rig references missing file '" + name + "'");
                std::istringstream obj(it->second);
                return parse_obj(obj);
            });
            std::lock_guard lock(s.mutex);
            s.rig_manifest = manifest;
            s.rig_files = std::move(files);
            s.rig = std::move(rig);
            nlohmann::json targets = nlohmann::json::array();
            for (const auto& [n, m] : s.rig->targets) targets.push_back(n);
            reply(res, 200, {{"vertices", s.rig->base.vertices.size()}, {"targets", targets}, {"max_level", s.rig->max_level}});
        }));

        server_.Put("/v1/sessions/:id/activations", with_session([](Session& s, const Request& req, Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            const std::string text = body.at("text").get<std::string>();
            std::istringstream in(text);
            ActivationVector act = parse_activations(in);
            std::lock_guard lock(s.mutex);
            if (s.rig) apply_blendshapes(*s.rig, act);  // validate names and levels early
            s.activations_text = text;
            s.activations = std::move(act);
            reply(res, 200, {{"activations", s.activations.size()}});
        }));

        server_.Put("/v1/sessions/:id/frame", with_session([](Session& s, const Request& req, Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            const int w = body.at("width").get<int>();
            const int h = body.at("height").get<int>();
            if (w < 3 || h < 3) throw Error("frame must be at least 3x3");
            std::lock_guard lock(s.mutex);
            s.width = w;
            s.height = h;
            reply(res, 200, {{"width", w}, {"height", h}});
        }));

        server_.Get("/v1/sessions/:id/render", with_session([](Session& s, const Request&, Response& res) {
            BlendshapeRig rig;
            ActivationVector act;
            Tweakables tw;
            int w = 0, h = 0;
            {
                std::lock_guard lock(s.mutex);
                if (!s.rig) throw Error("no rig uploaded");
                rig = *s.rig;
                act = s.activations;
                tw = s.tw;
                w = s.width;
                h = s.height;
            }
            const PoseStage pose = pose_and_render(rig, act, w, h, tw);
            reply(res, 200, {{"image", base64_encode(encode_pgm(pose.render))}, {"width", w}, {"height", h}});
        }));

        server_.Put("/v1/sessions/:id/alignment", with_session([](Session& s, const Request& req, Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            AlignmentTransform t;
            t.translate = {body.at("translate").at(0).get<double>(), body.at("translate").at(1).get<double>()};
            t.scale = body.at("scale").get<double>();
            if (!(t.scale > 0.0) || !std::isfinite(t.scale) || !is_finite(t.translate)) {
                throw Error("alignment scale must be positive and finite");
            }
            std::lock_guard lock(s.mutex);
            s.alignment = t;
            reply(res, 200, alignment_json(s.alignment));
        }));

        server_.Get("/v1/sessions/:id/alignment", with_session([](Session& s, const Request&, Response& res) {
            std::lock_guard lock(s.mutex);
            reply(res, 200, alignment_json(s.alignment));
        }));

        server_.Put("/v1/sessions/:id/tweakables", with_session([](Session& s, const Request& req, Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            Tweakables tw;
            {
                std::lock_guard lock(s.mutex);
                tw = s.tw;
            }
            for (const auto& [k, v] : body.items()) {
                if (!apply_setting(tw, k, json_scalar_text(v))) throw Error("unknown tweakable '" + k + "'");
            }
            validate(tw);
            std::lock_guard lock(s.mutex);
            s.tw = tw;
            reply(res, 200, tweakables_json(s.tw));
        }));

        server_.Get("/v1/sessions/:id/tweakables", with_session([](Session& s, const Request&, Response& res) {
            std::lock_guard lock(s.mutex);
            reply(res, 200, tweakables_json(s.tw));
        }));

        server_.Post("/v1/sessions/:id/snakes",
                     with_session([this](Session& s, const Request&, Response& res) { launch(s, "snakes", res); }));
        server_.Post("/v1/sessions/:id/deform",
                     with_session([this](Session& s, const Request&, Response& res) { launch(s, "deform", res); }));

        server_.Get("/v1/sessions/:id/jobs/:job", with_session([](Session& s, const Request& req, Response& res) {
            std::lock_guard lock(s.mutex);
            auto it = s.jobs.find(req.path_params.at("job"));
            if (it == s.jobs.end()) return fail(res, 404, "no such job");
            const auto& j = *it->second;
            nlohmann::json body = {{"job", j.id}, {"kind", j.kind}, {"status", j.status}};
            if (j.status == "failed") {
                body["error"] = j.error;
                body["stage"] = j.stage;
            }
            if (j.status == "done") body["result"] = j.result;
            reply(res, 200, body);
        }));

        server_.Post("/v1/sessions/:id/jobs/:job/cancel", with_session([](Session& s, const Request& req, Response& res) {
            std::lock_guard lock(s.mutex);
            auto it = s.jobs.find(req.path_params.at("job"));
            if (it == s.jobs.end()) return fail(res, 404, "no such job");
            it->second->stop.request_stop();
            reply(res, 202, {{"job", it->second->id}, {"status", it->second->status}});
        }));

        // Everything needed to reproduce the session headlessly: a config file
        // plus the files it names.
        server_.Get("/v1/sessions/:id/export", with_session([](Session& s, const Request&, Response& res) {
            std::lock_guard lock(s.mutex);
            PipelineConfig cfg;
            cfg.sketch = s.sketch_name.empty() ? "sketch.pgm" : s.sketch_name;
            cfg.rig = "rig/manifest.txt";
            cfg.activations = "activations.txt";
            cfg.width = s.width;
            cfg.height = s.height;
            cfg.alignment = s.alignment;
            cfg.tw = s.tw;
            nlohmann::json files = nlohmann::json::object();
            files[cfg.sketch.string()] = base64_encode(s.sketch_bytes);
            files["rig/manifest.txt"] = base64_encode(s.rig_manifest);
            for (const auto& [name, text] : s.rig_files) files["rig/" + name] = base64_encode(text);
            files["activations.txt"] = base64_encode(s.activations_text);
            reply(res, 200, {{"config", to_config_text(cfg)}, {"files", files}});
        }));
    }

    httplib::Server server_;
    std::thread thread_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    int next_session_ = 1;
};

}  // namespace sketchmorph
