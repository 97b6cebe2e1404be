#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "fixtures.hpp"
#include "sketchmorph/service.hpp"

using namespace sketchmorph;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        port_ = service_.start("127.0.0.1", 0);
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        client_->set_read_timeout(60, 0);
    }
    void TearDown() override { service_.stop(); }

    std::pair<int, json> call(const std::string& method, const std::string& path, const json& body = nullptr) {
        httplib::Result r;
        const std::string text = body.is_null() ? "" : body.dump();
        if (method == "GET") r = client_->Get(path);
        else if (method == "POST") r = client_->Post(path, text, "application/json");
        else if (method == "PUT") r = client_->Put(path, text, "application/json");
        else r = client_->Delete(path);
        EXPECT_TRUE(r) << method << ' ' << path;
        if (!r) return {0, nullptr};
        return {r->status, r->body.empty() ? json(nullptr) : json::parse(r->body)};
    }

    std::string new_session() { return "/v1/sessions/" + call("POST", "/v1/sessions").second.at("session").get<std::string>(); }

    void upload_face(const std::string& s) {
        const BlendshapeRig rig = fixtures::face_rig();
        json files = {{"base.obj", to_obj_string(rig.base)}, {"smile.obj", to_obj_string(rig.targets[0].second)}};
        auto [st, body] = call("PUT", s + "/rig",
                               {{"manifest", "base = base.obj\nmax_level = 10\nsmile = smile.obj\n"}, {"files", files}});
        ASSERT_EQ(st, 200) << body.dump();
        EXPECT_EQ(body.at("targets"), json::array({"smile"}));
        ASSERT_EQ(call("PUT", s + "/activations", {{"text", "smile = 4\n"}}).first, 200);
        auto [st2, img] = call("PUT", s + "/sketch", {{"image", base64_encode(encode_png(fixtures::face_sketch()))}});
        ASSERT_EQ(st2, 200);
        EXPECT_EQ(img.at("width"), 91);
    }

    json wait_job(const std::string& s, const std::string& job) {
        for (int i = 0; i < 600; ++i) {
            auto [st, body] = call("GET", s + "/jobs/" + job);
            const std::string status = body.at("status");
            if (status != "queued" && status != "running") return body;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        ADD_FAILURE() << "job did not finish";
        return nullptr;
    }

    Service service_;
    int port_ = 0;
    std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST(Base64, RoundTripsAllLengths) {
    std::string bytes;
    for (int n = 0; n < 40; ++n) {
        EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
        bytes.push_back(static_cast<char>(n * 37 + 5));
    }
    EXPECT_EQ(base64_encode("Man"), "TWFu");
    EXPECT_EQ(base64_encode("Ma"), "TWE=");
    EXPECT_THROW(base64_decode("abc"), Error);
}

TEST_F(ServiceTest, SessionLifecycle) {
    const std::string s = new_session();
    auto [st, body] = call("GET", s);
    EXPECT_EQ(st, 200);
    EXPECT_EQ(body.at("frame").at("width"), 91);
    EXPECT_EQ(body.at("tweakables").at("snake_smoothness"), "1");
    EXPECT_EQ(call("DELETE", s).first, 200);
    EXPECT_EQ(call("GET", s).first, 404);
    EXPECT_EQ(call("DELETE", s).first, 404);
}

TEST_F(ServiceTest, SettingsValidateAndPersist) {
    const std::string s = new_session();
    auto [st, tw] = call("PUT", s + "/tweakables", {{"snake_max_step", 0.3}, {"snake_type", "fixed"}, {"mirror_output", true}});
    ASSERT_EQ(st, 200) << tw.dump();
    EXPECT_EQ(tw.at("snake_max_step"), "0.3");
    EXPECT_EQ(tw.at("snake_type"), "fixed");
    EXPECT_EQ(call("PUT", s + "/tweakables", {{"no_such_thing", 1}}).first, 400);
    EXPECT_EQ(call("PUT", s + "/tweakables", {{"max_delta", -1}}).first, 400);
    EXPECT_EQ(call("GET", s + "/tweakables").second.at("snake_max_step"), "0.3");

    EXPECT_EQ(call("PUT", s + "/alignment", {{"translate", {4, -2}}, {"scale", 1.5}}).first, 200);
    EXPECT_EQ(call("GET", s + "/alignment").second.at("scale"), 1.5);
    EXPECT_EQ(call("PUT", s + "/alignment", {{"translate", {0, 0}}, {"scale", 0}}).first, 400);
    EXPECT_EQ(call("PUT", s + "/frame", {{"width", 2}, {"height", 200}}).first, 400);
    EXPECT_EQ(call("PUT", s + "/sketch", {{"image", "@@@@"}}).first, 400);
    EXPECT_EQ(call("PUT", s + "/sketch", json{{"nope", 1}}).first, 400);
    EXPECT_EQ(call("POST", s + "/snakes").first, 400);  // nothing uploaded
    EXPECT_EQ(call("GET", s + "/render").first, 400);
}

TEST_F(ServiceTest, RigErrorsAreReported) {
    const std::string s = new_session();
    auto [st, body] = call("PUT", s + "/rig", {{"manifest", "base = missing.obj\n"}, {"files", json::object()}});
    EXPECT_EQ(st, 400);
    EXPECT_NE(body.at("error").get<std::string>().find("missing.obj"), std::string::npos);
    upload_face(s);
    EXPECT_EQ(call("PUT", s + "/activations", {{"text", "frown = 1\n"}}).first, 400);
    EXPECT_EQ(call("PUT", s + "/activations", {{"text", "smile = 11\n"}}).first, 400);
}

TEST_F(ServiceTest, RenderSnakesDeformAndExport) {
    const std::string s = new_session();
    upload_face(s);
    auto [rs, render] = call("GET", s + "/render");
    ASSERT_EQ(rs, 200);
    const GrayImage img = decode_image(base64_decode(render.at("image")));
    EXPECT_EQ(img.width, 91);
    EXPECT_EQ(img.height, 200);

    auto [ss, sj] = call("POST", s + "/snakes");
    ASSERT_EQ(ss, 202);
    const json snakes = wait_job(s, sj.at("job"));
    ASSERT_EQ(snakes.at("status"), "done") << snakes.dump();
    EXPECT_GE(snakes.at("result").at("stats").at("contours").get<int>(), 15);
    EXPECT_EQ(decode_image(base64_decode(snakes.at("result").at("overlay"))).width, 91);

    auto [ds, dj] = call("POST", s + "/deform");
    ASSERT_EQ(ds, 202);
    const json deform = wait_job(s, dj.at("job"));
    ASSERT_EQ(deform.at("status"), "done") << deform.dump();
    std::istringstream obj(deform.at("result").at("obj").get<std::string>());
    const Mesh served = parse_obj(obj);

    PipelineInputs in;
    in.rig = fixtures::face_rig();
    in.activations = {{"smile", 4.0}};
    in.sketch = fixtures::face_sketch();
    EXPECT_EQ(served, run_pipeline(in).deform.output);

    auto [es, exp] = call("GET", s + "/export");
    ASSERT_EQ(es, 200);
    const std::string cfg = exp.at("config");
    EXPECT_NE(cfg.find("rig = rig/manifest.txt"), std::string::npos);
    EXPECT_TRUE(exp.at("files").contains("rig/base.obj"));
    EXPECT_TRUE(exp.at("files").contains("sketch.png"));
}

TEST_F(ServiceTest, FailedJobNamesTheStage) {
    const std::string s = new_session();
    upload_face(s);
    ASSERT_EQ(call("PUT", s + "/alignment", {{"translate", {500, 0}}, {"scale", 1}}).first, 200);
    auto [st, j] = call("POST", s + "/deform");
    ASSERT_EQ(st, 202);
    const json done = wait_job(s, j.at("job"));
    EXPECT_EQ(done.at("status"), "failed");
    EXPECT_EQ(done.at("stage"), "preprocess");
    EXPECT_EQ(call("GET", s + "/jobs/j999").first, 404);
}

TEST_F(ServiceTest, CancelAndBusy) {
    const std::string s = new_session();
    upload_face(s);
    // slow the snakes down enough to catch the job while it runs
    ASSERT_EQ(call("PUT", s + "/tweakables", {{"snake_convergence", 1e-9}, {"snake_max_iterations", 200000}, {"snake_max_step", 0.01}}).first,
              200);
    auto [st, j] = call("POST", s + "/snakes");
    ASSERT_EQ(st, 202);
    EXPECT_EQ(call("POST", s + "/deform").first, 409);
    EXPECT_EQ(call("POST", s + "/jobs/" + j.at("job").get<std::string>() + "/cancel").first, 202);
    const json done = wait_job(s, j.at("job"));
    EXPECT_EQ(done.at("status"), "cancelled");
}
