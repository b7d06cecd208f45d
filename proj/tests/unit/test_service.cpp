#include <chrono>
#include <thread>

#include "cfflow/service.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "httplib.h"

using namespace cfflow;
using nlohmann::json;

namespace {

ExplainService loaded() { return ExplainService(testing::moons_bundle()); }

json body_of(const HttpReply& r) { return json::parse(r.body); }

std::string header(const HttpReply& r, const std::string& name) {
  for (const auto& [k, v] : r.headers) {
    if (k == name) return v;
  }
  return {};
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("routing") {
    const auto s = loaded();
    CHECK(s.handle("GET", "/nope", "").status == 404);
    CHECK(s.handle("POST", "/healthz", "").status == 405);
    CHECK(s.handle("GET", "/generate", "").status == 405);
    CHECK(s.handle("OPTIONS", "/generate", "").status == 204);
    const auto h = s.handle("GET", "/healthz", "");
    CHECK(h.status == 200);
    CHECK(body_of(h).at("bundle_id") == testing::moons_bundle()->bundle_id);
  }

  TEST_CASE("not ready before a load and after a failed one") {
    ExplainService s;
    CHECK(s.handle("GET", "/healthz", "").status == 503);
    CHECK(s.handle("POST", "/generate", R"({"instance": {"x1": 0, "x2": 0}})").status == 503);
    testing::TempDir dir;
    s.load(dir.path / "missing");
    const auto h = s.handle("GET", "/healthz", "");
    CHECK(h.status == 503);
    CHECK(h.body.find("manifest") != std::string::npos);
    CHECK_FALSE(s.ready());
  }

  TEST_CASE("schema lists features, classes and trained constraints") {
    const auto j = body_of(loaded().handle("GET", "/schema", ""));
    REQUIRE(j.at("features").size() == 2);
    CHECK(j["features"][0]["name"] == "x1");
    CHECK(j["features"][0]["kind"] == "continuous");
    CHECK(j["p_values"] == json::array({0.01, 2.0}));
    CHECK(j["masks"] == json::parse(R"([[], ["x1"]])"));
    CHECK(j["has_classifier"] == true);
  }

  TEST_CASE("adult-like bundle lists twelve features") {
    const Table t = datasets::adult_like(300, 3);
    ExperimentConfig cfg;
    cfg.label_column = "income";
    cfg.train.steps = 5;
    cfg.train.hidden = 8;
    cfg.train.layers = 1;
    cfg.train.k = 4;
    auto r = run_training(t, cfg);
    const ExplainService s(std::make_shared<const ModelBundle>(std::move(r.bundle)));
    const auto j = body_of(s.handle("GET", "/schema", ""));
    CHECK(j.at("features").size() == 12);
    CHECK(j.at("has_classifier") == false);
    const auto g = s.handle("POST", "/generate", R"({"instance": {"age": 30}})");
    CHECK(g.status == 400);
    CHECK(body_of(g).at("fields").contains("target_class"));
  }

  TEST_CASE("classify agrees with the bundle classifier") {
    const auto s = loaded();
    const auto r = s.handle("POST", "/classify", R"({"instance": {"x1": 0.2, "x2": -0.1}})");
    REQUIRE(r.status == 200);
    const auto& b = *testing::moons_bundle();
    const auto proba = b.classifier->predict_proba(encode(Instance{{0.2, -0.1}}, b.schema));
    CHECK(body_of(r).at("probabilities").get<std::vector<double>>() == proba);
  }

  TEST_CASE("field validation") {
    const auto s = loaded();
    auto fields = [&](const std::string& body) {
      const auto r = s.handle("POST", "/generate", body);
      CHECK(r.status == 400);
      return body_of(r).value("fields", json::object());
    };
    CHECK(fields(R"({})").contains("instance"));
    CHECK(fields(R"({"instance": {"x1": 0}})").contains("instance.x2"));
    CHECK(fields(R"({"instance": {"x1": "a", "x2": 0}})").contains("instance.x1"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0, "x3": 1}})").contains("instance.x3"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0}, "n": 0})").contains("n"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0}, "n": 5000})").contains("n"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0}, "p": -1})").contains("p"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0}, "mask": ["zz"]})").contains("mask"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0}, "target_class": 7})").contains("target_class"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0}, "seed": -3})").contains("seed"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0}, "lambda2": 1})").contains("lambda2"));
    CHECK(fields(R"({"instance": {"x1": 0, "x2": 0}, "extra": 1})").contains("extra"));
    CHECK(s.handle("POST", "/generate", "not json").status == 400);
  }

  TEST_CASE("generate response") {
    const auto s = loaded();
    const auto r = s.handle("POST", "/generate",
                            R"({"instance": {"x1": 0.5, "x2": 0.25}, "n": 4, "seed": 2, "mask": ["x1"], "p": 0.01})");
    REQUIRE(r.status == 200);
    const auto j = body_of(r);
    CHECK(j.at("counterfactuals").size() == 4);
    CHECK(j.at("seed") == 2);
    CHECK(j.at("mask") == json::array({"x1"}));
    CHECK(j.at("warnings").empty());
    CHECK_FALSE(j.contains("timing_ms"));
    CHECK_FALSE(header(r, "X-Timing-Ms").empty());
    const auto again = s.handle("POST", "/generate",
                                R"({"instance": {"x1": 0.5, "x2": 0.25}, "n": 4, "seed": 2, "mask": ["x1"], "p": 0.01})");
    CHECK(again.body == r.body);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(s.handle("POST", "/generate", R"({"instance": {"x1": 0.5, "x2": 0.25}, "n": 10})").status == 200);
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 1.0);
    const auto unseeded = body_of(s.handle("POST", "/generate", R"({"instance": {"x1": 0.5, "x2": 0.25}})"));
    CHECK(unseeded.contains("timing_ms"));
    CHECK(unseeded.at("counterfactuals").size() == 10);
  }

  TEST_CASE("HTTP server end to end") {
    testing::TempDir dir;
    ModelBundle b = *testing::moons_bundle();
    save_bundle(dir.path, b);
    HttpServer server(ServerOptions{"127.0.0.1", 0, dir.path, "*"});
    const int port = server.start();
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);
    for (int i = 0; i < 200 && !server.service().ready(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    const auto h = cli.Get("/healthz");
    REQUIRE(h);
    CHECK(h->status == 200);
    CHECK(h->get_header_value("Access-Control-Allow-Origin") == "*");
    const std::string req = R"({"instance": {"x1": -0.3, "x2": 0.8}, "n": 5, "seed": 9})";
    const auto a = cli.Post("/generate", req, "application/json");
    const auto c = cli.Post("/generate", req, "application/json");
    REQUIRE(a);
    REQUIRE(c);
    CHECK_MESSAGE(a->status == 200, a->body);
    CHECK(a->body == c->body);
    CHECK(a->has_header("X-Timing-Ms"));
    const auto bad = cli.Post("/generate", R"({"n": 3})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(cli.Get("/missing")->status == 404);
    CHECK(cli.Put("/generate", req, "application/json")->status == 405);
    CHECK(cli.Options("/generate")->status == 204);
    server.stop();
  }
}
