#include <doctest.h>

#include <chrono>
#include <thread>

#include <httplib.h>

#include "halluc/htk.hpp"
#include "halluc/io.hpp"
#include "halluc/service.hpp"

using namespace halluc;
using io::json;

namespace {

Tensor pt(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::real({n}, std::move(v));
}

struct Fixture {
  Service service;
  int port = 0;
  std::unique_ptr<httplib::Client> client;

  Fixture() {
    port = service.start_background();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(30, 0);
  }
  ~Fixture() { service.stop(); }

  std::pair<int, json> post(const std::string& path, const json& body) {
    auto res = client->Post(path, body.dump(), "application/json");
    REQUIRE(res);
    return {res->status, json::parse(res->body)};
  }
  std::pair<int, json> get(const std::string& path) {
    auto res = client->Get(path);
    REQUIRE(res);
    return {res->status, json::parse(res->body)};
  }
  std::string upload(const Tensor& t) {
    auto res = client->Post("/api/v1/tensor", htk::to_bytes(t), "application/octet-stream");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    return json::parse(res->body).at("id").get<std::string>();
  }

  /// Smoke instance: xs (0,0), (1,0), (0,3), f = first coordinate, eps 0.5.
  void load_smoke() {
    const std::string proj = upload(Tensor::real({1, 2}, {1, 0}));
    REQUIRE(post("/api/v1/models", {{"id", "smoke"},
                                    {"descriptor",
                                     {{"kind", "matrix"}, {"epsilon", 0.5}, {"parameters", {{"tensor", proj}}}}}})
                .first == 201);
    const json xs = {upload(pt({0, 0})), upload(pt({1, 0})), upload(pt({0, 3}))};
    const auto [status, body] =
        post("/api/v1/datasets", {{"id", "smoke"},
                                  {"model", "smoke"},
                                  {"xs", xs},
                                  {"ys", {upload(pt({0})), upload(pt({1}))}},
                                  {"ids", {"x1", "x2", "x3"}},
                                  {"probe_ids", {"y1", "y2"}}});
    REQUIRE(status == 201);
    CHECK(body["n_samples"] == 3);
  }
};

}  // namespace

TEST_CASE("health on both prefixes with CORS") {
  Fixture fx;
  for (const char* path : {"/api/health", "/api/v1/health"}) {
    auto res = fx.client->Get(path);
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    const json j = json::parse(res->body);
    CHECK(j["version"] == kServiceVersion);
    CHECK(j["models"].empty());
  }
  auto opt = fx.client->Options("/api/v1/feasible-set");
  REQUIRE(opt);
  CHECK(opt->status == 204);
  CHECK(fx.get("/api/v1/nothing-here").first == 404);
}

TEST_CASE("tensor store is content addressed") {
  Fixture fx;
  const Tensor t = Tensor::complex({2}, {Complex(1, 2), Complex(-0.0, 3)});
  const std::string a = fx.upload(t);
  CHECK(fx.upload(t) == a);
  CHECK(fx.upload(pt({1})) != a);
  auto res = fx.client->Get("/api/v1/tensor/" + a);
  REQUIRE(res);
  CHECK(htk::from_bytes(res->body).identical(t));
  const auto [status, meta] = fx.get("/api/tensor/" + a + "/meta");
  CHECK(status == 200);
  CHECK(meta["shape"] == json{2});
  CHECK(meta["field"] == "complex");
  CHECK(fx.get("/api/v1/tensor/deadbeef").first == 404);
  auto bad = fx.client->Post("/api/v1/tensor", std::string("HTK1garbage"), "application/octet-stream");
  REQUIRE(bad);
  CHECK(bad->status == 422);
}

TEST_CASE("feasible set and diameters on the smoke instance") {
  Fixture fx;
  fx.load_smoke();
  const auto [status, fs] = fx.post("/api/v1/feasible-set", {{"dataset", "smoke"}, {"y_inline", {{"shape", {1}}, {"values", {0.0}}}}});
  REQUIRE(status == 200);
  CHECK(fs["member_ids"] == json{"x1", "x3"});
  CHECK(fs["diameter"] == 3.0);
  CHECK(fs["lower_bound"] == 1.5);
  CHECK(fs["witness_ids"] == json{"x1", "x3"});
  const auto [s2, empty] = fx.post("/api/feasible-set", {{"dataset", "smoke"}, {"y_inline", {{"shape", {1}}, {"values", {9.0}}}}});
  CHECK(s2 == 200);
  CHECK(empty["no_conclusion"] == true);

  const auto [s3, diam] = fx.post("/api/v1/diameters", {{"dataset", "smoke"}});
  CHECK(s3 == 200);
  CHECK(diam["kersize"] == 3.0);
  CHECK(diam["columns"][0]["witness_ids"] == json{"x1", "x3"});

  const json async_req = {{"dataset", "smoke"}, {"async", true}, {"epsilon", 1.2}};
  const auto [s4, job] = fx.post("/api/v1/diameters", async_req);
  CHECK(s4 == 202);
  const std::string id = job["job"];
  CHECK(fx.post("/api/v1/diameters", async_req).second["job"] == id);
  json done;
  for (int i = 0; i < 200; ++i) {
    done = fx.get("/api/v1/jobs/" + id).second;
    if (done["status"] == "done" || done["status"] == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(done["status"] == "done");
  // eps 1.2 puts every sample in both columns: diameter ||(1,0) - (0,3)||.
  CHECK(done["result"]["kersize"].get<double>() == doctest::Approx(std::sqrt(10.0)));
  CHECK(fx.get("/api/v1/jobs/ffff").first == 404);
}

TEST_CASE("eta interval, decode and consistency routes") {
  Fixture fx;
  fx.load_smoke();
  const std::string target = fx.upload(pt({0, 3}));
  REQUIRE(fx.post("/api/v1/decoders", {{"id", "perfect"}, {"descriptor", {{"kind", "constant"}, {"z", target}}}}).first ==
          201);
  REQUIRE(fx.post("/api/v1/decoders",
                  {{"id", "nearest"}, {"dataset", "smoke"}, {"descriptor", {{"kind", "nearest_feasible"}}}})
              .first == 201);
  const json base = {{"model", "smoke"},
                     {"x", fx.upload(pt({0, 0}))},
                     {"x_det", target},
                     {"noise", {{"count", 6}, {"norm_fraction", 0.5}}},
                     {"seed", 3},
                     {"etas", {1.0, 2.0}}};
  json perfect = base;
  perfect["decoder"] = "perfect";
  const auto [s1, r1] = fx.post("/api/v1/eta-interval", perfect);
  REQUIRE(s1 == 200);
  CHECK(r1["eta_min"] == 0.0);
  CHECK(r1["eta_max"] == 3.0);
  CHECK(r1["verdict"] == "hallucinates");
  CHECK(r1["eta_checks"][0]["transfer"] == true);
  CHECK(r1["eta_checks"][1]["iff"]["applicable"] == false);
  CHECK(r1["noise_ids"].size() == 6);
  // Same request, same bytes.
  CHECK(fx.post("/api/v1/eta-interval", perfect).second.dump() == r1.dump());

  json nearest = base;
  nearest["decoder"] = "nearest";
  const auto [s2, r2] = fx.post("/api/eta-interval", nearest);
  CHECK(s2 == 200);
  CHECK(r2["verdict"] == "does_not");

  const auto [s3, dec] = fx.post("/api/v1/decode", {{"decoder", "nearest"}, {"y", fx.upload(pt({0.9}))}, {"count", 2}});
  REQUIRE(s3 == 200);
  REQUIRE(dec["ids"].size() == 2);
  auto res = fx.client->Get("/api/v1/tensor/" + dec["ids"][0].get<std::string>());
  CHECK(htk::from_bytes(res->body).identical(pt({1, 0})));

  const auto [s4, cons] = fx.post("/api/v1/consistency",
                                  {{"model", "smoke"}, {"y", fx.upload(pt({0}))}, {"recons", {target, fx.upload(pt({2, 0}))}}});
  CHECK(s4 == 200);
  CHECK(cons["consistent"] == json{true, false});
}

TEST_CASE("error statuses") {
  Fixture fx;
  fx.load_smoke();
  CHECK(fx.post("/api/v1/feasible-set", {{"dataset", "nope"}, {"y_inline", {{"shape", {1}}, {"values", {0.0}}}}}).first ==
        404);
  CHECK(fx.post("/api/v1/feasible-set", {{"dataset", "smoke"}, {"y_inline", {{"shape", {2}}, {"values", {0.0, 1.0}}}}})
            .first == 422);
  CHECK(fx.post("/api/v1/feasible-set", {{"y_inline", 3}}).first == 422);
  auto raw = fx.client->Post("/api/v1/feasible-set", std::string("{not json"), "application/json");
  REQUIRE(raw);
  CHECK(raw->status == 422);
  CHECK(json::parse(raw->body).contains("error"));

  REQUIRE(fx.post("/api/v1/decoders",
                  {{"id", "gone"},
                   {"model", "smoke"},
                   {"descriptor", {{"kind", "external_subprocess"}, {"command", {"/nonexistent/decoder"}}}}})
              .first == 201);
  const auto [status, body] = fx.post("/api/v1/decode", {{"decoder", "gone"}, {"y", fx.upload(pt({0}))}});
  CHECK(status == 503);
  CHECK(body["status"] == 503);
  CHECK(fx.post("/api/v1/decoders", {{"id", "bad id!"}, {"descriptor", {{"kind", "constant"}}}}).first == 422);
}
