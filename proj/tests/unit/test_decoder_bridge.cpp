#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "halluc/decoder.hpp"
#include "halluc/service.hpp"
#include "halluc/wire.hpp"
#include "oracles.hpp"

using namespace halluc;
namespace fs = std::filesystem;

namespace {

Tensor pt(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::real({n}, std::move(v));
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("halluc_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Awkward payload: signed zero, subnormal, extremes.
Tensor awkward() { return pt({-0.0, 4.9e-324, 1.7976931348623157e308, -1.0 / 3.0, 1e-300}); }

std::shared_ptr<const PairedDataset> smoke() {
  return std::make_shared<PairedDataset>(PairedDataset::from_model(
      {pt({0, 0}), pt({1, 0}), pt({0, 3})}, *make_first_coordinate_model(), {}, {"x1", "x2", "x3"}));
}

NoiseBall ball(double eps) {
  NoiseBall b;
  b.epsilon = eps;
  return b;
}

}  // namespace

TEST_CASE("wire framing round trip is bit-exact") {
  wire::Request req;
  req.count = 3;
  req.seed = 18446744073709551615ull;
  req.y = awkward();
  std::istringstream in(wire::encode_request(req));
  const wire::Request back = wire::read_request(in);
  CHECK(back.op == "decode");
  CHECK(back.count == 3);
  CHECK(back.seed == req.seed);
  CHECK(back.y.identical(req.y));

  const Tensor c = Tensor::complex({2}, {Complex(1, -1), Complex(-0.0, 2.5)});
  const wire::Response r = wire::decode_response(wire::encode_response({awkward(), c}));
  REQUIRE(r.tensors.size() == 2);
  CHECK(r.tensors[0].identical(awkward()));
  CHECK(r.tensors[1].identical(c));
  CHECK(wire::decode_response(wire::encode_pong()).pong);
  const wire::Response err = wire::decode_response(wire::encode_error("boom"));
  CHECK_FALSE(err.ok);
  CHECK(err.message == "boom");
  CHECK_THROWS_AS(wire::decode_response(wire::encode_response({c}) + "x"), ParseError);
  CHECK_THROWS_AS(wire::decode_response("{\"status\":\"ok\",\"count\":2}\n"), ParseError);
  std::istringstream ping(wire::encode_ping());
  CHECK(wire::read_request(ping).op == "ping");
}

TEST_CASE("built-in decoders") {
  const auto ds = smoke();
  const DecoderPtr nearest = make_nearest_feasible_decoder(ds, ball(0.5));
  CHECK(nearest->decode(pt({0}), 1, 0)[0].identical(pt({0, 0})));
  CHECK(nearest->decode(pt({0.9}), 1, 0)[0].identical(pt({1, 0})));
  // Empty feasible set falls back to the nearest sample.
  CHECK(nearest->decode(pt({5}), 1, 0)[0].identical(pt({1, 0})));

  const DecoderPtr mean = make_feasible_mean_decoder(ds, ball(0.5));
  CHECK(mean->decode(pt({0}), 1, 0)[0].identical(pt({0, 1.5})));

  const DecoderPtr constant = make_constant_decoder(pt({7, 8}));
  const FiniteSet out = constant->decode(pt({123}), 4, 9);
  CHECK(out.size() == 4);
  for (const Tensor& t : out) CHECK(t.identical(pt({7, 8})));

  const DecoderPtr fn = make_function_decoder("pair", [](const Tensor& y, std::size_t, std::uint64_t) {
    return std::vector<Tensor>{pt({y.value(0).real(), 0}), pt({0, y.value(0).real()})};
  });
  const FiniteSet cycled = fn->decode(pt({2}), 5, 0);
  CHECK(cycled[4].identical(pt({2, 0})));
  CHECK(cycled[3].identical(pt({0, 2})));
  CHECK_THROWS_AS(fn->decode(pt({NAN}), 1, 0), ContractError);
  const DecoderPtr bad = make_function_decoder("nan", [](const Tensor&, std::size_t, std::uint64_t) {
    return std::vector<Tensor>{pt({NAN})};
  });
  CHECK_THROWS_AS(bad->decode(pt({1}), 1, 0), DecoderError);

  oracle::Gen g(1);
  const ModelPtr f = make_matrix_model(oracle::from_matrix(g.matrix(3, 5)));
  const DecoderPtr tik = make_tikhonov_decoder(f, 0.1);
  const Tensor y = g.vec(3);
  CHECK(tik->decode(y, 1, 1)[0].identical(tik->decode(y, 1, 2)[0]));
}

TEST_CASE("subprocess decoder: echo, failures, timeout") {
  const std::string exe = HALLUC_ECHO_DECODER;
  const DecoderPtr echo = make_subprocess_decoder({exe, "echo"});
  const FiniteSet out = echo->decode(awkward(), 3, 77);
  REQUIRE(out.size() == 3);
  for (const Tensor& t : out) CHECK(t.identical(awkward()));
  CHECK(health_check(*echo).empty());

  ExternalOptions shaped;
  shaped.output_shape = Shape{2};
  CHECK_THROWS_AS(make_subprocess_decoder({exe, "echo"}, shaped)->decode(pt({1, 2, 3}), 1, 0), DecoderError);
  CHECK(make_subprocess_decoder({exe, "echo", "--pad", "2"}, shaped)->decode(pt({1}), 1, 0)[0].identical(pt({1, 0})));

  try {
    make_subprocess_decoder({exe, "garbage"})->decode(pt({1}), 1, 0);
    FAIL("garbage accepted");
  } catch (const DecoderError& e) {
    CHECK_FALSE(e.unavailable());
  }
  CHECK_THROWS_AS(make_subprocess_decoder({exe, "error"})->decode(pt({1}), 1, 0), DecoderError);
  CHECK_THROWS_AS(make_subprocess_decoder({exe, "exit3"})->decode(pt({1}), 1, 0), DecoderError);
  try {
    make_subprocess_decoder({"/nonexistent/decoder"})->decode(pt({1}), 1, 0);
    FAIL("missing binary accepted");
  } catch (const DecoderError& e) {
    CHECK(e.unavailable());
  }
  ExternalOptions quick;
  quick.timeout = std::chrono::milliseconds(300);
  const auto start = std::chrono::steady_clock::now();
  try {
    make_subprocess_decoder({exe, "sleep"}, quick)->decode(pt({1}), 1, 0);
    FAIL("timeout not enforced");
  } catch (const DecoderError& e) {
    CHECK(e.unavailable());
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
  CHECK_FALSE(health_check(*make_subprocess_decoder({"/nonexistent/decoder"})).empty());
}

TEST_CASE("decoder cache and replay") {
  const fs::path dir = scratch("cache");
  auto calls = std::make_shared<std::atomic<int>>(0);
  const DecoderPtr counting = make_function_decoder("counting", [calls](const Tensor& y, std::size_t, std::uint64_t s) {
    ++*calls;
    return std::vector<Tensor>{y + pt({static_cast<double>(s)})};
  });
  const DecoderPtr cached = make_cached_decoder(counting, dir);
  const Tensor a = cached->decode(pt({1}), 1, 5)[0];
  const Tensor b = cached->decode(pt({1}), 1, 5)[0];
  CHECK(calls->load() == 1);
  CHECK(a.identical(b));
  cached->decode(pt({1}), 1, 6);
  CHECK(calls->load() == 2);

  const DecoderPtr replay = make_cached_decoder(counting, dir, true);
  CHECK(replay->decode(pt({1}), 1, 5)[0].identical(a));
  CHECK(calls->load() == 2);
  CHECK_THROWS_AS(replay->decode(pt({2}), 1, 5), DecoderError);

  // Subprocess results replay without the process.
  const DecoderPtr echo = make_cached_decoder(make_subprocess_decoder({HALLUC_ECHO_DECODER, "echo"}), dir);
  const Tensor e = echo->decode(awkward(), 2, 1)[1];
  fs::remove_all(dir / "unused");
  CHECK(make_cached_decoder(make_subprocess_decoder({HALLUC_ECHO_DECODER, "echo"}), dir, true)
            ->decode(awkward(), 2, 1)[1]
            .identical(e));
  fs::remove_all(dir);
}

TEST_CASE("HTTP decoder against the service's framed endpoint") {
  Service service;
  service.register_decoder("const", DecoderHandle{make_constant_decoder(awkward()), 1});
  const int port = service.start_background();
  const std::string base = "http://127.0.0.1:" + std::to_string(port) + "/api/v1/decoders/";
  const DecoderPtr http = make_http_decoder(base + "const");
  const FiniteSet out = http->decode(pt({1}), 2, 3);
  REQUIRE(out.size() == 2);
  CHECK(out[1].identical(awkward()));
  CHECK(health_check(*http).empty());
  CHECK_FALSE(health_check(*make_http_decoder(base + "missing")).empty());
  try {
    make_http_decoder(base + "missing")->decode(pt({1}), 1, 0);
    FAIL("unknown decoder accepted");
  } catch (const DecoderError& e) {
    CHECK_FALSE(e.unavailable());
  }
  service.stop();
  ExternalOptions quick;
  quick.timeout = std::chrono::milliseconds(500);
  try {
    make_http_decoder(base + "const", quick)->decode(pt({1}), 1, 0);
    FAIL("stopped service answered");
  } catch (const DecoderError& e) {
    CHECK(e.unavailable());
  }
}
