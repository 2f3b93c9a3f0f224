#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "halluc/htk.hpp"
#include "halluc/io.hpp"
#include "oracles.hpp"

using namespace halluc;
namespace fs = std::filesystem;
using io::json;

namespace {

const fs::path kData = HALLUC_DATA_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("halluc_io_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tensor random_like(oracle::Gen& g, const Shape& shape) {
  Tensor t(shape);
  for (double& v : t.real_values()) v = g.normal();
  return t;
}

}  // namespace

TEST_CASE("norm specs parse from text and JSON") {
  const Tensor d = Tensor::real({4}, {1, -2, 3, -4});
  CHECK(roi_seminorm(d, io::parse_norm_spec("l1")) == 10.0);
  CHECK(roi_seminorm(d, io::parse_norm_spec("linf")) == 4.0);
  CHECK(roi_seminorm(d, io::parse_norm_spec("l1/n")) == 2.5);
  CHECK(roi_seminorm(d, io::parse_norm_spec("l2")) == doctest::Approx(std::sqrt(30.0)));
  const SeminormSpec roi = io::parse_norm_spec(R"({"p": 1, "q": 2, "regions": [{"start": [0], "stop": [2]}]})");
  CHECK(roi_seminorm(d, roi) == doctest::Approx(std::sqrt(5.0)));
  const SeminormSpec back = io::norm_spec_from_json(io::norm_spec_to_json(roi));
  CHECK(roi_seminorm(d, back) == roi_seminorm(d, roi));
  CHECK(io::norm_spec_to_json(io::parse_norm_spec("linf")).dump() ==
        io::norm_spec_to_json(io::norm_spec_from_json(io::norm_spec_to_json(io::parse_norm_spec("linf")))).dump());
  CHECK_THROWS_AS(io::parse_norm_spec("l0.5x"), ParseError);
  CHECK_THROWS_AS(io::parse_norm_spec("{\"p\": 2"), ParseError);
  CHECK(io::box_from_json(io::box_to_json(Box{{1, 2}, {3, 4}})) == Box{{1, 2}, {3, 4}});
}

TEST_CASE("model descriptors round trip through JSON") {
  oracle::Gen g(31);
  const std::vector<ModelPtr> models{make_gaussian_meanpool(), make_masked_fft(16, 4, 2), make_bilinear_aa(2, 8, 3),
                                     make_composed({make_bilinear_aa(2, 16, 1), make_bilinear_aa(2, 8, 1)})};
  for (const ModelPtr& m : models) {
    const json j = io::model_to_json(*m);
    const ModelPtr back = io::model_from_json(j, ".");
    CHECK(back->kind() == m->kind());
    CHECK(back->input_shape() == m->input_shape());
    CHECK(back->output_shape() == m->output_shape());
    const Tensor x = random_like(g, m->input_shape());
    CHECK(back->apply(x).identical(m->apply(x)));
    CHECK(io::dump(io::model_to_json(*back)) == io::dump(j));
  }
  CHECK(io::model_to_json(*make_masked_fft(320, 8, 22))["parameters"]["retained_columns"] == 59);
  CHECK_THROWS_AS(io::model_from_json(json{{"kind", "wavelet"}}, "."), ParseError);
  CHECK_THROWS_AS(io::descriptor_from_json(json{{"kind", "masked_fft"}}, "."), ParseError);
  CHECK_THROWS(io::descriptor_from_json(json{{"kind", "masked_fft"}, {"epsilon", -1.0}}, "."));
  CHECK_THROWS_AS(io::model_from_json(json{{"kind", "gaussian_meanpool"}, {"parameters", {{"pad", 3}}}}, "."),
                  ContractError);
}

TEST_CASE("smoke fixtures load and analyze") {
  const io::ModelDescriptor d = io::load_model_descriptor(kData / "smoke" / "model.json");
  CHECK(d.noise.epsilon == 0.5);
  CHECK(d.model->input_shape() == Shape{2});
  const PairedDataset ds = io::load_dataset(kData / "smoke" / "dataset.json", d.model.get());
  CHECK(ds.n_samples() == 3);
  CHECK(ds.ids == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(ds.probe_ids == std::vector<std::string>{"y1", "y2"});
  const FeasibilityReport r = analyze(ds, d.noise, SeminormSpec::lq(2));
  CHECK(r.kersize == 3.0);
  const json j = io::feasibility_report_to_json(r, ds);
  CHECK(j["columns"][0]["witness_ids"] == json{"x1", "x3"});
  CHECK(j["schema"] == io::kFeasibilitySchema);
  CHECK(io::feasibility_report_to_csv(r, ds) ==
        "k,probe_id,members,diameter,witness_a,witness_b\n0,y1,2,3,x1,x3\n1,y2,1,0,,\n");
  CHECK(io::dump(j) == io::dump(io::feasibility_report_to_json(analyze(ds, d.noise, SeminormSpec::lq(2)), ds)));

  CHECK_THROWS_AS(io::load_model_descriptor(kData / "smoke" / "missing.json"), NotFoundError);
  CHECK_THROWS_AS(io::load_dataset(kData / "smoke" / "dataset.json", make_masked_fft(16, 4, 2).get()), ShapeError);
}

TEST_CASE("datasets save and load bit-exactly in both manifest forms") {
  oracle::Gen g(32);
  const fs::path dir = scratch("datasets");
  const ModelPtr f = make_matrix_model(oracle::from_matrix(g.matrix(2, 3)));
  std::vector<Tensor> xs, ys;
  for (int i = 0; i < 5; ++i) xs.push_back(g.vec(3));
  ys.push_back(f->apply(xs[1]));
  PairedDataset ds = PairedDataset::from_model(xs, *f, ys, {"a", "b", "c", "d", "e"});
  ds.probe_ids = {"probe"};
  io::save_dataset(dir / "set.json", ds);
  const PairedDataset back = io::load_dataset(dir / "set.json", nullptr);
  REQUIRE(back.n_samples() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back.xs[i].identical(ds.xs[i]));
    CHECK(back.fxs[i].identical(ds.fxs[i]));
  }
  CHECK(back.ids == ds.ids);
  CHECK(back.probe_ids == ds.probe_ids);
  CHECK(back.ys[0].identical(ys[0]));

  // Per-sample manifest with probes of every fx.
  for (std::size_t i = 0; i < 3; ++i) htk::save(dir / ("x" + std::to_string(i) + ".htk"), xs[i]);
  json samples = json::array();
  for (std::size_t i = 0; i < 3; ++i) samples.push_back({{"id", "s" + std::to_string(i)}, {"x", "x" + std::to_string(i) + ".htk"}});
  io::write_text_file(dir / "per_sample.json", io::dump({{"schema", io::kDatasetSchema}, {"samples", samples}, {"ys", "self"}}));
  const PairedDataset per = io::load_dataset(dir / "per_sample.json", f.get());
  CHECK(per.n_probes() == 3);
  CHECK(per.probe_ids == std::vector<std::string>{"s0", "s1", "s2"});
  CHECK(per.ys[2].identical(f->apply(xs[2])));
  CHECK_THROWS_AS(io::load_dataset(dir / "per_sample.json", nullptr), ContractError);

  io::write_text_file(dir / "broken.json", "{\"xs\": ");
  CHECK_THROWS_AS(io::load_dataset(dir / "broken.json", f.get()), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("decoder descriptors") {
  const io::ModelDescriptor d = io::load_model_descriptor(kData / "smoke" / "model.json");
  const auto ds = std::make_shared<PairedDataset>(io::load_dataset(kData / "smoke" / "dataset.json", d.model.get()));
  const Tensor y0 = Tensor::real({1}, {0.0});
  const DecoderHandle nearest = io::decoder_from_json(json{{"kind", "nearest_feasible"}}, kData, d.model, ds, d.noise);
  CHECK(nearest.decode(y0, 0)[0].identical(Tensor::real({2}, {0, 0})));
  const DecoderHandle mean = io::decoder_from_json(json{{"kind", "feasible_mean"}}, kData, d.model, ds, d.noise);
  CHECK(mean.decode(y0, 0)[0].identical(Tensor::real({2}, {0, 1.5})));
  const DecoderHandle constant =
      io::decoder_from_json(json{{"kind", "constant"}, {"z", "smoke/x_plus_det.htk"}, {"sample_count", 3}}, kData,
                            d.model, ds, d.noise);
  CHECK(constant.sample_count == 3);
  CHECK(constant.decode(y0, 0).size() == 3);
  const DecoderHandle tik = io::decoder_from_json(json{{"kind", "tikhonov"}, {"lambda", 1e-3}}, kData, d.model, ds, d.noise);
  CHECK(tik.decode(Tensor::real({1}, {1.0}), 0)[0].value(0).real() == doctest::Approx(1.0 / 1.001).epsilon(1e-9));
  CHECK_THROWS_AS(io::decoder_from_json(json{{"kind", "oracle"}}, kData, d.model, ds, d.noise), ParseError);
  CHECK_THROWS_AS(io::decoder_from_json(json{{"kind", "feasible_mean"}}, kData, d.model, nullptr, d.noise),
                  ContractError);
  CHECK_THROWS_AS(io::decoder_from_json(json{{"kind", "constant"}, {"z", "nope.htk"}}, kData, d.model, ds, d.noise),
                  NotFoundError);
}
