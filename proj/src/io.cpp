#include "halluc/io.hpp"

#include <fstream>
#include <sstream>

#include "halluc/htk.hpp"

namespace halluc::io {

namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

double exponent_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return kInf;
    throw ParseError("bad norm exponent '" + s + "'");
  }
  return j.get<double>();
}

json exponent_to_json(double e) { return std::isinf(e) ? json("inf") : json(e); }

// Wraps json access errors with context.
template <typename Fn>
auto with_context(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

}  // namespace

// --- Seminorms -----------------------------------------------------------------------

Box box_from_json(const json& j) {
  return with_context("region", [&] {
    Box b{j.at("start").get<std::vector<std::size_t>>(), j.at("stop").get<std::vector<std::size_t>>()};
    if (b.start.size() != b.stop.size()) throw ParseError("region start/stop lengths differ");
    return b;
  });
}

json box_to_json(const Box& b) { return json{{"start", b.start}, {"stop", b.stop}}; }

SeminormSpec norm_spec_from_json(const json& j) {
  if (j.is_string()) return parse_norm_spec(j.get<std::string>());
  return with_context("norm spec", [&] {
    SeminormSpec s;
    s.p = j.contains("p") ? exponent_from_json(j.at("p")) : 2.0;
    s.q = j.contains("q") ? exponent_from_json(j.at("q")) : 2.0;
    const bool normalize = get_or<bool>(j, "normalize", false);
    if (j.contains("regions") && !j.at("regions").is_null()) {
      std::vector<Box> boxes;
      for (const auto& r : j.at("regions")) boxes.push_back(box_from_json(r));
      s.regions = RegionSet(std::move(boxes), normalize);
    } else {
      s.normalize_whole = normalize;
      if (!j.contains("p")) s.p = s.q;
    }
    s.validate();
    return s;
  });
}

SeminormSpec parse_norm_spec(const std::string& text) {
  if (!text.empty() && text.front() == '{') {
    try {
      return norm_spec_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("norm spec: ") + e.what());
    }
  }
  std::string name = text;
  bool normalize = false;
  if (name.size() > 2 && name.substr(name.size() - 2) == "/n") {
    normalize = true;
    name.resize(name.size() - 2);
  }
  if (name == "l1") return SeminormSpec::lq(1.0, normalize);
  if (name == "l2") return SeminormSpec::lq(2.0, normalize);
  if (name == "linf") return SeminormSpec::lq(kInf, normalize);
  throw ParseError("unknown norm spec '" + text + "' (expected l1, l2, linf, optionally with /n, or JSON)");
}

json norm_spec_to_json(const SeminormSpec& s) {
  json j{{"p", exponent_to_json(s.p)}, {"q", exponent_to_json(s.q)}};
  if (s.regions) {
    json regions = json::array();
    for (const Box& b : s.regions->regions()) regions.push_back(box_to_json(b));
    j["regions"] = regions;
    j["normalize"] = s.regions->normalize();
  } else {
    j["normalize"] = s.normalize_whole;
  }
  return j;
}

// --- Models --------------------------------------------------------------------------

ModelPtr model_from_json(const json& j, const fs::path& base_dir) {
  return with_context("model descriptor", [&]() -> ModelPtr {
    const ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    const json p = j.value("parameters", json::object());
    switch (kind) {
      case ModelKind::kGaussianMeanpool:
        return make_gaussian_meanpool(get_or<double>(p, "sigma", 3.0), get_or<std::size_t>(p, "pool", 3),
                                      get_or<std::size_t>(p, "in_side", 28), get_or<std::size_t>(p, "pad", 4));
      case ModelKind::kMaskedFFT:
        return make_masked_fft(get_or<std::size_t>(p, "side", 320), get_or<std::size_t>(p, "acceleration", 8),
                               get_or<std::size_t>(p, "center_lines", 22));
      case ModelKind::kBilinearAA:
        return make_bilinear_aa(get_or<std::size_t>(p, "factor", 4), get_or<std::size_t>(p, "in_side", 512),
                                get_or<std::size_t>(p, "bands", 1));
      case ModelKind::kMatrix: {
        Tensor m = htk::load(resolve(base_dir, p.at("path").get<std::string>()));
        m.require_finite("matrix");
        const Shape in = get_or<Shape>(p, "input_shape", {});
        const Shape out = get_or<Shape>(p, "output_shape", {});
        return std::make_shared<MatrixModel>(std::move(m), in, out);
      }
      case ModelKind::kComposed: {
        std::vector<ModelPtr> stages;
        for (const auto& s : p.at("stages")) stages.push_back(model_from_json(s, base_dir));
        return make_composed(std::move(stages));
      }
    }
    throw ParseError("unsupported model kind");
  });
}

ModelDescriptor descriptor_from_json(const json& j, const fs::path& base_dir) {
  ModelDescriptor d;
  d.source = j;
  d.model = model_from_json(j, base_dir);
  with_context("model descriptor", [&] {
    d.noise.epsilon = j.at("epsilon").get<double>();
    d.noise.slack = get_or<double>(j, "slack", 0.0);
    if (j.contains("norm_spec")) d.noise.norm = norm_spec_from_json(j.at("norm_spec"));
    return 0;
  });
  ForwardProblem{d.model, d.noise}.validate();
  return d;
}

ModelDescriptor load_model_descriptor(const fs::path& path) {
  try {
    return descriptor_from_json(read_json_file(path), path.parent_path());
  } catch (const NotFoundError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json model_to_json(const LinearForwardModel& model) {
  json j{{"kind", model_kind_name(model.kind())},
         {"input_shape", model.input_shape()},
         {"output_shape", model.output_shape()},
         {"field", field_name(model.field())}};
  json p = json::object();
  if (const auto* g = dynamic_cast<const GaussianMeanpoolModel*>(&model)) {
    p = {{"sigma", g->sigma()}, {"pool", g->pool()}, {"in_side", g->in_side()}, {"pad", g->pad()}};
  } else if (const auto* b = dynamic_cast<const BilinearAAModel*>(&model)) {
    p = {{"factor", b->factor()}, {"in_side", b->in_side()}, {"bands", b->bands()}};
  } else if (const auto* m = dynamic_cast<const MaskedFFTModel*>(&model)) {
    p = {{"side", m->side()},
         {"acceleration", m->acceleration()},
         {"center_lines", m->center_lines()},
         {"retained_columns", m->retained_columns()}};
  } else if (const auto* c = dynamic_cast<const ComposedModel*>(&model)) {
    json stages = json::array();
    for (const auto& s : c->stages()) stages.push_back(model_to_json(*s));
    p = {{"stages", stages}};
  }
  j["parameters"] = p;
  return j;
}

// --- Datasets ------------------------------------------------------------------------

namespace {

std::vector<Tensor> load_stack(const fs::path& path) { return unstack(htk::load(path)); }

}  // namespace

PairedDataset dataset_from_json(const json& j, const fs::path& base_dir, const LinearForwardModel* model,
                                unsigned jobs) {
  return with_context("dataset manifest", [&] {
    std::vector<Tensor> xs, fxs, ys;
    std::vector<std::string> ids, probe_ids;
    bool have_fxs = false, ys_self = false;

    if (j.contains("samples")) {
      for (const auto& s : j.at("samples")) {
        ids.push_back(s.at("id").get<std::string>());
        xs.push_back(htk::load(resolve(base_dir, s.at("x").get<std::string>())));
        if (s.contains("fx")) fxs.push_back(htk::load(resolve(base_dir, s.at("fx").get<std::string>())));
      }
      if (!fxs.empty() && fxs.size() != xs.size()) throw ParseError("either all or no samples must carry fx");
      have_fxs = !fxs.empty();
    } else {
      xs = load_stack(resolve(base_dir, j.at("xs").get<std::string>()));
      if (j.contains("fxs")) {
        fxs = load_stack(resolve(base_dir, j.at("fxs").get<std::string>()));
        have_fxs = true;
      }
      if (j.contains("ids")) ids = j.at("ids").get<std::vector<std::string>>();
    }

    if (j.contains("probes")) {
      for (const auto& p : j.at("probes")) {
        probe_ids.push_back(p.at("id").get<std::string>());
        ys.push_back(htk::load(resolve(base_dir, p.at("y").get<std::string>())));
      }
    } else if (j.contains("ys")) {
      const std::string v = j.at("ys").get<std::string>();
      if (v == "self") {
        ys_self = true;
      } else {
        ys = load_stack(resolve(base_dir, v));
      }
      if (j.contains("probe_ids")) probe_ids = j.at("probe_ids").get<std::vector<std::string>>();
    }

    PairedDataset ds;
    if (have_fxs) {
      if (ys_self) ys = fxs;
      ds = PairedDataset::from_tuples(std::move(xs), std::move(fxs), std::move(ys), std::move(ids));
    } else {
      if (!model) throw ContractError("dataset has no measurements and no model was given");
      ds = PairedDataset::from_model(std::move(xs), *model, std::move(ys), std::move(ids), jobs);
      if (ys_self) ds.ys = ds.fxs;
    }
    if (ys_self && probe_ids.empty()) probe_ids = ds.ids;
    if (!probe_ids.empty()) ds.probe_ids = std::move(probe_ids);
    else if (ds.probe_ids.size() != ds.ys.size()) ds.probe_ids.resize(ds.ys.size());
    for (std::size_t k = 0; k < ds.probe_ids.size(); ++k) {
      if (ds.probe_ids[k].empty()) ds.probe_ids[k] = "y" + std::to_string(k);
    }
    if (model) {
      if (ds.xs.front().shape() != model->input_shape()) {
        throw ShapeError("dataset signals " + shape_to_string(ds.xs.front().shape()) + " do not match model input " +
                         shape_to_string(model->input_shape()));
      }
      if (ds.fxs.front().shape() != model->output_shape()) {
        throw ShapeError("dataset measurements " + shape_to_string(ds.fxs.front().shape()) +
                         " do not match model output " + shape_to_string(model->output_shape()));
      }
    }
    ds.validate();
    return ds;
  });
}

PairedDataset load_dataset(const fs::path& manifest, const LinearForwardModel* model, unsigned jobs) {
  try {
    return dataset_from_json(read_json_file(manifest), manifest.parent_path(), model, jobs);
  } catch (const NotFoundError& e) {
    throw NotFoundError(manifest.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(manifest.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
}

void save_dataset(const fs::path& manifest, const PairedDataset& ds) {
  const fs::path dir = manifest.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = manifest.stem().string();
  htk::save(dir / (stem + ".xs.htk"), stack(ds.xs));
  htk::save(dir / (stem + ".fxs.htk"), stack(ds.fxs));
  json j{{"schema", kDatasetSchema},
         {"mode", ds.tuple_mode ? "tuples" : "model"},
         {"xs", stem + ".xs.htk"},
         {"fxs", stem + ".fxs.htk"},
         {"ids", ds.ids}};
  if (!ds.ys.empty()) {
    htk::save(dir / (stem + ".ys.htk"), stack(ds.ys));
    j["ys"] = stem + ".ys.htk";
    j["probe_ids"] = ds.probe_ids;
  }
  write_text_file(manifest, dump(j));
}

// --- Decoders ------------------------------------------------------------------------

DecoderHandle decoder_from_json(const json& j, const fs::path& base_dir, const ModelPtr& model,
                                std::shared_ptr<const PairedDataset> dataset, const NoiseBall& noise) {
  return with_context("decoder descriptor", [&] {
    const std::string kind = j.at("kind").get<std::string>();
    DecoderHandle h;
    h.sample_count = get_or<std::size_t>(j, "sample_count", 1);
    if (h.sample_count < 1) throw ContractError("decoder sample_count must be >= 1");
    ExternalOptions ext;
    ext.timeout = std::chrono::milliseconds(get_or<long long>(j, "timeout_ms", 60000));
    if (model) ext.output_shape = model->input_shape();

    if (kind == "tikhonov") {
      if (!model) throw ContractError("tikhonov decoder needs a model");
      h.decoder = make_tikhonov_decoder(model, j.at("lambda").get<double>());
    } else if (kind == "nearest_feasible" || kind == "feasible_mean") {
      if (!dataset) throw ContractError(kind + " decoder needs a dataset");
      h.decoder = kind == "nearest_feasible" ? make_nearest_feasible_decoder(dataset, noise)
                                             : make_feasible_mean_decoder(dataset, noise);
    } else if (kind == "constant") {
      h.decoder = make_constant_decoder(htk::load(resolve(base_dir, j.at("z").get<std::string>())));
    } else if (kind == "external_subprocess") {
      auto argv = j.at("command").get<std::vector<std::string>>();
      h.decoder = with_env_cache(make_subprocess_decoder(std::move(argv), ext));
    } else if (kind == "external_http") {
      h.decoder = with_env_cache(make_http_decoder(j.at("url").get<std::string>(), ext));
    } else {
      throw ParseError("unknown decoder kind '" + kind + "'");
    }
    return h;
  });
}

// --- Reports -------------------------------------------------------------------------

json feasibility_report_to_json(const FeasibilityReport& r, const PairedDataset& ds) {
  json columns = json::array();
  for (std::size_t k = 0; k < r.fa.cols(); ++k) {
    json members = json::array();
    for (std::uint32_t n : r.fa.column(k)) members.push_back(n);
    json col{{"k", k},
             {"probe_id", ds.probe_ids.at(k)},
             {"members", members},
             {"diameter", r.diameters[k]},
             {"no_conclusion", static_cast<bool>(r.no_conclusion[k])}};
    if (r.witnesses[k]) {
      const auto [a, b] = *r.witnesses[k];
      col["witness"] = {a, b};
      col["witness_ids"] = {ds.ids.at(a), ds.ids.at(b)};
    } else {
      col["witness"] = nullptr;
      col["witness_ids"] = nullptr;
    }
    columns.push_back(col);
  }
  return json{{"schema", kFeasibilitySchema},
              {"epsilon", r.epsilon},
              {"n_samples", r.fa.rows()},
              {"n_probes", r.fa.cols()},
              {"kersize", r.kersize},
              {"membership_nnz", r.fa.nnz()},
              {"distance_nnz", r.d.nnz()},
              {"no_conclusion_count", r.no_conclusion_count()},
              {"columns", columns}};
}

std::string feasibility_report_to_csv(const FeasibilityReport& r, const PairedDataset& ds) {
  std::ostringstream out;
  out.precision(17);
  out << "k,probe_id,members,diameter,witness_a,witness_b\n";
  for (std::size_t k = 0; k < r.fa.cols(); ++k) {
    out << k << ',' << ds.probe_ids.at(k) << ',' << r.fa.column(k).size() << ',' << r.diameters[k] << ',';
    if (r.witnesses[k]) {
      out << ds.ids.at(r.witnesses[k]->first) << ',' << ds.ids.at(r.witnesses[k]->second);
    } else {
      out << ',';
    }
    out << '\n';
  }
  return out.str();
}

json hallucination_report_to_json(const HallucinationReport& r) {
  json samples = json::array();
  for (std::size_t i = 0; i < r.per_sample.size(); ++i) {
    const auto& s = r.per_sample[i];
    samples.push_back({{"index", i},
                       {"consistent", s.consistent},
                       {"d_to_x", s.d_to_x},
                       {"d_to_x_plus_det", s.d_to_x_plus_det},
                       {"membership_distance", s.membership_distance},
                       {"retained", s.retained}});
  }
  return json{{"schema", kHallucinationSchema},
              {"eta_min", r.eta_min},
              {"eta_max", r.eta_max},
              {"retained_V", r.retained_V},
              {"per_sample", samples},
              {"invisibility",
               {{"value", r.invisibility.value}, {"bound", r.invisibility.bound}, {"passes_2eps", r.invisibility.passes}}},
              {"det_norm", r.det_norm},
              {"membership_tol", r.membership_tol},
              {"membership_found", r.membership_found},
              {"interval_nonempty", r.interval_nonempty},
              {"verdict", verdict_name(r.verdict)},
              {"verdict_reason", r.verdict_reason},
              {"realism_unchecked", r.realism_unchecked},
              {"invisibility_violation", r.invisibility_violation}};
}

json paste_result_to_json(const PasteResult& r) {
  return json{{"schema", kPasteSchema},
              {"residual", r.residual},
              {"ratio", r.ratio},
              {"consistent", r.consistent},
              {"z_residual", r.z_residual},
              {"z_consistent", r.z_consistent},
              {"raw_residual", r.raw_residual},
              {"measurement_change", r.measurement_change},
              {"spill_norm", r.spill_norm},
              {"degradation", r.degradation},
              {"raw_detail_norm", l2_norm(r.raw_detail)},
              {"projected_detail_norm", l2_norm(r.projected_detail)},
              {"projection", {{"exact", r.projection_exact},
                              {"converged", r.projection_converged},
                              {"iterations", r.projection_iterations}}},
              {"note", "blending leaves the detail only approximately in the null space; "
                       "compare the residual ratio with 1"}};
}

json convergence_table_to_json(const ConvergenceTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) rows.push_back({{"n", r.n}, {"diameters", r.diameters}, {"max_gap", r.max_gap}});
  return json{{"schema", kConvergenceSchema},
              {"reference", t.reference},
              {"rows", rows},
              {"from_below", t.from_below},
              {"monotone", t.monotone}};
}

std::string convergence_table_to_csv(const ConvergenceTable& t) {
  std::ostringstream out;
  out.precision(17);
  out << "n,max_gap";
  for (std::size_t k = 0; k < t.reference.size(); ++k) out << ",diam_" << k;
  out << '\n';
  for (const auto& r : t.rows) {
    out << r.n << ',' << r.max_gap;
    for (double d : r.diameters) out << ',' << d;
    out << '\n';
  }
  return out.str();
}

json inevitability_report_to_json(const InevitabilityReport& r) {
  json grid = json::array();
  for (const auto& g : r.grid) grid.push_back({{"eta", g.eta}, {"branch_i", g.branch_i}, {"branch_ii", g.branch_ii}});
  return json{{"diam_estimate", r.diam_estimate},
              {"lower_bound", r.lower_bound},
              {"decoder_consistent", r.decoder_consistent},
              {"recon_diameter", r.recon_diameter},
              {"stability_sup", r.stability_sup ? json(*r.stability_sup) : json(nullptr)},
              {"first_firing_eta", r.first_firing_eta ? json(*r.first_firing_eta) : json(nullptr)},
              {"firing_branch", r.firing_branch},
              {"grid", grid}};
}

json certificate_to_json(const Certificate& c) {
  return json{{"issued", c.issued},
              {"eta", c.eta},
              {"kersize_estimate", c.kersize_estimate},
              {"lower_bound_caveat", c.lower_bound_caveat},
              {"statement", c.statement}};
}

json iff_conditions_to_json(const IffConditions& c) {
  return json{{"cond_i", c.cond_i},
              {"cond_ii", c.cond_ii},
              {"applicable", c.applicable},
              {"shifted_in_ball", c.shifted_in_ball}};
}

}  // namespace halluc::io
