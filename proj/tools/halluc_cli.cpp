// halluc: command-line front end for feasible-set analysis, hallucination
// intervals, detail pasting, convergence runs and patchification.
//
// Exit codes: 0 success, 1 runtime error, 2 bad input, 3 a checked
// invariant failed.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "halluc/detail.hpp"
#include "halluc/feasible.hpp"
#include "halluc/hallucination.hpp"
#include "halluc/htk.hpp"
#include "halluc/io.hpp"
#include "halluc/service.hpp"

namespace fs = std::filesystem;
using namespace halluc;
using io::json;

namespace {

constexpr int kInvariantFailed = 3;

struct Common {
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  std::string out;
  std::string format = "json";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--jobs", c.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParseError("bad number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw ParseError("empty number list");
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

// --- feasible ------------------------------------------------------------------------

struct FeasibleArgs {
  Common common;
  std::string dataset;
  std::string model;
  std::string epsilons;
  std::string norm;
  std::string x_norm = "l2";
  double slack = -1.0;
  std::size_t top = 10;
};

int cmd_feasible(const FeasibleArgs& a) {
  std::optional<io::ModelDescriptor> desc;
  if (!a.model.empty()) desc = io::load_model_descriptor(a.model);
  NoiseBall noise = desc ? desc->noise : NoiseBall{};
  if (!a.norm.empty()) noise.norm = io::parse_norm_spec(a.norm);
  if (a.slack >= 0.0) noise.slack = a.slack;
  std::vector<double> eps;
  if (!a.epsilons.empty()) {
    eps = parse_doubles(a.epsilons);
  } else if (desc) {
    eps = {desc->noise.epsilon};
  } else {
    throw ParseError("--epsilon is required without --model");
  }
  const SeminormSpec x_spec = io::parse_norm_spec(a.x_norm);
  const PairedDataset ds = io::load_dataset(a.dataset, desc ? desc->model.get() : nullptr, a.common.jobs);

  fs::create_directories(a.common.out);
  int status = 0;
  double previous = -1.0;
  json sweep = json::array();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    noise.epsilon = eps[i];
    const FeasibilityReport rep = analyze(ds, noise, x_spec, a.common.jobs);
    const std::string stem = eps.size() == 1 ? "feasible" : "feasible_eps" + std::to_string(i);
    json doc = io::feasibility_report_to_json(rep, ds);
    doc["norm_spec"] = io::norm_spec_to_json(noise.norm);
    doc["x_norm_spec"] = io::norm_spec_to_json(x_spec);
    io::write_text_file(fs::path(a.common.out) / (stem + ".json"), io::dump(doc));
    if (a.common.format == "csv") {
      io::write_text_file(fs::path(a.common.out) / (stem + ".csv"), io::feasibility_report_to_csv(rep, ds));
    }

    std::cout << "epsilon " << fmt(eps[i]) << ": kersize " << fmt(rep.kersize) << " over " << ds.n_probes()
              << " probes, " << ds.n_samples() << " samples\n";
    std::vector<std::size_t> order(rep.diameters.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return rep.diameters[l] > rep.diameters[r]; });
    for (std::size_t j = 0; j < std::min(a.top, order.size()); ++j) {
      const std::size_t k = order[j];
      std::cout << "  " << std::left << std::setw(16) << ds.probe_ids[k] << " diam " << std::setw(12)
                << fmt(rep.diameters[k]);
      if (rep.witnesses[k]) {
        std::cout << " witness (" << ds.ids[rep.witnesses[k]->first] << ", " << ds.ids[rep.witnesses[k]->second]
                  << ")";
      }
      std::cout << '\n';
    }
    if (rep.no_conclusion_count() > 0) {
      std::cout << "  no conclusion for " << rep.no_conclusion_count()
                << " probe(s): empty feasible set, the method cannot bound the error there\n";
    }
    if (rep.kersize < previous) {
      std::cerr << "invariant failed: kersize decreased along the epsilon sweep\n";
      status = kInvariantFailed;
    }
    previous = std::max(previous, rep.kersize);
    sweep.push_back({{"epsilon", eps[i]}, {"kersize", rep.kersize}, {"report", stem + ".json"}});
  }
  if (eps.size() > 1) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& s : sweep) pairs.emplace_back(s["epsilon"].get<double>(), s["kersize"].get<double>());
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 1; i < pairs.size(); ++i) {
      if (pairs[i].second < pairs[i - 1].second) status = kInvariantFailed;
    }
    io::write_text_file(fs::path(a.common.out) / "sweep.json",
                        io::dump({{"schema", io::kFeasibilitySchema}, {"sweep", sweep}}));
  }
  return status;
}

// --- eta -----------------------------------------------------------------------------

struct EtaArgs {
  Common common;
  std::string query;
};

int cmd_eta(const EtaArgs& a) {
  const fs::path qpath(a.query);
  const fs::path base = qpath.parent_path();
  const json q = io::read_json_file(qpath);

  io::ModelDescriptor desc = q.at("model").is_string()
                                 ? io::load_model_descriptor(resolve(base, q.at("model").get<std::string>()))
                                 : io::descriptor_from_json(q.at("model"), base);
  std::shared_ptr<const PairedDataset> dataset;
  if (q.contains("dataset")) {
    dataset = std::make_shared<PairedDataset>(
        io::load_dataset(resolve(base, q.at("dataset").get<std::string>()), desc.model.get(), a.common.jobs));
  }

  HallucinationQuery hq;
  hq.problem = desc.problem();
  hq.x = htk::load(resolve(base, q.at("x").get<std::string>()));
  hq.x_det = htk::load(resolve(base, q.at("x_det").get<std::string>()));
  hq.x_spec = q.contains("x_norm") ? io::norm_spec_from_json(q.at("x_norm")) : SeminormSpec::lq(2.0);
  if (q.contains("membership_tol")) hq.membership_tol = q.at("membership_tol").get<double>();
  hq.decoder = io::decoder_from_json(q.at("decoder"), base, desc.model, dataset, desc.noise);
  hq.seed = a.common.seed;
  hq.jobs = a.common.jobs;

  const json& nz = q.at("noise");
  if (nz.contains("samples")) {
    hq.noise_samples = unstack(htk::load(resolve(base, nz.at("samples").get<std::string>())));
  } else {
    const std::size_t count = nz.at("count").get<std::size_t>();
    const double fraction = nz.value("norm_fraction", 0.5);
    for (std::size_t i = 0; i < count; ++i) {
      hq.noise_samples.push_back(sample_noise(hq.problem, fraction * desc.noise.epsilon, a.common.seed * 1000003 + i));
    }
  }

  const HallucinationReport rep = eta_interval(hq);
  json doc = io::hallucination_report_to_json(rep);
  json checks = json::array();
  if (q.contains("etas")) {
    for (double eta : q.at("etas").get<std::vector<double>>()) {
      checks.push_back({{"eta", eta},
                        {"transfer", verify_detail_transfer(rep, eta)},
                        {"iff", io::iff_conditions_to_json(check_iff_conditions(hq, rep, eta))}});
    }
  }
  doc["eta_checks"] = checks;
  io::write_text_file(fs::path(a.common.out) / "eta.json", io::dump(doc));

  std::cout << "sample  consistent  d(phi,x)      d(phi,x+x_det)  retained\n";
  for (std::size_t i = 0; i < rep.per_sample.size(); ++i) {
    const auto& s = rep.per_sample[i];
    std::cout << std::left << std::setw(8) << i << std::setw(12) << (s.consistent ? "yes" : "no") << std::setw(14)
              << fmt(s.d_to_x) << std::setw(16) << fmt(s.d_to_x_plus_det) << (s.retained ? "yes" : "no") << '\n';
  }
  std::cout << "|V| = " << rep.retained_V.size() << ", eta_min = " << fmt(rep.eta_min)
            << ", eta_max = " << fmt(rep.eta_max) << ", ||x_det|| = " << fmt(rep.det_norm) << '\n'
            << "||f(x+x_det) - f(x)|| = " << fmt(rep.invisibility.value) << " (2 eps = " << fmt(rep.invisibility.bound)
            << ")\n"
            << "verdict: " << verdict_name(rep.verdict) << " (" << rep.verdict_reason << ")\n"
            << "realism of the reconstructions is not machine-checked\n";
  if (rep.invisibility_violation) {
    std::cerr << "invariant failed: transfer by a consistent decoder of a detail that is not almost invisible\n";
    return kInvariantFailed;
  }
  return 0;
}

// --- paste ---------------------------------------------------------------------------

struct PasteArgs {
  Common common;
  std::string spec;
};

int cmd_paste(const PasteArgs& a) {
  const fs::path spath(a.spec);
  const fs::path base = spath.parent_path();
  const json s = io::read_json_file(spath);
  io::ModelDescriptor desc = s.at("model").is_string()
                                 ? io::load_model_descriptor(resolve(base, s.at("model").get<std::string>()))
                                 : io::descriptor_from_json(s.at("model"), base);
  const Tensor z = htk::load(resolve(base, s.at("z").get<std::string>()));
  // Without y the reconstruction is taken to explain its own measurement.
  const Tensor y = s.contains("y") ? htk::load(resolve(base, s.at("y").get<std::string>())) : desc.model->apply(z);
  const Tensor source = htk::load(resolve(base, s.at("source").get<std::string>()));
  const std::size_t taper = s.value("taper_width", std::size_t{3});
  const std::string mode = s.value("mode", std::string("paste"));

  PasteResult r;
  if (mode == "remove") {
    r = paste_remove(z, y, source, io::box_from_json(s.at("region")), desc.problem(), taper);
  } else if (mode == "paste") {
    DetailSpec spec;
    spec.source = source;
    spec.source_region = io::box_from_json(s.at("source_region"));
    spec.target_offset = s.value("target_offset", std::vector<long>(z.ndim(), 0));
    spec.taper_width = taper;
    r = paste(z, y, spec, desc.problem());
  } else {
    throw ParseError("paste mode must be 'paste' or 'remove'");
  }

  const fs::path out(a.common.out);
  fs::create_directories(out);
  htk::save(out / "pasted.htk", r.pasted);
  htk::save(out / "raw_detail.htk", r.raw_detail);
  htk::save(out / "projected_detail.htk", r.projected_detail);
  json doc = io::paste_result_to_json(r);
  doc["mode"] = mode;
  doc["epsilon"] = desc.noise.epsilon;
  io::write_text_file(out / "paste.json", io::dump(doc));

  std::cout << "residual ||f(x'') - y|| = " << fmt(r.residual) << " (" << fmt(r.ratio) << " eps), "
            << (r.consistent ? "consistent" : "INCONSISTENT") << '\n'
            << "z residual " << fmt(r.z_residual) << ", unprojected paste residual " << fmt(r.raw_residual) << '\n'
            << "detail degradation " << fmt(r.degradation) << ", spill outside region " << fmt(r.spill_norm) << '\n';
  if (!r.consistent) {
    std::cout << "the pasted detail is visible in the measurements: a reconstruction containing it would "
                 "contradict y\n";
  }
  return 0;
}

// --- converge ------------------------------------------------------------------------

struct ConvergeArgs {
  Common common;
  std::string set = "circle";
  std::string schedule = "100,1000,10000";
  std::string probes = "0.5";
  double epsilon = 0.2;
};

int cmd_converge(const ConvergeArgs& a) {
  const SyntheticSet set = synthetic_set_by_name(a.set);
  ForwardProblem problem{make_first_coordinate_model(), NoiseBall{}};
  problem.noise.epsilon = a.epsilon;
  std::vector<std::size_t> schedule;
  for (double v : parse_doubles(a.schedule)) {
    if (v < 1 || v != std::floor(v)) throw ParseError("schedule entries must be positive integers");
    schedule.push_back(static_cast<std::size_t>(v));
  }
  std::vector<Tensor> ys;
  for (double v : parse_doubles(a.probes)) ys.push_back(Tensor::real({1}, {v}));

  const ConvergenceTable t =
      convergence_experiment(set, problem, ys, schedule, a.common.seed, SeminormSpec::lq(2.0), a.common.jobs);
  fs::create_directories(a.common.out);
  json doc = io::convergence_table_to_json(t);
  doc["set"] = a.set;
  doc["epsilon"] = a.epsilon;
  doc["seed"] = a.common.seed;
  io::write_text_file(fs::path(a.common.out) / "converge.json", io::dump(doc));
  const std::string csv = io::convergence_table_to_csv(t);
  if (a.common.format == "csv") io::write_text_file(fs::path(a.common.out) / "converge.csv", csv);
  std::cout << csv;
  std::cout << "reference diameters:";
  for (double r : t.reference) std::cout << ' ' << fmt(r);
  std::cout << "\nfrom below: " << (t.from_below ? "yes" : "NO") << ", monotone: " << (t.monotone ? "yes" : "NO")
            << '\n';
  return t.from_below && t.monotone ? 0 : kInvariantFailed;
}

// --- patchify ------------------------------------------------------------------------

struct PatchifyArgs {
  Common common;
  std::vector<std::string> hr;
  std::vector<std::string> lr;
  std::string model;
  PatchOptions options;
  std::string name = "patches";
};

int cmd_patchify(const PatchifyArgs& a) {
  std::vector<Tensor> hr, lr;
  for (const auto& p : a.hr) hr.push_back(htk::load(p));
  if (!a.lr.empty()) {
    for (const auto& p : a.lr) lr.push_back(htk::load(p));
  } else {
    if (a.model.empty()) throw ParseError("patchify needs --lr images or a --model to compute them");
    const io::ModelDescriptor desc = io::load_model_descriptor(a.model);
    for (const Tensor& h : hr) lr.push_back(desc.model->apply(h));
  }
  const PairedDataset ds = patchify(hr, lr, a.options);
  const fs::path manifest = fs::path(a.common.out) / (a.name + ".json");
  io::save_dataset(manifest, ds);
  std::cout << ds.n_samples() << " patch pairs written to " << manifest.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feasible-set and hallucination analysis for linear inverse problems"};
  app.require_subcommand(1);

  FeasibleArgs fa;
  auto* feasible = app.add_subcommand("feasible", "Feasible sets, diameters and kernel size of a dataset");
  add_common(feasible, fa.common);
  feasible->add_option("--dataset", fa.dataset, "Dataset manifest (JSON)")->required()->check(CLI::ExistingFile);
  feasible->add_option("--model", fa.model, "Model descriptor (JSON)")->check(CLI::ExistingFile);
  feasible->add_option("--epsilon", fa.epsilons, "Noise radius or comma-separated sweep");
  feasible->add_option("--norm", fa.norm, "Measurement norm (l1, l2, linf, /n suffix, or JSON)");
  feasible->add_option("--x-norm", fa.x_norm, "Signal norm for distances")->capture_default_str();
  feasible->add_option("--slack", fa.slack, "Additive membership tolerance");
  feasible->add_option("--top", fa.top, "Diameters to print")->capture_default_str();

  EtaArgs ea;
  auto* eta = app.add_subcommand("eta", "Hallucination size interval for a detail");
  add_common(eta, ea.common);
  eta->add_option("--query", ea.query, "Query (JSON)")->required()->check(CLI::ExistingFile);

  PasteArgs pa;
  auto* paste_cmd = app.add_subcommand("paste", "Paste a null-space projected detail into a reconstruction");
  add_common(paste_cmd, pa.common);
  paste_cmd->add_option("--spec", pa.spec, "Paste spec (JSON)")->required()->check(CLI::ExistingFile);

  ConvergeArgs ca;
  auto* converge = app.add_subcommand("converge", "Diameter convergence on a synthetic model set");
  add_common(converge, ca.common);
  converge->add_option("--set", ca.set, "Synthetic set")->capture_default_str();
  converge->add_option("--schedule", ca.schedule, "Increasing sample counts")->capture_default_str();
  converge->add_option("--probes", ca.probes, "Probe measurements")->capture_default_str();
  converge->add_option("--epsilon", ca.epsilon, "Noise radius")->capture_default_str();

  PatchifyArgs ta;
  auto* patch = app.add_subcommand("patchify", "Split aligned HR/LR images into patch pairs");
  add_common(patch, ta.common);
  patch->add_option("--hr", ta.hr, "HR images (HTK1, bands x H x W)")->required()->check(CLI::ExistingFile);
  patch->add_option("--lr", ta.lr, "LR images (HTK1)")->check(CLI::ExistingFile);
  patch->add_option("--model", ta.model, "Model descriptor used when --lr is absent")->check(CLI::ExistingFile);
  patch->add_option("--hr-patch", ta.options.hr_patch, "HR patch side")->capture_default_str();
  patch->add_option("--lr-patch", ta.options.lr_patch, "LR patch side")->capture_default_str();
  patch->add_option("--bands", ta.options.bands, "Bands per image")->capture_default_str();
  patch->add_option("--name", ta.name, "Manifest name")->capture_default_str();

  ServiceOptions so;
  std::string preload_dataset, preload_model;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--host", so.host, "Bind address")->capture_default_str();
  serve->add_option("--port", so.port, "Port")->capture_default_str();
  serve->add_option("--workers", so.workers, "Job workers")->capture_default_str();
  serve->add_option("--store", so.store_dir, "Tensor store directory (memory only when empty)");
  serve->add_option("--cors-origin", so.cors_origin, "Allowed CORS origin")->capture_default_str();
  serve->add_option("--model", preload_model, "Model descriptor registered as 'default'")->check(CLI::ExistingFile);
  serve->add_option("--dataset", preload_dataset, "Dataset manifest registered as 'default'")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*feasible) return cmd_feasible(fa);
    if (*eta) return cmd_eta(ea);
    if (*paste_cmd) return cmd_paste(pa);
    if (*converge) return cmd_converge(ca);
    if (*patch) return cmd_patchify(ta);
    if (*serve) {
      Service service(so);
      if (!preload_model.empty()) service.register_model("default", io::load_model_descriptor(preload_model));
      if (!preload_dataset.empty()) service.register_dataset_file("default", preload_dataset, "default");
      std::cout << "listening on " << so.host << ':' << so.port << std::endl;
      service.listen();
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NotFoundError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
