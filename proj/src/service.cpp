#include "halluc/service.hpp"

#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "halluc/detail.hpp"
#include "halluc/digest.hpp"
#include "halluc/hallucination.hpp"
#include "halluc/htk.hpp"
#include "halluc/wire.hpp"

namespace halluc {

namespace fs = std::filesystem;
using io::json;

namespace {

/// Maps module errors onto HTTP statuses.
struct HttpError : Error {
  HttpError(int status, const std::string& what) : Error(what), status(status) {}
  int status;
};

int status_for(const std::exception& e) {
  if (auto* h = dynamic_cast<const HttpError*>(&e)) return h->status;
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (auto* d = dynamic_cast<const DecoderError*>(&e)) return d->unavailable() ? 503 : 502;
  if (dynamic_cast<const Error*>(&e) || dynamic_cast<const json::exception*>(&e)) return 422;
  return 500;
}

json error_body(int status, const std::string& message) { return json{{"status", status}, {"error", message}}; }

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ContractError(std::string("request field '") + key + "' is required");
  return j.at(key);
}

std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw ContractError(std::string("request field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  }
  return true;
}

Tensor tensor_from_inline(const json& j) {
  const auto shape = require(j, "shape").get<Shape>();
  const auto values = require(j, "values").get<std::vector<double>>();
  if (values.size() != shape_numel(shape)) throw ShapeError("inline tensor values do not match its shape");
  return Tensor::real(shape, values);
}

struct ModelEntry {
  io::ModelDescriptor desc;
};

struct DatasetEntry {
  std::shared_ptr<const PairedDataset> data;
  std::string model_id;
};

struct DecoderEntry {
  DecoderHandle handle;
};

struct Job {
  std::string status = "queued";
  json result;
  json error;
};

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::thread server_thread;

  mutable std::shared_mutex store_mu;
  std::map<std::string, std::string> store;

  mutable std::shared_mutex registry_mu;
  std::map<std::string, ModelEntry> models;
  std::map<std::string, DatasetEntry> datasets;
  std::map<std::string, DecoderEntry> decoders;

  std::mutex job_mu;
  std::condition_variable job_cv;
  std::deque<std::pair<std::string, std::function<json()>>> queue;
  std::map<std::string, Job> jobs;
  std::vector<std::thread> workers;
  bool stopping = false;

  explicit Impl(ServiceOptions opts) : options(std::move(opts)) {
    if (!options.store_dir.empty()) fs::create_directories(options.store_dir);
    const unsigned n = std::max(1u, options.workers);
    for (unsigned i = 0; i < n; ++i) workers.emplace_back([this] { work(); });
    routes();
  }

  ~Impl() {
    server.stop();
    if (server_thread.joinable()) server_thread.join();
    {
      std::lock_guard<std::mutex> lock(job_mu);
      stopping = true;
    }
    job_cv.notify_all();
    for (auto& w : workers) w.join();
  }

  // --- tensor store --------------------------------------------------------------------

  std::string put_bytes(std::string bytes) {
    htk::from_bytes(bytes);  // rejects anything that is not a single HTK1 tensor
    const std::string id = sha256_hex(bytes);
    std::unique_lock lock(store_mu);
    if (store.contains(id)) return id;
    if (!options.store_dir.empty()) {
      const fs::path path = options.store_dir / (id + ".htk");
      if (!fs::exists(path)) {
        const fs::path tmp = options.store_dir / (id + ".tmp");
        std::ofstream(tmp, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        fs::rename(tmp, path);
      }
    }
    store.emplace(id, std::move(bytes));
    return id;
  }

  std::string get_bytes(const std::string& id) const {
    {
      std::shared_lock lock(store_mu);
      auto it = store.find(id);
      if (it != store.end()) return it->second;
    }
    if (!options.store_dir.empty() && valid_id(id)) {
      const fs::path path = options.store_dir / (id + ".htk");
      if (fs::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
      }
    }
    throw NotFoundError("unknown tensor id '" + id + "'");
  }

  Tensor tensor(const std::string& id) const { return htk::from_bytes(get_bytes(id)); }

  Tensor tensor_field(const json& j, const char* key) const {
    const json& v = require(j, key);
    if (v.is_object()) return tensor_from_inline(v);
    if (!v.is_string()) throw ContractError(std::string("tensor field '") + key + "' must be an id");
    return tensor(v.get<std::string>());
  }

  std::vector<Tensor> tensor_list(const json& j, const char* key) const {
    const json& v = require(j, key);
    if (!v.is_array()) throw ContractError(std::string("request field '") + key + "' must be a list of ids");
    std::vector<Tensor> out;
    for (const auto& id : v) out.push_back(tensor(id.get<std::string>()));
    return out;
  }

  // --- registry ------------------------------------------------------------------------

  io::ModelDescriptor model(const std::string& id) const {
    std::shared_lock lock(registry_mu);
    auto it = models.find(id);
    if (it == models.end()) throw NotFoundError("unknown model id '" + id + "'");
    return it->second.desc;
  }

  DatasetEntry dataset(const std::string& id) const {
    std::shared_lock lock(registry_mu);
    auto it = datasets.find(id);
    if (it == datasets.end()) throw NotFoundError("unknown dataset id '" + id + "'");
    return it->second;
  }

  DecoderHandle decoder(const std::string& id) const {
    std::shared_lock lock(registry_mu);
    auto it = decoders.find(id);
    if (it == decoders.end()) throw NotFoundError("unknown decoder id '" + id + "'");
    return it->second.handle;
  }

  /// The request's model, with optional epsilon / norm overrides.
  io::ModelDescriptor problem_model(const json& j) const {
    io::ModelDescriptor d = model(require_string(j, "model"));
    apply_noise_overrides(j, d.noise);
    return d;
  }

  static void apply_noise_overrides(const json& j, NoiseBall& noise) {
    if (j.contains("epsilon")) noise.epsilon = j.at("epsilon").get<double>();
    if (j.contains("norm")) {
      noise.norm = j.at("norm").is_string() ? io::parse_norm_spec(j.at("norm").get<std::string>())
                                            : io::norm_spec_from_json(j.at("norm"));
    }
    if (j.contains("slack")) noise.slack = j.at("slack").get<double>();
    noise.validate();
  }

  /// Noise ball for a dataset: its model's unless the request overrides it.
  NoiseBall dataset_noise(const DatasetEntry& e, const json& j) const {
    NoiseBall noise;
    if (!e.model_id.empty()) {
      noise = model(e.model_id).noise;
    } else if (!j.contains("epsilon")) {
      throw ContractError("dataset has no model; the request must give epsilon");
    }
    apply_noise_overrides(j, noise);
    return noise;
  }

  static SeminormSpec x_norm(const json& j) {
    if (!j.contains("x_norm")) return SeminormSpec::lq(2.0);
    const json& v = j.at("x_norm");
    return v.is_string() ? io::parse_norm_spec(v.get<std::string>()) : io::norm_spec_from_json(v);
  }

  json summary() const {
    std::shared_lock lock(registry_mu);
    json ms = json::array(), ds = json::array(), decs = json::array();
    for (const auto& [id, m] : models) {
      ms.push_back({{"id", id},
                    {"kind", model_kind_name(m.desc.model->kind())},
                    {"input_shape", m.desc.model->input_shape()},
                    {"output_shape", m.desc.model->output_shape()},
                    {"epsilon", m.desc.noise.epsilon}});
    }
    for (const auto& [id, d] : datasets) {
      ds.push_back({{"id", id},
                    {"n_samples", d.data->n_samples()},
                    {"n_probes", d.data->n_probes()},
                    {"model", d.model_id.empty() ? json(nullptr) : json(d.model_id)},
                    {"tuple_mode", d.data->tuple_mode}});
    }
    for (const auto& [id, d] : decoders) {
      decs.push_back({{"id", id},
                      {"kind", decoder_kind_name(d.handle.decoder->kind())},
                      {"identity", d.handle.decoder->identity()},
                      {"sample_count", d.handle.sample_count}});
    }
    return json{{"status", "ok"},
                {"version", kServiceVersion},
                {"protocol", wire::kProtocol},
                {"models", ms},
                {"datasets", ds},
                {"decoders", decs}};
  }

  // --- registration routes -------------------------------------------------------------

  json post_model(const json& j) {
    const std::string id = require_string(j, "id");
    if (!valid_id(id)) throw ContractError("invalid model id '" + id + "'");
    const json& desc = require(j, "descriptor");
    io::ModelDescriptor d;
    if (desc.value("kind", "") == "matrix" && desc.contains("parameters") &&
        desc.at("parameters").contains("tensor")) {
      const json& p = desc.at("parameters");
      d.model = std::make_shared<MatrixModel>(tensor(p.at("tensor").get<std::string>()),
                                              p.value("input_shape", Shape{}), p.value("output_shape", Shape{}));
      d.noise.epsilon = require(desc, "epsilon").get<double>();
      if (desc.contains("norm_spec")) d.noise.norm = io::norm_spec_from_json(desc.at("norm_spec"));
      d.noise.slack = desc.value("slack", 0.0);
      d.noise.validate();
      d.source = desc;
    } else {
      d = io::descriptor_from_json(desc, fs::current_path());
    }
    register_model(id, d);
    return json{{"id", id}, {"model", io::model_to_json(*d.model)}};
  }

  json post_dataset(const json& j) {
    const std::string id = require_string(j, "id");
    if (!valid_id(id)) throw ContractError("invalid dataset id '" + id + "'");
    const std::string model_id = j.value("model", "");
    ModelPtr m = model_id.empty() ? nullptr : model(model_id).model;
    PairedDataset ds;
    if (j.contains("manifest")) {
      ds = io::load_dataset(require_string(j, "manifest"), m.get());
    } else {
      auto xs = tensor_list(j, "xs");
      std::vector<Tensor> ys;
      const bool self = j.contains("ys") && j.at("ys") == "self";
      if (j.contains("ys") && !self) ys = tensor_list(j, "ys");
      auto ids = j.value("ids", std::vector<std::string>{});
      if (j.contains("fxs")) {
        auto fxs = tensor_list(j, "fxs");
        if (self) ys = fxs;
        ds = PairedDataset::from_tuples(std::move(xs), std::move(fxs), std::move(ys), std::move(ids));
      } else {
        if (!m) throw ContractError("dataset without fxs needs a model");
        ds = PairedDataset::from_model(std::move(xs), *m, std::move(ys), std::move(ids));
        if (self) ds.ys = ds.fxs;
      }
      if (j.contains("probe_ids")) {
        ds.probe_ids = j.at("probe_ids").get<std::vector<std::string>>();
      } else {
        ds.probe_ids.clear();
        for (std::size_t k = 0; k < ds.ys.size(); ++k) ds.probe_ids.push_back("y" + std::to_string(k));
      }
      ds.validate();
    }
    const std::size_t n = ds.n_samples(), k = ds.n_probes();
    register_dataset(id, std::move(ds), model_id);
    return json{{"id", id}, {"n_samples", n}, {"n_probes", k}};
  }

  json post_decoder(const json& j) {
    const std::string id = require_string(j, "id");
    if (!valid_id(id)) throw ContractError("invalid decoder id '" + id + "'");
    const json& desc = require(j, "descriptor");
    ModelPtr m;
    NoiseBall noise;
    if (j.contains("model")) {
      auto d = model(j.at("model").get<std::string>());
      m = d.model;
      noise = d.noise;
    }
    std::shared_ptr<const PairedDataset> data;
    if (j.contains("dataset")) {
      DatasetEntry e = dataset(j.at("dataset").get<std::string>());
      data = e.data;
      noise = dataset_noise(e, desc);
    }
    DecoderHandle h;
    if (desc.value("kind", "") == "constant") {
      h.decoder = make_constant_decoder(tensor(require_string(desc, "z")));
      h.sample_count = desc.value("sample_count", std::size_t{1});
    } else {
      h = io::decoder_from_json(desc, fs::current_path(), m, data, noise);
    }
    register_decoder(id, h);
    return json{{"id", id}, {"kind", decoder_kind_name(h.decoder->kind())}, {"identity", h.decoder->identity()}};
  }

  // --- analysis routes -----------------------------------------------------------------

  json feasible_set(const json& j) const {
    const DatasetEntry e = dataset(require_string(j, "dataset"));
    const NoiseBall noise = dataset_noise(e, j);
    const SeminormSpec xs = x_norm(j);
    const Tensor y = j.contains("y_inline") ? tensor_from_inline(j.at("y_inline")) : tensor_field(j, "y");
    const PairedDataset& ds = *e.data;
    if (ds.fxs.empty() || y.shape() != ds.fxs.front().shape()) {
      throw ShapeError("y has shape " + shape_to_string(y.shape()) + ", dataset measurements differ");
    }
    std::vector<std::uint32_t> members;
    for (std::size_t n = 0; n < ds.n_samples(); ++n) {
      if (noise.contains_difference(ds.fxs[n], y)) members.push_back(static_cast<std::uint32_t>(n));
    }
    double diam = 0.0;
    std::optional<std::pair<std::uint32_t, std::uint32_t>> witness;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        const double d = roi_seminorm(ds.xs[members[a]], ds.xs[members[b]], xs);
        if (!witness || d > diam) {
          diam = d;
          witness = std::make_pair(members[a], members[b]);
        }
      }
    }
    json member_ids = json::array();
    for (auto n : members) member_ids.push_back(ds.ids[n]);
    json out{{"schema", io::kFeasibilitySchema},
             {"epsilon", noise.epsilon},
             {"members", members},
             {"member_ids", member_ids},
             {"diameter", diam},
             {"lower_bound", diam / 2.0},
             {"no_conclusion", members.empty()}};
    if (witness) {
      out["witness"] = {witness->first, witness->second};
      out["witness_ids"] = {ds.ids[witness->first], ds.ids[witness->second]};
    } else {
      out["witness"] = nullptr;
      out["witness_ids"] = nullptr;
    }
    return out;
  }

  json diameters_report(const json& j) const {
    const std::string id = require_string(j, "dataset");
    const DatasetEntry e = dataset(id);
    const NoiseBall noise = dataset_noise(e, j);
    const FeasibilityReport rep = analyze(*e.data, noise, x_norm(j), j.value("jobs", 1u));
    json out = io::feasibility_report_to_json(rep, *e.data);
    out["dataset"] = id;
    return out;
  }

  json paste_route(const json& j) {
    const io::ModelDescriptor d = problem_model(j);
    const Tensor z = tensor_field(j, "z");
    const Tensor y = tensor_field(j, "y");
    const Tensor source = tensor_field(j, "source");
    const std::size_t taper = j.value("taper_width", std::size_t{3});
    const std::string mode = j.value("mode", "paste");
    PasteResult r;
    if (mode == "remove") {
      r = paste_remove(z, y, source, io::box_from_json(require(j, "region")), d.problem(), taper);
    } else if (mode == "paste") {
      DetailSpec spec;
      spec.source = source;
      spec.source_region = io::box_from_json(require(j, "source_region"));
      spec.target_offset = j.value("target_offset", std::vector<long>(z.ndim(), 0));
      spec.taper_width = taper;
      r = paste(z, y, spec, d.problem());
    } else {
      throw ContractError("paste mode must be 'paste' or 'remove'");
    }
    return json{{"report", io::paste_result_to_json(r)},
                {"pasted", put_tensor(r.pasted)},
                {"raw_detail", put_tensor(r.raw_detail)},
                {"projected_detail", put_tensor(r.projected_detail)}};
  }

  json consistency(const json& j) const {
    const io::ModelDescriptor d = problem_model(j);
    const Tensor y = tensor_field(j, "y");
    const FiniteSet recon(tensor_list(j, "recons"));
    const ForwardProblem p = d.problem();
    const auto flags = check_consistency(y, recon, p);
    json residuals = json::array();
    for (const Tensor& z : recon) residuals.push_back(roi_seminorm(p.model->apply(z), y, p.noise.norm));
    return json{{"consistent", flags}, {"residuals", residuals}, {"epsilon", p.noise.epsilon}};
  }

  json eta(const json& j) {
    const io::ModelDescriptor d = problem_model(j);
    HallucinationQuery q;
    q.problem = d.problem();
    q.x = tensor_field(j, "x");
    q.x_det = tensor_field(j, "x_det");
    q.decoder = decoder(require_string(j, "decoder"));
    q.x_spec = x_norm(j);
    q.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("membership_tol")) q.membership_tol = j.at("membership_tol").get<double>();
    const json& nz = require(j, "noise");
    if (nz.is_array()) {
      for (const auto& id : nz) q.noise_samples.push_back(tensor(id.get<std::string>()));
    } else {
      const std::size_t count = require(nz, "count").get<std::size_t>();
      const double fraction = nz.value("norm_fraction", 0.5);
      for (std::size_t i = 0; i < count; ++i) {
        q.noise_samples.push_back(sample_noise(q.problem, fraction * q.problem.noise.epsilon, q.seed * 1000003 + i));
      }
    }
    const HallucinationReport rep = eta_interval(q);
    json out = io::hallucination_report_to_json(rep);
    json recon_ids = json::array();
    for (const FiniteSet& s : rep.reconstructions) {
      json ids = json::array();
      for (const Tensor& t : s) ids.push_back(put_tensor(t));
      recon_ids.push_back(ids);
    }
    out["reconstruction_ids"] = recon_ids;
    json noise_ids = json::array();
    for (const Tensor& e : q.noise_samples) noise_ids.push_back(put_tensor(e));
    out["noise_ids"] = noise_ids;
    json checks = json::array();
    for (double e : j.value("etas", std::vector<double>{})) {
      checks.push_back({{"eta", e},
                        {"transfer", verify_detail_transfer(rep, e)},
                        {"iff", io::iff_conditions_to_json(check_iff_conditions(q, rep, e))}});
    }
    out["eta_checks"] = checks;
    return out;
  }

  json decode_route(const json& j) {
    const DecoderHandle h = decoder(require_string(j, "decoder"));
    const Tensor y = tensor_field(j, "y");
    const std::size_t count = j.value("count", h.sample_count);
    if (count < 1) throw ContractError("count must be >= 1");
    const FiniteSet out = h.decode(y, count, j.value("seed", std::uint64_t{0}));
    json ids = json::array();
    for (const Tensor& t : out) ids.push_back(put_tensor(t));
    return json{{"ids", ids}};
  }

  // --- jobs ----------------------------------------------------------------------------

  /// Job ids are digests of the request, so resubmitting returns the same job.
  std::string submit(const std::string& route, const json& request, std::function<json()> fn) {
    const std::string id = sha256_hex(route + "\n" + request.dump()).substr(0, 32);
    std::lock_guard<std::mutex> lock(job_mu);
    auto it = jobs.find(id);
    if (it != jobs.end() && it->second.status != "failed") return id;
    jobs[id] = Job{};
    queue.emplace_back(id, std::move(fn));
    job_cv.notify_one();
    return id;
  }

  void work() {
    while (true) {
      std::pair<std::string, std::function<json()>> item;
      {
        std::unique_lock<std::mutex> lock(job_mu);
        job_cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        item = std::move(queue.front());
        queue.pop_front();
        jobs[item.first].status = "running";
      }
      json result, error;
      try {
        result = item.second();
      } catch (const std::exception& e) {
        error = error_body(status_for(e), e.what());
      }
      std::lock_guard<std::mutex> lock(job_mu);
      Job& job = jobs[item.first];
      job.status = error.is_null() ? "done" : "failed";
      job.result = std::move(result);
      job.error = std::move(error);
    }
  }

  json job_status(const std::string& id) {
    std::lock_guard<std::mutex> lock(job_mu);
    auto it = jobs.find(id);
    if (it == jobs.end()) throw NotFoundError("unknown job id '" + id + "'");
    json out{{"id", id}, {"status", it->second.status}};
    if (it->second.status == "done") out["result"] = it->second.result;
    if (it->second.status == "failed") out["error"] = it->second.error;
    return out;
  }

  // --- registration (shared with the public API) ---------------------------------------

  void register_model(const std::string& id, io::ModelDescriptor d) {
    if (!d.model) throw ContractError("model '" + id + "' has no operator");
    d.noise.validate();
    std::unique_lock lock(registry_mu);
    models[id] = ModelEntry{std::move(d)};
  }

  void register_dataset(const std::string& id, PairedDataset ds, const std::string& model_id) {
    if (!model_id.empty()) model(model_id);
    ds.validate();
    std::unique_lock lock(registry_mu);
    datasets[id] = DatasetEntry{std::make_shared<const PairedDataset>(std::move(ds)), model_id};
  }

  void register_decoder(const std::string& id, DecoderHandle h) {
    if (!h.decoder) throw ContractError("decoder '" + id + "' is empty");
    std::unique_lock lock(registry_mu);
    decoders[id] = DecoderEntry{std::move(h)};
  }

  std::string put_tensor(const Tensor& t) { return put_bytes(htk::to_bytes(t)); }

  // --- routing -------------------------------------------------------------------------

  using JsonFn = std::function<json(const json&)>;

  httplib::Server::Handler json_route(JsonFn fn, int ok_status = 200) {
    return [fn = std::move(fn), ok_status](const httplib::Request& req, httplib::Response& res) {
      try {
        const json body = req.body.empty() ? json::object() : json::parse(req.body);
        send_json(res, ok_status, fn(body));
      } catch (const std::exception& e) {
        const int status = status_for(e);
        send_json(res, status, error_body(status, e.what()));
      }
    };
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      const int status = status_for(e);
      send_json(res, status, error_body(status, e.what()));
    }
  }

  void routes() {
    server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", options.cors_origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_payload_max_length(std::size_t{1} << 31);

    for (const std::string prefix : {"/api", "/api/v1"}) {
      server.Get(prefix + "/health", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, summary()); });
      });
      server.Post(prefix + "/models", json_route([this](const json& j) { return post_model(j); }, 201));
      server.Post(prefix + "/datasets", json_route([this](const json& j) { return post_dataset(j); }, 201));
      server.Post(prefix + "/decoders", json_route([this](const json& j) { return post_decoder(j); }, 201));
      server.Post(prefix + "/feasible-set", json_route([this](const json& j) { return feasible_set(j); }));
      server.Post(prefix + "/diameters", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
          const json j = req.body.empty() ? json::object() : json::parse(req.body);
          if (j.value("async", false)) {
            dataset(require_string(j, "dataset"));
            const std::string id = submit("diameters", j, [this, j] { return diameters_report(j); });
            send_json(res, 202, json{{"job", id}, {"status", job_status(id).at("status")}});
          } else {
            send_json(res, 200, diameters_report(j));
          }
        });
      });
      server.Get(prefix + R"(/jobs/([A-Za-z0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, job_status(req.matches[1])); });
      });
      server.Post(prefix + "/paste", json_route([this](const json& j) { return paste_route(j); }));
      server.Post(prefix + "/consistency", json_route([this](const json& j) { return consistency(j); }));
      server.Post(prefix + "/eta-interval", json_route([this](const json& j) { return eta(j); }));
      server.Post(prefix + "/decode", json_route([this](const json& j) { return decode_route(j); }));

      server.Post(prefix + "/tensor", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
          const std::string id = put_bytes(req.body);
          send_json(res, 201, json{{"id", id}});
        });
      });
      server.Get(prefix + R"(/tensor/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { res.set_content(get_bytes(req.matches[1]), "application/octet-stream"); });
      });
      server.Get(prefix + R"(/tensor/([^/]+)/meta)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
          const Tensor t = tensor(req.matches[1]);
          send_json(res, 200, json{{"id", req.matches[1]}, {"shape", t.shape()}, {"field", field_name(t.field())}});
        });
      });

      // Framed decoder endpoints: any registered decoder can serve as an
      // external HTTP decoder for another instance.
      server.Post(prefix + R"(/decoders/([^/]+)/decode)", [this](const httplib::Request& req, httplib::Response& res) {
        try {
          const DecoderHandle h = decoder(req.matches[1]);
          std::istringstream in(req.body);
          const wire::Request wr = wire::read_request(in);
          if (wr.op == "ping") {
            res.set_content(wire::encode_pong(), "application/octet-stream");
            return;
          }
          const FiniteSet out = h.decode(wr.y, wr.count, wr.seed);
          res.set_content(wire::encode_response(out.elements()), "application/octet-stream");
        } catch (const std::exception& e) {
          res.status = status_for(e);
          res.set_content(wire::encode_error(e.what()), "application/octet-stream");
        }
      });
      server.Get(prefix + R"(/decoders/([^/]+)/health)", [this](const httplib::Request& req, httplib::Response& res) {
        try {
          decoder(req.matches[1]);
          res.set_content(wire::encode_pong(), "application/octet-stream");
        } catch (const std::exception& e) {
          res.status = status_for(e);
          res.set_content(wire::encode_error(e.what()), "application/octet-stream");
        }
      });
    }

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_json(res, res.status, error_body(res.status, "no such route"));
    });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
Service::~Service() = default;

void Service::register_model(const std::string& id, io::ModelDescriptor model) {
  impl_->register_model(id, std::move(model));
}

void Service::register_dataset(const std::string& id, PairedDataset dataset, const std::string& model_id) {
  impl_->register_dataset(id, std::move(dataset), model_id);
}

void Service::register_dataset_file(const std::string& id, const fs::path& manifest, const std::string& model_id) {
  ModelPtr m = model_id.empty() ? nullptr : impl_->model(model_id).model;
  impl_->register_dataset(id, io::load_dataset(manifest, m.get()), model_id);
}

void Service::register_decoder(const std::string& id, DecoderHandle decoder) {
  impl_->register_decoder(id, std::move(decoder));
}

std::string Service::put_tensor(const Tensor& t) { return impl_->put_tensor(t); }
Tensor Service::get_tensor(const std::string& id) const { return impl_->tensor(id); }

void Service::listen() {
  if (!impl_->server.listen(impl_->options.host, impl_->options.port)) {
    throw Error("cannot listen on " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
}

int Service::start_background() {
  const int port = impl_->server.bind_to_any_port(impl_->options.host);
  if (port < 0) throw Error("cannot bind " + impl_->options.host);
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

}  // namespace halluc
