#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "halluc/decoder.hpp"
#include "halluc/detail.hpp"
#include "halluc/feasible.hpp"
#include "halluc/forward_model.hpp"
#include "halluc/hallucination.hpp"
#include "halluc/seminorm.hpp"

namespace halluc::io {

using nlohmann::json;

inline constexpr const char* kFeasibilitySchema = "halluc.feasibility/1";
inline constexpr const char* kHallucinationSchema = "halluc.hallucination/1";
inline constexpr const char* kPasteSchema = "halluc.paste/1";
inline constexpr const char* kConvergenceSchema = "halluc.convergence/1";
inline constexpr const char* kDatasetSchema = "halluc.dataset/1";

json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
/// Pretty JSON with a trailing newline; key order is sorted, so equal
/// documents serialize to equal bytes.
std::string dump(const json& j);

// --- Seminorms -----------------------------------------------------------------------

/// "l1", "l2", "linf" (optionally suffixed "/n" for per-element
/// normalization) or a JSON object {p, q, normalize, regions: [{start, stop}]}.
SeminormSpec parse_norm_spec(const std::string& text);
SeminormSpec norm_spec_from_json(const json& j);
json norm_spec_to_json(const SeminormSpec& s);

Box box_from_json(const json& j);
json box_to_json(const Box& b);

// --- Models --------------------------------------------------------------------------

/// {kind, parameters, epsilon, norm_spec, slack?}. Matrix paths are relative
/// to `base_dir`.
struct ModelDescriptor {
  ModelPtr model;
  NoiseBall noise;
  json source;

  ForwardProblem problem() const { return ForwardProblem{model, noise}; }
};

ModelPtr model_from_json(const json& j, const std::filesystem::path& base_dir);
ModelDescriptor descriptor_from_json(const json& j, const std::filesystem::path& base_dir);
ModelDescriptor load_model_descriptor(const std::filesystem::path& path);
json model_to_json(const LinearForwardModel& model);

// --- Datasets ------------------------------------------------------------------------

/// Manifest forms:
///   {"schema", "xs": file, "fxs"?: file, "ys"?: file | "self", "ids"?: [...]}
///   with stacked tensors, or
///   {"schema", "samples": [{"id", "x", "fx"?}], "probes"?: [{"id", "y"}]}.
/// Without fxs the model computes them; "ys": "self" probes every fx.
PairedDataset load_dataset(const std::filesystem::path& manifest, const LinearForwardModel* model, unsigned jobs = 1);
PairedDataset dataset_from_json(const json& j, const std::filesystem::path& base_dir, const LinearForwardModel* model,
                                unsigned jobs = 1);
/// Writes stacked xs/fxs/ys tensors next to the manifest.
void save_dataset(const std::filesystem::path& manifest, const PairedDataset& ds);

// --- Decoders ------------------------------------------------------------------------

/// {kind: tikhonov|nearest_feasible|feasible_mean|constant|external_subprocess|
///  external_http, ...}. Dataset decoders need `dataset`; tikhonov needs a
/// model. External decoders honour HALLUC_CACHE_DIR.
DecoderHandle decoder_from_json(const json& j, const std::filesystem::path& base_dir, const ModelPtr& model,
                                std::shared_ptr<const PairedDataset> dataset, const NoiseBall& noise);

// --- Reports -------------------------------------------------------------------------

json feasibility_report_to_json(const FeasibilityReport& r, const PairedDataset& ds);
/// CSV rows: k,probe_id,members,diameter,witness_a,witness_b.
std::string feasibility_report_to_csv(const FeasibilityReport& r, const PairedDataset& ds);
json hallucination_report_to_json(const HallucinationReport& r);
json paste_result_to_json(const PasteResult& r);
json convergence_table_to_json(const ConvergenceTable& t);
std::string convergence_table_to_csv(const ConvergenceTable& t);
json inevitability_report_to_json(const InevitabilityReport& r);
json certificate_to_json(const Certificate& c);
json iff_conditions_to_json(const IffConditions& c);

}  // namespace halluc::io
