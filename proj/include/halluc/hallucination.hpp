#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "halluc/decoder.hpp"
#include "halluc/forward_model.hpp"
#include "halluc/seminorm.hpp"

namespace halluc {

/// z passes iff ||f z - y|| < epsilon + slack.
std::vector<bool> check_consistency(const Tensor& y, const FiniteSet& recon, const ForwardProblem& problem);
bool all_consistent(const Tensor& y, const FiniteSet& recon, const ForwardProblem& problem);

struct InvisibilityResult {
  /// ||f(x + x_det) - f(x)|| in the measurement norm.
  double value = 0.0;
  double bound = 0.0;  // 2 epsilon
  bool passes = false;
};

InvisibilityResult invisibility_check(const Tensor& x, const Tensor& x_det, const ForwardProblem& problem);

struct HallucinationQuery {
  Tensor x;
  Tensor x_det;
  /// Candidate noise vectors; all must lie strictly inside the noise ball.
  std::vector<Tensor> noise_samples;
  DecoderHandle decoder;
  ForwardProblem problem;
  SeminormSpec x_spec = SeminormSpec::lq(2.0);
  /// Membership tolerance for x + x_det in a reconstruction set; defaults
  /// to 1e-6 ||x_det||.
  std::optional<double> membership_tol;
  /// Sample i is decoded with seed + i.
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  void validate() const;
  double tolerance() const;
};

enum class Verdict { kHallucinates, kDoesNot, kInconclusive };
std::string verdict_name(Verdict v);

struct SampleRecord {
  bool consistent = false;
  /// d(x, phi(f x + e)) = sup over the set.
  double d_to_x = 0.0;
  double d_to_x_plus_det = 0.0;
  /// min over the set of ||z - (x + x_det)||.
  double membership_distance = 0.0;
  bool retained = false;
};

struct HallucinationReport {
  double eta_min = 0.0;
  double eta_max = 0.0;
  std::vector<std::size_t> retained_V;
  std::vector<SampleRecord> per_sample;
  InvisibilityResult invisibility;
  double det_norm = 0.0;
  double membership_tol = 0.0;
  bool membership_found = false;
  bool interval_nonempty = false;
  Verdict verdict = Verdict::kInconclusive;
  std::string verdict_reason;
  /// phi(y) subset of M1 is never machine-checked.
  bool realism_unchecked = true;
  /// A positive verdict from a consistent decoder with ||e(x, x_det)|| > 2 eps.
  bool invisibility_violation = false;
  std::vector<FiniteSet> reconstructions;
};

/// Decodes f x + e for every candidate, keeps the samples whose
/// reconstruction set is closer to x + x_det than to x and computes
/// eta_min = max d(phi, x + x_det), eta_max = min d(phi, x) over them.
/// With no candidates the verdict is inconclusive; when candidates exist but
/// none is retained the decoder does not transfer the detail.
HallucinationReport eta_interval(const HallucinationQuery& q);

/// Clause-by-clause evaluation over the retained samples: for all e,
/// d(phi, x + x_det) <= eta and d(phi, x) >= eta, and x + x_det is in some
/// reconstruction set.
bool verify_detail_transfer(const HallucinationReport& report, double eta);
bool verify_detail_transfer(const HallucinationQuery& q, double eta);

struct IffConditions {
  bool cond_i = false;
  bool cond_ii = false;
  bool applicable = false;
  /// Shifted samples e - e(x, x_det) that lie inside the noise ball.
  std::size_t shifted_in_ball = 0;
};

/// Evaluates both conditions on {-e(x, x_det)} + V for the retained V of
/// `report`, decoding phi(f(x + x_det) + e') afresh.
IffConditions check_iff_conditions(const HallucinationQuery& q, const HallucinationReport& report, double eta);
IffConditions check_iff_conditions(const HallucinationQuery& q, double eta);

enum class ErrorBranch { kNone, kInconsistent, kUnrealistic, kContradiction };
std::string error_branch_name(ErrorBranch b);

struct ErrorDiameterResult {
  double error = 0.0;
  double diameter = 0.0;
  ErrorBranch branch = ErrorBranch::kNone;
};

/// When d(x, phi(y)) exceeds a trusted diam(F_y) the reconstruction must be
/// inconsistent or unrealistic. With a realism oracle a consistent and
/// realistic set yields kContradiction, which means diam_y was not trusted.
ErrorDiameterResult error_vs_diameter(const Tensor& x, const Tensor& y, const FiniteSet& recon, double diam_y,
                                      const ForwardProblem& problem, const SeminormSpec& x_spec,
                                      const std::function<bool(const Tensor&)>& is_realistic = {});

struct Certificate {
  bool issued = false;
  double eta = 0.0;
  double kersize_estimate = 0.0;
  /// The dataset kersize is a lower bound of the true one.
  bool lower_bound_caveat = true;
  std::string statement;
};

Certificate no_large_hallucination_certificate(double kersize_estimate, double eta);

struct InevitabilityRow {
  double eta = 0.0;
  bool branch_i = false;
  bool branch_ii = false;
};

struct InevitabilityReport {
  double diam_estimate = 0.0;
  /// diam / 2: no decoder has smaller worst-case error on F_y.
  double lower_bound = 0.0;
  bool decoder_consistent = false;
  double recon_diameter = 0.0;
  /// min over z in phi(y) of max over probes of d(phi(y + e), z); absent
  /// without probes.
  std::optional<double> stability_sup;
  std::vector<InevitabilityRow> grid;
  std::optional<double> first_firing_eta;
  std::string firing_branch;
};

/// 32 log-spaced points in (0, diam/2], from 1e-3 diam/2 up to diam/2.
std::vector<double> eta_grid(double diam_estimate, std::size_t points = 32);

InevitabilityReport inevitability_check(const Tensor& y, double diam_y_estimate, const DecoderHandle& decoder,
                                        const ForwardProblem& problem, const std::vector<Tensor>& stability_probes,
                                        const SeminormSpec& x_spec, std::uint64_t seed = 0);

/// max over x in `feasible` of d(x, recon).
double worst_case_error(const FiniteSet& feasible, const FiniteSet& recon, const SeminormSpec& x_spec);

}  // namespace halluc
