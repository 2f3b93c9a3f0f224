#include "halluc/hallucination.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "halluc/parallel.hpp"

namespace halluc {

std::vector<bool> check_consistency(const Tensor& y, const FiniteSet& recon, const ForwardProblem& problem) {
  const auto& model = problem.require_model();
  if (recon.shape() != model.input_shape()) {
    throw ShapeError("check_consistency: reconstruction shape " + shape_to_string(recon.shape()) +
                     " does not match model input " + shape_to_string(model.input_shape()));
  }
  std::vector<bool> out;
  out.reserve(recon.size());
  for (const Tensor& z : recon) out.push_back(problem.noise.contains_difference(model.apply(z), y));
  return out;
}

bool all_consistent(const Tensor& y, const FiniteSet& recon, const ForwardProblem& problem) {
  auto flags = check_consistency(y, recon, problem);
  return std::all_of(flags.begin(), flags.end(), [](bool b) { return b; });
}

InvisibilityResult invisibility_check(const Tensor& x, const Tensor& x_det, const ForwardProblem& problem) {
  const auto& model = problem.require_model();
  require_same_shape(x, x_det, "invisibility_check");
  InvisibilityResult r;
  r.value = roi_seminorm(model.apply(x + x_det), model.apply(x), problem.noise.norm);
  r.bound = 2.0 * problem.noise.epsilon;
  r.passes = r.value <= r.bound;
  return r;
}

// --- eta interval --------------------------------------------------------------------

void HallucinationQuery::validate() const {
  const auto& model = problem.require_model();
  problem.validate();
  if (x.shape() != model.input_shape()) {
    throw ShapeError("query: x has shape " + shape_to_string(x.shape()) + ", model expects " +
                     shape_to_string(model.input_shape()));
  }
  require_same_shape(x, x_det, "query x_det");
  x.require_finite("x");
  x_det.require_finite("x_det");
  x_spec.validate_for(x.shape());
  if (!decoder.decoder) throw ContractError("query has no decoder");
  if (membership_tol && !(*membership_tol >= 0.0)) throw ContractError("membership tolerance must be nonnegative");
  for (std::size_t i = 0; i < noise_samples.size(); ++i) {
    const Tensor& e = noise_samples[i];
    if (e.shape() != model.output_shape()) {
      throw ShapeError("noise sample " + std::to_string(i) + " has shape " + shape_to_string(e.shape()));
    }
    if (!problem.noise.contains(e)) {
      throw ContractError("noise sample " + std::to_string(i) + " is not strictly inside the noise ball");
    }
  }
}

double HallucinationQuery::tolerance() const {
  return membership_tol ? *membership_tol : 1e-6 * roi_seminorm(x_det, x_spec);
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kHallucinates: return "hallucinates";
    case Verdict::kDoesNot: return "does_not";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "unknown";
}

HallucinationReport eta_interval(const HallucinationQuery& q) {
  q.validate();
  const auto& model = q.problem.require_model();
  const Tensor target = q.x + q.x_det;
  const Tensor fx = model.apply(q.x);

  HallucinationReport r;
  r.det_norm = roi_seminorm(q.x_det, q.x_spec);
  r.membership_tol = q.tolerance();
  r.invisibility = invisibility_check(q.x, q.x_det, q.problem);

  const std::size_t n = q.noise_samples.size();
  r.per_sample.resize(n);
  std::vector<std::optional<FiniteSet>> sets(n);
  parallel_for(n, q.jobs, [&](std::size_t i) {
    const Tensor y = fx + q.noise_samples[i];
    FiniteSet recon = [&] {
      try {
        return q.decoder.decode(y, q.seed + i);
      } catch (const DecoderError& e) {
        throw DecoderError("noise sample " + std::to_string(i) + ": " + e.what(), e.unavailable());
      }
    }();
    if (recon.shape() != q.x.shape()) {
      throw DecoderError("noise sample " + std::to_string(i) + ": reconstruction shape " +
                         shape_to_string(recon.shape()) + " differs from x");
    }
    SampleRecord& s = r.per_sample[i];
    s.consistent = all_consistent(y, recon, q.problem);
    s.d_to_x = point_to_set(q.x, recon, q.x_spec);
    s.d_to_x_plus_det = point_to_set(target, recon, q.x_spec);
    s.membership_distance = point_to_set_min(target, recon, q.x_spec);
    s.retained = s.d_to_x_plus_det < s.d_to_x;
    sets[i] = std::move(recon);
  });
  for (auto& s : sets) r.reconstructions.push_back(std::move(*s));

  bool all_retained_consistent = true;
  for (std::size_t i = 0; i < n; ++i) {
    const SampleRecord& s = r.per_sample[i];
    if (!s.retained) continue;
    if (r.retained_V.empty()) {
      r.eta_min = s.d_to_x_plus_det;
      r.eta_max = s.d_to_x;
    } else {
      r.eta_min = std::max(r.eta_min, s.d_to_x_plus_det);
      r.eta_max = std::min(r.eta_max, s.d_to_x);
    }
    r.retained_V.push_back(i);
    if (s.membership_distance <= r.membership_tol) r.membership_found = true;
    if (!s.consistent) all_retained_consistent = false;
  }
  r.interval_nonempty = !r.retained_V.empty() && r.eta_min <= r.eta_max && r.eta_max > 0.0;

  if (n == 0) {
    r.verdict = Verdict::kInconclusive;
    r.verdict_reason = "no noise samples supplied";
  } else if (r.retained_V.empty()) {
    r.verdict = Verdict::kDoesNot;
    r.verdict_reason = "no reconstruction is closer to x + x_det than to x";
  } else if (!all_retained_consistent) {
    r.verdict = Verdict::kInconclusive;
    r.verdict_reason = "decoder is inconsistent on a retained sample";
  } else if (!r.membership_found) {
    r.verdict = Verdict::kDoesNot;
    r.verdict_reason = "x + x_det is not among the reconstructions";
  } else if (!r.interval_nonempty) {
    r.verdict = Verdict::kDoesNot;
    r.verdict_reason = "hallucination size interval is empty";
  } else {
    r.verdict = Verdict::kHallucinates;
    r.verdict_reason = "detail transferred for every eta in [eta_min, eta_max]";
  }
  r.invisibility_violation = r.verdict == Verdict::kHallucinates && !r.invisibility.passes;
  return r;
}

bool verify_detail_transfer(const HallucinationReport& report, double eta) {
  if (!(eta > 0.0)) throw ContractError("verify_detail_transfer: eta must be positive");
  bool member = false;
  for (std::size_t i : report.retained_V) {
    const SampleRecord& s = report.per_sample[i];
    if (!(s.d_to_x_plus_det <= eta)) return false;
    if (!(s.d_to_x >= eta)) return false;
    if (s.membership_distance <= report.membership_tol) member = true;
  }
  return member;
}

bool verify_detail_transfer(const HallucinationQuery& q, double eta) {
  return verify_detail_transfer(eta_interval(q), eta);
}

IffConditions check_iff_conditions(const HallucinationQuery& q, const HallucinationReport& report, double eta) {
  const auto& model = q.problem.require_model();
  const Tensor target = q.x + q.x_det;
  const Tensor f_target = model.apply(target);
  const Tensor e_shift = f_target - model.apply(q.x);

  IffConditions c;
  c.applicable = eta > 0.0 && eta <= report.det_norm / 2.0;
  c.cond_ii = true;
  for (std::size_t i : report.retained_V) {
    const Tensor e = q.noise_samples[i] - e_shift;
    const bool in_ball = q.problem.noise.contains(e);
    const FiniteSet recon = q.decoder.decode(f_target + e, q.seed + i);
    if (point_to_set(target, recon, q.x_spec) > eta) c.cond_ii = false;
    if (in_ball) {
      ++c.shifted_in_ball;
      if (point_to_set_min(target, recon, q.x_spec) <= report.membership_tol) c.cond_i = true;
    }
  }
  return c;
}

IffConditions check_iff_conditions(const HallucinationQuery& q, double eta) {
  return check_iff_conditions(q, eta_interval(q), eta);
}

// --- Bounds --------------------------------------------------------------------------

std::string error_branch_name(ErrorBranch b) {
  switch (b) {
    case ErrorBranch::kNone: return "none";
    case ErrorBranch::kInconsistent: return "inconsistent";
    case ErrorBranch::kUnrealistic: return "unrealistic";
    case ErrorBranch::kContradiction: return "contradiction";
  }
  return "unknown";
}

ErrorDiameterResult error_vs_diameter(const Tensor& x, const Tensor& y, const FiniteSet& recon, double diam_y,
                                      const ForwardProblem& problem, const SeminormSpec& x_spec,
                                      const std::function<bool(const Tensor&)>& is_realistic) {
  if (!(diam_y >= 0.0)) throw ContractError("error_vs_diameter: diameter must be nonnegative");
  ErrorDiameterResult r;
  r.diameter = diam_y;
  r.error = point_to_set(x, recon, x_spec);
  if (r.error <= diam_y) return r;
  if (!all_consistent(y, recon, problem)) {
    r.branch = ErrorBranch::kInconsistent;
  } else if (is_realistic && std::all_of(recon.begin(), recon.end(), is_realistic)) {
    r.branch = ErrorBranch::kContradiction;
  } else {
    r.branch = ErrorBranch::kUnrealistic;
  }
  return r;
}

Certificate no_large_hallucination_certificate(double kersize_estimate, double eta) {
  if (!(kersize_estimate >= 0.0)) throw ContractError("certificate: kersize must be nonnegative");
  if (!(eta > 0.0)) throw ContractError("certificate: eta must be positive");
  Certificate c;
  c.eta = eta;
  c.kersize_estimate = kersize_estimate;
  c.issued = eta > kersize_estimate;
  std::ostringstream s;
  s.precision(6);
  if (c.issued) {
    s << "No consistent decoder with realistic outputs can transfer a detail of size eta = " << eta
      << " > Kersize. Caveat: the dataset value " << kersize_estimate
      << " is a lower bound of the true Kersize, so the statement holds only if eta also exceeds the true value.";
  } else {
    s << "No certificate: eta = " << eta << " does not exceed the Kersize estimate " << kersize_estimate << ".";
  }
  c.statement = s.str();
  return c;
}

std::vector<double> eta_grid(double diam_estimate, std::size_t points) {
  if (!(diam_estimate > 0.0)) throw ContractError("eta grid needs a positive diameter");
  if (points < 2) throw ContractError("eta grid needs at least two points");
  const double top = diam_estimate / 2.0;
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    grid[i] = top * std::pow(10.0, -3.0 * (1.0 - t));
  }
  grid.back() = top;
  return grid;
}

InevitabilityReport inevitability_check(const Tensor& y, double diam_y_estimate, const DecoderHandle& decoder,
                                        const ForwardProblem& problem, const std::vector<Tensor>& stability_probes,
                                        const SeminormSpec& x_spec, std::uint64_t seed) {
  if (!(diam_y_estimate > 0.0)) throw ContractError("inevitability_check: diameter estimate must be positive");
  InevitabilityReport r;
  r.diam_estimate = diam_y_estimate;
  r.lower_bound = diam_y_estimate / 2.0;

  const FiniteSet recon = decoder.decode(y, seed);
  r.decoder_consistent = all_consistent(y, recon, problem);
  r.recon_diameter = set_diameter(recon, x_spec);

  if (!stability_probes.empty()) {
    std::vector<FiniteSet> perturbed;
    for (std::size_t i = 0; i < stability_probes.size(); ++i) {
      perturbed.push_back(decoder.decode(y + stability_probes[i], seed + 1 + i));
    }
    double best = kInf;
    for (const Tensor& z : recon) {
      double worst = 0.0;
      for (const FiniteSet& p : perturbed) worst = std::max(worst, point_to_set(z, p, x_spec));
      best = std::min(best, worst);
    }
    r.stability_sup = best;
  }

  for (double eta : eta_grid(diam_y_estimate)) {
    InevitabilityRow row;
    row.eta = eta;
    row.branch_i = r.stability_sup && *r.stability_sup <= eta;
    row.branch_ii = r.decoder_consistent && r.recon_diameter <= eta;
    if ((row.branch_i || row.branch_ii) && !r.first_firing_eta) {
      r.first_firing_eta = eta;
      r.firing_branch = row.branch_i && row.branch_ii ? "i+ii" : (row.branch_i ? "i" : "ii");
    }
    r.grid.push_back(row);
  }
  return r;
}

double worst_case_error(const FiniteSet& feasible, const FiniteSet& recon, const SeminormSpec& x_spec) {
  double worst = 0.0;
  for (const Tensor& x : feasible) worst = std::max(worst, point_to_set(x, recon, x_spec));
  return worst;
}

}  // namespace halluc
