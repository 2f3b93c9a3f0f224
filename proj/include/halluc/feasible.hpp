#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "halluc/forward_model.hpp"
#include "halluc/seminorm.hpp"
#include "halluc/tensor.hpp"

namespace halluc {

/// Samples (x_n, f x_n), n < N, plus probe measurements y_k, k < K.
///
/// In model mode fxs are computed from xs; in tuple mode they are supplied
/// and f is only known implicitly through the pairs.
struct PairedDataset {
  std::vector<Tensor> xs;
  std::vector<Tensor> fxs;
  std::vector<Tensor> ys;
  std::vector<std::string> ids;
  std::vector<std::string> probe_ids;
  bool tuple_mode = false;

  static PairedDataset from_model(std::vector<Tensor> xs, const LinearForwardModel& model, std::vector<Tensor> ys,
                                  std::vector<std::string> ids = {}, unsigned jobs = 1);
  static PairedDataset from_tuples(std::vector<Tensor> xs, std::vector<Tensor> fxs, std::vector<Tensor> ys,
                                   std::vector<std::string> ids = {});

  std::size_t n_samples() const { return xs.size(); }
  std::size_t n_probes() const { return ys.size(); }

  /// Shapes, fields and ids. In tuple mode repeated xs must carry identical
  /// fxs, otherwise the pairs do not describe a map.
  void validate() const;
};

/// Boolean N x K matrix stored as sorted member lists per column.
class MembershipMatrix {
 public:
  MembershipMatrix() = default;
  MembershipMatrix(std::size_t n_rows, std::vector<std::vector<std::uint32_t>> columns);

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<std::uint32_t>& column(std::size_t k) const { return columns_.at(k); }
  bool at(std::size_t n, std::size_t k) const;
  std::size_t nnz() const;
  /// Dense row-major copy, mainly for tests and small exports.
  std::vector<std::vector<bool>> dense() const;

  bool operator==(const MembershipMatrix&) const = default;

 private:
  std::size_t n_rows_ = 0;
  std::vector<std::vector<std::uint32_t>> columns_;
};

/// Symmetric boolean N x N matrix Com = FA FA^T, stored as sorted adjacency
/// rows (each non-empty row contains its own index).
class CoMembership {
 public:
  CoMembership() = default;
  explicit CoMembership(std::vector<std::vector<std::uint32_t>> rows) : rows_(std::move(rows)) {}

  std::size_t size() const { return rows_.size(); }
  const std::vector<std::uint32_t>& row(std::size_t n) const { return rows_.at(n); }
  bool at(std::size_t n, std::size_t m) const;
  std::size_t nnz() const;

 private:
  std::vector<std::vector<std::uint32_t>> rows_;
};

/// Symmetric distances D_nm, present only where Com is set. Rows are
/// sorted by column index.
class SparseDistances {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  SparseDistances() = default;
  explicit SparseDistances(std::vector<std::vector<Entry>> rows) : rows_(std::move(rows)) {}

  std::size_t size() const { return rows_.size(); }
  const std::vector<Entry>& row(std::size_t n) const { return rows_.at(n); }
  std::optional<double> at(std::size_t n, std::size_t m) const;
  std::size_t nnz() const;

 private:
  std::vector<std::vector<Entry>> rows_;
};

struct DiameterResult {
  std::vector<double> values;
  std::vector<std::optional<std::pair<std::uint32_t, std::uint32_t>>> witnesses;
};

/// FA[n][k] = ||fxs[n] - ys[k]|| < epsilon + slack under the noise norm.
MembershipMatrix compute_feasibility(const PairedDataset& ds, const NoiseBall& noise, unsigned jobs = 1);
MembershipMatrix compute_feasibility(const PairedDataset& ds, const ForwardProblem& problem, unsigned jobs = 1);

CoMembership co_membership(const MembershipMatrix& fa);

SparseDistances pairwise_distances(const PairedDataset& ds, const CoMembership& com, const SeminormSpec& x_spec,
                                   unsigned jobs = 1);

/// d_k = max D over pairs of members of column k; the witness is the
/// lexicographically smallest maximizing pair (none below two members).
DiameterResult diameters(const MembershipMatrix& fa, const SparseDistances& d);

double kernel_size(const std::vector<double>& diameters);

struct FeasibilityReport {
  double epsilon = 0.0;
  MembershipMatrix fa;
  SparseDistances d;
  std::vector<double> diameters;
  std::vector<std::optional<std::pair<std::uint32_t, std::uint32_t>>> witnesses;
  double kersize = 0.0;
  /// Columns with an empty feasible set: no conclusion can be drawn there.
  std::vector<bool> no_conclusion;

  std::size_t no_conclusion_count() const;
};

/// Membership, distances, diameters and kernel size end to end.
FeasibilityReport analyze(const PairedDataset& ds, const NoiseBall& noise, const SeminormSpec& x_spec,
                          unsigned jobs = 1);

// --- Patchification -----------------------------------------------------------

struct PatchOptions {
  std::size_t hr_patch = 16;
  std::size_t lr_patch = 4;
  std::size_t bands = 4;
};

/// Splits aligned (bands, H, W) / (bands, H/s, W/s) image pairs into
/// non-overlapping patch pairs, s = hr_patch / lr_patch. Ids read
/// "img<i>_r<row>_c<col>" with grid coordinates in patch units. Probes are
/// the LR patches themselves.
PairedDataset patchify(const std::vector<Tensor>& hr_images, const std::vector<Tensor>& lr_images,
                       const PatchOptions& options = {});

/// Crops `box` out of `t` (same rank).
Tensor crop(const Tensor& t, const Box& box);

// --- Convergence harness ------------------------------------------------------

/// Sampler for a synthetic model set M1 with a reference diameter oracle.
struct SyntheticSet {
  std::string name;
  Shape shape;
  std::function<Tensor(std::mt19937_64&)> draw;
  /// Reference diam(F_y) for probe y under the given noise and x norm.
  std::function<double(const Tensor& y, const NoiseBall&, const SeminormSpec&)> reference_diameter;
};

/// Unit circle in R^2 with uniform angle; the forward map of
/// make_first_coordinate_model() keeps the first coordinate.
SyntheticSet make_circle_set();
ModelPtr make_first_coordinate_model();
SyntheticSet synthetic_set_by_name(const std::string& name);

struct ConvergenceRow {
  std::size_t n = 0;
  std::vector<double> diameters;
  double max_gap = 0.0;
};

struct ConvergenceTable {
  std::vector<double> reference;
  std::vector<ConvergenceRow> rows;
  /// diam^N_k <= reference_k for every row and probe.
  bool from_below = true;
  /// diam^N_k nondecreasing along the schedule for every probe.
  bool monotone = true;
};

/// Runs the feasibility pipeline on nested prefixes of one stream of draws.
/// `schedule` must be strictly increasing.
ConvergenceTable convergence_experiment(const SyntheticSet& set, const ForwardProblem& problem,
                                        const std::vector<Tensor>& ys, const std::vector<std::size_t>& schedule,
                                        std::uint64_t seed, const SeminormSpec& x_spec, unsigned jobs = 1);

}  // namespace halluc
