#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "halluc/tensor.hpp"

namespace halluc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Axis-aligned half-open index box: start[i] <= idx[i] < stop[i].
struct Box {
  std::vector<std::size_t> start;
  std::vector<std::size_t> stop;

  std::size_t count() const;
  bool contains(std::span<const std::size_t> index) const;
  /// Throws ShapeError unless the box is non-empty and inside `shape`.
  void validate(const Shape& shape) const;

  bool operator==(const Box&) const = default;
};

/// Calls fn(flat_index) for every element of `box` in row-major order.
template <typename Fn>
void for_each_in_box(const Shape& shape, const Box& box, Fn&& fn);

class RegionSet {
 public:
  /// Throws ContractError for an empty region list.
  explicit RegionSet(std::vector<Box> regions, bool normalize = false);

  const std::vector<Box>& regions() const { return regions_; }
  bool normalize() const { return normalize_; }
  void validate(const Shape& shape) const;
  /// True when the union of regions covers every index of `shape`.
  bool covers(const Shape& shape) const;

 private:
  std::vector<Box> regions_;
  bool normalize_;
};

/// ||a - b||_{p,q,R} = (sum_R ||a - b||_{q,R}^p)^{1/p}.
///
/// Without a region set the whole tensor forms a single region; `normalize`
/// then divides by the total element count.
struct SeminormSpec {
  double p = 2.0;
  double q = 2.0;
  std::optional<RegionSet> regions;
  bool normalize_whole = false;

  static SeminormSpec lq(double q, bool normalize = false);
  static SeminormSpec with_regions(double p, double q, RegionSet regions);

  /// Throws ContractError unless p, q >= 1 (infinity allowed).
  void validate() const;
  void validate_for(const Shape& shape) const;
  /// Whether this is a norm (not merely a seminorm) on tensors of `shape`.
  bool is_norm_on(const Shape& shape) const;
};

double roi_seminorm(const Tensor& a, const Tensor& b, const SeminormSpec& spec);
/// Seminorm of a single tensor (distance to zero).
double roi_seminorm(const Tensor& a, const SeminormSpec& spec);

/// Non-empty list of equal-shaped tensors, e.g. the outputs of a set-valued
/// decoder.
class FiniteSet {
 public:
  explicit FiniteSet(std::vector<Tensor> elements);
  static FiniteSet singleton(Tensor element);

  const std::vector<Tensor>& elements() const { return elements_; }
  std::size_t size() const { return elements_.size(); }
  const Tensor& operator[](std::size_t i) const { return elements_[i]; }
  const Shape& shape() const { return elements_.front().shape(); }

  auto begin() const { return elements_.begin(); }
  auto end() const { return elements_.end(); }

 private:
  std::vector<Tensor> elements_;
};

/// max(max_a min_b ||a-b||, max_b min_a ||a-b||).
double hausdorff(const FiniteSet& a, const FiniteSet& b, const SeminormSpec& spec);
/// sup_{u in B} ||u - x||.
double point_to_set(const Tensor& x, const FiniteSet& b, const SeminormSpec& spec);
/// min_{u in B} ||u - x||.
double point_to_set_min(const Tensor& x, const FiniteSet& b, const SeminormSpec& spec);
/// max over pairs of ||u - v||; zero for singletons.
double set_diameter(const FiniteSet& s, const SeminormSpec& spec);

// --- implementation -------------------------------------------------------

template <typename Fn>
void for_each_in_box(const Shape& shape, const Box& box, Fn&& fn) {
  const std::size_t nd = shape.size();
  if (nd == 0) return;
  std::vector<std::size_t> strides(nd, 1);
  for (std::size_t i = nd - 1; i > 0; --i) strides[i - 1] = strides[i] * shape[i];
  std::vector<std::size_t> idx(box.start.begin(), box.start.end());
  const std::size_t run_start = box.start[nd - 1];
  const std::size_t run_stop = box.stop[nd - 1];
  while (true) {
    std::size_t base = 0;
    for (std::size_t i = 0; i + 1 < nd; ++i) base += idx[i] * strides[i];
    for (std::size_t j = run_start; j < run_stop; ++j) fn(base + j);
    if (nd == 1) return;
    std::size_t axis = nd - 2;
    while (true) {
      if (++idx[axis] < box.stop[axis]) break;
      idx[axis] = box.start[axis];
      if (axis == 0) return;
      --axis;
    }
  }
}

}  // namespace halluc
