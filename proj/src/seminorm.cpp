#include "halluc/seminorm.hpp"

#include <algorithm>
#include <cmath>

namespace halluc {

std::size_t Box::count() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < start.size(); ++i) n *= stop[i] - start[i];
  return n;
}

bool Box::contains(std::span<const std::size_t> index) const {
  for (std::size_t i = 0; i < start.size(); ++i) {
    if (index[i] < start[i] || index[i] >= stop[i]) return false;
  }
  return true;
}

void Box::validate(const Shape& shape) const {
  if (start.size() != shape.size() || stop.size() != shape.size()) {
    throw ShapeError("region has " + std::to_string(start.size()) + " axes, tensor has " +
                     std::to_string(shape.size()));
  }
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (start[i] >= stop[i]) throw ShapeError("region is empty along axis " + std::to_string(i));
    if (stop[i] > shape[i]) {
      throw ShapeError("region [" + std::to_string(start[i]) + ", " + std::to_string(stop[i]) +
                       ") exceeds axis " + std::to_string(i) + " of shape " + shape_to_string(shape));
    }
  }
}

RegionSet::RegionSet(std::vector<Box> regions, bool normalize)
    : regions_(std::move(regions)), normalize_(normalize) {
  if (regions_.empty()) throw ContractError("region set must contain at least one region");
}

void RegionSet::validate(const Shape& shape) const {
  for (const Box& b : regions_) b.validate(shape);
}

bool RegionSet::covers(const Shape& shape) const {
  std::vector<char> hit(shape_numel(shape), 0);
  for (const Box& b : regions_) {
    for_each_in_box(shape, b, [&](std::size_t i) { hit[i] = 1; });
  }
  return std::all_of(hit.begin(), hit.end(), [](char c) { return c != 0; });
}

SeminormSpec SeminormSpec::lq(double q, bool normalize) {
  SeminormSpec s;
  s.p = q;
  s.q = q;
  s.normalize_whole = normalize;
  return s;
}

SeminormSpec SeminormSpec::with_regions(double p, double q, RegionSet regions) {
  SeminormSpec s;
  s.p = p;
  s.q = q;
  s.regions = std::move(regions);
  return s;
}

void SeminormSpec::validate() const {
  if (!(p >= 1.0) || !(q >= 1.0)) {
    throw ContractError("seminorm exponents must satisfy p, q >= 1 (got p=" + std::to_string(p) +
                        ", q=" + std::to_string(q) + ")");
  }
}

void SeminormSpec::validate_for(const Shape& shape) const {
  validate();
  if (regions) regions->validate(shape);
}

bool SeminormSpec::is_norm_on(const Shape& shape) const {
  return !regions || regions->covers(shape);
}

namespace {

// Streaming l^q aggregation of nonnegative values.
class Aggregator {
 public:
  explicit Aggregator(double exponent) : e_(exponent) {}

  void add(double v) {
    if (std::isinf(e_)) {
      acc_ = std::max(acc_, v);
    } else if (e_ == 1.0) {
      acc_ += v;
    } else if (e_ == 2.0) {
      acc_ += v * v;
    } else {
      acc_ += std::pow(v, e_);
    }
  }

  double result() const {
    if (std::isinf(e_) || e_ == 1.0) return acc_;
    if (e_ == 2.0) return std::sqrt(acc_);
    return std::pow(acc_, 1.0 / e_);
  }

 private:
  double e_;
  double acc_ = 0.0;
};

template <typename Diff>
double region_norm(const Shape& shape, const Box* box, std::size_t numel, double q,
                   bool normalize, const Diff& diff) {
  Aggregator agg(q);
  std::size_t count = numel;
  if (box) {
    for_each_in_box(shape, *box, [&](std::size_t i) { agg.add(diff(i)); });
    count = box->count();
  } else {
    for (std::size_t i = 0; i < numel; ++i) agg.add(diff(i));
  }
  double r = agg.result();
  if (normalize) r /= static_cast<double>(count);
  return r;
}

template <typename Diff>
double aggregate(const Shape& shape, std::size_t numel, const SeminormSpec& spec, const Diff& diff) {
  if (!spec.regions) {
    // A single region: the outer l^p aggregation is the identity.
    return region_norm(shape, nullptr, numel, spec.q, spec.normalize_whole, diff);
  }
  Aggregator outer(spec.p);
  for (const Box& b : spec.regions->regions()) {
    outer.add(region_norm(shape, &b, numel, spec.q, spec.regions->normalize(), diff));
  }
  return outer.result();
}

}  // namespace

double roi_seminorm(const Tensor& a, const Tensor& b, const SeminormSpec& spec) {
  require_same_shape(a, b, "roi_seminorm");
  spec.validate_for(a.shape());
  if (!a.is_complex() && !b.is_complex()) {
    auto x = a.real_values();
    auto y = b.real_values();
    return aggregate(a.shape(), a.size(), spec,
                     [&](std::size_t i) { return std::abs(x[i] - y[i]); });
  }
  return aggregate(a.shape(), a.size(), spec,
                   [&](std::size_t i) { return std::abs(a.value(i) - b.value(i)); });
}

double roi_seminorm(const Tensor& a, const SeminormSpec& spec) {
  spec.validate_for(a.shape());
  return aggregate(a.shape(), a.size(), spec, [&](std::size_t i) { return a.modulus(i); });
}

FiniteSet::FiniteSet(std::vector<Tensor> elements) : elements_(std::move(elements)) {
  if (elements_.empty()) throw ContractError("finite set must be non-empty");
  for (const Tensor& t : elements_) {
    require_same_shape(elements_.front(), t, "finite set");
    if (t.field() != elements_.front().field()) throw ShapeError("finite set mixes real and complex elements");
  }
}

FiniteSet FiniteSet::singleton(Tensor element) {
  std::vector<Tensor> v;
  v.push_back(std::move(element));
  return FiniteSet(std::move(v));
}

double hausdorff(const FiniteSet& a, const FiniteSet& b, const SeminormSpec& spec) {
  if (a.shape() != b.shape()) {
    throw ShapeError("hausdorff: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  std::vector<double> dist(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) dist[i * b.size() + j] = roi_seminorm(a[i], b[j], spec);
  }
  double h = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = kInf;
    for (std::size_t j = 0; j < b.size(); ++j) best = std::min(best, dist[i * b.size() + j]);
    h = std::max(h, best);
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    double best = kInf;
    for (std::size_t i = 0; i < a.size(); ++i) best = std::min(best, dist[i * b.size() + j]);
    h = std::max(h, best);
  }
  return h;
}

double point_to_set(const Tensor& x, const FiniteSet& b, const SeminormSpec& spec) {
  double worst = 0.0;
  for (const Tensor& u : b) worst = std::max(worst, roi_seminorm(u, x, spec));
  return worst;
}

double point_to_set_min(const Tensor& x, const FiniteSet& b, const SeminormSpec& spec) {
  double best = kInf;
  for (const Tensor& u : b) best = std::min(best, roi_seminorm(u, x, spec));
  return best;
}

double set_diameter(const FiniteSet& s, const SeminormSpec& spec) {
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) d = std::max(d, roi_seminorm(s[i], s[j], spec));
  }
  return d;
}

}  // namespace halluc
