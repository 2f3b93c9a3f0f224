#include "halluc/feasible.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string_view>
#include <unordered_map>

#include "halluc/parallel.hpp"

namespace halluc {

namespace {

std::vector<std::string> default_ids(std::size_t n, const char* prefix) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = prefix + std::to_string(i);
  return ids;
}

void require_homogeneous(const std::vector<Tensor>& ts, const char* what) {
  for (const Tensor& t : ts) {
    if (t.shape() != ts.front().shape() || t.field() != ts.front().field()) {
      throw ShapeError(std::string(what) + ": expected " + shape_to_string(ts.front().shape()) + " " +
                       field_name(ts.front().field()) + ", got " + shape_to_string(t.shape()) + " " +
                       field_name(t.field()));
    }
    t.require_finite(what);
  }
}

std::size_t payload_hash(const Tensor& t) {
  if (t.is_complex()) {
    auto v = t.complex_values();
    return std::hash<std::string_view>{}(
        std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(Complex)));
  }
  auto v = t.real_values();
  return std::hash<std::string_view>{}(
      std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)));
}

}  // namespace

// --- PairedDataset ---------------------------------------------------------------------

PairedDataset PairedDataset::from_model(std::vector<Tensor> xs, const LinearForwardModel& model,
                                        std::vector<Tensor> ys, std::vector<std::string> ids, unsigned jobs) {
  PairedDataset ds;
  ds.fxs.resize(xs.size());
  parallel_for(xs.size(), jobs, [&](std::size_t i) { ds.fxs[i] = model.apply(xs[i]); });
  ds.xs = std::move(xs);
  ds.ys = std::move(ys);
  ds.ids = ids.empty() ? default_ids(ds.xs.size(), "x") : std::move(ids);
  ds.probe_ids = default_ids(ds.ys.size(), "y");
  ds.tuple_mode = false;
  ds.validate();
  return ds;
}

PairedDataset PairedDataset::from_tuples(std::vector<Tensor> xs, std::vector<Tensor> fxs, std::vector<Tensor> ys,
                                         std::vector<std::string> ids) {
  PairedDataset ds;
  ds.xs = std::move(xs);
  ds.fxs = std::move(fxs);
  ds.ys = std::move(ys);
  ds.ids = ids.empty() ? default_ids(ds.xs.size(), "x") : std::move(ids);
  ds.probe_ids = default_ids(ds.ys.size(), "y");
  ds.tuple_mode = true;
  ds.validate();
  return ds;
}

void PairedDataset::validate() const {
  if (xs.empty()) throw ContractError("dataset has no samples");
  if (fxs.size() != xs.size()) {
    throw ContractError("dataset has " + std::to_string(xs.size()) + " signals but " +
                        std::to_string(fxs.size()) + " measurements");
  }
  if (ids.size() != xs.size()) throw ContractError("dataset id list does not match the sample count");
  if (probe_ids.size() != ys.size()) throw ContractError("probe id list does not match the probe count");
  require_homogeneous(xs, "dataset signal");
  require_homogeneous(fxs, "dataset measurement");
  if (!ys.empty()) {
    require_homogeneous(ys, "probe measurement");
    if (ys.front().shape() != fxs.front().shape()) {
      throw ShapeError("probe shape " + shape_to_string(ys.front().shape()) + " differs from measurement shape " +
                       shape_to_string(fxs.front().shape()));
    }
  }
  if (!tuple_mode) return;
  std::unordered_map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto& bucket = buckets[payload_hash(xs[i])];
    for (std::size_t j : bucket) {
      if (xs[j].identical(xs[i]) && !fxs[j].identical(fxs[i])) {
        throw ContractError("samples '" + ids[j] + "' and '" + ids[i] +
                            "' have equal signals but different measurements");
      }
    }
    bucket.push_back(i);
  }
}

// --- Sparse containers -----------------------------------------------------------------

MembershipMatrix::MembershipMatrix(std::size_t n_rows, std::vector<std::vector<std::uint32_t>> columns)
    : n_rows_(n_rows), columns_(std::move(columns)) {}

bool MembershipMatrix::at(std::size_t n, std::size_t k) const {
  const auto& c = columns_.at(k);
  return std::binary_search(c.begin(), c.end(), static_cast<std::uint32_t>(n));
}

std::size_t MembershipMatrix::nnz() const {
  std::size_t s = 0;
  for (const auto& c : columns_) s += c.size();
  return s;
}

std::vector<std::vector<bool>> MembershipMatrix::dense() const {
  std::vector<std::vector<bool>> out(n_rows_, std::vector<bool>(columns_.size(), false));
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    for (std::uint32_t n : columns_[k]) out[n][k] = true;
  }
  return out;
}

bool CoMembership::at(std::size_t n, std::size_t m) const {
  const auto& r = rows_.at(n);
  return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(m));
}

std::size_t CoMembership::nnz() const {
  std::size_t s = 0;
  for (const auto& r : rows_) s += r.size();
  return s;
}

std::optional<double> SparseDistances::at(std::size_t n, std::size_t m) const {
  const auto& r = rows_.at(n);
  auto it = std::lower_bound(r.begin(), r.end(), static_cast<std::uint32_t>(m),
                             [](const Entry& e, std::uint32_t v) { return e.first < v; });
  if (it == r.end() || it->first != m) return std::nullopt;
  return it->second;
}

std::size_t SparseDistances::nnz() const {
  std::size_t s = 0;
  for (const auto& r : rows_) s += r.size();
  return s;
}

// --- Membership and co-membership ------------------------------------------------------

MembershipMatrix compute_feasibility(const PairedDataset& ds, const NoiseBall& noise, unsigned jobs) {
  noise.validate();
  if (ds.fxs.empty()) throw ContractError("dataset has no samples");
  noise.norm.validate_for(ds.fxs.front().shape());
  for (const Tensor& y : ds.ys) require_same_shape(ds.fxs.front(), y, "compute_feasibility");

  const std::size_t n = ds.fxs.size();
  const double radius = noise.epsilon + noise.slack;

  // Reverse triangle inequality: ||a - b|| < r implies | ||a|| - ||b|| | < r.
  std::vector<double> norms(n);
  parallel_for(n, jobs, [&](std::size_t i) { norms[i] = roi_seminorm(ds.fxs[i], noise.norm); });
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return norms[a] < norms[b] || (norms[a] == norms[b] && a < b);
  });
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = norms[order[i]];
  const double max_norm = sorted.back();

  std::vector<std::vector<std::uint32_t>> columns(ds.ys.size());
  parallel_for(ds.ys.size(), jobs, [&](std::size_t k) {
    const Tensor& y = ds.ys[k];
    const double ny = roi_seminorm(y, noise.norm);
    const double band = radius + 1e-9 * (ny + max_norm + radius);
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), ny - band);
    auto hi = std::upper_bound(sorted.begin(), sorted.end(), ny + band);
    std::vector<std::uint32_t> members;
    for (auto it = lo; it != hi; ++it) {
      const std::uint32_t i = order[static_cast<std::size_t>(it - sorted.begin())];
      if (roi_seminorm(ds.fxs[i], y, noise.norm) < radius) members.push_back(i);
    }
    std::sort(members.begin(), members.end());
    columns[k] = std::move(members);
  });
  return MembershipMatrix(n, std::move(columns));
}

MembershipMatrix compute_feasibility(const PairedDataset& ds, const ForwardProblem& problem, unsigned jobs) {
  return compute_feasibility(ds, problem.noise, jobs);
}

CoMembership co_membership(const MembershipMatrix& fa) {
  std::vector<std::vector<std::uint32_t>> cols_of(fa.rows());
  for (std::size_t k = 0; k < fa.cols(); ++k) {
    for (std::uint32_t n : fa.column(k)) cols_of[n].push_back(static_cast<std::uint32_t>(k));
  }
  std::vector<std::vector<std::uint32_t>> rows(fa.rows());
  for (std::size_t n = 0; n < fa.rows(); ++n) {
    if (cols_of[n].empty()) continue;
    std::vector<std::uint32_t> r;
    for (std::uint32_t k : cols_of[n]) {
      const auto& c = fa.column(k);
      r.insert(r.end(), c.begin(), c.end());
    }
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    rows[n] = std::move(r);
  }
  return CoMembership(std::move(rows));
}

SparseDistances pairwise_distances(const PairedDataset& ds, const CoMembership& com, const SeminormSpec& x_spec,
                                   unsigned jobs) {
  if (com.size() != ds.xs.size()) throw ShapeError("co-membership size does not match the dataset");
  x_spec.validate_for(ds.xs.front().shape());
  const std::size_t n = com.size();

  std::vector<std::vector<SparseDistances::Entry>> upper(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& r = com.row(i);
    auto it = std::upper_bound(r.begin(), r.end(), static_cast<std::uint32_t>(i));
    upper[i].reserve(static_cast<std::size_t>(r.end() - it));
    for (; it != r.end(); ++it) upper[i].emplace_back(*it, roi_seminorm(ds.xs[i], ds.xs[*it], x_spec));
  });

  std::vector<std::vector<SparseDistances::Entry>> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].reserve(com.row(i).size());
  for (std::size_t i = 0; i < n; ++i) {
    if (com.row(i).empty()) continue;
    rows[i].emplace_back(static_cast<std::uint32_t>(i), 0.0);
    for (const auto& [m, dist] : upper[i]) {
      rows[i].emplace_back(m, dist);
      rows[m].emplace_back(static_cast<std::uint32_t>(i), dist);
    }
  }
  for (auto& r : rows) {
    std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return SparseDistances(std::move(rows));
}

// --- Distances and diameters -----------------------------------------------------------

DiameterResult diameters(const MembershipMatrix& fa, const SparseDistances& d) {
  DiameterResult out;
  out.values.assign(fa.cols(), 0.0);
  out.witnesses.assign(fa.cols(), std::nullopt);
  for (std::size_t k = 0; k < fa.cols(); ++k) {
    const auto& members = fa.column(k);
    if (members.size() < 2) continue;
    double best = -1.0;
    std::pair<std::uint32_t, std::uint32_t> arg{0, 0};
    for (std::size_t a = 0; a + 1 < members.size(); ++a) {
      const auto& row = d.row(members[a]);
      auto it = row.begin();
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        while (it != row.end() && it->first < members[b]) ++it;
        if (it == row.end() || it->first != members[b]) {
          throw ContractError("distance matrix lacks a co-feasible pair");
        }
        if (it->second > best) {
          best = it->second;
          arg = {members[a], members[b]};
        }
      }
    }
    out.values[k] = best;
    out.witnesses[k] = arg;
  }
  return out;
}

double kernel_size(const std::vector<double>& diameters) {
  double m = 0.0;
  for (double d : diameters) m = std::max(m, d);
  return m;
}

std::size_t FeasibilityReport::no_conclusion_count() const {
  return static_cast<std::size_t>(std::count(no_conclusion.begin(), no_conclusion.end(), true));
}

FeasibilityReport analyze(const PairedDataset& ds, const NoiseBall& noise, const SeminormSpec& x_spec,
                          unsigned jobs) {
  FeasibilityReport r;
  r.epsilon = noise.epsilon;
  r.fa = compute_feasibility(ds, noise, jobs);
  r.d = pairwise_distances(ds, co_membership(r.fa), x_spec, jobs);
  DiameterResult dr = diameters(r.fa, r.d);
  r.diameters = std::move(dr.values);
  r.witnesses = std::move(dr.witnesses);
  r.kersize = kernel_size(r.diameters);
  r.no_conclusion.resize(r.fa.cols());
  for (std::size_t k = 0; k < r.fa.cols(); ++k) r.no_conclusion[k] = r.fa.column(k).empty();
  return r;
}

// --- Patchification --------------------------------------------------------------------

Tensor crop(const Tensor& t, const Box& box) {
  box.validate(t.shape());
  Shape out_shape(t.ndim());
  for (std::size_t i = 0; i < t.ndim(); ++i) out_shape[i] = box.stop[i] - box.start[i];
  if (t.is_complex()) {
    std::vector<Complex> v;
    v.reserve(box.count());
    auto src = t.complex_values();
    for_each_in_box(t.shape(), box, [&](std::size_t i) { v.push_back(src[i]); });
    return Tensor::complex(out_shape, std::move(v));
  }
  std::vector<double> v;
  v.reserve(box.count());
  auto src = t.real_values();
  for_each_in_box(t.shape(), box, [&](std::size_t i) { v.push_back(src[i]); });
  return Tensor::real(out_shape, std::move(v));
}

PairedDataset patchify(const std::vector<Tensor>& hr_images, const std::vector<Tensor>& lr_images,
                       const PatchOptions& options) {
  if (hr_images.empty()) throw ContractError("patchify: no images");
  if (hr_images.size() != lr_images.size()) throw ContractError("patchify: HR and LR image counts differ");
  if (options.hr_patch == 0 || options.lr_patch == 0 || options.hr_patch % options.lr_patch != 0) {
    throw ContractError("patchify: HR patch size must be a positive multiple of the LR patch size");
  }
  const std::size_t scale = options.hr_patch / options.lr_patch;

  PairedDataset ds;
  ds.tuple_mode = true;
  for (std::size_t img = 0; img < hr_images.size(); ++img) {
    const Tensor& hr = hr_images[img];
    const Tensor& lr = lr_images[img];
    if (hr.ndim() != 3 || lr.ndim() != 3) throw ShapeError("patchify: images must have shape (bands, H, W)");
    if (hr.shape()[0] != options.bands || lr.shape()[0] != options.bands) {
      throw ShapeError("patchify: expected " + std::to_string(options.bands) + " bands");
    }
    const std::size_t h = hr.shape()[1], w = hr.shape()[2];
    if (h % options.hr_patch != 0 || w % options.hr_patch != 0) {
      throw ShapeError("patchify: HR size " + shape_to_string(hr.shape()) + " not divisible by patch size " +
                       std::to_string(options.hr_patch));
    }
    if (lr.shape()[1] * scale != h || lr.shape()[2] * scale != w) {
      throw ShapeError("patchify: LR grid " + shape_to_string(lr.shape()) + " is not aligned with HR grid " +
                       shape_to_string(hr.shape()));
    }
    for (std::size_t r = 0; r < h / options.hr_patch; ++r) {
      for (std::size_t c = 0; c < w / options.hr_patch; ++c) {
        const std::size_t hr0 = r * options.hr_patch, hc0 = c * options.hr_patch;
        const std::size_t lr0 = r * options.lr_patch, lc0 = c * options.lr_patch;
        ds.xs.push_back(crop(hr, Box{{0, hr0, hc0}, {options.bands, hr0 + options.hr_patch, hc0 + options.hr_patch}}));
        ds.fxs.push_back(crop(lr, Box{{0, lr0, lc0}, {options.bands, lr0 + options.lr_patch, lc0 + options.lr_patch}}));
        ds.ids.push_back("img" + std::to_string(img) + "_r" + std::to_string(r) + "_c" + std::to_string(c));
      }
    }
  }
  ds.ys = ds.fxs;
  ds.probe_ids = ds.ids;
  ds.validate();
  return ds;
}

// --- Convergence harness ---------------------------------------------------------------

namespace {

bool is_plain_l2(const SeminormSpec& s) { return !s.regions && s.q == 2.0 && !s.normalize_whole; }

// Dense-grid diameter of the closure of {theta : f(cos, sin) in y + E} on
// the unit circle. The exact boundary angles are added to the grid so the
// value is the supremum over the open set, not a grid underestimate.
double circle_grid_diameter(const Tensor& y, const NoiseBall& noise, const SeminormSpec& x_spec) {
  if (!is_plain_l2(x_spec)) throw ContractError("circle reference diameter needs the plain l2 signal norm");
  if (y.size() != 1 || y.is_complex()) throw ShapeError("circle probes must be real scalars");
  constexpr std::size_t kGrid = 1000000;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::vector<double> angles;
  for (std::size_t i = 0; i < kGrid; ++i) {
    const double t = kTwoPi * static_cast<double>(i) / static_cast<double>(kGrid);
    if (noise.contains_difference(Tensor::real({1}, {std::cos(t)}), y)) angles.push_back(t);
  }
  const double radius = noise.epsilon + noise.slack;
  for (double c : {y.real_values()[0] - radius, y.real_values()[0] + radius}) {
    if (c < -1.0 || c > 1.0) continue;
    const double a = std::acos(c);
    angles.push_back(a);
    if (a > 0.0) angles.push_back(kTwoPi - a);
  }
  std::sort(angles.begin(), angles.end());
  if (angles.size() < 2) return 0.0;
  auto chord = [](double a, double b) { return std::hypot(std::cos(a) - std::cos(b), std::sin(a) - std::sin(b)); };
  double best = 0.0;
  const std::size_t m = angles.size();
  for (double a : angles) {
    double target = a + std::numbers::pi;
    if (target >= kTwoPi) target -= kTwoPi;
    const std::size_t j = static_cast<std::size_t>(std::lower_bound(angles.begin(), angles.end(), target) -
                                                   angles.begin()) % m;
    best = std::max({best, chord(a, angles[j]), chord(a, angles[(j + m - 1) % m])});
  }
  return best;
}

}  // namespace

ModelPtr make_first_coordinate_model() { return make_matrix_model(Tensor::real({1, 2}, {1.0, 0.0})); }

SyntheticSet make_circle_set() {
  SyntheticSet s;
  s.name = "circle";
  s.shape = {2};
  s.draw = [](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double t = angle(rng);
    return Tensor::real({2}, {std::cos(t), std::sin(t)});
  };
  s.reference_diameter = circle_grid_diameter;
  return s;
}

SyntheticSet synthetic_set_by_name(const std::string& name) {
  if (name == "circle") return make_circle_set();
  throw NotFoundError("unknown synthetic set '" + name + "'");
}

ConvergenceTable convergence_experiment(const SyntheticSet& set, const ForwardProblem& problem,
                                        const std::vector<Tensor>& ys, const std::vector<std::size_t>& schedule,
                                        std::uint64_t seed, const SeminormSpec& x_spec, unsigned jobs) {
  if (schedule.empty()) throw ContractError("convergence schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] == 0 || (i && schedule[i] <= schedule[i - 1])) {
      throw ContractError("convergence schedule must be positive and strictly increasing");
    }
  }
  const auto& model = problem.require_model();
  problem.validate();

  std::mt19937_64 rng(seed);
  const std::size_t total = schedule.back();
  std::vector<Tensor> xs;
  xs.reserve(total);
  for (std::size_t i = 0; i < total; ++i) xs.push_back(set.draw(rng));
  std::vector<Tensor> fxs(total);
  parallel_for(total, jobs, [&](std::size_t i) { fxs[i] = model.apply(xs[i]); });

  ConvergenceTable table;
  table.reference.resize(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) table.reference[k] = set.reference_diameter(ys[k], problem.noise, x_spec);

  for (std::size_t n : schedule) {
    PairedDataset ds;
    ds.xs.assign(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(n));
    ds.fxs.assign(fxs.begin(), fxs.begin() + static_cast<std::ptrdiff_t>(n));
    ds.ys = ys;
    ds.ids = default_ids(n, "s");
    ds.probe_ids = default_ids(ys.size(), "y");
    FeasibilityReport rep = analyze(ds, problem.noise, x_spec, jobs);
    ConvergenceRow row;
    row.n = n;
    row.diameters = rep.diameters;
    for (std::size_t k = 0; k < ys.size(); ++k) {
      row.max_gap = std::max(row.max_gap, std::abs(table.reference[k] - row.diameters[k]));
      if (row.diameters[k] > table.reference[k]) table.from_below = false;
      if (!table.rows.empty() && row.diameters[k] < table.rows.back().diameters[k]) table.monotone = false;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace halluc
