#pragma once

// Independent reference implementations and hand-rolled generators. Nothing
// here calls into the library's algorithms; only Tensor is shared.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "halluc/tensor.hpp"

namespace oracle {

using halluc::Tensor;

// --- generators ------------------------------------------------------------------------

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
  bool coin(double p = 0.5) { return uniform() < p; }

  Tensor vec(std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * normal();
    return Tensor::real({n}, v);
  }
  Tensor image(std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = normal();
    return Tensor::real({rows, cols}, v);
  }
  Eigen::MatrixXd matrix(std::size_t rows, std::size_t cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = normal();
    return m;
  }
};

inline Tensor from_matrix(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return Tensor::real({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, v);
}

inline Eigen::VectorXd to_vector(const Tensor& t) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(t.size()));
  auto r = t.real_values();
  for (std::size_t i = 0; i < t.size(); ++i) v(static_cast<Eigen::Index>(i)) = r[i];
  return v;
}

inline Tensor from_vector(const Eigen::VectorXd& v) {
  return Tensor::real({static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

// --- norms -----------------------------------------------------------------------------

/// Plain l_q norm of a - b over all entries (q may be infinite).
inline double lq(const Tensor& a, const Tensor& b, double q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.value(i) - b.value(i));
    if (std::isinf(q)) acc = std::max(acc, d);
    else acc += std::pow(d, q);
  }
  return std::isinf(q) ? acc : std::pow(acc, 1.0 / q);
}

// --- linear algebra --------------------------------------------------------------------

/// Moore-Penrose pseudo-inverse from a full SVD.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cutoff = 1e-12 * std::max(a.rows(), a.cols()) * (s.size() ? s(0) : 0.0);
  Eigen::MatrixXd sinv = Eigen::MatrixXd::Zero(a.cols(), a.rows());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) sinv(i, i) = 1.0 / s(i);
  }
  return svd.matrixV() * sinv * svd.matrixU().transpose();
}

/// (A^T A + lambda I)^-1 A^T y by a dense LDLT solve.
inline Eigen::VectorXd tikhonov(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double lambda) {
  const Eigen::MatrixXd n = a.transpose() * a + lambda * Eigen::MatrixXd::Identity(a.cols(), a.cols());
  return n.ldlt().solve(a.transpose() * y);
}

// --- Feasibility pipeline by triple loops ----------------------------------------------

struct Feasibility {
  std::vector<std::vector<bool>> fa;   // N x K
  std::vector<std::vector<bool>> com;  // N x N
  std::vector<std::vector<std::optional<double>>> d;
  std::vector<double> diam;
  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> witness;
  double kersize = 0.0;
};

/// Brute force with l_q measurement and signal norms; strict open ball.
inline Feasibility brute_force(const std::vector<Tensor>& xs, const std::vector<Tensor>& fxs,
                               const std::vector<Tensor>& ys, double eps, double q_meas, double q_sig) {
  const std::size_t n = xs.size(), k = ys.size();
  Feasibility o;
  o.fa.assign(n, std::vector<bool>(k, false));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) o.fa[i][j] = lq(fxs[i], ys[j], q_meas) < eps;

  o.com.assign(n, std::vector<bool>(n, false));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < k; ++j) o.com[a][b] = o.com[a][b] || (o.fa[a][j] && o.fa[b][j]);

  o.d.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (o.com[a][b]) o.d[a][b] = a == b ? 0.0 : lq(xs[a], xs[b], q_sig);

  o.diam.assign(k, 0.0);
  o.witness.assign(k, std::nullopt);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!(o.fa[a][j] && o.fa[b][j])) continue;
        const double v = *o.d[a][b];
        if (!o.witness[j] || v > o.diam[j]) {
          o.diam[j] = v;
          o.witness[j] = std::make_pair(a, b);
        }
      }
    }
    o.kersize = std::max(o.kersize, o.diam[j]);
  }
  return o;
}

/// Diameter of the grid points t_i = 2 pi i / P of the unit circle whose
/// first coordinate lies strictly inside (y - eps, y + eps).
///
/// Grid members form runs of consecutive indices. The chord is increasing in
/// the circular index distance, and for two runs the index differences form
/// one contiguous range, so each run pair is settled by checking the range
/// ends and the values nearest P/2.
inline double circle_grid_diameter(double y, double eps, std::size_t points) {
  const long long p = static_cast<long long>(points);
  std::vector<bool> in(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(points);
    in[i] = std::abs(std::cos(t) - y) < eps;
  }
  std::vector<std::pair<long long, long long>> runs;
  for (long long i = 0; i < p; ++i) {
    if (!in[static_cast<std::size_t>(i)]) continue;
    if (!runs.empty() && runs.back().second == i - 1) runs.back().second = i;
    else runs.emplace_back(i, i);
  }
  auto circ = [&](long long d) {
    d = ((d % p) + p) % p;
    return std::min(d, p - d);
  };
  long long best = 0;
  for (const auto& [a1, b1] : runs) {
    for (const auto& [a2, b2] : runs) {
      const long long lo = a2 - b1, hi = b2 - a1;
      best = std::max({best, circ(lo), circ(hi)});
      for (long long m = (lo - p) / p - 1; m <= hi / p + 1; ++m) {
        for (long long c : {m * p + p / 2, m * p + (p + 1) / 2}) {
          if (c >= lo && c <= hi) best = std::max(best, circ(c));
        }
      }
    }
  }
  return 2.0 * std::sin(M_PI * static_cast<double>(best) / static_cast<double>(p));
}

}  // namespace oracle
