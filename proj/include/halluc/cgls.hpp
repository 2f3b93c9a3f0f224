#pragma once

#include <functional>

#include "halluc/tensor.hpp"

namespace halluc {

struct CglsOptions {
  double damping = 0.0;  // lambda in ||Au - b||^2 + lambda ||u||^2
  double tol = 1e-8;
  int max_iter = 500;
};

struct CglsResult {
  Tensor solution;
  int iterations = 0;
  bool converged = false;
  /// ||b - A u|| / ||b||.
  double relative_residual = 0.0;
  /// ||A^T (b - A u) - lambda u|| / ||A^T b||.
  double relative_normal_residual = 0.0;
};

using LinearMap = std::function<Tensor(const Tensor&)>;

/// Matrix-free CGLS started from zero, so the undamped iterates converge to
/// the minimum-norm least-squares solution.
///
/// Stops once the normal-equation residual drops below tol * ||A^T b||, or
/// (undamped only) once the data residual drops below tol * ||b||.
CglsResult cgls(const LinearMap& apply, const LinearMap& adjoint, const Tensor& b, const Tensor& zero_solution,
                const CglsOptions& options);

}  // namespace halluc
