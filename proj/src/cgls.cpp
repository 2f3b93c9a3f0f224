#include "halluc/cgls.hpp"

#include <cmath>

namespace halluc {

CglsResult cgls(const LinearMap& apply, const LinearMap& adjoint, const Tensor& b, const Tensor& zero_solution,
                const CglsOptions& options) {
  CglsResult result;
  result.solution = zero_solution;
  Tensor& u = result.solution;

  const double lambda = options.damping;
  const double b_norm = l2_norm(b);
  Tensor r = b;
  Tensor s = adjoint(r);
  const double s0_norm = l2_norm(s);
  if (b_norm == 0.0 || s0_norm == 0.0) {
    result.converged = true;
    return result;
  }
  Tensor p = s;
  double gamma = squared_l2_norm(s);

  for (int it = 1; it <= options.max_iter; ++it) {
    Tensor q = apply(p);
    double denom = squared_l2_norm(q) + lambda * squared_l2_norm(p);
    if (denom <= 0.0) break;
    const double alpha = gamma / denom;
    u.axpy(alpha, p);
    r.axpy(-alpha, q);
    s = adjoint(r);
    if (lambda != 0.0) s.axpy(-lambda, u);
    const double gamma_new = squared_l2_norm(s);
    result.iterations = it;
    result.relative_residual = l2_norm(r) / b_norm;
    result.relative_normal_residual = std::sqrt(gamma_new) / s0_norm;
    if (result.relative_normal_residual <= options.tol ||
        (lambda == 0.0 && result.relative_residual <= options.tol)) {
      result.converged = true;
      return result;
    }
    const double beta = gamma_new / gamma;
    gamma = gamma_new;
    p *= beta;
    p += s;
  }
  result.converged = false;
  return result;
}

}  // namespace halluc
