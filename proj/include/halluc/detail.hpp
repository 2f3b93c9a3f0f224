#pragma once

#include <vector>

#include "halluc/forward_model.hpp"
#include "halluc/seminorm.hpp"

namespace halluc {

/// A region of a source image x' moved by `target_offset` onto the region
/// R of a reconstruction z.
struct DetailSpec {
  Tensor source;
  Box source_region;
  /// Per-axis displacement from source_region to R.
  std::vector<long> target_offset;
  /// Raised-cosine band width in pixels over the last two axes.
  std::size_t taper_width = 3;

  /// Throws unless source has the shape of z and both boxes are in bounds.
  void validate(const Shape& shape) const;
  Box target_region() const;
};

/// x_det = translated x' - z on R, 0 elsewhere.
Tensor extract_detail(const Tensor& z, const DetailSpec& spec);

/// Blend weights: 1 inside R at distance >= taper from its border (last two
/// axes), 0.5 (1 - cos(pi (d + 1) / (taper + 1))) at distance d < taper,
/// 0 outside R. Leading axes share the window.
Tensor blend_window(const Shape& shape, const Box& region, std::size_t taper_width);

struct PasteResult {
  Tensor pasted;
  Tensor raw_detail;
  Tensor projected_detail;
  /// ||f(x'') - y|| in the noise norm and its ratio to epsilon.
  double residual = 0.0;
  double ratio = 0.0;
  bool consistent = false;
  /// ||f(z) - y||.
  double z_residual = 0.0;
  bool z_consistent = false;
  /// ||f(z + x_det) - y||, the unprojected paste.
  double raw_residual = 0.0;
  /// ||f(x'') - f(z)||.
  double measurement_change = 0.0;
  /// l2 norm of the projected detail outside R (discarded by the window).
  double spill_norm = 0.0;
  /// ||(x'' - z) - x_det||_2 / ||x_det||_2, 0 for a zero detail.
  double degradation = 0.0;
  bool projection_exact = false;
  bool projection_converged = true;
  int projection_iterations = 0;
};

/// x'' = (1 - w) z + w (z + P x_det). Blending leaves the detail only
/// approximately in the kernel; the residual reports how far.
PasteResult paste(const Tensor& z, const Tensor& y, const DetailSpec& spec, const ForwardProblem& problem,
                  double tol = 1e-8, int max_iter = 500);

/// Moves the flat area of `flat_source` on `detail_region` onto the same
/// region of z.
PasteResult paste_remove(const Tensor& z, const Tensor& y, const Tensor& flat_source, const Box& detail_region,
                         const ForwardProblem& problem, std::size_t taper_width = 3, double tol = 1e-8,
                         int max_iter = 500);

}  // namespace halluc
