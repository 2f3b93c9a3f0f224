#include "halluc/detail.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace halluc {

namespace {

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

std::vector<std::size_t> unravel(std::size_t flat, const Shape& shape) {
  std::vector<std::size_t> idx(shape.size());
  for (std::size_t i = shape.size(); i-- > 0;) {
    idx[i] = flat % shape[i];
    flat /= shape[i];
  }
  return idx;
}

}  // namespace

void DetailSpec::validate(const Shape& shape) const {
  if (source.shape() != shape) {
    throw ShapeError("detail source has shape " + shape_to_string(source.shape()) + ", expected " +
                     shape_to_string(shape));
  }
  source.require_finite("detail source");
  source_region.validate(shape);
  if (target_offset.size() != shape.size()) {
    throw ShapeError("detail offset has " + std::to_string(target_offset.size()) + " axes, expected " +
                     std::to_string(shape.size()));
  }
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const long lo = static_cast<long>(source_region.start[i]) + target_offset[i];
    const long hi = static_cast<long>(source_region.stop[i]) + target_offset[i];
    if (lo < 0 || hi > static_cast<long>(shape[i])) {
      throw ShapeError("translated detail region leaves axis " + std::to_string(i) + " of shape " +
                       shape_to_string(shape));
    }
  }
}

Box DetailSpec::target_region() const {
  Box b = source_region;
  for (std::size_t i = 0; i < b.start.size(); ++i) {
    b.start[i] = static_cast<std::size_t>(static_cast<long>(b.start[i]) + target_offset[i]);
    b.stop[i] = static_cast<std::size_t>(static_cast<long>(b.stop[i]) + target_offset[i]);
  }
  return b;
}

Tensor extract_detail(const Tensor& z, const DetailSpec& spec) {
  spec.validate(z.shape());
  const Box target = spec.target_region();
  const auto strides = strides_of(z.shape());
  long shift = 0;
  for (std::size_t i = 0; i < strides.size(); ++i) shift += spec.target_offset[i] * static_cast<long>(strides[i]);

  const bool complex = z.is_complex() || spec.source.is_complex();
  Tensor det(z.shape(), complex ? Field::kComplex : Field::kReal);
  if (complex) {
    auto out = det.complex_values();
    for_each_in_box(z.shape(), target, [&](std::size_t i) {
      out[i] = spec.source.value(static_cast<std::size_t>(static_cast<long>(i) - shift)) - z.value(i);
    });
  } else {
    auto out = det.real_values();
    auto src = spec.source.real_values();
    auto zv = z.real_values();
    for_each_in_box(z.shape(), target, [&](std::size_t i) {
      out[i] = src[static_cast<std::size_t>(static_cast<long>(i) - shift)] - zv[i];
    });
  }
  return det;
}

Tensor blend_window(const Shape& shape, const Box& region, std::size_t taper_width) {
  region.validate(shape);
  if (shape.size() < 2) throw ShapeError("blend window needs at least two axes");
  Tensor w(shape);
  auto out = w.real_values();
  const std::size_t r = shape.size() - 2, c = shape.size() - 1;
  for_each_in_box(shape, region, [&](std::size_t flat) {
    const auto idx = unravel(flat, shape);
    const std::size_t d = std::min({idx[r] - region.start[r], region.stop[r] - 1 - idx[r], idx[c] - region.start[c],
                                    region.stop[c] - 1 - idx[c]});
    out[flat] = d >= taper_width ? 1.0
                                 : 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(d + 1) /
                                                         static_cast<double>(taper_width + 1)));
  });
  return w;
}

PasteResult paste(const Tensor& z, const Tensor& y, const DetailSpec& spec, const ForwardProblem& problem,
                  double tol, int max_iter) {
  const auto& model = problem.require_model();
  problem.validate();
  if (z.shape() != model.input_shape()) {
    throw ShapeError("paste: z has shape " + shape_to_string(z.shape()) + ", model expects " +
                     shape_to_string(model.input_shape()));
  }
  if (y.shape() != model.output_shape()) throw ShapeError("paste: y does not match the model output");
  z.require_finite("z");

  PasteResult r;
  r.raw_detail = extract_detail(z, spec);
  ProjectionResult proj = nullspace_project(model, r.raw_detail, tol, max_iter);
  r.projected_detail = std::move(proj.projected);
  r.projection_exact = proj.exact;
  r.projection_converged = proj.converged;
  r.projection_iterations = proj.iterations;

  const Box region = spec.target_region();
  const Tensor w = blend_window(z.shape(), region, spec.taper_width);
  auto wv = w.real_values();
  const Tensor& p = r.projected_detail;

  double spill = 0.0;
  std::vector<char> inside(z.size(), 0);
  for_each_in_box(z.shape(), region, [&](std::size_t i) { inside[i] = 1; });
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!inside[i]) spill += std::norm(p.value(i));
  }
  r.spill_norm = std::sqrt(spill);

  // A real z stays real unless the blended detail has an imaginary part.
  bool imaginary = z.is_complex();
  if (!imaginary && p.is_complex()) {
    for (std::size_t i = 0; i < z.size() && !imaginary; ++i) imaginary = wv[i] * p.value(i).imag() != 0.0;
  }
  if (imaginary) {
    std::vector<Complex> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z.value(i) + wv[i] * p.value(i);
    r.pasted = Tensor::complex(z.shape(), std::move(out));
  } else if (p.is_complex()) {
    std::vector<double> out(z.size());
    auto zv = z.real_values();
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = zv[i] + wv[i] * p.value(i).real();
    r.pasted = Tensor::real(z.shape(), std::move(out));
  } else {
    std::vector<double> out(z.size());
    auto zv = z.real_values();
    auto pv = p.real_values();
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = zv[i] + wv[i] * pv[i];
    r.pasted = Tensor::real(z.shape(), std::move(out));
  }

  const NoiseBall& noise = problem.noise;
  const Tensor fz = model.apply(z);
  const Tensor fp = model.apply(r.pasted);
  r.residual = roi_seminorm(fp, y, noise.norm);
  r.ratio = r.residual / noise.epsilon;
  r.consistent = r.residual < noise.epsilon + noise.slack;
  r.z_residual = roi_seminorm(fz, y, noise.norm);
  r.z_consistent = r.z_residual < noise.epsilon + noise.slack;
  r.raw_residual = roi_seminorm(model.apply(z + r.raw_detail), y, noise.norm);
  r.measurement_change = roi_seminorm(fp, fz, noise.norm);
  const double det_norm = l2_norm(r.raw_detail);
  r.degradation = det_norm == 0.0 ? 0.0 : l2_norm((r.pasted - z) - r.raw_detail) / det_norm;
  return r;
}

PasteResult paste_remove(const Tensor& z, const Tensor& y, const Tensor& flat_source, const Box& detail_region,
                         const ForwardProblem& problem, std::size_t taper_width, double tol, int max_iter) {
  DetailSpec spec;
  spec.source = flat_source;
  spec.source_region = detail_region;
  spec.target_offset.assign(z.ndim(), 0);
  spec.taper_width = taper_width;
  return paste(z, y, spec, problem, tol, max_iter);
}

}  // namespace halluc
