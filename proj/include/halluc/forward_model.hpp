#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "halluc/seminorm.hpp"
#include "halluc/tensor.hpp"

namespace halluc {

enum class ModelKind { kGaussianMeanpool, kBilinearAA, kMaskedFFT, kMatrix, kComposed };

std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Linear map f: X -> Y with its adjoint f*.
///
/// apply/adjoint validate shapes and then dispatch to the concrete operator.
/// A real operator applied to a complex tensor acts on real and imaginary
/// parts separately; a complex operator promotes real inputs.
class LinearForwardModel {
 public:
  virtual ~LinearForwardModel() = default;

  virtual ModelKind kind() const = 0;
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  Field field() const { return field_; }

  Tensor apply(const Tensor& x) const;
  Tensor adjoint(const Tensor& y) const;

 protected:
  LinearForwardModel(Shape input_shape, Shape output_shape, Field field)
      : input_shape_(std::move(input_shape)), output_shape_(std::move(output_shape)), field_(field) {}

  virtual Tensor apply_impl(const Tensor& x) const = 0;
  virtual Tensor adjoint_impl(const Tensor& y) const = 0;

 private:
  Tensor dispatch(const Tensor& t, const Shape& expected, bool forward) const;

  Shape input_shape_;
  Shape output_shape_;
  Field field_;
};

using ModelPtr = std::shared_ptr<const LinearForwardModel>;

/// Sparse 1-D linear map stored row by row.
struct SparseRows {
  std::size_t in_size = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;

  std::size_t out_size() const { return rows.size(); }
};

/// Separable operator acting on the last two axes (rows, columns) of a
/// tensor; leading axes (e.g. spectral bands) are treated independently.
class SeparableModel : public LinearForwardModel {
 public:
  SeparableModel(ModelKind kind, Shape input_shape, SparseRows row_op, SparseRows col_op);

  ModelKind kind() const override { return kind_; }
  const SparseRows& row_operator() const { return row_op_; }
  const SparseRows& col_operator() const { return col_op_; }

 protected:
  Tensor apply_impl(const Tensor& x) const override;
  Tensor adjoint_impl(const Tensor& y) const override;

 private:
  ModelKind kind_;
  SparseRows row_op_;
  SparseRows col_op_;
};

class GaussianMeanpoolModel : public SeparableModel {
 public:
  GaussianMeanpoolModel(double sigma, std::size_t pool, std::size_t in_side, std::size_t pad);
  double sigma() const { return sigma_; }
  std::size_t pool() const { return pool_; }
  std::size_t in_side() const { return in_side_; }
  std::size_t pad() const { return pad_; }

 private:
  double sigma_;
  std::size_t pool_;
  std::size_t in_side_;
  std::size_t pad_;
};

class BilinearAAModel : public SeparableModel {
 public:
  BilinearAAModel(std::size_t factor, std::size_t in_side, std::size_t bands);
  std::size_t factor() const { return factor_; }
  std::size_t in_side() const { return in_side_; }
  std::size_t bands() const { return bands_; }

 private:
  std::size_t factor_;
  std::size_t in_side_;
  std::size_t bands_;
};

/// y = M . F(x) with a unitary 2-D DFT F and a column mask M.
class MaskedFFTModel : public LinearForwardModel {
 public:
  MaskedFFTModel(std::size_t side, std::size_t acceleration, std::size_t center_lines);

  ModelKind kind() const override { return ModelKind::kMaskedFFT; }
  std::size_t side() const { return side_; }
  std::size_t acceleration() const { return acceleration_; }
  std::size_t center_lines() const { return center_lines_; }
  const std::vector<bool>& column_mask() const { return mask_; }
  std::size_t retained_columns() const;

  /// Unitary 2-D DFT and its inverse (no masking).
  Tensor unitary_fft(const Tensor& x) const;
  Tensor unitary_ifft(const Tensor& k) const;
  /// Exact orthogonal projection onto the null space: F^-1((1-M) . F v).
  Tensor project_nullspace(const Tensor& v) const;

 protected:
  Tensor apply_impl(const Tensor& x) const override;
  Tensor adjoint_impl(const Tensor& y) const override;

 private:
  std::size_t side_;
  std::size_t acceleration_;
  std::size_t center_lines_;
  std::vector<bool> mask_;
};

/// Dense matrix acting on the flattened input.
class MatrixModel : public LinearForwardModel {
 public:
  /// `matrix` must be 2-D (rows, cols); input defaults to shape {cols}.
  explicit MatrixModel(Tensor matrix, Shape input_shape = {}, Shape output_shape = {});

  ModelKind kind() const override { return ModelKind::kMatrix; }
  const Tensor& matrix() const { return matrix_; }

 protected:
  Tensor apply_impl(const Tensor& x) const override;
  Tensor adjoint_impl(const Tensor& y) const override;

 private:
  Tensor matrix_;
};

/// stages[n-1] o ... o stages[0].
class ComposedModel : public LinearForwardModel {
 public:
  explicit ComposedModel(std::vector<ModelPtr> stages);

  ModelKind kind() const override { return ModelKind::kComposed; }
  const std::vector<ModelPtr>& stages() const { return stages_; }

 protected:
  Tensor apply_impl(const Tensor& x) const override;
  Tensor adjoint_impl(const Tensor& y) const override;

 private:
  std::vector<ModelPtr> stages_;
};

/// Gaussian blur (radius ceil(3 sigma), reflect padding), symmetric zero-pad
/// of `pad` pixels per side, then non-overlapping pool x pool averaging.
/// in_side + 2 pad must be a multiple of pool; defaults map 28 -> 36 -> 12.
ModelPtr make_gaussian_meanpool(double sigma = 3.0, std::size_t pool = 3, std::size_t in_side = 28,
                                std::size_t pad = 4);
/// Retained columns: j = floor(side/2) (mod acceleration), plus the
/// `center_lines` central columns.
ModelPtr make_masked_fft(std::size_t side = 320, std::size_t acceleration = 8, std::size_t center_lines = 22);
/// Antialiased triangle-kernel downsampling by `factor`, per band.
/// Tensors have shape (bands, side, side).
ModelPtr make_bilinear_aa(std::size_t factor = 4, std::size_t in_side = 512, std::size_t bands = 1);
ModelPtr make_matrix_model(Tensor matrix);
ModelPtr make_composed(std::vector<ModelPtr> stages);

/// Open noise ball E = B(0, epsilon) under `norm`.
struct NoiseBall {
  double epsilon = 1.0;
  SeminormSpec norm = SeminormSpec::lq(2.0);
  /// Additive slack for membership tests on data read from files.
  double slack = 0.0;

  void validate() const;
  /// ||v|| < epsilon + slack.
  bool contains(const Tensor& v) const;
  /// ||a - b|| < epsilon + slack.
  bool contains_difference(const Tensor& a, const Tensor& b) const;
};

/// (F, E): forward model with additive noise. The model may be absent when
/// measurements are supplied as data tuples.
struct ForwardProblem {
  ModelPtr model;
  NoiseBall noise;

  void validate() const;
  const LinearForwardModel& require_model() const;
};

struct ProjectionResult {
  Tensor projected;
  bool exact = false;
  bool converged = true;
  int iterations = 0;
  /// ||f(Pv)|| / ||f v|| at exit (0 for exact projections).
  double relative_residual = 0.0;
};

/// P v = v - f^+ f v. Exact for masked FFT models, CGLS otherwise.
ProjectionResult nullspace_project(const LinearForwardModel& model, const Tensor& v, double tol = 1e-8,
                                   int max_iter = 500);

/// Isotropic Gaussian draw rescaled onto the sphere of radius `target_norm`
/// of the problem's measurement norm.
Tensor sample_noise(const ForwardProblem& problem, double target_norm, std::uint64_t seed);
Tensor sample_noise(const NoiseBall& noise, const Shape& shape, Field field, double target_norm,
                    std::uint64_t seed);

struct PoissonNoise {
  Tensor noise;
  double alpha = 0.0;
};

/// alpha * Poisson(y / alpha) - y with E||e||^2 = alpha * sum(y) = level^2.
PoissonNoise sample_poisson_noise(const Tensor& y_clean, double level, std::uint64_t seed);

}  // namespace halluc
