#include "halluc/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <unsupported/Eigen/FFT>

#include "halluc/cgls.hpp"

namespace halluc {

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGaussianMeanpool: return "gaussian_meanpool";
    case ModelKind::kBilinearAA: return "bilinear_aa";
    case ModelKind::kMaskedFFT: return "masked_fft";
    case ModelKind::kMatrix: return "matrix";
    case ModelKind::kComposed: return "composed";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "gaussian_meanpool") return ModelKind::kGaussianMeanpool;
  if (name == "bilinear_aa") return ModelKind::kBilinearAA;
  if (name == "masked_fft") return ModelKind::kMaskedFFT;
  if (name == "matrix") return ModelKind::kMatrix;
  if (name == "composed") return ModelKind::kComposed;
  throw ParseError("unknown model kind '" + name + "'");
}

// --- LinearForwardModel ----------------------------------------------------

namespace {

Tensor real_part(const Tensor& t) {
  auto v = t.complex_values();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i].real();
  return Tensor::real(t.shape(), std::move(out));
}

Tensor imag_part(const Tensor& t) {
  auto v = t.complex_values();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i].imag();
  return Tensor::real(t.shape(), std::move(out));
}

Tensor combine(const Tensor& re, const Tensor& im) {
  auto a = re.real_values();
  auto b = im.real_values();
  std::vector<Complex> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = Complex(a[i], b[i]);
  return Tensor::complex(re.shape(), std::move(out));
}

}  // namespace

Tensor LinearForwardModel::apply(const Tensor& x) const { return dispatch(x, input_shape_, true); }

Tensor LinearForwardModel::adjoint(const Tensor& y) const { return dispatch(y, output_shape_, false); }

Tensor LinearForwardModel::dispatch(const Tensor& t, const Shape& expected, bool forward) const {
  if (t.shape() != expected) {
    throw ShapeError(model_kind_name(kind()) + (forward ? " apply" : " adjoint") + ": expected shape " +
                     shape_to_string(expected) + ", got " + shape_to_string(t.shape()));
  }
  auto run = [&](const Tensor& in) { return forward ? apply_impl(in) : adjoint_impl(in); };
  if (field_ == Field::kComplex) return run(t.is_complex() ? t : t.to_complex());
  if (!t.is_complex()) return run(t);
  return combine(run(real_part(t)), run(imag_part(t)));
}

// --- SeparableModel --------------------------------------------------------

namespace {

Shape separable_output_shape(const Shape& in, const SparseRows& row_op, const SparseRows& col_op) {
  if (in.size() < 2) throw ShapeError("separable operator needs at least two axes");
  if (in[in.size() - 2] != row_op.in_size || in[in.size() - 1] != col_op.in_size) {
    throw ShapeError("separable operator does not match input shape " + shape_to_string(in));
  }
  Shape out = in;
  out[out.size() - 2] = row_op.out_size();
  out[out.size() - 1] = col_op.out_size();
  return out;
}

}  // namespace

SeparableModel::SeparableModel(ModelKind kind, Shape input_shape, SparseRows row_op, SparseRows col_op)
    : LinearForwardModel(input_shape, separable_output_shape(input_shape, row_op, col_op), Field::kReal),
      kind_(kind),
      row_op_(std::move(row_op)),
      col_op_(std::move(col_op)) {}

Tensor SeparableModel::apply_impl(const Tensor& x) const {
  const std::size_t in_r = row_op_.in_size, in_c = col_op_.in_size;
  const std::size_t out_r = row_op_.out_size(), out_c = col_op_.out_size();
  const std::size_t batch = x.size() / (in_r * in_c);
  auto in = x.real_values();
  Tensor y(output_shape());
  auto out = y.real_values();
  std::vector<double> tmp(in_r * out_c);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = in.data() + b * in_r * in_c;
    for (std::size_t i = 0; i < in_r; ++i) {
      for (std::size_t c = 0; c < out_c; ++c) {
        double acc = 0.0;
        for (const auto& [j, w] : col_op_.rows[c]) acc += w * src[i * in_c + j];
        tmp[i * out_c + c] = acc;
      }
    }
    double* dst = out.data() + b * out_r * out_c;
    for (std::size_t r = 0; r < out_r; ++r) {
      for (const auto& [i, w] : row_op_.rows[r]) {
        for (std::size_t c = 0; c < out_c; ++c) dst[r * out_c + c] += w * tmp[i * out_c + c];
      }
    }
  }
  return y;
}

Tensor SeparableModel::adjoint_impl(const Tensor& y) const {
  const std::size_t in_r = row_op_.in_size, in_c = col_op_.in_size;
  const std::size_t out_r = row_op_.out_size(), out_c = col_op_.out_size();
  const std::size_t batch = y.size() / (out_r * out_c);
  auto in = y.real_values();
  Tensor x(input_shape());
  auto out = x.real_values();
  std::vector<double> tmp(in_r * out_c);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(tmp.begin(), tmp.end(), 0.0);
    const double* src = in.data() + b * out_r * out_c;
    for (std::size_t r = 0; r < out_r; ++r) {
      for (const auto& [i, w] : row_op_.rows[r]) {
        for (std::size_t c = 0; c < out_c; ++c) tmp[i * out_c + c] += w * src[r * out_c + c];
      }
    }
    double* dst = out.data() + b * in_r * in_c;
    for (std::size_t i = 0; i < in_r; ++i) {
      for (std::size_t c = 0; c < out_c; ++c) {
        const double v = tmp[i * out_c + c];
        for (const auto& [j, w] : col_op_.rows[c]) dst[i * in_c + j] += w * v;
      }
    }
  }
  return x;
}

// --- Gaussian blur + mean pooling --------------------------------------------

namespace {

// numpy/torch "reflect" boundary: ... c b | a b c d | c b ...
std::size_t reflect_index(long j, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n - 1);
  long m = j % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

SparseRows gaussian_meanpool_rows(double sigma, std::size_t pool, std::size_t n, std::size_t pad) {
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[k + radius] = w;
    total += w;
  }
  for (double& w : kernel) w /= total;

  const std::size_t padded = n + 2 * pad;
  const std::size_t left = pad;
  const std::size_t out = padded / pool;

  SparseRows op;
  op.in_size = n;
  op.rows.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    std::map<std::size_t, double> acc;
    for (std::size_t p = o * pool; p < (o + 1) * pool; ++p) {
      if (p < left || p >= left + n) continue;  // zero padding
      const long i = static_cast<long>(p - left);
      for (long k = -radius; k <= radius; ++k) {
        acc[reflect_index(i + k, n)] += kernel[k + radius] / static_cast<double>(pool);
      }
    }
    op.rows[o].assign(acc.begin(), acc.end());
  }
  return op;
}

SparseRows bilinear_aa_rows(std::size_t factor, std::size_t n) {
  const std::size_t out = n / factor;
  const double f = static_cast<double>(factor);
  SparseRows op;
  op.in_size = n;
  op.rows.resize(out);
  for (std::size_t j = 0; j < out; ++j) {
    const double center = (static_cast<double>(j) + 0.5) * f - 0.5;
    const long lo = std::max<long>(0, static_cast<long>(std::floor(center - f)));
    const long hi = std::min<long>(static_cast<long>(n) - 1, static_cast<long>(std::ceil(center + f)));
    double total = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double w = std::max(0.0, 1.0 - std::abs(static_cast<double>(i) - center) / f);
      if (w > 0.0) {
        op.rows[j].emplace_back(static_cast<std::size_t>(i), w);
        total += w;
      }
    }
    for (auto& entry : op.rows[j]) entry.second /= total;
  }
  return op;
}

}  // namespace

GaussianMeanpoolModel::GaussianMeanpoolModel(double sigma, std::size_t pool, std::size_t in_side, std::size_t pad)
    : SeparableModel(ModelKind::kGaussianMeanpool, Shape{in_side, in_side},
                     gaussian_meanpool_rows(sigma, pool, in_side, pad),
                     gaussian_meanpool_rows(sigma, pool, in_side, pad)),
      sigma_(sigma),
      pool_(pool),
      in_side_(in_side),
      pad_(pad) {}

BilinearAAModel::BilinearAAModel(std::size_t factor, std::size_t in_side, std::size_t bands)
    : SeparableModel(ModelKind::kBilinearAA, Shape{bands, in_side, in_side}, bilinear_aa_rows(factor, in_side),
                     bilinear_aa_rows(factor, in_side)),
      factor_(factor),
      in_side_(in_side),
      bands_(bands) {}

ModelPtr make_gaussian_meanpool(double sigma, std::size_t pool, std::size_t in_side, std::size_t pad) {
  if (!(sigma > 0.0)) throw ContractError("gaussian_meanpool: sigma must be positive");
  if (pool < 1) throw ContractError("gaussian_meanpool: pool must be >= 1");
  if (in_side < 1) throw ContractError("gaussian_meanpool: in_side must be >= 1");
  if ((in_side + 2 * pad) % pool != 0) {
    throw ContractError("gaussian_meanpool: padded side " + std::to_string(in_side + 2 * pad) +
                        " is not a multiple of pool " + std::to_string(pool));
  }
  return std::make_shared<GaussianMeanpoolModel>(sigma, pool, in_side, pad);
}

ModelPtr make_bilinear_aa(std::size_t factor, std::size_t in_side, std::size_t bands) {
  if (factor < 1 || in_side < 1 || bands < 1) throw ContractError("bilinear_aa: parameters must be positive");
  if (in_side % factor != 0) {
    throw ContractError("bilinear_aa: side " + std::to_string(in_side) + " not divisible by factor " +
                        std::to_string(factor));
  }
  return std::make_shared<BilinearAAModel>(factor, in_side, bands);
}

// --- Masked FFT ----------------------------------------------------------------

namespace {

std::vector<bool> build_column_mask(std::size_t side, std::size_t acceleration, std::size_t center_lines) {
  std::vector<bool> mask(side, false);
  const std::size_t dc = side / 2;
  for (std::size_t j = 0; j < side; ++j) {
    if (j % acceleration == dc % acceleration) mask[j] = true;
  }
  const std::size_t first = dc - center_lines / 2;
  for (std::size_t j = first; j < first + center_lines; ++j) mask[j] = true;
  return mask;
}

// In-place unitary 1-D DFT of `n` entries spaced `stride` apart.
void fft_strided(Eigen::FFT<double>& engine, std::vector<Complex>& buf, std::vector<Complex>& line,
                 std::vector<Complex>& spectrum, std::size_t offset, std::size_t stride, std::size_t n,
                 bool inverse) {
  for (std::size_t i = 0; i < n; ++i) line[i] = buf[offset + i * stride];
  if (inverse) {
    engine.inv(spectrum, line);
  } else {
    engine.fwd(spectrum, line);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) buf[offset + i * stride] = spectrum[i] * scale;
}

std::vector<Complex> fft2(std::span<const Complex> in, std::size_t side, bool inverse) {
  Eigen::FFT<double> engine;
  engine.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<Complex> buf(in.begin(), in.end());
  std::vector<Complex> line(side), spectrum(side);
  for (std::size_t r = 0; r < side; ++r) fft_strided(engine, buf, line, spectrum, r * side, 1, side, inverse);
  for (std::size_t c = 0; c < side; ++c) fft_strided(engine, buf, line, spectrum, c, side, side, inverse);
  return buf;
}

}  // namespace

MaskedFFTModel::MaskedFFTModel(std::size_t side, std::size_t acceleration, std::size_t center_lines)
    : LinearForwardModel(Shape{side, side}, Shape{side, side}, Field::kComplex),
      side_(side),
      acceleration_(acceleration),
      center_lines_(center_lines),
      mask_(build_column_mask(side, acceleration, center_lines)) {}

std::size_t MaskedFFTModel::retained_columns() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
}

Tensor MaskedFFTModel::unitary_fft(const Tensor& x) const {
  require_same_shape(x, Tensor(input_shape(), Field::kComplex), "unitary_fft");
  const Tensor cx = x.to_complex();
  return Tensor::complex(input_shape(), fft2(cx.complex_values(), side_, false));
}

Tensor MaskedFFTModel::unitary_ifft(const Tensor& k) const {
  const Tensor cx = k.to_complex();
  return Tensor::complex(input_shape(), fft2(cx.complex_values(), side_, true));
}

Tensor MaskedFFTModel::apply_impl(const Tensor& x) const {
  std::vector<Complex> k = fft2(x.complex_values(), side_, false);
  for (std::size_t r = 0; r < side_; ++r) {
    for (std::size_t c = 0; c < side_; ++c) {
      if (!mask_[c]) k[r * side_ + c] = Complex(0.0, 0.0);
    }
  }
  return Tensor::complex(output_shape(), std::move(k));
}

Tensor MaskedFFTModel::adjoint_impl(const Tensor& y) const {
  std::vector<Complex> k(y.complex_values().begin(), y.complex_values().end());
  for (std::size_t r = 0; r < side_; ++r) {
    for (std::size_t c = 0; c < side_; ++c) {
      if (!mask_[c]) k[r * side_ + c] = Complex(0.0, 0.0);
    }
  }
  return Tensor::complex(input_shape(), fft2(k, side_, true));
}

Tensor MaskedFFTModel::project_nullspace(const Tensor& v) const {
  if (v.shape() != input_shape()) throw ShapeError("masked_fft projection: wrong input shape");
  const Tensor cx = v.to_complex();
  std::vector<Complex> k = fft2(cx.complex_values(), side_, false);
  for (std::size_t r = 0; r < side_; ++r) {
    for (std::size_t c = 0; c < side_; ++c) {
      if (mask_[c]) k[r * side_ + c] = Complex(0.0, 0.0);
    }
  }
  return Tensor::complex(input_shape(), fft2(k, side_, true));
}

ModelPtr make_masked_fft(std::size_t side, std::size_t acceleration, std::size_t center_lines) {
  if (side < 1 || acceleration < 1) throw ContractError("masked_fft: side and acceleration must be positive");
  if (center_lines >= side) throw ContractError("masked_fft: center_lines must be smaller than side");
  return std::make_shared<MaskedFFTModel>(side, acceleration, center_lines);
}

// --- Dense matrix --------------------------------------------------------------

namespace {

Shape default_shape(const Shape& requested, std::size_t n) { return requested.empty() ? Shape{n} : requested; }

const Tensor& check_matrix(const Tensor& m) {
  if (m.ndim() != 2) throw ShapeError("matrix model needs a 2-D tensor, got " + shape_to_string(m.shape()));
  return m;
}

}  // namespace

MatrixModel::MatrixModel(Tensor matrix, Shape input_shape, Shape output_shape)
    : LinearForwardModel(default_shape(input_shape, check_matrix(matrix).shape()[1]),
                         default_shape(output_shape, matrix.shape()[0]), matrix.field()),
      matrix_(std::move(matrix)) {
  if (shape_numel(this->input_shape()) != matrix_.shape()[1] ||
      shape_numel(this->output_shape()) != matrix_.shape()[0]) {
    throw ShapeError("matrix model: declared shapes do not match the matrix");
  }
}

Tensor MatrixModel::apply_impl(const Tensor& x) const {
  const std::size_t rows = matrix_.shape()[0], cols = matrix_.shape()[1];
  if (!matrix_.is_complex()) {
    auto a = matrix_.real_values();
    auto v = x.real_values();
    std::vector<double> out(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += a[i * cols + j] * v[j];
      out[i] = acc;
    }
    return Tensor::real(output_shape(), std::move(out));
  }
  auto a = matrix_.complex_values();
  auto v = x.complex_values();
  std::vector<Complex> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    Complex acc(0.0, 0.0);
    for (std::size_t j = 0; j < cols; ++j) acc += a[i * cols + j] * v[j];
    out[i] = acc;
  }
  return Tensor::complex(output_shape(), std::move(out));
}

Tensor MatrixModel::adjoint_impl(const Tensor& y) const {
  const std::size_t rows = matrix_.shape()[0], cols = matrix_.shape()[1];
  if (!matrix_.is_complex()) {
    auto a = matrix_.real_values();
    auto v = y.real_values();
    std::vector<double> out(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) out[j] += a[i * cols + j] * v[i];
    }
    return Tensor::real(input_shape(), std::move(out));
  }
  auto a = matrix_.complex_values();
  auto v = y.complex_values();
  std::vector<Complex> out(cols, Complex(0.0, 0.0));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += std::conj(a[i * cols + j]) * v[i];
  }
  return Tensor::complex(input_shape(), std::move(out));
}

ModelPtr make_matrix_model(Tensor matrix) {
  matrix.require_finite("matrix");
  return std::make_shared<MatrixModel>(std::move(matrix));
}

// --- Composition -----------------------------------------------------------------

namespace {

const std::vector<ModelPtr>& check_stages(const std::vector<ModelPtr>& stages) {
  if (stages.empty()) throw ContractError("composed model needs at least one stage");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!stages[i]) throw ContractError("composed model: null stage");
    if (i && stages[i - 1]->output_shape() != stages[i]->input_shape()) {
      throw ShapeError("composed model: stage " + std::to_string(i) + " expects " +
                       shape_to_string(stages[i]->input_shape()) + " but receives " +
                       shape_to_string(stages[i - 1]->output_shape()));
    }
  }
  return stages;
}

Field composed_field(const std::vector<ModelPtr>& stages) {
  for (const auto& s : stages) {
    if (s->field() == Field::kComplex) return Field::kComplex;
  }
  return Field::kReal;
}

}  // namespace

ComposedModel::ComposedModel(std::vector<ModelPtr> stages)
    : LinearForwardModel(check_stages(stages).front()->input_shape(), check_stages(stages).back()->output_shape(),
                         composed_field(stages)),
      stages_(std::move(stages)) {}

Tensor ComposedModel::apply_impl(const Tensor& x) const {
  Tensor t = x;
  for (const auto& s : stages_) t = s->apply(t);
  return t;
}

Tensor ComposedModel::adjoint_impl(const Tensor& y) const {
  Tensor t = y;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) t = (*it)->adjoint(t);
  return t;
}

ModelPtr make_composed(std::vector<ModelPtr> stages) { return std::make_shared<ComposedModel>(std::move(stages)); }

// --- Noise ball / problem ------------------------------------------------------------

void NoiseBall::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ContractError("noise ball radius must be positive");
  if (!(slack >= 0.0)) throw ContractError("membership slack must be nonnegative");
  norm.validate();
}

bool NoiseBall::contains(const Tensor& v) const { return roi_seminorm(v, norm) < epsilon + slack; }

bool NoiseBall::contains_difference(const Tensor& a, const Tensor& b) const {
  return roi_seminorm(a, b, norm) < epsilon + slack;
}

void ForwardProblem::validate() const {
  noise.validate();
  if (model) noise.norm.validate_for(model->output_shape());
}

const LinearForwardModel& ForwardProblem::require_model() const {
  if (!model) throw ContractError("operation needs an explicit forward model");
  return *model;
}

// --- Null-space projection --------------------------------------------------------

ProjectionResult nullspace_project(const LinearForwardModel& model, const Tensor& v, double tol, int max_iter) {
  if (v.shape() != model.input_shape()) {
    throw ShapeError("nullspace_project: expected shape " + shape_to_string(model.input_shape()) + ", got " +
                     shape_to_string(v.shape()));
  }
  ProjectionResult out;
  if (const auto* fft = dynamic_cast<const MaskedFFTModel*>(&model)) {
    out.projected = fft->project_nullspace(v);
    out.exact = true;
    return out;
  }
  const Tensor fv = model.apply(v);
  Tensor zero = Tensor::zeros_like(v);
  if (fv.is_complex() && !zero.is_complex()) zero = zero.to_complex();
  CglsOptions options;
  options.tol = tol;
  options.max_iter = max_iter;
  CglsResult ls = cgls([&](const Tensor& u) { return model.apply(u); },
                       [&](const Tensor& r) { return model.adjoint(r); }, fv, zero, options);
  out.projected = v - ls.solution;
  out.iterations = ls.iterations;
  out.converged = ls.converged;
  out.relative_residual = ls.relative_residual;
  return out;
}

// --- Noise samplers -------------------------------------------------------------------

Tensor sample_noise(const NoiseBall& noise, const Shape& shape, Field field, double target_norm,
                    std::uint64_t seed) {
  noise.validate();
  if (!(target_norm >= 0.0)) throw ContractError("sample_noise: target norm must be nonnegative");
  if (target_norm >= noise.epsilon) {
    throw ContractError("sample_noise: target norm " + std::to_string(target_norm) +
                        " is not inside the open ball of radius " + std::to_string(noise.epsilon));
  }
  Tensor e(shape, field);
  if (target_norm == 0.0) return e;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (field == Field::kComplex) {
    for (Complex& z : e.complex_values()) {
      const double re = normal(rng);
      const double im = normal(rng);
      z = Complex(re, im);
    }
  } else {
    for (double& v : e.real_values()) v = normal(rng);
  }
  const double n = roi_seminorm(e, noise.norm);
  if (n == 0.0) throw ContractError("sample_noise: draw has zero seminorm (regions too small?)");
  e *= target_norm / n;
  return e;
}

Tensor sample_noise(const ForwardProblem& problem, double target_norm, std::uint64_t seed) {
  const auto& model = problem.require_model();
  return sample_noise(problem.noise, model.output_shape(), model.field(), target_norm, seed);
}

PoissonNoise sample_poisson_noise(const Tensor& y_clean, double level, std::uint64_t seed) {
  if (y_clean.is_complex()) throw ContractError("Poisson noise needs real intensities");
  if (!(level > 0.0)) throw ContractError("Poisson noise level must be positive");
  auto y = y_clean.real_values();
  double total = 0.0;
  for (double v : y) {
    if (v < 0.0) throw ContractError("Poisson noise needs nonnegative intensities");
    total += v;
  }
  PoissonNoise out;
  out.noise = Tensor(y_clean.shape());
  if (total == 0.0) return out;
  // E||alpha P(y/alpha) - y||^2 = sum_i Var = alpha * sum_i y_i, linear in alpha.
  out.alpha = level * level / total;
  std::mt19937_64 rng(seed);
  auto e = out.noise.real_values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) continue;
    std::poisson_distribution<long long> poisson(y[i] / out.alpha);
    e[i] = out.alpha * static_cast<double>(poisson(rng)) - y[i];
  }
  return out;
}

}  // namespace halluc
