#include "halluc/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace halluc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::string field_name(Field field) {
  return field == Field::kReal ? "real" : "complex";
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, Field field)
    : shape_(std::move(shape)), numel_(0), field_(field) {
  check_shape(shape_);
  numel_ = shape_numel(shape_);
  if (field_ == Field::kReal) {
    re_.assign(numel_, 0.0);
  } else {
    cx_.assign(numel_, Complex(0.0, 0.0));
  }
}

Tensor Tensor::real(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("payload of " + std::to_string(values.size()) +
                     " entries does not match shape " + shape_to_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = values.size();
  t.field_ = Field::kReal;
  t.re_ = std::move(values);
  return t;
}

Tensor Tensor::complex(Shape shape, std::vector<Complex> values) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("payload of " + std::to_string(values.size()) +
                     " entries does not match shape " + shape_to_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = values.size();
  t.field_ = Field::kComplex;
  t.cx_ = std::move(values);
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_, other.field_); }

std::span<double> Tensor::real_values() {
  if (is_complex()) throw ShapeError("real view requested on a complex tensor");
  return re_;
}

std::span<const double> Tensor::real_values() const {
  if (is_complex()) throw ShapeError("real view requested on a complex tensor");
  return re_;
}

std::span<Complex> Tensor::complex_values() {
  if (!is_complex()) throw ShapeError("complex view requested on a real tensor");
  return cx_;
}

std::span<const Complex> Tensor::complex_values() const {
  if (!is_complex()) throw ShapeError("complex view requested on a real tensor");
  return cx_;
}

double Tensor::modulus(std::size_t i) const {
  return is_complex() ? std::abs(cx_[i]) : std::abs(re_[i]);
}

Complex Tensor::value(std::size_t i) const {
  return is_complex() ? cx_[i] : Complex(re_[i], 0.0);
}

Tensor Tensor::to_complex() const {
  if (is_complex()) return *this;
  std::vector<Complex> values(numel_);
  for (std::size_t i = 0; i < numel_; ++i) values[i] = Complex(re_[i], 0.0);
  return Tensor::complex(shape_, std::move(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel_) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

bool Tensor::all_finite() const {
  if (is_complex()) {
    for (const Complex& z : cx_) {
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
  } else {
    for (double v : re_) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void Tensor::require_finite(const char* what) const {
  if (!all_finite()) throw ContractError(std::string(what) + " contains NaN or infinite entries");
}

namespace {

// Promotes `dst` to complex when `src` is complex so mixed arithmetic works.
void promote_for(Tensor& dst, const Tensor& src) {
  if (src.is_complex() && !dst.is_complex()) dst = dst.to_complex();
}

}  // namespace

void Tensor::axpy(double alpha, const Tensor& other) {
  require_same_shape(*this, other, "axpy");
  promote_for(*this, other);
  if (is_complex()) {
    if (other.is_complex()) {
      for (std::size_t i = 0; i < numel_; ++i) cx_[i] += alpha * other.cx_[i];
    } else {
      for (std::size_t i = 0; i < numel_; ++i) cx_[i] += alpha * other.re_[i];
    }
  } else {
    for (std::size_t i = 0; i < numel_; ++i) re_[i] += alpha * other.re_[i];
  }
}

Tensor& Tensor::operator+=(const Tensor& other) {
  axpy(1.0, other);
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  axpy(-1.0, other);
  return *this;
}

Tensor& Tensor::operator*=(double scale) {
  for (double& v : re_) v *= scale;
  for (Complex& z : cx_) z *= scale;
  return *this;
}

bool Tensor::identical(const Tensor& other) const {
  if (shape_ != other.shape_ || field_ != other.field_) return false;
  if (is_complex()) {
    return std::memcmp(cx_.data(), other.cx_.data(), numel_ * sizeof(Complex)) == 0;
  }
  return std::memcmp(re_.data(), other.re_.data(), numel_ * sizeof(double)) == 0;
}

Tensor operator+(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

Tensor operator-(Tensor a, const Tensor& b) {
  a -= b;
  return a;
}

Tensor operator*(double s, Tensor a) {
  a *= s;
  return a;
}

Complex inner(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "inner product");
  if (!a.is_complex() && !b.is_complex()) {
    auto x = a.real_values();
    auto y = b.real_values();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return {acc, 0.0};
  }
  Complex acc(0.0, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a.value(i)) * b.value(i);
  return acc;
}

double squared_l2_norm(const Tensor& a) {
  double acc = 0.0;
  if (a.is_complex()) {
    for (const Complex& z : a.complex_values()) acc += std::norm(z);
  } else {
    for (double v : a.real_values()) acc += v * v;
  }
  return acc;
}

double l2_norm(const Tensor& a) { return std::sqrt(squared_l2_norm(a)); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(context) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ContractError("cannot stack an empty list of tensors");
  const Tensor& first = items.front();
  Shape shape{items.size()};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  const std::size_t block = first.size();
  if (first.is_complex()) {
    std::vector<Complex> values;
    values.reserve(block * items.size());
    for (const Tensor& t : items) {
      require_same_shape(first, t, "stack");
      if (!t.is_complex()) throw ShapeError("stack: mixed real and complex tensors");
      auto v = t.complex_values();
      values.insert(values.end(), v.begin(), v.end());
    }
    return Tensor::complex(std::move(shape), std::move(values));
  }
  std::vector<double> values;
  values.reserve(block * items.size());
  for (const Tensor& t : items) {
    require_same_shape(first, t, "stack");
    if (t.is_complex()) throw ShapeError("stack: mixed real and complex tensors");
    auto v = t.real_values();
    values.insert(values.end(), v.begin(), v.end());
  }
  return Tensor::real(std::move(shape), std::move(values));
}

std::vector<Tensor> unstack(const Tensor& stacked) {
  if (stacked.ndim() < 2) throw ShapeError("unstack needs at least two axes");
  Shape inner_shape(stacked.shape().begin() + 1, stacked.shape().end());
  const std::size_t count = stacked.shape()[0];
  const std::size_t block = shape_numel(inner_shape);
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (stacked.is_complex()) {
      auto v = stacked.complex_values().subspan(i * block, block);
      out.push_back(Tensor::complex(inner_shape, {v.begin(), v.end()}));
    } else {
      auto v = stacked.real_values().subspan(i * block, block);
      out.push_back(Tensor::real(inner_shape, {v.begin(), v.end()}));
    }
  }
  return out;
}

}  // namespace halluc
