#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "halluc/errors.hpp"

namespace halluc {

enum class Field : std::uint8_t { kReal, kComplex };

using Shape = std::vector<std::size_t>;
using Complex = std::complex<double>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);
std::string field_name(Field field);

/// Dense row-major tensor over R or C.
///
/// Real tensors keep their entries in a plain double buffer; complex tensors
/// in a std::complex<double> buffer. Exactly one of the two buffers is in use.
/// Signals (elements of X) and measurements (elements of Y) share this type.
class Tensor {
 public:
  Tensor() = default;
  /// Zero tensor.
  explicit Tensor(Shape shape, Field field = Field::kReal);

  static Tensor real(Shape shape, std::vector<double> values);
  static Tensor complex(Shape shape, std::vector<Complex> values);
  static Tensor zeros_like(const Tensor& other);

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return numel_; }
  Field field() const { return field_; }
  bool is_complex() const { return field_ == Field::kComplex; }
  bool empty() const { return numel_ == 0; }

  std::span<double> real_values();
  std::span<const double> real_values() const;
  std::span<Complex> complex_values();
  std::span<const Complex> complex_values() const;

  /// |entry i|, field-agnostic.
  double modulus(std::size_t i) const;
  Complex value(std::size_t i) const;

  /// Copy with complex storage; real entries get zero imaginary part.
  Tensor to_complex() const;
  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Throws ContractError when any entry is NaN or infinite.
  void require_finite(const char* what = "tensor") const;
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double scale);

  /// this += alpha * other
  void axpy(double alpha, const Tensor& other);

  /// Bitwise comparison of shape, field and payload.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::size_t numel_ = 0;
  Field field_ = Field::kReal;
  std::vector<double> re_;
  std::vector<Complex> cx_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

/// <a, b> = sum conj(a_i) b_i.
Complex inner(const Tensor& a, const Tensor& b);
/// Plain Euclidean norm (entrywise modulus).
double l2_norm(const Tensor& a);
double squared_l2_norm(const Tensor& a);

void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

using Signal = Tensor;
using Measurement = Tensor;

/// Stacks equal-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);
/// Inverse of stack: splits along the leading axis.
std::vector<Tensor> unstack(const Tensor& stacked);

}  // namespace halluc
