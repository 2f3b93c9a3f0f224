#include "halluc/htk.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace halluc::htk {

static_assert(std::endian::native == std::endian::little,
              "HTK1 I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'H', 'T', 'K', '1'};
constexpr std::size_t kMaxDims = 32;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("HTK1: truncated stream");
  return value;
}

}  // namespace

DType native_dtype(const Tensor& t) { return t.is_complex() ? DType::kC128 : DType::kF64; }

void write(std::ostream& out, const Tensor& t) { write(out, t, native_dtype(t)); }

void write(std::ostream& out, const Tensor& t, DType dtype) {
  const bool complex_dtype = dtype == DType::kC64 || dtype == DType::kC128;
  if (t.is_complex() && !complex_dtype) {
    throw ContractError("HTK1: complex tensor cannot be written with a real dtype");
  }
  if (t.ndim() > 255) throw ContractError("HTK1: too many dimensions");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.ndim()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);

  switch (dtype) {
    case DType::kF64:
      out.write(reinterpret_cast<const char*>(t.real_values().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
      break;
    case DType::kF32:
      for (double v : t.real_values()) put<float>(out, static_cast<float>(v));
      break;
    case DType::kC128:
      for (std::size_t i = 0; i < t.size(); ++i) {
        Complex z = t.value(i);
        put<double>(out, z.real());
        put<double>(out, z.imag());
      }
      break;
    case DType::kC64:
      for (std::size_t i = 0; i < t.size(); ++i) {
        Complex z = t.value(i);
        put<float>(out, static_cast<float>(z.real()));
        put<float>(out, static_cast<float>(z.imag()));
      }
      break;
    default:
      throw ContractError("HTK1: unknown dtype code");
  }
  if (!out) throw Error("HTK1: write failed");
}

Tensor read(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ParseError("HTK1: bad magic bytes");
  const auto code = get<std::uint8_t>(in);
  const auto ndim = get<std::uint8_t>(in);
  if (code < 1 || code > 4) throw ParseError("HTK1: unknown dtype code " + std::to_string(code));
  if (ndim == 0 || ndim > kMaxDims) throw ParseError("HTK1: unsupported ndim " + std::to_string(ndim));
  Shape shape(ndim);
  for (auto& d : shape) {
    d = get<std::uint64_t>(in);
    if (d == 0) throw ParseError("HTK1: zero-length dimension");
  }
  const std::size_t n = shape_numel(shape);
  const auto dtype = static_cast<DType>(code);
  switch (dtype) {
    case DType::kF64: {
      std::vector<double> values(n);
      in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
      if (!in) throw ParseError("HTK1: truncated payload");
      return Tensor::real(std::move(shape), std::move(values));
    }
    case DType::kF32: {
      std::vector<float> raw(n);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float)));
      if (!in) throw ParseError("HTK1: truncated payload");
      return Tensor::real(std::move(shape), std::vector<double>(raw.begin(), raw.end()));
    }
    case DType::kC128: {
      std::vector<Complex> values(n);
      for (auto& z : values) {
        const double re = get<double>(in);
        const double im = get<double>(in);
        z = Complex(re, im);
      }
      return Tensor::complex(std::move(shape), std::move(values));
    }
    case DType::kC64: {
      std::vector<Complex> values(n);
      for (auto& z : values) {
        const float re = get<float>(in);
        const float im = get<float>(in);
        z = Complex(re, im);
      }
      return Tensor::complex(std::move(shape), std::move(values));
    }
  }
  throw ParseError("HTK1: unreachable dtype");
}

std::string to_bytes(const Tensor& t) {
  std::ostringstream os(std::ios::binary);
  write(os, t);
  return std::move(os).str();
}

Tensor from_bytes(std::string_view bytes) {
  std::istringstream is(std::string(bytes), std::ios::binary);
  Tensor t = read(is);
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError("HTK1: trailing bytes after tensor");
  return t;
}

void save(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write(out, t);
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open tensor file " + path.string());
  try {
    return read(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace halluc::htk
