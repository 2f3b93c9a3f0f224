#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "halluc/tensor.hpp"

namespace halluc::htk {

// HTK1 tensor container:
//   "HTK1" | u8 dtype | u8 ndim | ndim x u64 LE dims | row-major LE payload
enum class DType : std::uint8_t { kF32 = 1, kF64 = 2, kC64 = 3, kC128 = 4 };

/// f64 for real tensors, c128 for complex ones.
DType native_dtype(const Tensor& t);

void write(std::ostream& out, const Tensor& t);
void write(std::ostream& out, const Tensor& t, DType dtype);
Tensor read(std::istream& in);

std::string to_bytes(const Tensor& t);
Tensor from_bytes(std::string_view bytes);

void save(const std::filesystem::path& path, const Tensor& t);
Tensor load(const std::filesystem::path& path);

}  // namespace halluc::htk
