// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "geovid/numkit/tensor.hpp"

// "VLT1" container: magic, u8 dtype (0 = f32, 1 = f64), u8 ndim,
// ndim x u64 little-endian extents, then the little-endian payload.
namespace geovid::nk::vlt1 {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct RawTensor {
    Shape shape;
    std::vector<double> data;
};

void write(std::ostream& os, const Shape& shape, std::span<const double> data, DType dtype = DType::f64);
RawTensor read(std::istream& is);

void save(const std::filesystem::path& path, const Shape& shape, std::span<const double> data, DType dtype = DType::f64);
void save(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::f64);
RawTensor load(const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path, bool requires_grad = false);

} // namespace geovid::nk::vlt1
