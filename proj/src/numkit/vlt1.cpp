// SPDX-License-Identifier: Apache-2.0
#include "geovid/numkit/vlt1.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "geovid/errors.hpp"

namespace geovid::nk::vlt1 {

namespace {

constexpr std::array<char, 4> kMagic = {'V', 'L', 'T', '1'};

template <class U>
void put_le(std::ostream& os, U v) {
    std::array<char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> buf{};
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) throw IoError("truncated VLT1 stream");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

} // namespace

void write(std::ostream& os, const Shape& shape, std::span<const double> data, DType dtype) {
    if (shape.size() > 255) throw ShapeError("VLT1 supports at most 255 dimensions");
    if (shape_numel(shape) != data.size()) throw ShapeError("VLT1 payload length does not match shape");
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put_le<std::uint64_t>(os, d);
    for (double v : data) {
        if (dtype == DType::f64) {
            put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
        } else {
            put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    if (!os) throw IoError("failed writing VLT1 stream");
}

RawTensor read(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not a VLT1 stream");
    const auto dtype = get_le<std::uint8_t>(is);
    if (dtype > 1) throw IoError("unknown VLT1 dtype tag " + std::to_string(dtype));
    const auto ndim = get_le<std::uint8_t>(is);
    RawTensor out;
    for (unsigned i = 0; i < ndim; ++i) out.shape.push_back(static_cast<std::size_t>(get_le<std::uint64_t>(is)));
    const std::size_t n = shape_numel(out.shape);
    out.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.data[i] = dtype == 1 ? std::bit_cast<double>(get_le<std::uint64_t>(is))
                                 : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(is)));
    }
    return out;
}

void save(const std::filesystem::path& path, const Shape& shape, std::span<const double> data, DType dtype) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write(os, shape, data, dtype);
}

void save(const std::filesystem::path& path, const Tensor& t, DType dtype) { save(path, t.shape(), t.data(), dtype); }

RawTensor load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read(is);
}

Tensor load_tensor(const std::filesystem::path& path, bool requires_grad) {
    auto raw = load(path);
    return requires_grad ? Tensor::parameter(std::move(raw.shape), std::move(raw.data))
                         : Tensor::constant(std::move(raw.shape), std::move(raw.data));
}

} // namespace geovid::nk::vlt1
