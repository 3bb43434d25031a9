#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hazefuse/tensor.hpp"

// HZT tensor files: "HZT1", dtype u8 (0 = f32, 1 = f64), ndim u8,
// ndim x u32 dims, then the row-major payload. All integers and floats are
// little-endian.

namespace hazefuse {

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

// Appends dtype/ndim/dims/payload (the HZT body without the magic).
void append_tensor_record(std::vector<std::uint8_t>& out, const Tensor& t, Dtype dtype);

// Little-endian cursor over a byte buffer; throws TruncationError on overrun.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    std::span<const std::uint8_t> take(std::size_t n);

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

Tensor read_tensor_record(ByteReader& in);

template <class T>
void append_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> encode_hzt(const Tensor& t, Dtype dtype = Dtype::F32);
Tensor decode_hzt(std::span<const std::uint8_t> bytes);

void save_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype = Dtype::F32);
Tensor load_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// 8-bit binary PPM (P6) preview of a 3 x H x W image, values clamped to [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor& image);

// Rounds every value to the nearest float32.
Tensor round_to_f32(const Tensor& t);

}  // namespace hazefuse
