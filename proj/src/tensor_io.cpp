#include "hazefuse/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "hazefuse/errors.hpp"

namespace hazefuse {

namespace {

constexpr char kMagic[4] = {'H', 'Z', 'T', '1'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

}  // namespace

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint16_t ByteReader::u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t ByteReader::u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t ByteReader::u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
    if (n > remaining()) {
        throw TruncationError("need " + std::to_string(n) + " more byte(s), " + std::to_string(remaining()) +
                                  " left",
                              pos_);
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
}

void append_tensor_record(std::vector<std::uint8_t>& out, const Tensor& t, Dtype dtype) {
    const Shape& s = t.shape();
    if (s.size() > 255) throw DimensionError("HZT supports at most 255 dimensions");
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(static_cast<std::uint8_t>(s.size()));
    for (std::size_t d : s) {
        if (d > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("HZT dimension exceeds u32");
        append_le(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data()) {
        if (dtype == Dtype::F32) {
            append_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            append_le(out, std::bit_cast<std::uint64_t>(v));
        }
    }
}

Tensor read_tensor_record(ByteReader& in) {
    const std::size_t dtype_at = in.offset();
    const std::uint8_t tag = in.u8();
    if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag), dtype_at);
    const std::uint8_t ndim = in.u8();
    Shape shape(ndim);
    std::uint64_t count = 1;
    for (auto& d : shape) {
        const std::size_t dim_at = in.offset();
        d = in.u32();
        count *= d;
        if (count > kMaxElements) throw FormatError("tensor dimensions overflow the element limit", dim_at);
    }
    const std::size_t width = tag == 0 ? 4 : 8;
    auto payload = in.take(static_cast<std::size_t>(count) * width);
    std::vector<double> values(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint8_t* p = payload.data() + i * width;
        if (tag == 0) {
            std::uint32_t bits = 0;
            for (std::size_t k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
            values[i] = static_cast<double>(std::bit_cast<float>(bits));
        } else {
            std::uint64_t bits = 0;
            for (std::size_t k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(p[k]) << (8 * k);
            values[i] = std::bit_cast<double>(bits);
        }
    }
    return Tensor(std::move(shape), std::move(values));
}

std::vector<std::uint8_t> encode_hzt(const Tensor& t, Dtype dtype) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    append_tensor_record(out, t, dtype);
    return out;
}

Tensor decode_hzt(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    auto magic = in.take(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("bad HZT magic", 0);
    Tensor t = read_tensor_record(in);
    if (in.remaining() != 0) throw FormatError("trailing bytes after HZT payload", in.offset());
    return t;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to '" + path.string() + "'");
}

void save_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
    write_file(path, encode_hzt(t, dtype));
}

Tensor load_tensor(const std::filesystem::path& path) { return decode_hzt(read_file(path)); }

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("PPM preview needs a 3 x H x W image, got " + shape_str(image.shape()));
    }
    const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
    const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const auto v = image.data();
    for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t c = 0; c < 3; ++c)
            out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v[c * hw + p], 0.0, 1.0) * 255.0)));
    write_file(path, out);
}

Tensor round_to_f32(const Tensor& t) {
    std::vector<double> v(t.data().begin(), t.data().end());
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
    return Tensor(t.shape(), std::move(v));
}

}  // namespace hazefuse
