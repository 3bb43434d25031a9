#include "hazefuse/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>

namespace hazefuse {

namespace {

constexpr char kMagic[4] = {'H', 'Z', 'C', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 1 + 4;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s.empty() ? "none" : s;
}

}  // namespace

CheckpointMismatchError::CheckpointMismatchError(std::vector<std::string> missing,
                                                 std::vector<std::string> unexpected)
    : Error("checkpoint_mismatch",
            "checkpoint does not match model; missing: " + join(missing) + "; unexpected: " + join(unexpected)),
      missing_(std::move(missing)),
      unexpected_(std::move(unexpected)) {}

Checkpoint make_checkpoint(const ParamSet& params, std::uint64_t step, std::uint8_t stage) {
    Checkpoint c;
    c.step = step;
    c.stage = stage;
    for (const auto& [name, e] : params) c.tensors.emplace(name, e.tensor.detach());
    return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    append_le<std::uint32_t>(out, ckpt.version);
    append_le<std::uint64_t>(out, ckpt.step);
    append_le<std::uint8_t>(out, ckpt.stage);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        if (name.size() > 0xFFFF) throw ConfigError("checkpoint entry name too long: " + name.substr(0, 64));
        append_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        append_tensor_record(out, t, ckpt.dtype);
    }
    append_le<std::uint32_t>(out, crc32_of(out));
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw TruncationError("checkpoint shorter than its magic", bytes.size());
    if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("bad checkpoint magic", 0);
    if (bytes.size() < kHeaderBytes + 4) throw TruncationError("checkpoint header truncated", bytes.size());

    // The structure is walked over everything except the CRC trailer, so a
    // cut-short file reports truncation rather than a CRC failure.
    const auto body = bytes.first(bytes.size() - 4);
    ByteReader in(body);
    in.take(4);
    Checkpoint c;
    c.version = in.u32();
    if (c.version != kCheckpointVersion) {
        throw VersionError("unsupported checkpoint version " + std::to_string(c.version), 4);
    }
    c.step = in.u64();
    c.stage = in.u8();
    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = in.offset();
        const std::uint16_t len = in.u16();
        const auto name_bytes = in.take(len);
        std::string name(name_bytes.begin(), name_bytes.end());
        const std::size_t record_at = in.offset();
        Tensor t = read_tensor_record(in);
        if (i == 0) c.dtype = static_cast<Dtype>(body[record_at]);
        if (!c.tensors.emplace(std::move(name), std::move(t)).second) {
            throw FormatError("duplicate checkpoint entry", at);
        }
    }
    if (in.remaining() != 0) throw FormatError("unexpected bytes before checkpoint CRC", in.offset());

    ByteReader tail(bytes.subspan(bytes.size() - 4));
    const std::uint32_t stored = tail.u32();
    if (stored != crc32_of(body)) throw CrcError("checkpoint CRC mismatch", bytes.size() - 4);
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void load_params(const Checkpoint& ckpt, ParamSet& params) {
    std::vector<std::string> missing, unexpected;
    for (const auto& [name, e] : params)
        if (!ckpt.tensors.contains(name)) missing.push_back(name);
    for (const auto& [name, t] : ckpt.tensors)
        if (!params.contains(name)) unexpected.push_back(name);
    if (!missing.empty() || !unexpected.empty()) {
        throw CheckpointMismatchError(std::move(missing), std::move(unexpected));
    }
    for (auto& [name, e] : params) {
        const Tensor& src = ckpt.tensors.find(name)->second;
        if (src.shape() != e.tensor.shape()) {
            throw DimensionError("checkpoint entry " + name + " is " + shape_str(src.shape()) + ", model expects " +
                                 shape_str(e.tensor.shape()));
        }
        const bool trainable = e.trainable;
        e.tensor = src.clone();
        e.tensor.set_requires_grad(trainable);
    }
}

}  // namespace hazefuse
