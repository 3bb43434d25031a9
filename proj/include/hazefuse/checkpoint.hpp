#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hazefuse/errors.hpp"
#include "hazefuse/tensor.hpp"
#include "hazefuse/tensor_io.hpp"

// HZC checkpoints: "HZC1", version u32, step u64, stage u8, count u32, then
// per entry a u16 name length, the UTF-8 name and an HZT-style tensor record,
// and finally the CRC32 of every preceding byte. Little-endian throughout.

namespace hazefuse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t step = 0;
    std::uint8_t stage = 1;
    Dtype dtype = Dtype::F32;  // storage type used when encoding
    std::map<std::string, Tensor, std::less<>> tensors;
};

// Name sets differ between a checkpoint and the model that loads it.
class CheckpointMismatchError : public Error {
public:
    CheckpointMismatchError(std::vector<std::string> missing, std::vector<std::string> unexpected);

    const std::vector<std::string>& missing() const noexcept { return missing_; }
    const std::vector<std::string>& unexpected() const noexcept { return unexpected_; }

private:
    std::vector<std::string> missing_;
    std::vector<std::string> unexpected_;
};

Checkpoint make_checkpoint(const ParamSet& params, std::uint64_t step, std::uint8_t stage);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint tensors into `params`. Names must match exactly; shapes
// must agree entry by entry.
void load_params(const Checkpoint& ckpt, ParamSet& params);

}  // namespace hazefuse
