#pragma once

#include "postdae/ops.hpp"
#include "postdae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace postdae::ad {

/// Binary parameter checkpoint, all integers and floats little-endian:
///
///   "PDAE"  u32 version
///   u32 count, then `count` u32 model-configuration words
///   u32 layers, then per layer: u8 kind, u8 stride, u32 in, u32 out, u32 units
///   u32 tensors, then per tensor: u32 rank, rank x u32 dims, f64 values
struct Checkpoint {
    std::vector<std::uint32_t> config;
    std::vector<LayerSpec> layers;
    std::vector<Tensor> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, version, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace postdae::ad
