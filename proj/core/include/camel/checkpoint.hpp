#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "camel/network.hpp"

namespace camel::nn {

inline constexpr std::string_view kCheckpointMagic = "CAMELCKPT";
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Layout: magic, u16 version, then per parameter: u32 name length, UTF-8
/// name, u32 rank, u32 extents, f32 data. All integers and floats little-endian.
std::string encode_checkpoint(const ParamList<float>& params);
ParamList<float> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamList<float>& params);
ParamList<float> load_checkpoint(const std::filesystem::path& path);

/// Loads parameters into a network of known architecture.
void load_into(const std::filesystem::path& path, Network<float>& net);

}  // namespace camel::nn
