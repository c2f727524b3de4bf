#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "camel/tensor.hpp"

namespace camel {

/// CA is the positive class everywhere.
enum class Label : std::uint8_t { NC = 0, CA = 1 };

inline int to_int(Label l) { return static_cast<int>(l); }
inline Label label_of(bool ca) { return ca ? Label::CA : Label::NC; }
std::string to_string(Label l);
Label parse_label(const std::string& s);

/// Channel-major float image {C, H, W}, values in [0, 1].
using Image = Tensor;

/// Binary mask {H, W}; 1 = CA.
using Mask = BasicTensor<std::uint8_t>;

inline int image_side(const Image& img) { return img.dim(1); }

/// 8-bit quantization used for every stored image; idempotent.
float quantize8(float v);

/// Binary PPM (P6, maxval 255) for 3-channel images.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

/// Binary PGM (P5) with mask values 0/255.
void write_pgm(const std::filesystem::path& path, const Mask& mask);
Mask read_pgm(const std::filesystem::path& path);

}  // namespace camel
