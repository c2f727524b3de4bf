#pragma once

#include <vector>

#include "camel/network.hpp"

namespace camel {

/// Instance classifier: three 3x3 conv+relu blocks with two 2x2 max-pools,
/// global average pooling, one dense unit and a sigmoid.
struct ClassifierArch {
  int width1 = 8;
  int width2 = 16;
  int width3 = 16;
};

/// Segmenter: three-level encoder, nearest-neighbour decoder, per-pixel sigmoid.
/// Inputs must have sides divisible by 4.
struct SegmenterArch {
  int width1 = 8;
  int width2 = 16;
  int width3 = 16;
};

std::vector<nn::LayerSpec> classifier_layers(int channels, const ClassifierArch& arch = {});
std::vector<nn::LayerSpec> segmenter_layers(int channels, const SegmenterArch& arch = {});

inline constexpr int kSegmenterStride = 4;

using Classifier = nn::Network<float>;
using Segmenter = nn::Network<float>;

}  // namespace camel
