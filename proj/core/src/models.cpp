#include "camel/models.hpp"

namespace camel {

using nn::LayerSpec;

std::vector<LayerSpec> classifier_layers(int channels, const ClassifierArch& arch) {
  return {
      LayerSpec::conv2d(channels, arch.width1), LayerSpec::relu(), LayerSpec::maxpool2d(2),
      LayerSpec::conv2d(arch.width1, arch.width2), LayerSpec::relu(), LayerSpec::maxpool2d(2),
      LayerSpec::conv2d(arch.width2, arch.width3), LayerSpec::relu(),
      LayerSpec::global_avg_pool(), LayerSpec::dense(arch.width3, 1), LayerSpec::sigmoid(),
  };
}

std::vector<LayerSpec> segmenter_layers(int channels, const SegmenterArch& arch) {
  return {
      LayerSpec::conv2d(channels, arch.width1), LayerSpec::relu(), LayerSpec::maxpool2d(2),
      LayerSpec::conv2d(arch.width1, arch.width2), LayerSpec::relu(), LayerSpec::maxpool2d(2),
      LayerSpec::conv2d(arch.width2, arch.width3), LayerSpec::relu(),
      LayerSpec::upsample_nearest(2), LayerSpec::conv2d(arch.width3, arch.width1), LayerSpec::relu(),
      LayerSpec::upsample_nearest(2), LayerSpec::conv2d(arch.width1, 1), LayerSpec::sigmoid(),
  };
}

}  // namespace camel
