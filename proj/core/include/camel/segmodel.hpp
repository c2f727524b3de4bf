#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "camel/enrich.hpp"
#include "camel/models.hpp"
#include "camel/synthdata.hpp"

namespace camel::seg {

enum class MaskSource { CamelApprox, PixelGt, ImageBroadcast };
std::string to_string(MaskSource s);
MaskSource parse_mask_source(const std::string& s);

struct SegConfig {
  int crop_side = 64;  // M / 2 by default
  int epochs = 5;
  double learning_rate = 1e-3;
  int batch_size = 24;
  double threshold = 0.5;
  MaskSource source = MaskSource::CamelApprox;
  bool augment = true;
  std::uint64_t seed = 1;
  SegmenterArch arch;

  void validate(int image_side) const;
};

struct MaskedImage {
  std::string id;
  Image image;
  Mask mask;
};

/// camel-approx broadcasts enriched instance labels onto their cells;
/// image-broadcast fills every pixel with the image label; pixel-gt passes the
/// ground-truth mask through.
std::vector<MaskedImage> build_training_masks(std::span<const synth::Sample* const> samples, MaskSource source,
                                              const std::vector<enrich::EnrichedImage>* enriched = nullptr);

Segmenter make_segmenter(int channels, const SegmenterArch& arch, std::uint64_t seed);

/// Per step: sample images, augment image and mask jointly, random-crop,
/// per-pixel BCE summed over the batch.
Segmenter train_seg(std::span<const MaskedImage> data, const SegConfig& config);

/// Sum-BCE of the model on fixed (image, mask) pairs; no augmentation.
double seg_loss(const Segmenter& model, std::span<const MaskedImage> data);

/// Per-pixel CA probabilities {H, W}.
Tensor predict_mask(const Segmenter& model, const Image& image);

/// pixel >= threshold -> CA.
Mask binarize(const Tensor& probabilities, double threshold);

inline constexpr std::string_view kProbMagic = "CAMELPROB";

/// Magic, u32 width, u32 height, then row-major little-endian f32 values.
void write_prob_raster(const std::filesystem::path& path, const Tensor& probabilities);
Tensor read_prob_raster(const std::filesystem::path& path);

}  // namespace camel::seg
