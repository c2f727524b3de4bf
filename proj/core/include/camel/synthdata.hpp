#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "camel/image.hpp"
#include "camel/rng.hpp"

namespace camel::synth {

/// Generator settings. NC tissue is a smooth pink field with white noise and
/// sparse dark nuclei; CA lesions add a colour shift, strong per-pixel speckle
/// and denser nuclei, so a patch classifier can separate the two while a
/// single-pixel colour threshold cannot.
struct SynthParams {
  int image_side = 128;
  std::array<float, 3> nc_base{0.80f, 0.60f, 0.72f};
  float nc_noise = 0.03f;
  float nc_lowfreq_amplitude = 0.04f;
  float nc_blob_frequency = 0.003f;  // nuclei per pixel
  std::array<float, 3> ca_color_shift{-0.05f, -0.06f, 0.02f};
  float ca_speckle = 0.15f;
  float ca_blob_frequency = 0.012f;
  int lesions_min = 1;
  int lesions_max = 3;
  double lesion_area_min = 0.02;
  double lesion_area_max = 0.60;
  double prevalence = 0.5;
  std::uint64_t seed = 1;

  /// Throws ConfigError listing every violated constraint.
  void validate() const;
};

enum class Split { Train, Test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct Sample {
  std::string id;
  Image image;
  Mask mask;
  Label label = Label::NC;
  Split split = Split::Train;
};

struct SynthDataset {
  std::vector<Sample> samples;

  std::vector<const Sample*> select(Split split) const;
};

/// Deterministic in (params.seed, image index): image i is drawn from its own
/// stream, so the first k images do not depend on n_images.
SynthDataset generate(const SynthParams& params, int n_images, double train_fraction);

/// One image (and its mask) from the stream for `index`.
Sample generate_one(const SynthParams& params, std::uint64_t index);

/// Indices of a class-balanced multiset: every original index once, followed
/// by minority-class indices drawn uniformly with replacement until the class
/// counts match. Throws ConfigError if a class is absent.
std::vector<std::size_t> balanced_indices(std::span<const Label> labels, Rng& rng);

/// Image-unit balancing of a dataset (duplicates keep their id).
SynthDataset class_balance(const SynthDataset& dataset, Rng& rng);

/// images/<id>.ppm, masks/<id>.pgm and manifest.jsonl under `dir`.
void write_dataset(const std::filesystem::path& dir, const SynthDataset& dataset);
SynthDataset read_dataset(const std::filesystem::path& dir);

}  // namespace camel::synth
