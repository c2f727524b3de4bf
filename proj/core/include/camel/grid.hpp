#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "camel/image.hpp"
#include "camel/rng.hpp"

namespace camel::grid {

/// Tiling contract: an M x M image cut into N x N instances of side m = M / N.
struct GridSpec {
  int image_side = 0;     // M
  int instance_side = 0;  // m

  int n() const { return image_side / instance_side; }
  int cells() const { return n() * n(); }

  /// Throws ConfigError unless M % m == 0 and N >= 2 (N >= 1 with allow_single).
  void validate(bool allow_single = false) const;

  static GridSpec from_scale(int image_side, int n);

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// N^2 instances in row-major grid order.
std::vector<Image> split(const Image& image, const GridSpec& spec, bool allow_single = false);

/// Inverse of split.
Image stitch(std::span<const Image> instances, const GridSpec& spec, bool allow_single = false);

/// All instances stacked into one {N^2, C, m, m} batch, row-major.
Tensor instance_batch(const Image& image, const GridSpec& spec, bool allow_single = false);

/// CA iff any pixel of cell (row, col) is CA.
Label derive_instance_label(const Mask& gt, const GridSpec& spec, int row, int col);
std::vector<Label> derive_instance_labels(const Mask& gt, const GridSpec& spec, bool allow_single = false);

/// Broadcasts N^2 row-major labels onto their m x m cells.
Mask assemble_mask(std::span<const Label> labels, const GridSpec& spec, bool allow_single = false);

/// Top-left sub-square [y, y+side) x [x, x+side).
Image crop(const Image& image, int y, int x, int side);
Mask crop(const Mask& mask, int y, int x, int side);

/// Aligned crops at a uniformly random offset.
std::pair<Image, Mask> random_crop(const Image& image, const Mask& mask, int crop_side, Rng& rng);

/// Rotation by quarter turns (counter-clockwise), then mirrors, with an
/// optional zoom about the centre (scale >= 1) that keeps the original size.
struct Transform {
  int quarter_turns = 0;
  bool flip_horizontal = false;
  bool flip_vertical = false;
  double scale = 1.0;

  bool is_identity() const { return quarter_turns % 4 == 0 && !flip_horizontal && !flip_vertical && scale == 1.0; }
};

struct AugmentOptions {
  bool rotate = true;
  bool mirror = true;
  double max_scale = 1.2;  // 1.0 disables scaling
  // Zoom is drawn for this fraction of samples; the rest keep native texture
  // statistics, which interpolation would otherwise smooth away.
  double scale_probability = 0.5;
};

Transform sample_transform(Rng& rng, const AugmentOptions& options = {});

/// Images resample bilinearly, masks by nearest neighbour.
Image apply(const Image& image, const Transform& t);
Mask apply(const Mask& mask, const Transform& t);

std::pair<Image, std::optional<Mask>> augment(const Image& image, const Mask* mask, Rng& rng,
                                              const AugmentOptions& options = {});

}  // namespace camel::grid
