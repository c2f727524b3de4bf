#include "camel/grid.hpp"

#include <cmath>

namespace camel::grid {

void GridSpec::validate(bool allow_single) const {
  if (image_side <= 0 || instance_side <= 0) throw ConfigError("grid: sides must be positive");
  if (image_side % instance_side != 0) {
    throw ConfigError("grid: image side " + std::to_string(image_side) + " is not divisible by instance side " +
                      std::to_string(instance_side));
  }
  if (n() < (allow_single ? 1 : 2)) throw ConfigError("grid: scale factor N must be >= 2");
}

GridSpec GridSpec::from_scale(int image_side, int n) {
  if (n <= 0 || image_side % n != 0) {
    throw ConfigError("grid: image side " + std::to_string(image_side) + " is not divisible by N=" + std::to_string(n));
  }
  return {image_side, image_side / n};
}

namespace {

void check_image(const Image& image, const GridSpec& spec, bool allow_single) {
  spec.validate(allow_single);
  if (image.rank() != 3 || image.dim(1) != spec.image_side || image.dim(2) != spec.image_side) {
    throw ConfigError("grid: image shape " + shape_string(image.shape()) + " does not match M=" +
                      std::to_string(spec.image_side));
  }
}

void check_mask(const Mask& mask, const GridSpec& spec, bool allow_single) {
  spec.validate(allow_single);
  if (mask.rank() != 2 || mask.dim(0) != spec.image_side || mask.dim(1) != spec.image_side) {
    throw ConfigError("grid: mask shape " + shape_string(mask.shape()) + " does not match M=" +
                      std::to_string(spec.image_side));
  }
}

void copy_cell(const Image& image, int y0, int x0, int side, float* dst) {
  const int channels = image.dim(0);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < side; ++y) {
      const float* src = &image.at(c, y0 + y, x0);
      std::copy(src, src + side, dst);
      dst += side;
    }
  }
}

}  // namespace

std::vector<Image> split(const Image& image, const GridSpec& spec, bool allow_single) {
  check_image(image, spec, allow_single);
  const int n = spec.n(), m = spec.instance_side;
  std::vector<Image> out;
  out.reserve(spec.cells());
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      Image cell({image.dim(0), m, m});
      copy_cell(image, r * m, c * m, m, cell.data());
      out.push_back(std::move(cell));
    }
  }
  return out;
}

Image stitch(std::span<const Image> instances, const GridSpec& spec, bool allow_single) {
  spec.validate(allow_single);
  if (instances.size() != static_cast<std::size_t>(spec.cells())) {
    throw ConfigError("stitch: expected " + std::to_string(spec.cells()) + " instances, got " +
                      std::to_string(instances.size()));
  }
  const int n = spec.n(), m = spec.instance_side;
  const int channels = instances.front().dim(0);
  Image image({channels, spec.image_side, spec.image_side});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Image& cell = instances[static_cast<std::size_t>(r) * n + c];
      if (cell.shape() != Shape{channels, m, m}) throw ConfigError("stitch: instance shape mismatch");
      for (int ch = 0; ch < channels; ++ch) {
        for (int y = 0; y < m; ++y) {
          std::copy(&cell.at(ch, y, 0), &cell.at(ch, y, 0) + m, &image.at(ch, r * m + y, c * m));
        }
      }
    }
  }
  return image;
}

Tensor instance_batch(const Image& image, const GridSpec& spec, bool allow_single) {
  check_image(image, spec, allow_single);
  const int n = spec.n(), m = spec.instance_side, channels = image.dim(0);
  Tensor batch({spec.cells(), channels, m, m});
  const std::size_t per = static_cast<std::size_t>(channels) * m * m;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) copy_cell(image, r * m, c * m, m, batch.data() + (static_cast<std::size_t>(r) * n + c) * per);
  }
  return batch;
}

Label derive_instance_label(const Mask& gt, const GridSpec& spec, int row, int col) {
  const int m = spec.instance_side;
  for (int y = row * m; y < (row + 1) * m; ++y) {
    for (int x = col * m; x < (col + 1) * m; ++x) {
      if (gt.at(y, x)) return Label::CA;
    }
  }
  return Label::NC;
}

std::vector<Label> derive_instance_labels(const Mask& gt, const GridSpec& spec, bool allow_single) {
  check_mask(gt, spec, allow_single);
  std::vector<Label> labels;
  labels.reserve(spec.cells());
  for (int r = 0; r < spec.n(); ++r) {
    for (int c = 0; c < spec.n(); ++c) labels.push_back(derive_instance_label(gt, spec, r, c));
  }
  return labels;
}

Mask assemble_mask(std::span<const Label> labels, const GridSpec& spec, bool allow_single) {
  spec.validate(allow_single);
  if (labels.size() != static_cast<std::size_t>(spec.cells())) {
    throw ConfigError("assemble_mask: expected " + std::to_string(spec.cells()) + " labels, got " +
                      std::to_string(labels.size()));
  }
  const int n = spec.n(), m = spec.instance_side;
  Mask mask({spec.image_side, spec.image_side});
  for (int y = 0; y < spec.image_side; ++y) {
    const Label* row = labels.data() + static_cast<std::size_t>(y / m) * n;
    for (int x = 0; x < spec.image_side; ++x) mask.at(y, x) = static_cast<std::uint8_t>(row[x / m]);
  }
  return mask;
}

Image crop(const Image& image, int y, int x, int side) {
  Image out({image.dim(0), side, side});
  copy_cell(image, y, x, side, out.data());
  return out;
}

Mask crop(const Mask& mask, int y, int x, int side) {
  Mask out({side, side});
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) out.at(r, c) = mask.at(y + r, x + c);
  }
  return out;
}

std::pair<Image, Mask> random_crop(const Image& image, const Mask& mask, int crop_side, Rng& rng) {
  const int side = image.dim(1);
  if (image.dim(2) != side || mask.dim(0) != side || mask.dim(1) != side) {
    throw ConfigError("random_crop: image and mask must be square and aligned");
  }
  if (crop_side < 1 || crop_side > side) {
    throw ConfigError("random_crop: crop side " + std::to_string(crop_side) + " exceeds image side " +
                      std::to_string(side));
  }
  const auto range = static_cast<std::uint64_t>(side - crop_side + 1);
  const int y = static_cast<int>(rng.below(range));
  const int x = static_cast<int>(rng.below(range));
  return {crop(image, y, x, crop_side), crop(mask, y, x, crop_side)};
}

Transform sample_transform(Rng& rng, const AugmentOptions& options) {
  Transform t;
  if (options.rotate) t.quarter_turns = static_cast<int>(rng.below(4));
  if (options.mirror) {
    t.flip_horizontal = rng.bernoulli(0.5);
    t.flip_vertical = rng.bernoulli(0.5);
  }
  if (options.max_scale > 1.0 && rng.bernoulli(options.scale_probability)) t.scale = rng.uniform(1.0, options.max_scale);
  return t;
}

namespace {

// Source coordinate of output pixel (y, x) for a square of side n: the zoom
// is applied first, then rotation and mirrors, expressed as an inverse map.
struct InverseMap {
  int n;
  const Transform& t;

  std::pair<double, double> operator()(int y, int x) const {
    int yy = y, xx = x;
    if (t.flip_vertical) yy = n - 1 - yy;
    if (t.flip_horizontal) xx = n - 1 - xx;
    // Undo a counter-clockwise quarter turn k times: ccw maps (r, c) -> (n-1-c, r).
    for (int k = 0; k < ((t.quarter_turns % 4) + 4) % 4; ++k) {
      const int r = xx;
      const int c = n - 1 - yy;
      yy = r;
      xx = c;
    }
    if (t.scale == 1.0) return {yy, xx};
    const double centre = (n - 1) / 2.0;
    return {centre + (yy - centre) / t.scale, centre + (xx - centre) / t.scale};
  }
};

}  // namespace

Image apply(const Image& image, const Transform& t) {
  if (t.is_identity()) return image;
  const int channels = image.dim(0), n = image.dim(1);
  if (image.dim(2) != n) throw ConfigError("augment: image must be square");
  Image out(image.shape());
  const InverseMap map{n, t};
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const auto [sy, sx] = map(y, x);
      if (t.scale == 1.0) {
        const int iy = static_cast<int>(sy), ix = static_cast<int>(sx);
        for (int c = 0; c < channels; ++c) out.at(c, y, x) = image.at(c, iy, ix);
        continue;
      }
      const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, n - 1);
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, n - 1);
      const int y1 = std::min(y0 + 1, n - 1), x1 = std::min(x0 + 1, n - 1);
      const float fy = static_cast<float>(std::clamp(sy - y0, 0.0, 1.0));
      const float fx = static_cast<float>(std::clamp(sx - x0, 0.0, 1.0));
      for (int c = 0; c < channels; ++c) {
        const float top = image.at(c, y0, x0) * (1 - fx) + image.at(c, y0, x1) * fx;
        const float bottom = image.at(c, y1, x0) * (1 - fx) + image.at(c, y1, x1) * fx;
        out.at(c, y, x) = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Mask apply(const Mask& mask, const Transform& t) {
  if (t.is_identity()) return mask;
  const int n = mask.dim(0);
  if (mask.dim(1) != n) throw ConfigError("augment: mask must be square");
  Mask out(mask.shape());
  const InverseMap map{n, t};
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const auto [sy, sx] = map(y, x);
      const int iy = std::clamp(static_cast<int>(std::lround(sy)), 0, n - 1);
      const int ix = std::clamp(static_cast<int>(std::lround(sx)), 0, n - 1);
      out.at(y, x) = mask.at(iy, ix);
    }
  }
  return out;
}

std::pair<Image, std::optional<Mask>> augment(const Image& image, const Mask* mask, Rng& rng,
                                              const AugmentOptions& options) {
  const Transform t = sample_transform(rng, options);
  std::optional<Mask> m;
  if (mask) m = apply(*mask, t);
  return {apply(image, t), std::move(m)};
}

}  // namespace camel::grid
