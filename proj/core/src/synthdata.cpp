#include "camel/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "camel/parallel.hpp"

namespace camel::synth {

void SynthParams::validate() const {
  std::vector<std::string> errors;
  if (image_side < 8) errors.push_back("synth.image_side must be >= 8");
  if (!(prevalence >= 0.0 && prevalence <= 1.0)) errors.push_back("synth.prevalence must lie in [0, 1]");
  if (lesions_min < 1 || lesions_max < lesions_min) errors.push_back("synth.lesions_min/max must satisfy 1 <= min <= max");
  if (!(lesion_area_min > 0.0 && lesion_area_min <= lesion_area_max && lesion_area_max < 1.0)) {
    errors.push_back("synth.lesion_area_min/max must satisfy 0 < min <= max < 1");
  }
  if (nc_noise < 0 || ca_speckle < 0 || nc_lowfreq_amplitude < 0) errors.push_back("synth noise amplitudes must be >= 0");
  if (ca_speckle <= nc_noise && ca_blob_frequency <= nc_blob_frequency) {
    errors.push_back("synth: CA texture must differ from NC in speckle or nucleus density");
  }
  if (!errors.empty()) {
    std::string msg = "invalid synth parameters:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "'");
}

std::vector<const Sample*> SynthDataset::select(Split split) const {
  std::vector<const Sample*> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

namespace {

struct Ellipse {
  double cy, cx, ry, rx, cos_a, sin_a;

  bool contains(double y, double x, double t) const {
    const double dy = y - cy, dx = x - cx;
    const double u = (dx * cos_a + dy * sin_a) / (rx * t);
    const double v = (-dx * sin_a + dy * cos_a) / (ry * t);
    return u * u + v * v <= 1.0;
  }
};

Mask rasterize(const std::vector<Ellipse>& shapes, int side, double t) {
  Mask mask({side, side});
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (const auto& e : shapes) {
        if (e.contains(y + 0.5, x + 0.5, t)) {
          mask.at(y, x) = 1;
          break;
        }
      }
    }
  }
  return mask;
}

double coverage(const Mask& mask) {
  std::size_t on = 0;
  for (const auto v : mask.values()) on += v;
  return static_cast<double>(on) / static_cast<double>(mask.size());
}

// Union of ellipses whose area fraction lies in [area_min, area_max].
Mask lesion_mask(const SynthParams& p, Rng& rng) {
  const int side = p.image_side;
  for (;;) {
    const double target = rng.uniform(p.lesion_area_min, p.lesion_area_max);
    const int count = p.lesions_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.lesions_max - p.lesions_min + 1)));
    std::vector<Ellipse> shapes;
    for (int k = 0; k < count; ++k) {
      const double angle = rng.uniform(0.0, 3.141592653589793);
      const double size = rng.uniform(0.6, 1.0);
      const double aspect = rng.uniform(0.5, 1.0);
      shapes.push_back({rng.uniform(0.15, 0.85) * side, rng.uniform(0.15, 0.85) * side, size * aspect, size,
                        std::cos(angle), std::sin(angle)});
    }
    // Coverage is monotone in the common radius scale; bisect for the target.
    double lo = 0.0, hi = 2.0 * side;
    for (int it = 0; it < 30; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (coverage(rasterize(shapes, side, mid)) >= target) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    Mask mask = rasterize(shapes, side, hi);
    const double c = coverage(mask);
    if (c >= p.lesion_area_min && c <= p.lesion_area_max) return mask;
  }
}

// Bilinearly interpolated random lattice, values in [-1, 1].
std::vector<float> value_noise(int side, int cell, Rng& rng) {
  const int g = side / cell + 2;
  std::vector<float> lattice(static_cast<std::size_t>(g) * g);
  for (auto& v : lattice) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<float> out(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    const float fy = static_cast<float>(y) / cell;
    const int y0 = static_cast<int>(fy);
    const float ty = fy - y0;
    for (int x = 0; x < side; ++x) {
      const float fx = static_cast<float>(x) / cell;
      const int x0 = static_cast<int>(fx);
      const float tx = fx - x0;
      const float a = lattice[y0 * g + x0], b = lattice[y0 * g + x0 + 1];
      const float c = lattice[(y0 + 1) * g + x0], d = lattice[(y0 + 1) * g + x0 + 1];
      out[static_cast<std::size_t>(y) * side + x] = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }
  }
  return out;
}

// Unit-variance Gaussian noise smoothed by a separable [1 4 6 4 1] kernel, so
// its local statistics survive mild bilinear resampling.
std::vector<float> grain_noise(int side, Rng& rng) {
  static constexpr float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  // Sum of squared taps per axis is 70/256; two axes.
  const float renorm = 256.0f / 70.0f;
  std::vector<float> raw(static_cast<std::size_t>(side) * side);
  for (auto& v : raw) v = static_cast<float>(rng.normal());
  const auto at = [side](int i) { return std::clamp(i, 0, side - 1); };
  std::vector<float> tmp(raw.size()), out(raw.size());
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      float acc = 0;
      for (int d = -2; d <= 2; ++d) acc += k[d + 2] * raw[static_cast<std::size_t>(y) * side + at(x + d)];
      tmp[static_cast<std::size_t>(y) * side + x] = acc;
    }
  }
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      float acc = 0;
      for (int d = -2; d <= 2; ++d) acc += k[d + 2] * tmp[static_cast<std::size_t>(at(y + d)) * side + x];
      out[static_cast<std::size_t>(y) * side + x] = acc * renorm;
    }
  }
  return out;
}

void stamp_nucleus(Image& img, double cy, double cx, double radius) {
  const int side = img.dim(1);
  static constexpr float kNucleus[3] = {0.36f, 0.20f, 0.48f};
  for (int y = static_cast<int>(cy - radius - 1); y <= static_cast<int>(cy + radius + 1); ++y) {
    for (int x = static_cast<int>(cx - radius - 1); x <= static_cast<int>(cx + radius + 1); ++x) {
      if (y < 0 || x < 0 || y >= side || x >= side) continue;
      const double d2 = (y + 0.5 - cy) * (y + 0.5 - cy) + (x + 0.5 - cx) * (x + 0.5 - cx);
      if (d2 > radius * radius) continue;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = 0.3f * img.at(c, y, x) + 0.7f * kNucleus[c];
    }
  }
}

}  // namespace

Sample generate_one(const SynthParams& p, std::uint64_t index) {
  Rng rng(derive_seed(p.seed, index));
  const int side = p.image_side;
  Sample s;
  char id[32];
  std::snprintf(id, sizeof(id), "img%05llu", static_cast<unsigned long long>(index));
  s.id = id;
  const bool is_ca = rng.uniform() < p.prevalence;
  s.mask = is_ca ? lesion_mask(p, rng) : Mask({side, side});
  s.label = label_of(is_ca);

  Image img({3, side, side});
  std::array<std::vector<float>, 3> field;
  for (auto& f : field) f = value_noise(side, std::max(4, side / 8), rng);
  std::array<std::vector<float>, 3> grain;
  for (auto& g : grain) g = grain_noise(side, rng);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const bool ca = s.mask.at(y, x) != 0;
      const std::size_t i = static_cast<std::size_t>(y) * side + x;
      const float sigma = ca ? p.ca_speckle : p.nc_noise;
      for (int c = 0; c < 3; ++c) {
        float v = p.nc_base[c] + p.nc_lowfreq_amplitude * field[c][i];
        if (ca) v += p.ca_color_shift[c];
        img.at(c, y, x) = v + sigma * grain[c][i];
      }
    }
  }
  const double area = static_cast<double>(side) * side;
  const auto nuclei = [&](double frequency, bool want_ca) {
    const auto count = static_cast<int>(std::lround(frequency * area));
    for (int k = 0; k < count; ++k) {
      const double cy = rng.uniform(0, side), cx = rng.uniform(0, side);
      const double radius = rng.uniform(1.0, 2.2);
      const bool in_ca = s.mask.at(std::min(side - 1, static_cast<int>(cy)), std::min(side - 1, static_cast<int>(cx))) != 0;
      if (in_ca == want_ca) stamp_nucleus(img, cy, cx, radius);
    }
  };
  nuclei(p.nc_blob_frequency, false);
  if (is_ca) nuclei(p.ca_blob_frequency, true);
  for (auto& v : img.values()) v = quantize8(v);
  s.image = std::move(img);
  return s;
}

SynthDataset generate(const SynthParams& params, int n_images, double train_fraction) {
  if (n_images < 1) throw ConfigError("generate: n_images must be >= 1");
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ConfigError("generate: train fraction must lie in [0, 1]");
  params.validate();
  SynthDataset ds;
  ds.samples.resize(static_cast<std::size_t>(n_images));
  const auto n_train = static_cast<int>(std::lround(train_fraction * n_images));
  parallel_for(ds.samples.size(), [&](std::size_t i) {
    ds.samples[i] = generate_one(params, i);
    ds.samples[i].split = static_cast<int>(i) < n_train ? Split::Train : Split::Test;
  });
  return ds;
}

std::vector<std::size_t> balanced_indices(std::span<const Label> labels, Rng& rng) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[to_int(labels[i])].push_back(i);
  if (by_class[0].empty() || by_class[1].empty()) {
    throw ConfigError("class_balance: both CA and NC samples are required");
  }
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  const auto& minority = by_class[0].size() < by_class[1].size() ? by_class[0] : by_class[1];
  const std::size_t deficit = std::max(by_class[0].size(), by_class[1].size()) - minority.size();
  for (std::size_t k = 0; k < deficit; ++k) out.push_back(minority[rng.below(minority.size())]);
  return out;
}

SynthDataset class_balance(const SynthDataset& dataset, Rng& rng) {
  std::vector<Label> labels;
  for (const auto& s : dataset.samples) labels.push_back(s.label);
  SynthDataset out;
  for (const std::size_t i : balanced_indices(labels, rng)) out.samples.push_back(dataset.samples[i]);
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SynthDataset& dataset) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
  for (const auto& s : dataset.samples) {
    const std::string image_path = "images/" + s.id + ".ppm";
    const std::string mask_path = "masks/" + s.id + ".pgm";
    write_ppm(dir / image_path, s.image);
    write_pgm(dir / mask_path, s.mask);
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["image_path"] = image_path;
    rec["mask_path"] = mask_path;
    rec["image_label"] = to_string(s.label);
    rec["split"] = to_string(s.split);
    manifest << rec.dump() << "\n";
  }
}

SynthDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw IoError("missing dataset manifest " + (dir / "manifest.jsonl").string());
  SynthDataset ds;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    Sample s;
    s.id = rec.at("id").get<std::string>();
    s.image = read_ppm(dir / rec.at("image_path").get<std::string>());
    s.label = parse_label(rec.at("image_label").get<std::string>());
    if (rec.contains("mask_path")) {
      s.mask = read_pgm(dir / rec.at("mask_path").get<std::string>());
    } else {
      s.mask = Mask({s.image.dim(1), s.image.dim(2)});
    }
    s.split = rec.contains("split") ? parse_split(rec.at("split").get<std::string>()) : Split::Train;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace camel::synth
