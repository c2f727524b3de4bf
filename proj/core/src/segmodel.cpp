#include "camel/segmodel.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "camel/optim.hpp"

namespace camel::seg {

std::string to_string(MaskSource s) {
  switch (s) {
    case MaskSource::CamelApprox: return "camel-approx";
    case MaskSource::PixelGt: return "pixel-gt";
    case MaskSource::ImageBroadcast: return "image-broadcast";
  }
  return "unknown";
}

MaskSource parse_mask_source(const std::string& s) {
  if (s == "camel-approx") return MaskSource::CamelApprox;
  if (s == "pixel-gt") return MaskSource::PixelGt;
  if (s == "image-broadcast") return MaskSource::ImageBroadcast;
  throw ConfigError("unknown mask source '" + s + "' (expected camel-approx, pixel-gt or image-broadcast)");
}

void SegConfig::validate(int image_side) const {
  std::vector<std::string> errors;
  if (crop_side < kSegmenterStride || crop_side > image_side) errors.push_back("seg.crop_side must lie in [4, M]");
  if (crop_side % kSegmenterStride != 0) errors.push_back("seg.crop_side must be divisible by 4");
  if (!(threshold > 0.0 && threshold < 1.0)) errors.push_back("seg.threshold must lie in (0, 1)");
  if (batch_size < 1) errors.push_back("seg.batch must be >= 1");
  if (epochs < 0) errors.push_back("seg.epochs must be >= 0");
  if (!errors.empty()) {
    std::string msg = "invalid segmentation config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

std::vector<MaskedImage> build_training_masks(std::span<const synth::Sample* const> samples, MaskSource source,
                                              const std::vector<enrich::EnrichedImage>* enriched) {
  std::map<std::string, const enrich::EnrichedImage*> by_id;
  if (source == MaskSource::CamelApprox) {
    if (!enriched) throw ConfigError("camel-approx masks require enriched instance labels");
    for (const auto& e : *enriched) by_id[e.id] = &e;
  }
  std::vector<MaskedImage> out;
  out.reserve(samples.size());
  for (const synth::Sample* s : samples) {
    const int side = s->image.dim(1);
    MaskedImage m{s->id, s->image, {}};
    switch (source) {
      case MaskSource::PixelGt:
        if (s->mask.empty()) throw ConfigError("pixel-gt masks require a ground-truth mask for " + s->id);
        m.mask = s->mask;
        break;
      case MaskSource::ImageBroadcast:
        m.mask = Mask({side, side}, static_cast<std::uint8_t>(to_int(s->label)));
        break;
      case MaskSource::CamelApprox: {
        const auto it = by_id.find(s->id);
        if (it == by_id.end()) throw ConfigError("no enriched labels for image " + s->id);
        m.mask = grid::assemble_mask(it->second->labels, grid::GridSpec::from_scale(side, it->second->n));
        break;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

Segmenter make_segmenter(int channels, const SegmenterArch& arch, std::uint64_t seed) {
  Segmenter model(segmenter_layers(channels, arch));
  Rng rng(derive_seed(seed, "segmenter-init"));
  model.init_he_uniform(rng);
  return model;
}

namespace {

Tensor mask_targets(std::span<const Mask> masks) {
  const int side = masks.front().dim(0);
  Tensor t({static_cast<int>(masks.size()), 1, side, side});
  std::size_t o = 0;
  for (const auto& m : masks) {
    for (const auto v : m.values()) t[o++] = static_cast<float>(v);
  }
  return t;
}

}  // namespace

Segmenter train_seg(std::span<const MaskedImage> data, const SegConfig& config) {
  if (data.empty()) throw ConfigError("train_seg: empty dataset");
  config.validate(data.front().image.dim(1));
  Segmenter model = make_segmenter(data.front().image.dim(0), config.arch, config.seed);
  auto optim = nn::OptimState::adam(config.learning_rate);
  Rng order_rng(derive_seed(config.seed, "seg-order"));
  Rng aug_rng(derive_seed(config.seed, "seg-augment"));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  nn::Tape<float> tape;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<Image> images;
      std::vector<Mask> masks;
      for (std::size_t k = start; k < end; ++k) {
        const MaskedImage& item = data[order[k]];
        Image img = item.image;
        Mask mask = item.mask;
        if (config.augment) {
          const grid::Transform t = grid::sample_transform(aug_rng);
          img = grid::apply(img, t);
          mask = grid::apply(mask, t);
        }
        auto [ci, cm] = grid::random_crop(img, mask, config.crop_side, aug_rng);
        images.push_back(std::move(ci));
        masks.push_back(std::move(cm));
      }
      model.forward(stack<float>(images), tape);
      auto grads = model.zero_grads();
      nn::bce_backward<float>(model, tape, mask_targets(masks), {}, grads);
      nn::optim_step(model.params(), grads, optim);
    }
  }
  return model;
}

double seg_loss(const Segmenter& model, std::span<const MaskedImage> data) {
  double total = 0.0;
  for (const auto& item : data) {
    const Tensor out = model.forward(item.image.reshaped({1, item.image.dim(0), item.image.dim(1), item.image.dim(2)}));
    total += nn::bce_sum<float>(out, mask_targets(std::span<const Mask>(&item.mask, 1)));
  }
  return total;
}

Tensor predict_mask(const Segmenter& model, const Image& image) {
  if (image.rank() != 3) throw ConfigError("predict_mask: expected a {C, H, W} image");
  const int h = image.dim(1), w = image.dim(2);
  if (h % kSegmenterStride != 0 || w % kSegmenterStride != 0) {
    throw ConfigError("predict_mask: image sides must be divisible by " + std::to_string(kSegmenterStride) + ", got " +
                      shape_string(image.shape()));
  }
  const Tensor out = model.forward(image.reshaped({1, image.dim(0), h, w}));
  return out.reshaped({h, w});
}

Mask binarize(const Tensor& probabilities, double threshold) {
  Mask m(probabilities.shape());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = probabilities[i] >= threshold ? 1 : 0;
  return m;
}

void write_prob_raster(const std::filesystem::path& path, const Tensor& probabilities) {
  if (probabilities.rank() != 2) throw ConfigError("write_prob_raster: expected {H, W}");
  std::string bytes(kProbMagic);
  auto put = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put(static_cast<std::uint32_t>(probabilities.dim(1)));
  put(static_cast<std::uint32_t>(probabilities.dim(0)));
  for (const float f : probabilities.values()) put(std::bit_cast<std::uint32_t>(f));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_prob_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing probability raster " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const std::size_t header = kProbMagic.size() + 8;
  if (bytes.size() < header || std::string_view(bytes).substr(0, kProbMagic.size()) != kProbMagic) {
    throw IoError(path.string() + ": not a probability raster");
  }
  auto get = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return v;
  };
  const auto w = get(kProbMagic.size()), h = get(kProbMagic.size() + 4);
  if (w == 0 || h == 0 || bytes.size() != header + 4ull * w * h) throw IoError(path.string() + ": bad raster size");
  Tensor t({static_cast<int>(h), static_cast<int>(w)});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(get(header + 4 * i));
  return t;
}

}  // namespace camel::seg
