#include "camel/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "camel/checkpoint.hpp"
#include "camel/parallel.hpp"

namespace camel::pipeline {

namespace fs = std::filesystem;
using mil::Criterion;

namespace {

constexpr int kChannels = 3;

std::string scale_tag(int n) { return "n" + std::to_string(n); }

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw IoError("missing artifact " + path.string() + " (produce it with `camel " + producer + "`)");
  }
}

synth::SynthDataset load_data(const Layout& layout) {
  require(layout.data() / "manifest.jsonl", "gen");
  return synth::read_dataset(layout.data());
}

Classifier load_classifier(const RunConfig& config, const fs::path& path, const std::string& producer) {
  require(path, producer);
  Classifier model(classifier_layers(kChannels, config.cmil.arch));
  nn::load_into(path, model);
  return model;
}

Segmenter load_segmenter(const RunConfig& config, const fs::path& path, const std::string& producer) {
  require(path, producer);
  Segmenter model(segmenter_layers(kChannels, config.seg.arch));
  nn::load_into(path, model);
  return model;
}

std::string retrain_command(Variant v, int n) {
  return "retrain --variant " + to_string(v) + " --scale " + std::to_string(n);
}

std::string seg_name(seg::MaskSource source, int n) {
  return source == seg::MaskSource::CamelApprox ? seg::to_string(source) + "_" + scale_tag(n) : seg::to_string(source);
}

Variant enrich_variant(EnrichSource s) {
  switch (s) {
    case EnrichSource::Cmil: return Variant::Cmil;
    case EnrichSource::Constrained: return Variant::Constrained;
    case EnrichSource::Cascade: return Variant::Cascade;
  }
  return Variant::Cmil;
}

void check_scale(const RunConfig& config, int n) {
  if (std::find(config.scales.begin(), config.scales.end(), n) == config.scales.end()) {
    throw ConfigError("scale N=" + std::to_string(n) + " is not listed in grid.scales");
  }
}

mil::MilConfig mil_config(const RunConfig& config, Criterion criterion, int n) {
  mil::MilConfig c = config.cmil;
  c.seed = derive_seed(config.seed, "cmil/" + mil::to_string(criterion) + "/" + scale_tag(n));
  return c;
}

enrich::RetrainConfig retrain_config(const RunConfig& config, Variant v, int n) {
  enrich::RetrainConfig c = v == Variant::Fsb ? config.fsb : config.retrain;
  c.arch = config.cmil.arch;
  // Constrained shares the cMIL retrain seed, so the constraint route is the
  // only difference between the two runs.
  const Variant seed_as = v == Variant::Constrained ? Variant::Cmil : v;
  c.seed = derive_seed(config.seed, "retrain/" + to_string(seed_as) + "/" + scale_tag(n));
  return c;
}

}  // namespace

fs::path Layout::mil_checkpoint(Criterion c, int n) const {
  return checkpoints() / ("mil_" + mil::to_string(c) + "_" + scale_tag(n) + ".ckpt");
}

fs::path Layout::harvest_dir(const std::string& name, int n) const { return instances() / scale_tag(n) / name; }

fs::path Layout::retrain_checkpoint(const std::string& variant, int n) const {
  return checkpoints() / ("retrain_" + variant + "_" + scale_tag(n) + ".ckpt");
}

fs::path Layout::enriched_file(int n) const { return enriched() / (scale_tag(n) + ".jsonl"); }

fs::path Layout::seg_checkpoint(seg::MaskSource source, int n) const {
  return checkpoints() / ("seg_" + seg_name(source, n) + ".ckpt");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Fsb: return "fsb";
    case Variant::MaxMax: return "maxmax";
    case Variant::MaxMin: return "maxmin";
    case Variant::Cmil: return "cmil";
    case Variant::Constrained: return "constrained";
    case Variant::Cascade: return "cascade";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  for (const Variant v : {Variant::Fsb, Variant::MaxMax, Variant::MaxMin, Variant::Cmil, Variant::Constrained,
                          Variant::Cascade}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown retrain variant '" + s + "' (expected fsb, maxmax, maxmin, cmil, constrained or cascade)");
}

std::string row_name(Variant v) {
  switch (v) {
    case Variant::Fsb: return "FSB";
    case Variant::MaxMax: return "Max-Max";
    case Variant::MaxMin: return "Max-Min";
    case Variant::Cmil: return "Retrain (cMIL)";
    case Variant::Constrained: return "Retrain (constrained)";
    case Variant::Cascade: return "Retrain (cascade)";
  }
  return "unknown";
}

fs::path instance_report(const Layout& layout, int n) {
  return layout.reports() / ("instances_" + scale_tag(n) + ".csv");
}
fs::path relabel_report(const Layout& layout) { return layout.reports() / "relabel.csv"; }
fs::path segmentation_report(const Layout& layout) { return layout.reports() / "segmentation.csv"; }

std::vector<Variant> variants_at(const RunConfig& config, int n) {
  std::vector<Variant> out;
  if (n == config.primary_scale) {
    out = {Variant::Fsb, Variant::MaxMax, Variant::MaxMin, Variant::Cmil, Variant::Constrained};
  } else {
    out = {Variant::Cmil};
  }
  const Variant source = enrich_variant(config.enrich_source);
  if (std::find(out.begin(), out.end(), source) == out.end()) out.push_back(source);
  if (config.cascade && config.cascade_n1 * config.cascade_n2 == n &&
      std::find(out.begin(), out.end(), Variant::Cascade) == out.end()) {
    out.push_back(Variant::Cascade);
  }
  return out;
}

std::vector<mil::Bag> bags_of(const synth::SynthDataset& data, synth::Split split, int n) {
  std::vector<mil::Bag> bags;
  for (const auto& s : data.samples) {
    if (s.split != split) continue;
    bags.push_back({s.id, s.image, grid::GridSpec::from_scale(s.image.dim(1), n), s.label});
  }
  return bags;
}

mil::InstanceDataset ground_truth_instances(const synth::SynthDataset& data, synth::Split split, int n) {
  mil::InstanceDataset ds;
  for (const auto& s : data.samples) {
    if (s.split != split) continue;
    const auto spec = grid::GridSpec::from_scale(s.image.dim(1), n);
    const auto labels = grid::derive_instance_labels(s.mask, spec);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        mil::SelectedInstance rec;
        rec.source_id = s.id;
        rec.row = r;
        rec.col = c;
        rec.instance = grid::crop(s.image, r * spec.instance_side, c * spec.instance_side, spec.instance_side);
        rec.label = labels[static_cast<std::size_t>(r) * n + c];
        rec.provenance = mil::Provenance::Relabel;
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

std::vector<double> predict(const Classifier& model, std::span<const Image> instances) {
  constexpr std::size_t kChunk = 64;
  const std::size_t chunks = (instances.size() + kChunk - 1) / kChunk;
  std::vector<double> out(instances.size());
  parallel_for(chunks, [&](std::size_t k) {
    const std::size_t begin = k * kChunk, end = std::min(instances.size(), begin + kChunk);
    const Tensor probs = model.forward(stack<float>(instances.subspan(begin, end - begin)));
    for (std::size_t i = begin; i < end; ++i) out[i] = probs[i - begin];
  });
  return out;
}

void cmd_gen(const RunConfig& config) {
  config.validate();
  const Layout layout{config.out};
  synth::SynthParams params = config.synth;
  params.seed = config.seed;
  const int total = config.n_train + config.n_test;
  const auto data = synth::generate(params, total, static_cast<double>(config.n_train) / total);
  synth::write_dataset(layout.data(), data);
}

void cmd_train_cmil(const RunConfig& config, Criterion criterion, int n) {
  config.validate();
  check_scale(config, n);
  const Layout layout{config.out};
  const auto data = load_data(layout);
  const auto bags = bags_of(data, synth::Split::Train, n);
  const auto result = mil::train_mil(bags, criterion, mil_config(config, criterion, n));
  fs::create_directories(layout.checkpoints());
  nn::save_checkpoint(layout.mil_checkpoint(criterion, n), result.model.params());
}

void cmd_harvest(const RunConfig& config, int n) {
  config.validate();
  check_scale(config, n);
  const Layout layout{config.out};
  const auto data = load_data(layout);
  const auto bags = bags_of(data, synth::Split::Train, n);
  mil::InstanceDataset parts[2];
  const Criterion criteria[2] = {Criterion::MaxMax, Criterion::MaxMin};
  for (int k = 0; k < 2; ++k) {
    const std::string producer = "train-cmil --criterion " + mil::to_string(criteria[k]) + " --scale " + std::to_string(n);
    const auto model = load_classifier(config, layout.mil_checkpoint(criteria[k], n), producer);
    parts[k] = mil::harvest(model, criteria[k], bags, config.harvest_threshold);
    mil::rebalance(parts[k], derive_seed(config.seed, "balance/" + mil::to_string(criteria[k]) + "/" + scale_tag(n)));
  }
  const auto combined = mil::combine(parts[0], parts[1], derive_seed(config.seed, "balance/cmil/" + scale_tag(n)));
  for (int k = 0; k < 2; ++k) {
    fs::remove_all(layout.harvest_dir(mil::to_string(criteria[k]), n));
    mil::write_instances(layout.harvest_dir(mil::to_string(criteria[k]), n), parts[k]);
  }
  fs::remove_all(layout.harvest_dir("cmil", n));
  mil::write_instances(layout.harvest_dir("cmil", n), combined);
}

namespace {

mil::InstanceDataset load_harvest(const Layout& layout, const std::string& name, int n) {
  const fs::path dir = layout.harvest_dir(name, n);
  require(dir / "manifest.jsonl", "harvest --scale " + std::to_string(n));
  return mil::read_instances(dir);
}

}  // namespace

void cmd_retrain(const RunConfig& config, Variant variant, int n) {
  config.validate();
  check_scale(config, n);
  const Layout layout{config.out};
  const auto cfg = retrain_config(config, variant, n);
  Classifier model;
  switch (variant) {
    case Variant::Fsb: {
      auto ds = ground_truth_instances(load_data(layout), synth::Split::Train, n);
      mil::rebalance(ds, derive_seed(config.seed, "balance/fsb/" + scale_tag(n)));
      model = enrich::retrain(ds, cfg);
      break;
    }
    case Variant::MaxMax:
    case Variant::MaxMin:
    case Variant::Cmil:
      model = enrich::retrain(load_harvest(layout, to_string(variant), n), cfg);
      break;
    case Variant::Constrained: {
      const auto bags = bags_of(load_data(layout), synth::Split::Train, n);
      model = enrich::retrain_constrained(load_harvest(layout, "cmil", n), bags, config.weights, cfg);
      break;
    }
    case Variant::Cascade: {
      if (!config.cascade) throw ConfigError("retrain --cascade requires cascade.enabled = true");
      if (config.cascade_n1 * config.cascade_n2 != n) {
        throw ConfigError("cascade builds N=" + std::to_string(config.cascade_n1 * config.cascade_n2) +
                          " instances, not N=" + std::to_string(n));
      }
      const auto bags = bags_of(load_data(layout), synth::Split::Train, n);
      const auto route_a = load_harvest(layout, "cmil", n);
      enrich::CascadeConfig cc;
      cc.n1 = config.cascade_n1;
      cc.n2 = config.cascade_n2;
      cc.threshold = config.harvest_threshold;
      cc.mil = config.cmil;
      cc.mil.seed = derive_seed(config.seed, "cascade/mil/" + scale_tag(n));
      cc.retrain = config.retrain;
      cc.retrain.arch = config.cmil.arch;
      cc.retrain.seed = derive_seed(config.seed, "cascade/retrain/" + scale_tag(n));
      const auto result = enrich::cascade_build(bags, cc, &route_a);
      fs::remove_all(layout.harvest_dir("cascade", n));
      mil::write_instances(layout.harvest_dir("cascade", n), result.combined);
      model = enrich::retrain(result.combined, cfg);
      break;
    }
  }
  fs::create_directories(layout.checkpoints());
  nn::save_checkpoint(layout.retrain_checkpoint(to_string(variant), n), model.params());
}

void cmd_relabel(const RunConfig& config, int n) {
  config.validate();
  check_scale(config, n);
  const Layout layout{config.out};
  const Variant source = enrich_variant(config.enrich_source);
  const auto model = load_classifier(config, layout.retrain_checkpoint(to_string(source), n), retrain_command(source, n));
  const auto bags = bags_of(load_data(layout), synth::Split::Train, n);
  const auto enriched = enrich::relabel(model, bags, config.relabel_threshold);
  fs::create_directories(layout.enriched());
  enrich::write_enriched(layout.enriched_file(n), enriched);
}

void cmd_train_seg(const RunConfig& config, seg::MaskSource source, int n) {
  config.validate();
  const Layout layout{config.out};
  const auto data = load_data(layout);
  const auto train = data.select(synth::Split::Train);
  std::vector<enrich::EnrichedImage> enriched;
  if (source == seg::MaskSource::CamelApprox) {
    check_scale(config, n);
    require(layout.enriched_file(n), "relabel --scale " + std::to_string(n));
    enriched = enrich::read_enriched(layout.enriched_file(n));
  }
  const auto masked = seg::build_training_masks(train, source, &enriched);
  if (source == seg::MaskSource::CamelApprox) {
    const fs::path dir = layout.masks() / ("approx_" + scale_tag(n));
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& m : masked) write_pgm(dir / (m.id + ".pgm"), m.mask);
  }
  seg::SegConfig cfg = config.seg;
  cfg.source = source;
  cfg.seed = derive_seed(config.seed, "seg/" + seg_name(source, n));
  const auto model = seg::train_seg(masked, cfg);
  fs::create_directories(layout.checkpoints());
  nn::save_checkpoint(layout.seg_checkpoint(source, n), model.params());
}

namespace {

struct SegModelRef {
  std::string name;
  seg::MaskSource source;
  int n;
};

std::vector<SegModelRef> seg_models(const RunConfig& config) {
  std::vector<SegModelRef> out{{"Pixel-level FSB", seg::MaskSource::PixelGt, 0},
                               {"Image-level FSB", seg::MaskSource::ImageBroadcast, 0}};
  for (const int n : config.scales) out.push_back({"CAMEL (N=" + std::to_string(n) + ")", seg::MaskSource::CamelApprox, n});
  return out;
}

std::vector<Label> thresholded(std::span<const double> probs, double threshold) {
  std::vector<Label> out;
  for (const double p : probs) out.push_back(label_of(p >= threshold));
  return out;
}

}  // namespace

void cmd_eval(const RunConfig& config) {
  config.validate();
  const Layout layout{config.out};
  const auto data = load_data(layout);
  fs::create_directories(layout.reports());

  // Every checkpoint is checked up front so a missing stage fails before any
  // report is rewritten.
  for (const int n : config.scales) {
    for (const Variant v : variants_at(config, n)) require(layout.retrain_checkpoint(to_string(v), n), retrain_command(v, n));
    require(layout.enriched_file(n), "relabel --scale " + std::to_string(n));
  }
  for (const auto& m : seg_models(config)) {
    require(layout.seg_checkpoint(m.source, m.n),
            "train-seg --mask-source " + seg::to_string(m.source) + (m.n ? " --scale " + std::to_string(m.n) : ""));
  }

  std::vector<eval::ReportRow> relabel_rows;
  for (const int n : config.scales) {
    const auto test = ground_truth_instances(data, synth::Split::Test, n);
    std::vector<Image> images;
    std::vector<Label> truth;
    for (const auto& r : test.records) {
      images.push_back(r.instance);
      truth.push_back(r.label);
    }
    std::vector<eval::ReportRow> rows;
    for (const Variant v : variants_at(config, n)) {
      const auto model = load_classifier(config, layout.retrain_checkpoint(to_string(v), n), retrain_command(v, n));
      const auto probs = predict(model, images);
      rows.push_back({row_name(v), eval::metrics(eval::confusion(thresholded(probs, 0.5), truth))});
    }
    eval::report(rows, instance_report(layout, n));

    // Enrichment quality: relabelled training instances against their
    // ground-truth labels.
    const auto enriched = enrich::read_enriched(layout.enriched_file(n));
    std::map<std::string, const enrich::EnrichedImage*> by_id;
    for (const auto& e : enriched) by_id[e.id] = &e;
    std::vector<Label> predicted, gt;
    for (const auto& s : data.samples) {
      if (s.split != synth::Split::Train) continue;
      const auto it = by_id.find(s.id);
      if (it == by_id.end()) throw IoError("enriched labels for N=" + std::to_string(n) + " lack image " + s.id);
      if (it->second->n != n || it->second->labels.size() != static_cast<std::size_t>(n) * n) {
        throw IoError("enriched labels for " + s.id + " do not hold N^2=" + std::to_string(n * n) + " entries");
      }
      const auto labels = grid::derive_instance_labels(s.mask, grid::GridSpec::from_scale(s.image.dim(1), n));
      predicted.insert(predicted.end(), it->second->labels.begin(), it->second->labels.end());
      gt.insert(gt.end(), labels.begin(), labels.end());
    }
    relabel_rows.push_back({"N=" + std::to_string(n) + " (" + std::to_string(n * n) + " labels)",
                            eval::metrics(eval::confusion(predicted, gt))});
  }
  eval::report(relabel_rows, relabel_report(layout));

  const auto test = data.select(synth::Split::Test);
  std::vector<eval::ReportRow> seg_rows;
  for (const auto& m : seg_models(config)) {
    const auto model = load_segmenter(config, layout.seg_checkpoint(m.source, m.n), "train-seg");
    std::vector<Mask> predicted(test.size());
    parallel_for(test.size(), [&](std::size_t i) {
      predicted[i] = seg::binarize(seg::predict_mask(model, test[i]->image), config.seg.threshold);
    });
    const fs::path dir = layout.masks() / ("pred_" + seg_name(m.source, m.n));
    fs::remove_all(dir);
    fs::create_directories(dir);
    eval::ConfusionMatrix cm;
    for (std::size_t i = 0; i < test.size(); ++i) {
      cm += eval::pixel_confusion(predicted[i], test[i]->mask);
      write_pgm(dir / (test[i]->id + ".pgm"), predicted[i]);
    }
    seg_rows.push_back({m.name, eval::metrics(cm)});
  }
  eval::report(seg_rows, segmentation_report(layout));
}

void cmd_pipeline(const RunConfig& config, const Progress& progress) {
  config.validate();
  const auto step = [&](const std::string& what) {
    if (progress) progress(what);
  };
  const Layout layout{config.out};
  fs::create_directories(layout.reports());
  {
    // Written without `out` so the same run reports identically wherever it lives.
    RunConfig portable = config;
    portable.out.clear();
    std::ofstream out(layout.reports() / "config.txt", std::ios::binary);
    out << portable.to_text();
  }
  step("gen");
  cmd_gen(config);
  for (const int n : config.scales) {
    const std::string at = " N=" + std::to_string(n);
    for (const Criterion c : {Criterion::MaxMax, Criterion::MaxMin}) {
      step("train-cmil " + mil::to_string(c) + at);
      cmd_train_cmil(config, c, n);
    }
    step("harvest" + at);
    cmd_harvest(config, n);
    for (const Variant v : variants_at(config, n)) {
      step("retrain " + to_string(v) + at);
      cmd_retrain(config, v, n);
    }
    step("relabel" + at);
    cmd_relabel(config, n);
    step("train-seg camel-approx" + at);
    cmd_train_seg(config, seg::MaskSource::CamelApprox, n);
  }
  step("train-seg pixel-gt");
  cmd_train_seg(config, seg::MaskSource::PixelGt, 0);
  step("train-seg image-broadcast");
  cmd_train_seg(config, seg::MaskSource::ImageBroadcast, 0);
  step("eval");
  cmd_eval(config);
}

}  // namespace camel::pipeline
