#include "camel/enrich.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "camel/loss.hpp"
#include "camel/parallel.hpp"

namespace camel::enrich {

using mil::Bag;
using mil::Criterion;
using mil::InstanceDataset;

void ConstraintWeights::validate() const {
  if (w1 < 0.0 || w2 < 0.0) throw ConfigError("constraint weights must be >= 0");
  if (w1 == 0.0 && w2 == 0.0) throw ConfigError("constraint weights w1 and w2 cannot both be zero");
}

namespace {

struct ConstraintTerms {
  double value;
  std::size_t maxmax;
  std::size_t maxmin;
};

ConstraintTerms constraint_terms(const Classifier& model, const Tensor& instances, Label y) {
  const Tensor out = model.forward(instances);
  const std::vector<double> preds(out.values().begin(), out.values().end());
  const std::size_t a = mil::select(preds, y, Criterion::MaxMax);
  const std::size_t b = mil::select(preds, y, Criterion::MaxMin);
  return {nn::bce_loss(preds[a], to_int(y)) + nn::bce_loss(preds[b], to_int(y)), a, b};
}

void require_trainable(const InstanceDataset& ds, const char* who) {
  if (ds.records.empty()) throw ConfigError(std::string(who) + ": empty instance dataset");
  if (ds.count(Label::CA) == 0 || ds.count(Label::NC) == 0) {
    throw ConfigError(std::string(who) + ": instance dataset must contain both CA and NC records");
  }
}

Classifier train_enriched(const InstanceDataset& ds, std::span<const Bag> bags, bool use_bags,
                          const ConstraintWeights& weights, const RetrainConfig& config) {
  if (config.batch_size < 1 || config.bag_batch_size < 1) throw ConfigError("retrain: batch sizes must be >= 1");
  const int channels = ds.records.front().instance.dim(0);
  Classifier model = mil::make_classifier(channels, config.arch, config.seed);
  auto optim = nn::OptimState::adam(config.learning_rate);

  Rng order_rng(derive_seed(config.seed, "retrain-order"));
  Rng aug_rng(derive_seed(config.seed, "retrain-augment"));
  Rng bag_order_rng(derive_seed(config.seed, "constraint-order"));
  Rng bag_aug_rng(derive_seed(config.seed, "constraint-augment"));

  std::vector<std::size_t> order = ds.epoch_indices();
  std::vector<std::size_t> bag_order(bags.size());
  std::iota(bag_order.begin(), bag_order.end(), 0);
  std::size_t bag_cursor = bag_order.size();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Tensor> items;
      std::vector<float> labels;
      for (std::size_t k = start; k < end; ++k) {
        const auto& rec = ds.records[order[k]];
        items.push_back(config.augment ? grid::apply(rec.instance, grid::sample_transform(aug_rng)) : rec.instance);
        labels.push_back(static_cast<float>(to_int(rec.label)));
      }
      BagBatch bag_batch;
      if (use_bags) {
        for (int k = 0; k < config.bag_batch_size; ++k) {
          if (bag_cursor == bag_order.size()) {
            bag_order_rng.shuffle(bag_order.begin(), bag_order.end());
            bag_cursor = 0;
          }
          const Bag& bag = bags[bag_order[bag_cursor++]];
          const Image image =
              config.augment ? grid::apply(bag.image, grid::sample_transform(bag_aug_rng)) : bag.image;
          bag_batch.instances.push_back(grid::instance_batch(image, bag.spec));
          bag_batch.labels.push_back(bag.label);
        }
      }
      const Tensor inputs = stack<float>(items);
      const Tensor targets({static_cast<int>(labels.size()), 1}, labels);
      constrained_step(model, optim, bag_batch, inputs, targets, weights);
    }
  }
  return model;
}

}  // namespace

double constraint_loss(const Classifier& model, const Tensor& instances, Label y) {
  return constraint_terms(model, instances, y).value;
}

double constraint_loss(const Classifier& model, const Bag& bag) {
  return constraint_loss(model, grid::instance_batch(bag.image, bag.spec), bag.label);
}

StepLoss constrained_gradients(const Classifier& model, const BagBatch& bags, const Tensor& inputs,
                               const Tensor& targets, const ConstraintWeights& weights, nn::ParamList<float>& grads) {
  if (bags.instances.size() != bags.labels.size()) throw ConfigError("constrained step: bag/label count mismatch");
  StepLoss loss;
  nn::Tape<float> tape;
  if (weights.w1 != 0.0 && !bags.instances.empty()) {
    std::vector<Tensor> selected;
    std::vector<float> sel_targets;
    for (std::size_t b = 0; b < bags.instances.size(); ++b) {
      const ConstraintTerms t = constraint_terms(model, bags.instances[b], bags.labels[b]);
      loss.constraint += t.value;
      for (const std::size_t idx : {t.maxmax, t.maxmin}) {
        selected.push_back(take(bags.instances[b], static_cast<int>(idx)));
        sel_targets.push_back(static_cast<float>(to_int(bags.labels[b])));
      }
    }
    model.forward(stack<float>(selected), tape);
    const std::vector<float> w(selected.size(), static_cast<float>(weights.w1));
    nn::bce_backward<float>(model, tape, Tensor({static_cast<int>(sel_targets.size()), 1}, sel_targets), w, grads);
  }
  if (weights.w2 != 0.0) {
    const Tensor out = model.forward(inputs, tape);
    loss.retrain = nn::bce_sum<float>(out, targets);
    const std::vector<float> w(static_cast<std::size_t>(inputs.dim(0)), static_cast<float>(weights.w2));
    nn::bce_backward<float>(model, tape, targets, w, grads);
  }
  loss.total = weights.w1 * loss.constraint + weights.w2 * loss.retrain;
  return loss;
}

StepLoss constrained_step(Classifier& model, nn::OptimState& optim, const BagBatch& bags, const Tensor& inputs,
                          const Tensor& targets, const ConstraintWeights& weights) {
  weights.validate();
  auto grads = model.zero_grads();
  const StepLoss loss = constrained_gradients(model, bags, inputs, targets, weights, grads);
  nn::optim_step(model.params(), grads, optim);
  return loss;
}

Classifier retrain(const InstanceDataset& instances, const RetrainConfig& config) {
  require_trainable(instances, "retrain");
  return train_enriched(instances, {}, false, {0.0, 1.0}, config);
}

Classifier retrain_constrained(const InstanceDataset& instances, std::span<const Bag> bags,
                               const ConstraintWeights& weights, const RetrainConfig& config) {
  weights.validate();
  require_trainable(instances, "retrain_constrained");
  if (bags.empty()) throw ConfigError("retrain_constrained: no bags for the constraint route");
  return train_enriched(instances, bags, true, weights, config);
}

std::vector<EnrichedImage> relabel(const Classifier& model, std::span<const Bag> images, double threshold) {
  std::vector<EnrichedImage> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    EnrichedImage& e = out[i];
    e.id = images[i].id;
    e.n = images[i].spec.n();
    e.probs = mil::predict_instances(model, images[i]);
    for (const double p : e.probs) e.labels.push_back(label_of(p >= threshold));
  });
  return out;
}

InstanceDataset cmil_harvest(std::span<const Bag> bags, const mil::MilConfig& config, double threshold) {
  InstanceDataset parts[2];
  const Criterion criteria[2] = {Criterion::MaxMax, Criterion::MaxMin};
  for (int k = 0; k < 2; ++k) {
    mil::MilConfig c = config;
    c.seed = derive_seed(config.seed, mil::to_string(criteria[k]));
    const auto trained = mil::train_mil(bags, criteria[k], c);
    parts[k] = mil::harvest(trained.model, criteria[k], bags, threshold);
  }
  return mil::combine(parts[0], parts[1], config.seed);
}

CascadeResult cascade_build(std::span<const Bag> bags, const CascadeConfig& config, const InstanceDataset* route_a) {
  if (bags.empty()) throw ConfigError("cascade_build: no images");
  const int side = bags.front().image.dim(1);
  const int n = config.n1 * config.n2;
  if (config.n1 < 1 || config.n2 < 1 || n < 2 || side % n != 0) {
    throw ConfigError("cascade_build: image side " + std::to_string(side) + " is not divisible by N1*N2=" +
                      std::to_string(n));
  }
  const grid::GridSpec final_spec = grid::GridSpec::from_scale(side, n);
  auto regrid = [&](const grid::GridSpec& spec) {
    std::vector<Bag> out;
    for (const auto& b : bags) out.push_back({b.id, b.image, spec, b.label});
    return out;
  };

  CascadeResult result;
  result.instance_side = final_spec.instance_side;
  if (route_a) {
    result.route_a = *route_a;
  } else {
    mil::MilConfig c = config.mil;
    c.seed = derive_seed(config.mil.seed, "cascade-route-a");
    result.route_a = cmil_harvest(regrid(final_spec), c, config.threshold);
  }

  if (config.route_b) {
    // Stage 1: cMIL(N1) -> retrain -> relabel the intermediate m' x m' tiles.
    const grid::GridSpec stage1 = grid::GridSpec::from_scale(side, config.n1);
    const auto bags1 = regrid(stage1);
    mil::MilConfig c1 = config.mil;
    c1.seed = derive_seed(config.mil.seed, "cascade-stage1");
    const InstanceDataset ds1 = cmil_harvest(bags1, c1, config.threshold);
    RetrainConfig r1 = config.retrain;
    r1.seed = derive_seed(config.retrain.seed, "cascade-stage1");
    const Classifier model1 = retrain(ds1, r1);
    const auto enriched = relabel(model1, bags1, config.threshold);

    // Stage 2: intermediate tiles become bags for cMIL(N2).
    const grid::GridSpec stage2{stage1.instance_side, final_spec.instance_side};
    std::vector<Bag> inter;
    for (std::size_t i = 0; i < bags1.size(); ++i) {
      const auto tiles = grid::split(bags1[i].image, stage1, true);
      for (int cell = 0; cell < stage1.cells(); ++cell) {
        const int r = cell / stage1.n(), c = cell % stage1.n();
        inter.push_back({bags1[i].id + "@r" + std::to_string(r) + "c" + std::to_string(c), tiles[cell], stage2,
                         enriched[i].labels[cell]});
      }
    }
    mil::MilConfig c2 = config.mil;
    c2.seed = derive_seed(config.mil.seed, "cascade-stage2");
    result.route_b = cmil_harvest(inter, c2, config.threshold);
    for (auto& r : result.route_b.records) r.provenance = mil::Provenance::Cascade;
  }
  result.combined = mil::combine(result.route_a, result.route_b, derive_seed(config.mil.seed, "cascade-combine"));
  return result;
}

void write_enriched(const std::filesystem::path& path, std::span<const EnrichedImage> images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : images) {
    nlohmann::ordered_json rec;
    rec["id"] = e.id;
    rec["N"] = e.n;
    std::vector<int> labels;
    for (const Label l : e.labels) labels.push_back(to_int(l));
    rec["labels"] = labels;
    rec["probs"] = e.probs;
    out << rec.dump() << "\n";
  }
}

std::vector<EnrichedImage> read_enriched(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing enriched labels " + path.string());
  std::vector<EnrichedImage> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EnrichedImage e;
    e.id = j.at("id").get<std::string>();
    e.n = j.at("N").get<int>();
    for (const int l : j.at("labels").get<std::vector<int>>()) e.labels.push_back(label_of(l != 0));
    e.probs = j.at("probs").get<std::vector<double>>();
    if (e.labels.size() != static_cast<std::size_t>(e.n) * e.n || e.probs.size() != e.labels.size()) {
      throw IoError(path.string() + ": record " + e.id + " does not carry N^2 labels");
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace camel::enrich
