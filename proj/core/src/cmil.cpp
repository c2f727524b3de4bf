#include "camel/cmil.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "camel/loss.hpp"
#include "camel/optim.hpp"
#include "camel/parallel.hpp"
#include "camel/synthdata.hpp"

namespace camel::mil {

std::string to_string(Criterion c) { return c == Criterion::MaxMax ? "maxmax" : "maxmin"; }

Criterion parse_criterion(const std::string& s) {
  if (s == "maxmax" || s == "max-max") return Criterion::MaxMax;
  if (s == "maxmin" || s == "max-min") return Criterion::MaxMin;
  throw ConfigError("unknown criterion '" + s + "' (expected maxmax or maxmin)");
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::MaxMax: return "maxmax";
    case Provenance::MaxMin: return "maxmin";
    case Provenance::Cascade: return "cascade";
    case Provenance::Relabel: return "relabel";
  }
  return "unknown";
}

Provenance parse_provenance(const std::string& s) {
  if (s == "maxmax") return Provenance::MaxMax;
  if (s == "maxmin") return Provenance::MaxMin;
  if (s == "cascade") return Provenance::Cascade;
  if (s == "relabel") return Provenance::Relabel;
  throw ConfigError("unknown provenance '" + s + "'");
}

std::vector<std::size_t> InstanceDataset::epoch_indices() const {
  if (!order.empty()) return order;
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::size_t InstanceDataset::count(Label l) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [l](const SelectedInstance& r) { return r.label == l; }));
}

std::size_t select(std::span<const double> predictions, Label y, Criterion criterion) {
  if (predictions.empty()) throw ConfigError("select: empty prediction list");
  const bool take_min = criterion == Criterion::MaxMin && y == Label::NC;
  std::size_t best = 0;
  for (std::size_t i = 1; i < predictions.size(); ++i) {
    if (take_min ? predictions[i] < predictions[best] : predictions[i] > predictions[best]) best = i;
  }
  return best;
}

double mil_loss(std::span<const double> predictions, Label y, Criterion criterion) {
  return nn::bce_loss(predictions[select(predictions, y, criterion)], to_int(y));
}

std::vector<double> mil_loss_grad(std::span<const double> predictions, Label y, Criterion criterion) {
  std::vector<double> g(predictions.size(), 0.0);
  const std::size_t i = select(predictions, y, criterion);
  g[i] = nn::bce_grad(predictions[i], to_int(y));
  return g;
}

Classifier make_classifier(int channels, const ClassifierArch& arch, std::uint64_t seed) {
  Classifier model(classifier_layers(channels, arch));
  Rng rng(derive_seed(seed, "classifier-init"));
  model.init_he_uniform(rng);
  return model;
}

std::vector<double> predict_instances(const Classifier& model, const Bag& bag) {
  const Tensor out = model.forward(grid::instance_batch(bag.image, bag.spec));
  return {out.values().begin(), out.values().end()};
}

namespace {

void require_both_classes(std::span<const Bag> bags, const char* who) {
  bool seen[2] = {false, false};
  for (const auto& b : bags) seen[to_int(b.label)] = true;
  if (!seen[0] || !seen[1]) throw ConfigError(std::string(who) + ": bags of both classes (CA and NC) are required");
}

}  // namespace

MilResult train_mil(std::span<const Bag> bags, Criterion criterion, const MilConfig& config) {
  if (bags.empty()) throw ConfigError("train_mil: no bags");
  require_both_classes(bags, "train_mil");
  if (config.batch_size < 1) throw ConfigError("train_mil: batch size must be >= 1");
  const int channels = bags.front().image.dim(0);
  MilResult result{make_classifier(channels, config.arch, config.seed), {}};
  Classifier& model = result.model;
  auto optim = nn::OptimState::adam(config.learning_rate);

  Rng order_rng(derive_seed(config.seed, "mil-order"));
  Rng aug_rng(derive_seed(config.seed, "mil-augment"));
  std::vector<std::size_t> order;
  if (config.balance) {
    std::vector<Label> labels;
    for (const auto& b : bags) labels.push_back(b.label);
    Rng balance_rng(derive_seed(config.seed, "mil-balance"));
    order = synth::balanced_indices(labels, balance_rng);
  } else {
    order.resize(bags.size());
    std::iota(order.begin(), order.end(), 0);
  }

  nn::Tape<float> tape;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Tensor> selected;
      std::vector<float> targets;
      for (std::size_t k = start; k < end; ++k) {
        const Bag& bag = bags[order[k]];
        const Image image = config.augment ? grid::apply(bag.image, grid::sample_transform(aug_rng)) : bag.image;
        const Tensor batch = grid::instance_batch(image, bag.spec);
        const Tensor out = model.forward(batch);
        const std::vector<double> preds(out.values().begin(), out.values().end());
        selected.push_back(take(batch, static_cast<int>(select(preds, bag.label, criterion))));
        targets.push_back(static_cast<float>(to_int(bag.label)));
      }
      const Tensor inputs = stack<float>(selected);
      const Tensor target_tensor({static_cast<int>(targets.size()), 1}, targets);
      model.forward(inputs, tape);
      auto grads = model.zero_grads();
      epoch_loss += nn::bce_backward<float>(model, tape, target_tensor, {}, grads);
      nn::optim_step(model.params(), grads, optim);
    }
    result.epoch_losses.push_back(epoch_loss);
  }
  return result;
}

double evaluate_mil_loss(const Classifier& model, std::span<const Bag> bags, Criterion criterion) {
  std::vector<double> per_bag(bags.size());
  parallel_for(bags.size(), [&](std::size_t i) {
    per_bag[i] = mil_loss(predict_instances(model, bags[i]), bags[i].label, criterion);
  });
  return std::accumulate(per_bag.begin(), per_bag.end(), 0.0);
}

InstanceDataset harvest(const Classifier& model, Criterion criterion, std::span<const Bag> bags, double threshold) {
  std::vector<std::optional<SelectedInstance>> picked(bags.size());
  parallel_for(bags.size(), [&](std::size_t i) {
    const Bag& bag = bags[i];
    const std::vector<double> preds = predict_instances(model, bag);
    const std::size_t idx = select(preds, bag.label, criterion);
    const Label predicted = label_of(preds[idx] >= threshold);
    if (predicted != bag.label) return;
    const int n = bag.spec.n();
    const int row = static_cast<int>(idx) / n, col = static_cast<int>(idx) % n;
    SelectedInstance rec;
    rec.source_id = bag.id;
    rec.row = row;
    rec.col = col;
    rec.instance = grid::crop(bag.image, row * bag.spec.instance_side, col * bag.spec.instance_side,
                              bag.spec.instance_side);
    rec.label = bag.label;
    rec.criterion = criterion;
    rec.provenance = criterion == Criterion::MaxMax ? Provenance::MaxMax : Provenance::MaxMin;
    rec.p_hat = preds[idx];
    picked[i] = std::move(rec);
  });
  InstanceDataset ds;
  for (auto& p : picked) {
    if (p) ds.records.push_back(std::move(*p));
  }
  return ds;
}

void rebalance(InstanceDataset& ds, std::uint64_t seed) {
  ds.order.clear();
  if (ds.count(Label::CA) == 0 || ds.count(Label::NC) == 0) return;
  std::vector<Label> labels;
  for (const auto& r : ds.records) labels.push_back(r.label);
  Rng rng(derive_seed(seed, "instance-balance"));
  ds.order = synth::balanced_indices(labels, rng);
  std::sort(ds.order.begin(), ds.order.end());
}

InstanceDataset combine(const InstanceDataset& a, const InstanceDataset& b, std::uint64_t seed) {
  InstanceDataset out;
  out.records = a.records;
  out.records.insert(out.records.end(), b.records.begin(), b.records.end());
  std::set<std::tuple<std::string, int, int, Provenance, Criterion>> keys;
  for (const auto& r : out.records) {
    if (!keys.emplace(r.source_id, r.row, r.col, r.provenance, r.criterion).second) {
      throw ConfigError("combine: duplicate record " + r.source_id + "(" + std::to_string(r.row) + "," +
                        std::to_string(r.col) + ")/" + to_string(r.provenance));
    }
  }
  rebalance(out, seed);
  return out;
}

void write_instances(const std::filesystem::path& dir, const InstanceDataset& ds) {
  std::filesystem::create_directories(dir / "images");
  std::vector<std::size_t> copies(ds.records.size(), 0);
  for (const std::size_t i : ds.epoch_indices()) ++copies[i];
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    std::string name = r.source_id + "_r" + std::to_string(r.row) + "c" + std::to_string(r.col) + "_" +
                       to_string(r.provenance) + "_" + to_string(r.criterion) + ".ppm";
    std::replace(name.begin(), name.end(), '/', '-');
    write_ppm(dir / "images" / name, r.instance);
    nlohmann::ordered_json rec;
    rec["source_id"] = r.source_id;
    rec["row"] = r.row;
    rec["col"] = r.col;
    rec["label"] = to_string(r.label);
    rec["criterion"] = to_string(r.criterion);
    rec["p_hat"] = r.p_hat;
    rec["provenance"] = to_string(r.provenance);
    rec["image_path"] = "images/" + name;
    rec["copies"] = copies[i];
    manifest << rec.dump() << "\n";
  }
}

InstanceDataset read_instances(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw IoError("missing instance manifest " + (dir / "manifest.jsonl").string());
  InstanceDataset ds;
  std::vector<std::size_t> order;
  bool balanced = false;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    SelectedInstance r;
    r.source_id = j.at("source_id").get<std::string>();
    r.row = j.at("row").get<int>();
    r.col = j.at("col").get<int>();
    r.label = parse_label(j.at("label").get<std::string>());
    r.criterion = parse_criterion(j.at("criterion").get<std::string>());
    r.p_hat = j.at("p_hat").get<double>();
    r.provenance = j.contains("provenance") ? parse_provenance(j.at("provenance").get<std::string>())
                                            : (r.criterion == Criterion::MaxMax ? Provenance::MaxMax : Provenance::MaxMin);
    r.instance = read_ppm(dir / j.at("image_path").get<std::string>());
    const std::size_t copies = j.value("copies", std::size_t{1});
    if (copies != 1) balanced = true;
    for (std::size_t k = 0; k < copies; ++k) order.push_back(ds.records.size());
    ds.records.push_back(std::move(r));
  }
  if (balanced) ds.order = std::move(order);
  return ds;
}

}  // namespace camel::mil
