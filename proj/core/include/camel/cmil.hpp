#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "camel/grid.hpp"
#include "camel/models.hpp"

namespace camel::mil {

enum class Criterion { MaxMax, MaxMin };
std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& s);

/// Where an instance record came from.
enum class Provenance { MaxMax, MaxMin, Cascade, Relabel };
std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& s);

/// One image and its image-level label, tiled by `spec`.
struct Bag {
  std::string id;
  Image image;
  grid::GridSpec spec;
  Label label = Label::NC;

  std::vector<Image> instances() const { return grid::split(image, spec); }
};

struct SelectedInstance {
  std::string source_id;
  int row = 0;
  int col = 0;
  Image instance;
  Label label = Label::NC;
  Criterion criterion = Criterion::MaxMax;
  Provenance provenance = Provenance::MaxMax;
  double p_hat = 0.0;
};

/// Harvested instances. `order` is the class-balanced multiset of record
/// indices used for training (sorted ascending); empty means "each record once".
struct InstanceDataset {
  std::vector<SelectedInstance> records;
  std::vector<std::size_t> order;

  std::size_t size() const { return records.size(); }
  std::vector<std::size_t> epoch_indices() const;
  std::size_t count(Label l) const;
};

/// Max-Max picks the highest prediction; Max-Min picks the lowest for NC bags. Ties go to the lowest row-major index.
std::size_t select(std::span<const double> predictions, Label y, Criterion criterion);

/// BCE of the selected prediction against the image label.
double mil_loss(std::span<const double> predictions, Label y, Criterion criterion);

/// d mil_loss / d predictions: nonzero only at the selected index.
std::vector<double> mil_loss_grad(std::span<const double> predictions, Label y, Criterion criterion);

struct MilConfig {
  int epochs = 5;
  int batch_size = 4;  // bags per step
  double learning_rate = 1e-4;
  bool augment = true;
  bool balance = true;  // over-sample the minority image class
  std::uint64_t seed = 1;
  ClassifierArch arch;
};

struct MilResult {
  Classifier model;
  std::vector<double> epoch_losses;  // running MIL loss per epoch
};

/// Seeded He-uniform classifier for `channels`-channel instances.
Classifier make_classifier(int channels, const ClassifierArch& arch, std::uint64_t seed);

/// N^2 instance probabilities for one bag (no augmentation).
std::vector<double> predict_instances(const Classifier& model, const Bag& bag);

MilResult train_mil(std::span<const Bag> bags, Criterion criterion, const MilConfig& config);

/// MIL loss summed over all bags with the current model.
double evaluate_mil_loss(const Classifier& model, std::span<const Bag> bags, Criterion criterion);

/// One selection per bag; records whose thresholded prediction disagrees
/// with the image label are discarded.
InstanceDataset harvest(const Classifier& model, Criterion criterion, std::span<const Bag> bags,
                        double threshold = 0.5);

/// Union of both harvests, then class-balanced when both classes are present.
InstanceDataset combine(const InstanceDataset& a, const InstanceDataset& b, std::uint64_t seed);

/// Recomputes `order` as the balanced multiset of the records.
void rebalance(InstanceDataset& ds, std::uint64_t seed);

/// <dir>/images/*.ppm plus <dir>/manifest.jsonl.
void write_instances(const std::filesystem::path& dir, const InstanceDataset& ds);
InstanceDataset read_instances(const std::filesystem::path& dir);

}  // namespace camel::mil
