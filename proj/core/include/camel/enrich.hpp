#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "camel/cmil.hpp"
#include "camel/optim.hpp"

namespace camel::enrich {

/// Loss = w1 * constraint + w2 * retrain.
struct ConstraintWeights {
  double w1 = 1.0;  // image-level constraint route
  double w2 = 1.0;  // instance retrain route

  void validate() const;
};

struct RetrainConfig {
  int epochs = 5;
  int batch_size = 40;     // instances per step
  int bag_batch_size = 4;  // bags per step for the constraint route
  double learning_rate = 1e-4;
  bool augment = true;
  std::uint64_t seed = 1;
  ClassifierArch arch;
};

struct EnrichedImage {
  std::string id;
  int n = 0;
  std::vector<Label> labels;  // N^2, row-major
  std::vector<double> probs;  // N^2, row-major
};

/// Fully supervised training on harvested instances (sum-BCE per batch).
Classifier retrain(const mil::InstanceDataset& instances, const RetrainConfig& config);

/// Sum over both selection criteria of BCE(selected prediction, y), all
/// routed through the same classifier.
double constraint_loss(const Classifier& model, const mil::Bag& bag);

/// Constraint loss of a bag given as an already tiled {N^2, C, m, m} batch.
double constraint_loss(const Classifier& model, const Tensor& instances, Label y);

struct StepLoss {
  double constraint = 0.0;  // unweighted, summed over the bag batch
  double retrain = 0.0;     // unweighted, summed over the instance batch
  double total = 0.0;       // w1 * constraint + w2 * retrain
};

/// Tiled bags of one constraint mini-batch.
struct BagBatch {
  std::vector<Tensor> instances;  // each {N^2, C, m, m}
  std::vector<Label> labels;
};

/// One shared-parameter update from both routes. With w1 == 0 the bag batch
/// is not evaluated; with w2 == 0 the instance batch is not evaluated.
StepLoss constrained_step(Classifier& model, nn::OptimState& optim, const BagBatch& bags, const Tensor& inputs,
                          const Tensor& targets, const ConstraintWeights& weights);

/// Gradient of the step loss without applying it.
StepLoss constrained_gradients(const Classifier& model, const BagBatch& bags, const Tensor& inputs,
                               const Tensor& targets, const ConstraintWeights& weights, nn::ParamList<float>& grads);

/// Retrain with the image-level constraint route interleaved: one bag batch
/// per instance batch. Bag and instance streams use separate seeds, so w1 = 0
/// reproduces `retrain` exactly.
Classifier retrain_constrained(const mil::InstanceDataset& instances, std::span<const mil::Bag> bags,
                               const ConstraintWeights& weights, const RetrainConfig& config);

/// N^2 thresholded labels per image.
std::vector<EnrichedImage> relabel(const Classifier& model, std::span<const mil::Bag> images, double threshold = 0.5);

struct CascadeConfig {
  int n1 = 2;
  int n2 = 2;
  bool route_b = true;
  double threshold = 0.5;
  mil::MilConfig mil;
  RetrainConfig retrain;
};

struct CascadeResult {
  mil::InstanceDataset route_a;
  mil::InstanceDataset route_b;
  mil::InstanceDataset combined;
  int instance_side = 0;
};

/// cMIL harvest at N directly on the images: both criteria, combined.
mil::InstanceDataset cmil_harvest(std::span<const mil::Bag> bags, const mil::MilConfig& config, double threshold);

/// Route A: cMIL(N1*N2) on the images. Route B: cMIL(N1), retrain, relabel,
/// then cMIL(N2) on the labelled intermediate instances. Output is the
/// balanced union. `route_a` may be supplied to reuse an existing harvest.
/// `bags` may use any grid; only their images and labels are read.
CascadeResult cascade_build(std::span<const mil::Bag> bags, const CascadeConfig& config,
                            const mil::InstanceDataset* route_a = nullptr);

void write_enriched(const std::filesystem::path& path, std::span<const EnrichedImage> images);
std::vector<EnrichedImage> read_enriched(const std::filesystem::path& path);

}  // namespace camel::enrich
