#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "camel/config.hpp"
#include "camel/evalkit.hpp"

namespace camel::pipeline {

/// Fixed artifact tree under the run's output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path instances() const { return root / "instances"; }
  std::filesystem::path enriched() const { return root / "enriched"; }
  std::filesystem::path masks() const { return root / "masks"; }
  std::filesystem::path reports() const { return root / "reports"; }

  std::filesystem::path mil_checkpoint(mil::Criterion c, int n) const;
  std::filesystem::path harvest_dir(const std::string& name, int n) const;
  std::filesystem::path retrain_checkpoint(const std::string& variant, int n) const;
  std::filesystem::path enriched_file(int n) const;
  std::filesystem::path seg_checkpoint(seg::MaskSource source, int n) const;
};

/// Instance classifiers compared at one scale.
enum class Variant { Fsb, MaxMax, MaxMin, Cmil, Constrained, Cascade };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
/// Row label in the instance-level report.
std::string row_name(Variant v);

/// Stage progress messages; silent by default.
using Progress = std::function<void(const std::string&)>;

void cmd_gen(const RunConfig& config);
void cmd_train_cmil(const RunConfig& config, mil::Criterion criterion, int n);
/// Harvests with both MIL checkpoints and writes maxmax/, maxmin/ and the
/// combined cmil/ instance sets.
void cmd_harvest(const RunConfig& config, int n);
void cmd_retrain(const RunConfig& config, Variant variant, int n);
void cmd_relabel(const RunConfig& config, int n);
/// `n` selects the enriched labels for camel-approx and is ignored otherwise.
void cmd_train_seg(const RunConfig& config, seg::MaskSource source, int n);
void cmd_eval(const RunConfig& config);
void cmd_pipeline(const RunConfig& config, const Progress& progress = {});

/// Report files written by cmd_eval.
std::filesystem::path instance_report(const Layout& layout, int n);
std::filesystem::path relabel_report(const Layout& layout);
std::filesystem::path segmentation_report(const Layout& layout);

/// Variants trained at scale `n` under `config`.
std::vector<Variant> variants_at(const RunConfig& config, int n);

/// Instances of `split` images tiled at N with labels derived from the
/// ground-truth masks.
mil::InstanceDataset ground_truth_instances(const synth::SynthDataset& data, synth::Split split, int n);
std::vector<mil::Bag> bags_of(const synth::SynthDataset& data, synth::Split split, int n);
/// Batched classifier probabilities.
std::vector<double> predict(const Classifier& model, std::span<const Image> instances);

}  // namespace camel::pipeline
