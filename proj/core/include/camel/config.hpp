#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "camel/cmil.hpp"
#include "camel/enrich.hpp"
#include "camel/segmodel.hpp"
#include "camel/synthdata.hpp"

namespace camel {

/// Flat `key = value` text with dotted section prefixes. `#` starts a comment.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  std::map<std::string, std::string> values_;
};

/// Which retrained classifier feeds relabel and CAMEL segmentation.
enum class EnrichSource { Cmil, Constrained, Cascade };
std::string to_string(EnrichSource s);
EnrichSource parse_enrich_source(const std::string& s);

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";

  synth::SynthParams synth;
  int n_train = 400;
  int n_test = 200;

  std::vector<int> scales{4, 8};  // N values run end to end
  int primary_scale = 4;          // N of the instance-level comparison table

  mil::MilConfig cmil;
  double harvest_threshold = 0.5;
  enrich::RetrainConfig retrain;
  enrich::RetrainConfig fsb;  // fully supervised instance baseline
  enrich::ConstraintWeights weights;
  bool cascade = true;
  int cascade_n1 = 2;
  int cascade_n2 = 2;
  double relabel_threshold = 0.5;
  EnrichSource enrich_source = EnrichSource::Cmil;
  seg::SegConfig seg;

  RunConfig();

  /// Throws ConfigError listing every violation.
  void validate() const;

  /// Unknown keys and unparsable values are collected into one ConfigError.
  static RunConfig from(const KeyValueFile& kv);
  static RunConfig load(const std::filesystem::path& path);
  /// Canonical text form; `from(parse(to_text()))` reproduces the config.
  std::string to_text() const;
};

}  // namespace camel
