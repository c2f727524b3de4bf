#include "camel/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace camel {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + s + "' is not a valid number");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("'" + s + "' is not a boolean");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Binding {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> read;
  std::function<std::string(const RunConfig&)> write;
};

template <class T>
Binding num(std::string key, T RunConfig::*field) {
  return {std::move(key), [field](RunConfig& c, const std::string& s) { c.*field = parse_number<T>(s); },
          [field](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt(c.*field);
            else return std::to_string(c.*field);
          }};
}

template <class T, class Get>
Binding nested(std::string key, Get get) {
  return {std::move(key), [get](RunConfig& c, const std::string& s) { get(c) = parse_number<T>(s); },
          [get](const RunConfig& c) {
            const T v = get(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) return fmt(v);
            else return std::to_string(v);
          }};
}

template <class Get>
Binding flag(std::string key, Get get) {
  return {std::move(key), [get](RunConfig& c, const std::string& s) { get(c) = parse_bool(s); },
          [get](const RunConfig& c) { return std::string(get(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <class Get>
Binding int_list(std::string key, Get get) {
  return {std::move(key),
          [get](RunConfig& c, const std::string& s) {
            auto& dst = get(c);
            dst.clear();
            for (const auto& item : split_list(s)) dst.push_back(parse_number<int>(item));
          },
          [get](const RunConfig& c) {
            std::string out;
            for (const int v : get(const_cast<RunConfig&>(c))) out += (out.empty() ? "" : ",") + std::to_string(v);
            return out;
          }};
}

Binding color(std::string key, std::array<float, 3> synth::SynthParams::*field) {
  return {std::move(key),
          [field](RunConfig& c, const std::string& s) {
            const auto items = split_list(s);
            if (items.size() != 3) throw ConfigError("expected three comma-separated values");
            for (int i = 0; i < 3; ++i) (c.synth.*field)[i] = parse_number<float>(items[i]);
          },
          [field](const RunConfig& c) {
            const auto& v = c.synth.*field;
            return fmt(v[0]) + "," + fmt(v[1]) + "," + fmt(v[2]);
          }};
}

template <class Arch>
Binding arch(std::string key, Arch& (*get)(RunConfig&)) {
  return {std::move(key),
          [get](RunConfig& c, const std::string& s) {
            const auto items = split_list(s);
            if (items.size() != 3) throw ConfigError("expected three comma-separated widths");
            Arch& a = get(c);
            a.width1 = parse_number<int>(items[0]);
            a.width2 = parse_number<int>(items[1]);
            a.width3 = parse_number<int>(items[2]);
          },
          [get](const RunConfig& c) {
            const Arch& a = get(const_cast<RunConfig&>(c));
            return std::to_string(a.width1) + "," + std::to_string(a.width2) + "," + std::to_string(a.width3);
          }};
}

ClassifierArch& classifier_arch(RunConfig& c) { return c.cmil.arch; }
SegmenterArch& segmenter_arch(RunConfig& c) { return c.seg.arch; }

void add_retrain(std::vector<Binding>& b, const std::string& prefix, enrich::RetrainConfig RunConfig::*section) {
  b.push_back(nested<int>(prefix + ".epochs", [section](RunConfig& c) -> int& { return (c.*section).epochs; }));
  b.push_back(nested<int>(prefix + ".batch", [section](RunConfig& c) -> int& { return (c.*section).batch_size; }));
  b.push_back(nested<double>(prefix + ".lr", [section](RunConfig& c) -> double& { return (c.*section).learning_rate; }));
  b.push_back(flag(prefix + ".augment", [section](RunConfig& c) -> bool& { return (c.*section).augment; }));
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = [] {
    std::vector<Binding> b;
    b.push_back(num("seed", &RunConfig::seed));
    b.push_back({"out", [](RunConfig& c, const std::string& s) { c.out = s; },
                 [](const RunConfig& c) { return c.out.string(); }});
    b.push_back(num("data.n_train", &RunConfig::n_train));
    b.push_back(num("data.n_test", &RunConfig::n_test));
    b.push_back(nested<int>("synth.image_side", [](RunConfig& c) -> int& { return c.synth.image_side; }));
    b.push_back(color("synth.nc_base", &synth::SynthParams::nc_base));
    b.push_back(nested<float>("synth.nc_noise", [](RunConfig& c) -> float& { return c.synth.nc_noise; }));
    b.push_back(nested<float>("synth.nc_lowfreq_amplitude",
                              [](RunConfig& c) -> float& { return c.synth.nc_lowfreq_amplitude; }));
    b.push_back(nested<float>("synth.nc_blob_frequency", [](RunConfig& c) -> float& { return c.synth.nc_blob_frequency; }));
    b.push_back(color("synth.ca_color_shift", &synth::SynthParams::ca_color_shift));
    b.push_back(nested<float>("synth.ca_speckle", [](RunConfig& c) -> float& { return c.synth.ca_speckle; }));
    b.push_back(nested<float>("synth.ca_blob_frequency", [](RunConfig& c) -> float& { return c.synth.ca_blob_frequency; }));
    b.push_back(nested<int>("synth.lesions_min", [](RunConfig& c) -> int& { return c.synth.lesions_min; }));
    b.push_back(nested<int>("synth.lesions_max", [](RunConfig& c) -> int& { return c.synth.lesions_max; }));
    b.push_back(nested<double>("synth.lesion_area_min", [](RunConfig& c) -> double& { return c.synth.lesion_area_min; }));
    b.push_back(nested<double>("synth.lesion_area_max", [](RunConfig& c) -> double& { return c.synth.lesion_area_max; }));
    b.push_back(nested<double>("synth.prevalence", [](RunConfig& c) -> double& { return c.synth.prevalence; }));
    b.push_back(int_list("grid.scales", [](RunConfig& c) -> std::vector<int>& { return c.scales; }));
    b.push_back(num("grid.primary", &RunConfig::primary_scale));
    b.push_back(nested<int>("cmil.epochs", [](RunConfig& c) -> int& { return c.cmil.epochs; }));
    b.push_back(nested<int>("cmil.batch", [](RunConfig& c) -> int& { return c.cmil.batch_size; }));
    b.push_back(nested<double>("cmil.lr", [](RunConfig& c) -> double& { return c.cmil.learning_rate; }));
    b.push_back(flag("cmil.augment", [](RunConfig& c) -> bool& { return c.cmil.augment; }));
    b.push_back(flag("cmil.balance", [](RunConfig& c) -> bool& { return c.cmil.balance; }));
    b.push_back(num("cmil.threshold", &RunConfig::harvest_threshold));
    add_retrain(b, "retrain", &RunConfig::retrain);
    b.push_back(nested<int>("retrain.bag_batch", [](RunConfig& c) -> int& { return c.retrain.bag_batch_size; }));
    add_retrain(b, "fsb", &RunConfig::fsb);
    b.push_back(nested<double>("constraint.w1", [](RunConfig& c) -> double& { return c.weights.w1; }));
    b.push_back(nested<double>("constraint.w2", [](RunConfig& c) -> double& { return c.weights.w2; }));
    b.push_back(flag("cascade.enabled", [](RunConfig& c) -> bool& { return c.cascade; }));
    b.push_back(num("cascade.n1", &RunConfig::cascade_n1));
    b.push_back(num("cascade.n2", &RunConfig::cascade_n2));
    b.push_back(num("relabel.threshold", &RunConfig::relabel_threshold));
    b.push_back({"relabel.source", [](RunConfig& c, const std::string& s) { c.enrich_source = parse_enrich_source(s); },
                 [](const RunConfig& c) { return to_string(c.enrich_source); }});
    b.push_back(nested<int>("seg.crop_side", [](RunConfig& c) -> int& { return c.seg.crop_side; }));
    b.push_back(nested<int>("seg.epochs", [](RunConfig& c) -> int& { return c.seg.epochs; }));
    b.push_back(nested<double>("seg.lr", [](RunConfig& c) -> double& { return c.seg.learning_rate; }));
    b.push_back(nested<int>("seg.batch", [](RunConfig& c) -> int& { return c.seg.batch_size; }));
    b.push_back(nested<double>("seg.threshold", [](RunConfig& c) -> double& { return c.seg.threshold; }));
    b.push_back(flag("seg.augment", [](RunConfig& c) -> bool& { return c.seg.augment; }));
    b.push_back(arch<ClassifierArch>("arch.classifier", &classifier_arch));
    b.push_back(arch<SegmenterArch>("arch.segmenter", &segmenter_arch));
    return b;
  }();
  return table;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> errors;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) {
      errors.push_back(where + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      errors.push_back(where + ": empty key");
      continue;
    }
    if (kv.has(key)) errors.push_back(where + ": duplicate key '" + key + "'");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  if (!errors.empty()) {
    std::string msg = "config syntax errors:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string to_string(EnrichSource s) {
  switch (s) {
    case EnrichSource::Cmil: return "cmil";
    case EnrichSource::Constrained: return "constrained";
    case EnrichSource::Cascade: return "cascade";
  }
  return "unknown";
}

EnrichSource parse_enrich_source(const std::string& s) {
  if (s == "cmil") return EnrichSource::Cmil;
  if (s == "constrained") return EnrichSource::Constrained;
  if (s == "cascade") return EnrichSource::Cascade;
  throw ConfigError("unknown relabel source '" + s + "' (expected cmil, constrained or cascade)");
}

RunConfig::RunConfig() {
  // Desk-scale schedule: far fewer images than the original setting, so
  // more epochs and larger steps than its lr of 1e-4.
  cmil.epochs = 5;
  cmil.learning_rate = 1e-3;
  retrain.epochs = 30;
  retrain.learning_rate = 1e-3;
  fsb.epochs = 6;
  fsb.learning_rate = 1e-3;
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  try {
    synth.validate();
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (n_train < 2) errors.push_back("data.n_train must be >= 2");
  if (n_test < 1) errors.push_back("data.n_test must be >= 1");
  if (scales.empty()) errors.push_back("grid.scales must list at least one N");
  for (const int n : scales) {
    if (n < 2 || synth.image_side % n != 0) {
      errors.push_back("grid.scales: N=" + std::to_string(n) + " must be >= 2 and divide synth.image_side=" +
                       std::to_string(synth.image_side));
    }
  }
  if (std::find(scales.begin(), scales.end(), primary_scale) == scales.end()) {
    errors.push_back("grid.primary=" + std::to_string(primary_scale) + " must be one of grid.scales");
  }
  const auto positive = [&](const std::string& key, double v) {
    if (!(v > 0)) errors.push_back(key + " must be > 0");
  };
  const auto non_negative = [&](const std::string& key, int v) {
    if (v < 0) errors.push_back(key + " must be >= 0");
  };
  non_negative("cmil.epochs", cmil.epochs);
  positive("cmil.batch", cmil.batch_size);
  positive("cmil.lr", cmil.learning_rate);
  for (const auto& [name, r] : {std::pair{"retrain", &retrain}, std::pair{"fsb", &fsb}}) {
    non_negative(std::string(name) + ".epochs", r->epochs);
    positive(std::string(name) + ".batch", r->batch_size);
    positive(std::string(name) + ".lr", r->learning_rate);
  }
  positive("retrain.bag_batch", retrain.bag_batch_size);
  for (const auto& [key, t] : {std::pair{"cmil.threshold", harvest_threshold}, std::pair{"relabel.threshold", relabel_threshold}}) {
    if (!(t > 0.0 && t < 1.0)) errors.push_back(std::string(key) + " must lie in (0, 1)");
  }
  try {
    weights.validate();
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (cascade) {
    const int n = cascade_n1 * cascade_n2;
    if (cascade_n1 < 2 || cascade_n2 < 2) errors.push_back("cascade.n1 and cascade.n2 must be >= 2");
    if (n > 0 && synth.image_side % n != 0) {
      errors.push_back("cascade: N1*N2=" + std::to_string(n) + " must divide synth.image_side=" +
                       std::to_string(synth.image_side));
    }
    if (std::find(scales.begin(), scales.end(), n) == scales.end()) {
      errors.push_back("cascade: N1*N2=" + std::to_string(n) + " must be one of grid.scales");
    }
  } else if (enrich_source == EnrichSource::Cascade) {
    errors.push_back("relabel.source = cascade requires cascade.enabled = true");
  }
  try {
    seg.validate(synth.image_side);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  for (const auto& [key, a] : {std::pair{"arch.classifier", std::array{cmil.arch.width1, cmil.arch.width2, cmil.arch.width3}},
                               std::pair{"arch.segmenter", std::array{seg.arch.width1, seg.arch.width2, seg.arch.width3}}}) {
    if (a[0] < 1 || a[1] < 1 || a[2] < 1) errors.push_back(std::string(key) + " widths must be >= 1");
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

RunConfig RunConfig::from(const KeyValueFile& kv) {
  RunConfig c;
  std::vector<std::string> errors;
  std::map<std::string, const Binding*> index;
  for (const auto& b : bindings()) index[b.key] = &b;
  for (const auto& [key, value] : kv.values()) {
    const auto it = index.find(key);
    if (it == index.end()) {
      errors.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->second->read(c, value);
    } catch (const ConfigError& e) {
      errors.push_back(key + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  // One architecture for every classifier role.
  c.retrain.arch = c.cmil.arch;
  c.fsb.arch = c.cmil.arch;
  c.fsb.bag_batch_size = c.retrain.bag_batch_size;
  c.synth.seed = c.seed;
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from(KeyValueFile::load(path)); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& b : bindings()) {
    if (b.key == "out" && this->out.empty()) continue;
    out += b.key + " = " + b.write(*this) + "\n";
  }
  return out;
}

}  // namespace camel
