// camel: label enrichment and segmentation pipeline driver.
#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <iostream>

#include "camel/pipeline.hpp"

namespace {

using namespace camel;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (key = value)")->required();
  cmd->add_option("--seed", c.seed, "override the configured seed");
  cmd->add_option("--out", c.out, "override the output directory");
}

RunConfig resolve(const Common& c) {
  KeyValueFile kv = KeyValueFile::load(c.config);
  if (c.seed) kv.set("seed", std::to_string(*c.seed));
  if (c.out) kv.set("out", *c.out);
  RunConfig config = RunConfig::from(kv);
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAMEL weakly supervised segmentation pipeline"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen", "generate the synthetic dataset");
  add_common(gen, common);

  std::string criterion = "maxmax";
  int scale = 4;
  auto* train_cmil = app.add_subcommand("train-cmil", "train one MIL classifier");
  add_common(train_cmil, common);
  train_cmil->add_option("--criterion", criterion, "maxmax or maxmin")->check(CLI::IsMember({"maxmax", "maxmin"}));
  train_cmil->add_option("--scale", scale, "grid scale N");

  auto* harvest = app.add_subcommand("harvest", "harvest instances with both MIL classifiers");
  add_common(harvest, common);
  harvest->add_option("--scale", scale, "grid scale N");

  std::string variant = "cmil";
  bool constrained = false, cascade = false;
  auto* retrain = app.add_subcommand("retrain", "retrain an instance classifier");
  add_common(retrain, common);
  retrain->add_option("--scale", scale, "grid scale N");
  retrain->add_option("--variant", variant, "fsb, maxmax, maxmin, cmil, constrained or cascade");
  retrain->add_flag("--constrained", constrained, "add the image-level constraint route");
  retrain->add_flag("--cascade", cascade, "train on the cascade-enhanced instance set");

  auto* relabel = app.add_subcommand("relabel", "relabel training images into N^2 instance labels");
  add_common(relabel, common);
  relabel->add_option("--scale", scale, "grid scale N");

  std::string mask_source = "camel-approx";
  auto* train_seg = app.add_subcommand("train-seg", "train a segmenter");
  add_common(train_seg, common);
  train_seg->add_option("--mask-source", mask_source, "camel-approx, pixel-gt or image-broadcast")
      ->check(CLI::IsMember({"camel-approx", "pixel-gt", "image-broadcast"}));
  train_seg->add_option("--scale", scale, "grid scale N of the enriched labels");

  auto* eval = app.add_subcommand("eval", "write metric reports");
  add_common(eval, common);

  auto* run = app.add_subcommand("pipeline", "run every stage in order");
  add_common(run, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig config = resolve(common);
    if (gen->parsed()) {
      pipeline::cmd_gen(config);
    } else if (train_cmil->parsed()) {
      pipeline::cmd_train_cmil(config, mil::parse_criterion(criterion), scale);
    } else if (harvest->parsed()) {
      pipeline::cmd_harvest(config, scale);
    } else if (retrain->parsed()) {
      if (constrained && cascade) throw ConfigError("--constrained and --cascade are exclusive");
      const auto v = constrained ? pipeline::Variant::Constrained
                     : cascade   ? pipeline::Variant::Cascade
                                 : pipeline::parse_variant(variant);
      pipeline::cmd_retrain(config, v, scale);
    } else if (relabel->parsed()) {
      pipeline::cmd_relabel(config, scale);
    } else if (train_seg->parsed()) {
      pipeline::cmd_train_seg(config, seg::parse_mask_source(mask_source), scale);
    } else if (eval->parsed()) {
      pipeline::cmd_eval(config);
    } else if (run->parsed()) {
      const auto start = std::chrono::steady_clock::now();
      pipeline::cmd_pipeline(config, [&](const std::string& stage) {
        const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::fprintf(stderr, "[%7.1fs] %s\n", t, stage.c_str());
      });
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
