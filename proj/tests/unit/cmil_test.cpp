#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "camel/cmil.hpp"
#include "camel/loss.hpp"
#include "camel/synthdata.hpp"
#include "test_util.hpp"

namespace camel::mil {
namespace {

using testing::logit;
using testing::mean_probe;

/// 1-channel 8x8 bag of four 4x4 cells; mean_probe() predicts probs[i] for cell i.
Bag probe_bag(std::string id, std::vector<double> probs, Label y) {
  Image img({1, 8, 8});
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) img.at(0, y, x) = logit(probs[(y / 4) * 2 + x / 4]);
  }
  return {std::move(id), img, grid::GridSpec{8, 4}, y};
}

std::vector<Bag> synthetic_bags(int n, int scale, std::uint64_t seed) {
  synth::SynthParams p;
  p.image_side = 32;
  p.seed = seed;
  std::vector<Bag> bags;
  for (const auto& s : synth::generate(p, n, 1.0).samples) {
    bags.push_back({s.id, s.image, grid::GridSpec::from_scale(32, scale), s.label});
  }
  return bags;
}

TEST(Select, Examples) {
  const std::vector<double> p{0.2, 0.9, 0.4};
  EXPECT_EQ(select(p, Label::CA, Criterion::MaxMax), 1u);
  EXPECT_EQ(select(p, Label::NC, Criterion::MaxMin), 0u);
  EXPECT_EQ(select(p, Label::NC, Criterion::MaxMax), 1u);
  EXPECT_EQ(select(p, Label::CA, Criterion::MaxMin), 1u);
}

TEST(Select, TiesGoToTheLowestIndex) {
  const std::vector<double> p{0.5, 0.5};
  for (const auto c : {Criterion::MaxMax, Criterion::MaxMin}) {
    for (const auto y : {Label::CA, Label::NC}) EXPECT_EQ(select(p, y, c), 0u);
  }
}

TEST(Select, EmptyIsAnError) {
  EXPECT_THROW(select({}, Label::CA, Criterion::MaxMax), ConfigError);
}

TEST(Select, MatchesABruteForceScan) {
  Rng rng(1);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(16));
    std::vector<double> p(n);
    // Coarse values so ties are common.
    for (auto& v : p) v = static_cast<double>(rng.below(5)) / 4.0;
    const Label y = label_of(rng.bernoulli(0.5));
    const Criterion c = rng.bernoulli(0.5) ? Criterion::MaxMax : Criterion::MaxMin;
    const bool want_min = c == Criterion::MaxMin && y == Label::NC;
    std::size_t best = 0;
    for (int i = 0; i < n; ++i) {
      const double target = want_min ? *std::min_element(p.begin(), p.end()) : *std::max_element(p.begin(), p.end());
      if (p[i] == target) {
        best = i;
        break;
      }
    }
    ASSERT_EQ(select(p, y, c), best);
  }
}

TEST(MilLoss, Examples) {
  EXPECT_NEAR(mil_loss(std::vector<double>{0.2, 0.9}, Label::CA, Criterion::MaxMax), 0.10536051565782628, 1e-12);
  EXPECT_NEAR(mil_loss(std::vector<double>{0.3, 0.1}, Label::NC, Criterion::MaxMin), 0.10536051565782628, 1e-12);
  EXPECT_LT(mil_loss(std::vector<double>{0.1, 1.0}, Label::CA, Criterion::MaxMax), 1e-6);
}

TEST(MilLoss, EqualsBceOfTheSelectedPrediction) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(4);
    for (auto& v : p) v = rng.uniform(0.01, 0.99);
    const Label y = label_of(rng.bernoulli(0.5));
    for (const auto c : {Criterion::MaxMax, Criterion::MaxMin}) {
      ASSERT_EQ(mil_loss(p, y, c), nn::bce_loss(p[select(p, y, c)], to_int(y)));
      const auto g = mil_loss_grad(p, y, c);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (i != select(p, y, c)) ASSERT_EQ(g[i], 0.0);
      }
    }
  }
}

TEST(TrainMil, ZeroEpochsReturnsTheInitialModel) {
  const auto bags = synthetic_bags(8, 2, 1);
  MilConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 5;
  EXPECT_EQ(train_mil(bags, Criterion::MaxMax, cfg).model, make_classifier(3, cfg.arch, 5));
}

TEST(TrainMil, SingleClassInputIsAnError) {
  std::vector<Bag> bags{probe_bag("a", {0.1, 0.2, 0.3, 0.4}, Label::NC), probe_bag("b", {0.1, 0.2, 0.3, 0.4}, Label::NC)};
  EXPECT_THROW(train_mil(bags, Criterion::MaxMax, MilConfig{}), ConfigError);
}

TEST(TrainMil, LossDecreasesOnASyntheticRun) {
  const auto bags = synthetic_bags(100, 2, 2);
  MilConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 1e-3;
  cfg.seed = 3;
  const double before = evaluate_mil_loss(make_classifier(3, cfg.arch, cfg.seed), bags, Criterion::MaxMax);
  const auto result = train_mil(bags, Criterion::MaxMax, cfg);
  EXPECT_EQ(result.epoch_losses.size(), 5u);
  EXPECT_LT(evaluate_mil_loss(result.model, bags, Criterion::MaxMax), before);
}

TEST(TrainMil, DeterministicGivenSeed) {
  const auto bags = synthetic_bags(12, 2, 3);
  MilConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 4;
  EXPECT_EQ(train_mil(bags, Criterion::MaxMin, cfg).model, train_mil(bags, Criterion::MaxMin, cfg).model);
}

TEST(Harvest, KeepsAgreeingSelectionsAndDiscardsTheRest) {
  const Classifier probe = mean_probe();
  const std::vector<Bag> bags{
      probe_bag("ca_kept", {0.1, 0.8, 0.2, 0.3}, Label::CA),
      probe_bag("ca_dropped", {0.1, 0.3, 0.2, 0.25}, Label::CA),
      probe_bag("nc", {0.6, 0.7, 0.2, 0.4}, Label::NC),
  };
  const auto maxmax = harvest(probe, Criterion::MaxMax, bags);
  ASSERT_EQ(maxmax.size(), 1u);
  EXPECT_EQ(maxmax.records[0].source_id, "ca_kept");
  EXPECT_EQ(maxmax.records[0].label, Label::CA);
  EXPECT_EQ(maxmax.records[0].row, 0);
  EXPECT_EQ(maxmax.records[0].col, 1);
  EXPECT_NEAR(maxmax.records[0].p_hat, 0.8, 1e-6);

  // Max-Min takes the least suspicious NC cell (index 2, p = 0.2) and keeps it.
  const auto maxmin = harvest(probe, Criterion::MaxMin, bags);
  ASSERT_EQ(maxmin.size(), 2u);
  EXPECT_EQ(maxmin.records[1].source_id, "nc");
  EXPECT_EQ(maxmin.records[1].label, Label::NC);
  EXPECT_EQ(maxmin.records[1].row, 1);
  EXPECT_EQ(maxmin.records[1].col, 0);
  EXPECT_EQ(maxmin.records[1].provenance, Provenance::MaxMin);
  EXPECT_EQ(maxmin.records[1].instance, grid::split(bags[2].image, bags[2].spec)[2]);
}

TEST(Harvest, KeptLabelsAlwaysMatchTheImageLabel) {
  const auto bags = synthetic_bags(40, 4, 4);
  MilConfig cfg;
  cfg.epochs = 1;
  const auto model = train_mil(bags, Criterion::MaxMin, cfg).model;
  std::map<std::string, Label> truth;
  for (const auto& b : bags) truth[b.id] = b.label;
  for (const auto c : {Criterion::MaxMax, Criterion::MaxMin}) {
    const auto ds = harvest(model, c, bags);
    EXPECT_LE(ds.size(), bags.size());
    for (const auto& r : ds.records) {
      EXPECT_EQ(r.label, truth.at(r.source_id));
      EXPECT_EQ(r.p_hat >= 0.5, r.label == Label::CA);
      EXPECT_EQ(r.instance.shape(), (Shape{3, 8, 8}));
    }
  }
}

TEST(Combine, EmptyInputYieldsTheOtherBalanced) {
  const Classifier probe = mean_probe();
  const std::vector<Bag> bags{
      probe_bag("a", {0.9, 0.1, 0.1, 0.1}, Label::CA),
      probe_bag("b", {0.1, 0.1, 0.2, 0.3}, Label::NC),
      probe_bag("c", {0.2, 0.1, 0.2, 0.3}, Label::NC),
  };
  const auto h = harvest(probe, Criterion::MaxMax, bags);
  const auto c = combine(h, InstanceDataset{}, 1);
  EXPECT_EQ(c.records.size(), h.records.size());
  int ca = 0, nc = 0;
  for (const auto i : c.epoch_indices()) (c.records[i].label == Label::CA ? ca : nc) += 1;
  EXPECT_EQ(ca, nc);
  EXPECT_TRUE(std::is_sorted(c.order.begin(), c.order.end()));
}

TEST(Combine, SameCellFromBothCriteriaKeepsBothRecords) {
  const Classifier probe = mean_probe();
  const std::vector<Bag> bags{probe_bag("a", {0.9, 0.1, 0.1, 0.1}, Label::CA),
                              probe_bag("b", {0.1, 0.2, 0.2, 0.3}, Label::NC)};
  const auto mm = harvest(probe, Criterion::MaxMax, bags);
  const auto mn = harvest(probe, Criterion::MaxMin, bags);
  const auto c = combine(mm, mn, 2);
  // Both criteria pick cell 0 of "a"; both records survive.
  ASSERT_EQ(c.records.size(), 4u);
  EXPECT_EQ(c.records[0].source_id, "a");
  EXPECT_EQ(c.records[2].source_id, "a");
  EXPECT_EQ(c.records[0].row, c.records[2].row);
  EXPECT_EQ(c.records[0].col, c.records[2].col);
  EXPECT_EQ(c.records[0].instance, c.records[2].instance);
  EXPECT_NE(c.records[0].provenance, c.records[2].provenance);
  EXPECT_THROW(combine(mm, mm, 3), ConfigError);
}

SelectedInstance record(std::string id, Label y, Criterion c, Provenance prov, float shade) {
  SelectedInstance r;
  r.source_id = std::move(id);
  r.row = 1;
  r.col = 0;
  r.instance = Image({3, 4, 4}, quantize8(shade));
  r.label = y;
  r.criterion = c;
  r.provenance = prov;
  r.p_hat = 0.125 + shade;
  return r;
}

TEST(Instances, RoundTripPreservesRecordsAndOrder) {
  testing::TempDir dir("instances");
  InstanceDataset ds;
  ds.records.push_back(record("a", Label::CA, Criterion::MaxMax, Provenance::MaxMax, 0.2f));
  ds.records.push_back(record("b", Label::NC, Criterion::MaxMin, Provenance::MaxMin, 0.4f));
  ds.records.push_back(record("c/1", Label::NC, Criterion::MaxMin, Provenance::Cascade, 0.6f));
  rebalance(ds, 4);
  ASSERT_EQ(ds.order.size(), 4u);
  write_instances(dir.path(), ds);
  const auto back = read_instances(dir.path());
  ASSERT_EQ(back.records.size(), 3u);
  EXPECT_EQ(back.order, ds.order);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.records[i].source_id, ds.records[i].source_id);
    EXPECT_EQ(back.records[i].row, 1);
    EXPECT_EQ(back.records[i].label, ds.records[i].label);
    EXPECT_EQ(back.records[i].criterion, ds.records[i].criterion);
    EXPECT_EQ(back.records[i].provenance, ds.records[i].provenance);
    EXPECT_EQ(back.records[i].p_hat, ds.records[i].p_hat);
    EXPECT_EQ(back.records[i].instance, ds.records[i].instance);
  }
}

TEST(Instances, MissingManifestIsAnIoError) {
  EXPECT_THROW(read_instances("/nonexistent/instances"), IoError);
}

}  // namespace
}  // namespace camel::mil
