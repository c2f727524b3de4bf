#include <gtest/gtest.h>

#include <cmath>

#include "camel/synthdata.hpp"
#include "test_util.hpp"

namespace camel::synth {
namespace {

SynthParams small(double prevalence = 0.5, std::uint64_t seed = 1) {
  SynthParams p;
  p.image_side = 32;
  p.prevalence = prevalence;
  p.seed = seed;
  return p;
}

double mask_fraction(const Mask& m) {
  double on = 0;
  for (const auto v : m.values()) on += v;
  return on / static_cast<double>(m.size());
}

TEST(Params, ValidationListsEveryViolation) {
  SynthParams p;
  p.image_side = 4;
  p.prevalence = 1.5;
  try {
    p.validate();
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("image_side"), std::string::npos);
    EXPECT_NE(msg.find("prevalence"), std::string::npos);
  }
}

TEST(Generate, ZeroPrevalenceGivesOnlyNc) {
  const auto ds = generate(small(0.0), 50, 1.0);
  for (const auto& s : ds.samples) {
    EXPECT_EQ(s.label, Label::NC);
    EXPECT_EQ(mask_fraction(s.mask), 0.0);
  }
}

TEST(Generate, FullPrevalenceGivesOnlyCa) {
  const auto ds = generate(small(1.0), 30, 1.0);
  for (const auto& s : ds.samples) EXPECT_EQ(s.label, Label::CA);
}

TEST(Generate, SameSeedIsByteIdentical) {
  testing::TempDir a("synth_a"), b("synth_b");
  write_dataset(a.path(), generate(small(0.5, 7), 12, 0.5));
  write_dataset(b.path(), generate(small(0.5, 7), 12, 0.5));
  EXPECT_EQ(testing::slurp(a.path() / "manifest.jsonl"), testing::slurp(b.path() / "manifest.jsonl"));
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    EXPECT_EQ(testing::slurp(entry.path()), testing::slurp(b.path() / rel)) << rel;
  }
}

TEST(Generate, DifferentSeedsDiffer) {
  EXPECT_NE(generate(small(0.5, 1), 4, 1.0).samples[0].image, generate(small(0.5, 2), 4, 1.0).samples[0].image);
}

TEST(Generate, PrefixIsIndependentOfCount) {
  const auto few = generate(small(), 5, 1.0);
  const auto many = generate(small(), 20, 1.0);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(few.samples[i].image, many.samples[i].image);
}

TEST(Generate, CaFractionWithinBinomialBounds) {
  SynthParams p = small(0.5, 3);
  p.image_side = 16;
  const auto ds = generate(p, 1000, 1.0);
  int ca = 0;
  for (const auto& s : ds.samples) ca += s.label == Label::CA;
  EXPECT_GE(ca, 450);
  EXPECT_LE(ca, 550);
}

TEST(Generate, LabelsMasksAndRangesAreConsistent) {
  const SynthParams p = small(0.5, 4);
  const auto ds = generate(p, 60, 0.75);
  int train = 0;
  for (const auto& s : ds.samples) {
    const double f = mask_fraction(s.mask);
    if (s.label == Label::CA) {
      EXPECT_GE(f, p.lesion_area_min);
      EXPECT_LE(f, p.lesion_area_max);
    } else {
      EXPECT_EQ(f, 0.0);
    }
    for (const float v : s.image.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
      ASSERT_EQ(quantize8(v), v);
    }
    train += s.split == Split::Train;
  }
  EXPECT_EQ(train, 45);
  EXPECT_EQ(ds.select(Split::Test).size(), 15u);
}

TEST(Generate, CaTissueIsRougherThanNc) {
  // Mean absolute horizontal gradient separates the textures.
  const auto ds = generate(small(0.5, 5), 40, 1.0);
  double ca_sum = 0, nc_sum = 0;
  int ca_n = 0, nc_n = 0;
  for (const auto& s : ds.samples) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x + 1 < 32; ++x) {
        if (s.mask.at(y, x) != s.mask.at(y, x + 1)) continue;
        const double d = std::abs(s.image.at(1, y, x + 1) - s.image.at(1, y, x));
        if (s.mask.at(y, x)) {
          ca_sum += d;
          ++ca_n;
        } else {
          nc_sum += d;
          ++nc_n;
        }
      }
    }
  }
  EXPECT_GT(ca_sum / ca_n, 2.0 * nc_sum / nc_n);
}

TEST(Balance, DuplicatesTheMinorityUntilCountsMatch) {
  const std::vector<Label> labels{Label::CA, Label::NC, Label::NC, Label::NC, Label::NC};
  Rng rng(1);
  const auto idx = balanced_indices(labels, rng);
  ASSERT_EQ(idx.size(), 8u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(idx[i], i);
  for (std::size_t i = 5; i < 8; ++i) EXPECT_EQ(idx[i], 0u);
}

TEST(Balance, TenCaThirtyNc) {
  std::vector<Label> labels(10, Label::CA);
  labels.resize(40, Label::NC);
  Rng rng(6);
  const auto idx = balanced_indices(labels, rng);
  int ca = 0;
  for (const auto i : idx) ca += labels[i] == Label::CA;
  EXPECT_EQ(idx.size(), 60u);
  EXPECT_EQ(ca, 30);
}

TEST(Balance, BalancedInputIsUnchanged) {
  const std::vector<Label> labels{Label::CA, Label::NC, Label::NC, Label::CA};
  Rng rng(2);
  EXPECT_EQ(balanced_indices(labels, rng), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Balance, MinorityDuplicatesAreUniform) {
  std::vector<Label> labels(3, Label::CA);
  labels.resize(3003, Label::NC);
  Rng rng(3);
  const auto idx = balanced_indices(labels, rng);
  int counts[3] = {0, 0, 0};
  for (std::size_t i = 3003; i < idx.size(); ++i) ++counts[idx[i]];
  for (const int c : counts) EXPECT_NEAR(c, 1000, 100);
}

TEST(Balance, MissingClassIsAnError) {
  const std::vector<Label> labels(4, Label::NC);
  Rng rng(4);
  EXPECT_THROW(balanced_indices(labels, rng), ConfigError);
}

TEST(Balance, DatasetDuplicatesKeepTheirId) {
  auto ds = generate(small(0.2, 6), 20, 1.0);
  Rng rng(5);
  const auto balanced = class_balance(ds, rng);
  int ca = 0, nc = 0;
  for (const auto& s : balanced.samples) (s.label == Label::CA ? ca : nc) += 1;
  EXPECT_EQ(ca, nc);
  EXPECT_EQ(balanced.samples.back().id.substr(0, 3), "img");
}

TEST(Io, DatasetRoundTrip) {
  testing::TempDir dir("synth_io");
  const auto ds = generate(small(0.5, 8), 6, 0.5);
  write_dataset(dir.path(), ds);
  const auto back = read_dataset(dir.path());
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].id, ds.samples[i].id);
    EXPECT_EQ(back.samples[i].image, ds.samples[i].image);
    EXPECT_EQ(back.samples[i].mask, ds.samples[i].mask);
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
    EXPECT_EQ(back.samples[i].split, ds.samples[i].split);
  }
}

}  // namespace
}  // namespace camel::synth
