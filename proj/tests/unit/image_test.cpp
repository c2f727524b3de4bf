#include <gtest/gtest.h>

#include "camel/image.hpp"
#include "test_util.hpp"

namespace camel {
namespace {

using testing::TempDir;

TEST(Labels, TextRoundTrip) {
  EXPECT_EQ(to_string(Label::CA), "CA");
  EXPECT_EQ(to_string(Label::NC), "NC");
  EXPECT_EQ(parse_label("CA"), Label::CA);
  EXPECT_EQ(parse_label("NC"), Label::NC);
  EXPECT_THROW(parse_label("ca?"), ConfigError);
}

TEST(Quantize, IdempotentAndClamped) {
  for (const float v : {0.0f, 0.1f, 0.5f, 0.999f, 1.0f}) {
    const float q = quantize8(v);
    EXPECT_EQ(quantize8(q), q);
    EXPECT_NEAR(q, v, 0.5f / 255.0f + 1e-7f);
  }
  EXPECT_EQ(quantize8(-0.3f), 0.0f);
  EXPECT_EQ(quantize8(1.7f), 1.0f);
}

TEST(Ppm, RoundTripOfQuantizedImage) {
  TempDir dir("ppm");
  Image img({3, 5, 7});
  Rng rng(1);
  for (auto& v : img.values()) v = quantize8(static_cast<float>(rng.uniform()));
  write_ppm(dir.path() / "a.ppm", img);
  EXPECT_EQ(read_ppm(dir.path() / "a.ppm"), img);
}

TEST(Ppm, RejectsNonRgb) {
  TempDir dir("ppm_bad");
  EXPECT_THROW(write_ppm(dir.path() / "a.ppm", Image({1, 4, 4})), ConfigError);
  EXPECT_THROW(read_ppm(dir.path() / "missing.ppm"), IoError);
}

TEST(Pgm, RoundTrip) {
  TempDir dir("pgm");
  Mask m({4, 6});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<std::uint8_t>(i % 3 == 0);
  write_pgm(dir.path() / "m.pgm", m);
  EXPECT_EQ(read_pgm(dir.path() / "m.pgm"), m);
}

}  // namespace
}  // namespace camel
