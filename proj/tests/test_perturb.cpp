#include <gtest/gtest.h>

#include <numeric>

#include "xagg/perturb.hpp"

using namespace xagg;

TEST(SampleNoise, BoundsAndReproducibility) {
  const Shape shape(16, 16);
  Rng a(9), b(9);
  const auto n1 = sample_noise(NoiseSpec{0.1}, shape, a);
  const auto n2 = sample_noise(NoiseSpec{0.1}, shape, b);
  EXPECT_EQ(n1, n2);
  for (double v : n1) {
    EXPECT_GE(v, -0.1);
    EXPECT_LT(v, 0.1);
  }
}

TEST(SampleNoise, VarianceMatchesUniformMoment) {
  const Shape shape(1, 100000);
  Rng rng(21);
  const auto n = sample_noise(NoiseSpec{0.1}, shape, rng);
  double sum = 0.0, sq = 0.0;
  for (double v : n) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n.size();
  const double var = sq / n.size() - mean * mean;
  const double expect = 0.1 * 0.1 / 3.0;
  EXPECT_NEAR(var, expect, 0.05 * expect);
}

TEST(SampleNoise, RejectsNonPositiveDelta) {
  Rng rng(1);
  EXPECT_THROW(sample_noise(NoiseSpec{0.0}, Shape(2, 2), rng), InvalidInput);
}

TEST(SampleMask, ScatteredExactCount) {
  Rng rng(4);
  const Shape shape(16, 16);
  const auto mask = sample_mask({RegionMaskSpec::Mode::scattered, 0.2}, shape, rng);
  EXPECT_EQ(std::accumulate(mask.begin(), mask.end(), 0.0), 51.0);  // round(0.2*256)
}

TEST(SampleMask, SquareSideFromRoundedArea) {
  Rng rng(4);
  const Shape shape(16, 16);
  const auto mask = sample_mask({RegionMaskSpec::Mode::square, 0.2}, shape, rng);
  // side = round(sqrt(51.2)) = 7 -> 49 pixels
  EXPECT_EQ(std::accumulate(mask.begin(), mask.end(), 0.0), 49.0);
}

TEST(SampleMask, BroadcastsAcrossChannels) {
  Rng rng(4);
  const Shape shape(16, 16, 3);
  const auto mask = sample_mask({RegionMaskSpec::Mode::scattered, 0.2}, shape, rng);
  EXPECT_EQ(std::accumulate(mask.begin(), mask.end(), 0.0), 51.0 * 3);
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    EXPECT_EQ(mask[p * 3], mask[p * 3 + 1]);
    EXPECT_EQ(mask[p * 3], mask[p * 3 + 2]);
  }
}

TEST(SampleMask, RejectsFractionOne) {
  Rng rng(1);
  EXPECT_THROW(sample_mask({RegionMaskSpec::Mode::scattered, 1.0}, Shape(4, 4), rng), InvalidInput);
}

TEST(SampleMask, ScatteredCardinalityProperty) {
  Rng rng(77);
  const Shape shape(12, 9);
  for (double f : {0.05, 0.17, 0.5, 0.83}) {
    const auto mask = sample_mask({RegionMaskSpec::Mode::scattered, f}, shape, rng);
    const double count = std::accumulate(mask.begin(), mask.end(), 0.0);
    EXPECT_EQ(count, std::llround(f * 12 * 9));
  }
}

TEST(MakeBaseline, ZerosAndMean) {
  const Shape shape(2, 2);
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const auto zeros = make_baseline({BaselineSpec::Kind::zeros, 2.0}, x, shape);
  EXPECT_EQ(zeros, (std::vector<double>{0, 0, 0, 0}));
  const auto mean = make_baseline({BaselineSpec::Kind::mean, 2.0}, x, shape);
  EXPECT_EQ(mean, (std::vector<double>{2.5, 2.5, 2.5, 2.5}));
}

TEST(MakeBaseline, MeanAndBlurFixConstantImages) {
  const Shape shape(8, 8);
  const std::vector<double> x(shape.d(), 0.7);
  const auto mean = make_baseline({BaselineSpec::Kind::mean, 2.0}, x, shape);
  const auto blur = make_baseline({BaselineSpec::Kind::blur, 2.0}, x, shape);
  for (double v : mean) EXPECT_NEAR(v, 0.7, 1e-12);
  for (double v : blur) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(MakeBaseline, BlurPreservesChannelMean) {
  const Shape shape(16, 16, 2);
  Rng rng(8);
  const auto x = rng_uniform(rng, 0.0, 1.0, shape.d());
  const auto blur = make_baseline({BaselineSpec::Kind::blur, 2.0}, x, shape);
  for (std::size_t c = 0; c < 2; ++c) {
    double before = 0.0, after = 0.0;
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
      before += x[p * 2 + c];
      after += blur[p * 2 + c];
    }
    EXPECT_NEAR(before / shape.pixels(), after / shape.pixels(), 1e-10);
  }
}

TEST(ApplyH, DefinitionAndEdges) {
  const std::vector<double> x{1, 2, 3, 4}, xb{9, 9, 9, 9};
  EXPECT_EQ(apply_h(x, xb, {0, 0, 0, 0}), x);
  EXPECT_EQ(apply_h(x, xb, {1, 1, 1, 1}), xb);

  Rng rng(15);
  std::vector<double> mask(4);
  for (double& m : mask) m = rng.next_unit() < 0.5 ? 1.0 : 0.0;
  const auto out = apply_h(x, xb, mask);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], mask[i] == 1.0 ? xb[i] : x[i]);
}

TEST(ApplyH, IdentityWhenBaselineEqualsInput) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_EQ(apply_h(x, x, {1, 0, 1, 0}), x);
}

TEST(ApplyH, RejectsShapeMismatch) {
  EXPECT_THROW(apply_h({1, 2}, {1, 2, 3}, {0, 0}), InvalidInput);
}
