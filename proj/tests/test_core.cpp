#include <gtest/gtest.h>

#include <cmath>

#include "xagg/core.hpp"
#include "xagg/rng.hpp"

using namespace xagg;

TEST(Normalize, RescalesByMaxAbs) {
  const auto map = normalize({-2.0, 1.0, 0.0}, Shape(1, 3));
  EXPECT_EQ(map.values, (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_TRUE(map.normalized);
}

TEST(Normalize, ZeroMapIsFixedPoint) {
  const auto map = normalize({0.0, 0.0, 0.0}, Shape(1, 3));
  EXPECT_EQ(map.values, (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_TRUE(map.normalized);
}

TEST(Normalize, SeededRandomInputMatchesDirectRecompute) {
  Rng rng(123);
  std::vector<double> raw = rng_uniform(rng, -3.0, 3.0, 256);
  const auto map = normalize(raw, Shape(16, 16));

  double mx = 0.0;
  for (double v : raw) mx = std::max(mx, std::abs(v));
  double out_max = 0.0, out_min = 1.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_DOUBLE_EQ(map.values[i], std::abs(raw[i]) / mx);
    out_max = std::max(out_max, map.values[i]);
    out_min = std::min(out_min, map.values[i]);
  }
  EXPECT_DOUBLE_EQ(out_max, 1.0);
  EXPECT_GE(out_min, 0.0);
}

TEST(Normalize, RejectsNonFinite) {
  EXPECT_THROW(normalize({1.0, std::nan("")}, Shape(1, 2)), InvalidInput);
  EXPECT_THROW(normalize({1.0, INFINITY}, Shape(1, 2)), InvalidInput);
}

TEST(Normalize, InvariantMaxIsZeroOrOne) {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> raw = rng_uniform(rng, -5.0, 5.0, 64);
    const auto map = normalize(raw, Shape(8, 8));
    double mx = 0.0, mn = 1.0;
    for (double v : map.values) {
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    EXPECT_GE(mn, 0.0);
    EXPECT_LE(mx, 1.0);
    EXPECT_TRUE(mx == 0.0 || mx == 1.0);
  }
}

namespace {

AttributionStack make_stack(const Shape& shape, const std::vector<std::vector<double>>& raw) {
  std::vector<std::string> names;
  std::vector<AttributionMap> cols;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    names.push_back("m" + std::to_string(i));
    cols.push_back(normalize(raw[i], shape));
  }
  return AttributionStack(shape, names, cols);
}

}  // namespace

TEST(AggregateLinear, SingleColumnIdentity) {
  const auto stack = make_stack(Shape(1, 2), {{1.0, 0.5}});
  const auto map = aggregate_linear(stack, SimplexWeights({1.0}));
  EXPECT_EQ(map.values, stack.column(0).values);
  EXPECT_FALSE(map.normalized);
}

TEST(AggregateLinear, IdenticalColumnsAreFixedPoint) {
  const auto stack = make_stack(Shape(1, 3), {{1, 0.25, 0.5}, {1, 0.25, 0.5}});
  const auto map = aggregate_linear(stack, SimplexWeights({0.3, 0.7}));
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_NEAR(map.values[j], stack.column(0).values[j], 1e-15);
}

TEST(AggregateLinear, WeightedArithmetic) {
  const auto stack = make_stack(Shape(1, 2), {{1, 0}, {0, 1}});
  const auto map = aggregate_linear(stack, SimplexWeights({0.25, 0.75}));
  EXPECT_DOUBLE_EQ(map.values[0], 0.25);
  EXPECT_DOUBLE_EQ(map.values[1], 0.75);
}

TEST(AggregateLinear, RejectsDimensionMismatch) {
  const auto stack = make_stack(Shape(1, 2), {{1, 0}, {0, 1}});
  EXPECT_THROW(aggregate_linear(stack, SimplexWeights({1.0})), InvalidInput);
}

TEST(AggregateLinear, AffineInWeights) {
  Rng rng(99);
  std::vector<std::vector<double>> raw;
  for (int i = 0; i < 4; ++i) raw.push_back(rng_uniform(rng, 0.0, 1.0, 32));
  const auto stack = make_stack(Shape(4, 8), raw);

  for (int t = 0; t < 10; ++t) {
    auto draw_weights = [&] {
      std::vector<double> w = rng_uniform(rng, 0.01, 1.0, 4);
      double s = 0.0;
      for (double v : w) s += v;
      for (double& v : w) v /= s;
      return SimplexWeights(w);
    };
    const SimplexWeights w1 = draw_weights(), w2 = draw_weights();
    const double alpha = rng.next_unit();
    std::vector<double> mix(4);
    for (std::size_t i = 0; i < 4; ++i) mix[i] = alpha * w1[i] + (1 - alpha) * w2[i];
    const auto lhs = aggregate_linear(stack, SimplexWeights(mix));
    const auto a1 = aggregate_linear(stack, w1);
    const auto a2 = aggregate_linear(stack, w2);
    for (std::size_t j = 0; j < 32; ++j)
      EXPECT_NEAR(lhs.values[j], alpha * a1.values[j] + (1 - alpha) * a2.values[j], 1e-12);
  }
}

TEST(SimplexWeights, ClampsTinyEntries) {
  const SimplexWeights w({1.0 - 5e-13, 5e-13, -4e-13});
  EXPECT_EQ(w[1], 0.0);
  EXPECT_EQ(w[2], 0.0);
}

TEST(SimplexWeights, RejectsNegativeBeyondTolerance) {
  EXPECT_THROW(SimplexWeights({1.1, -0.1}), InvalidInput);
}

TEST(SimplexWeights, RejectsBadSum) {
  EXPECT_THROW(SimplexWeights({0.5, 0.4}), InvalidInput);
}

TEST(AttributionStack, RejectsUnnormalizedColumn) {
  AttributionMap raw{Shape(1, 2), {0.5, 0.25}, false};
  EXPECT_THROW(AttributionStack(Shape(1, 2), {"a"}, {raw}), InvalidInput);
}

TEST(AttributionStack, RejectsDuplicateNames) {
  const auto a = normalize({1.0, 0.0}, Shape(1, 2));
  EXPECT_THROW(AttributionStack(Shape(1, 2), {"a", "a"}, {a, a}), InvalidInput);
}

TEST(Shape, DerivedFeatureCount) {
  EXPECT_EQ(Shape(16, 16, 3).d(), 768u);
  EXPECT_THROW(Shape(0, 4), InvalidInput);
}
