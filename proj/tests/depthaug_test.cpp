#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mvalign/depthaug.hpp"

using namespace mvalign;

namespace {

DepthMap flat(int n, float z = 2.0f) { return DepthMap::constant(n, n, z); }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

std::vector<double> residual(const DepthMap& noisy, const DepthMap& base) {
  std::vector<double> r(noisy.values.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>(noisy.values[i]) - base.values[i];
  return r;
}

// Std of the perturbation after averaging each f×f block.
double pooled_std(const DepthMap& noisy, const DepthMap& base, int target) {
  return std_of(residual(pool_depth_to(noisy, target), pool_depth_to(base, target)));
}

}  // namespace

TEST(StructuredNoise, DefaultTermsAreCoarseToFine) {
  const auto s = NoiseSpec::standard(5);
  ASSERT_EQ(s.terms.size(), 3u);
  EXPECT_EQ(s.terms[0].resolution, 3);
  EXPECT_EQ(s.terms[1].resolution, 64);
  EXPECT_EQ(s.terms[2].resolution, 128);
  EXPECT_DOUBLE_EQ(s.terms[0].scale, 0.1);
  EXPECT_DOUBLE_EQ(s.terms[1].scale, 0.1 / 3);
  EXPECT_DOUBLE_EQ(s.terms[2].scale, 0.1 / 9);
}

TEST(StructuredNoise, FullResolutionTermIsOptIn) {
  EXPECT_EQ(NoiseSpec::standard(0).terms.size(), 3u);
  const auto s = NoiseSpec::standard(0, true, 256);
  ASSERT_EQ(s.terms.size(), 4u);
  EXPECT_EQ(s.terms[3].resolution, 256);
  EXPECT_DOUBLE_EQ(s.terms[3].scale, 0.1 / 9);
}

TEST(StructuredNoise, ZeroScalesLeaveDepthUnchanged) {
  DepthMap d = flat(64);
  d.valid[7] = 0;
  NoiseSpec s{{{3, 0.0}, {64, 0.0}}, 11};
  const auto out = structured_noise(d, s);
  EXPECT_EQ(out.values, d.values);
  EXPECT_EQ(out.valid, d.valid);
}

TEST(StructuredNoise, MagnitudeNeverExceedsScaleSum) {
  const DepthMap d = flat(256);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto out = structured_noise(d, NoiseSpec::standard(seed));
    for (double r : residual(out, d)) worst = std::max(worst, std::abs(r));
  }
  EXPECT_LE(worst, 0.1 + 0.1 / 3 + 0.1 / 9 + 1e-6);
  EXPECT_GT(worst, 0.05);
}

TEST(StructuredNoise, ValidityIsUntouched) {
  DepthMap d = flat(128);
  for (std::size_t i = 0; i < d.valid.size(); i += 3) d.valid[i] = 0;
  const auto out = structured_noise(d, NoiseSpec::standard(2, false, 128));
  EXPECT_EQ(out.valid, d.valid);
}

TEST(StructuredNoise, SameSeedSameField) {
  const DepthMap d = flat(128);
  EXPECT_EQ(structured_noise(d, NoiseSpec::standard(9)).values, structured_noise(d, NoiseSpec::standard(9)).values);
  EXPECT_NE(structured_noise(d, NoiseSpec::standard(9)).values, structured_noise(d, NoiseSpec::standard(10)).values);
}

TEST(StructuredNoise, RejectsTermsFinerThanTheMap) {
  EXPECT_THROW(structured_noise(flat(64), NoiseSpec::standard(0)), DimensionError);
  EXPECT_THROW(structured_noise(flat(64), NoiseSpec{{{3, -0.1}}, 0}), DomainError);
}

TEST(StructuredNoise, SurvivesBlockAveraging) {
  // The coarse term is nearly constant across an 8×8 block, so pooling keeps most of it.
  const DepthMap d = flat(256);
  double sum = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    sum += pooled_std(structured_noise(d, NoiseSpec::standard(seed)), d, 32);
  EXPECT_GT(sum / 10, 0.3 * 0.1 / std::sqrt(3.0));
}

TEST(IndependentNoise, StdMatchesUniformScale) {
  const DepthMap d = flat(256);
  const double scale = 0.05;
  const double s = std_of(residual(independent_noise(d, scale, 3), d));
  EXPECT_NEAR(s / (scale / std::sqrt(3.0)), 1.0, 0.02);
}

TEST(IndependentNoise, BlockAveragingShrinksItByTheBlockSide) {
  const DepthMap d = flat(256);
  const double scale = 0.1;
  const auto noisy = independent_noise(d, scale, 4);
  const double full = std_of(residual(noisy, d));
  const double pooled = pooled_std(noisy, d, 32);
  EXPECT_NEAR(pooled / full, 1.0 / 8.0, 0.02);
}

TEST(IndependentNoise, ZeroScaleIsIdentityAndNegativeThrows) {
  const DepthMap d = flat(16);
  EXPECT_EQ(independent_noise(d, 0.0, 1).values, d.values);
  EXPECT_THROW(independent_noise(d, -1.0, 1), DomainError);
}

TEST(IndependentNoise, MatchedScaleHasStructuredVariance) {
  const auto s = NoiseSpec::standard(0);
  const double v = 0.01 + 0.01 / 9 + 0.01 / 81;
  EXPECT_NEAR(s.matched_independent_scale(), std::sqrt(v), 1e-12);
}

TEST(PoolDepth, IdentityAtSameResolution) {
  DepthMap d = flat(8);
  d.values[5] = 4.0f;
  const auto p = pool_depth_to(d, 8);
  EXPECT_EQ(p.values, d.values);
  EXPECT_EQ(p.valid, d.valid);
}

TEST(PoolDepth, ConstantStaysConstant) {
  const auto p = pool_depth_to(flat(64, 1.25f), 8);
  for (float v : p.values) EXPECT_FLOAT_EQ(v, 1.25f);
  EXPECT_EQ(p.valid_count(), 64u);
}

TEST(PoolDepth, AveragesTheBlock) {
  DepthMap d = DepthMap::constant(2, 2, 0);
  d.values = {1, 1, 3, 3};
  const auto p = pool_depth_to(d, 1);
  EXPECT_FLOAT_EQ(p.values[0], 2.0f);
}

TEST(PoolDepth, IgnoresInvalidPixelsAndEmptyBlocksStayInvalid) {
  DepthMap d(4, 4);
  d.values[d.index(0, 0)] = 3.0f;
  d.valid[d.index(0, 0)] = 1;
  d.values[d.index(1, 1)] = 5.0f;
  d.valid[d.index(1, 1)] = 1;
  const auto p = pool_depth_to(d, 2);
  EXPECT_TRUE(p.is_valid(0, 0));
  EXPECT_FLOAT_EQ(p.value(0, 0), 4.0f);
  EXPECT_FALSE(p.is_valid(1, 0));
  EXPECT_FALSE(p.is_valid(1, 1));
}

TEST(PoolDepth, CommutesWithAddingAConstant) {
  Rng rng(8);
  DepthMap d = flat(32);
  std::uniform_real_distribution<float> u(1.0f, 3.0f);
  for (auto& v : d.values) v = u(rng);
  DepthMap shifted = d;
  for (auto& v : shifted.values) v += 0.5f;
  const auto a = pool_depth_to(d, 4), b = pool_depth_to(shifted, 4);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(b.values[i] - a.values[i], 0.5, 1e-5);
}

TEST(PoolDepth, LevelsMapToDecoderResolutions) {
  EXPECT_EQ(level_resolution(1), 32);
  EXPECT_EQ(level_resolution(4), 256);
  EXPECT_EQ(level_resolution(2, 128), 32);
  EXPECT_EQ(pool_depth(flat(256), 2).width, 64);
  EXPECT_THROW(level_resolution(0), DomainError);
  EXPECT_THROW(pool_depth_to(flat(30), 8), DimensionError);
}
