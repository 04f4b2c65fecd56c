#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "mvalign/attention.hpp"
#include "mvalign/decoder.hpp"
#include "mvalign/harness/crosschecks.hpp"
#include "mvalign/oracle.hpp"
#include "gradient_suite.hpp"

using namespace mvalign;
using mvalign::harness::random_attention_instance;
using mvtest::fd_rel_error;
using mvtest::rand_t;

namespace {

double max_diff(const TensorD& a, const TensorD& b) {
  double w = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

void zero_biases(AttentionWeights<double>& w) {
  for (auto& v : w.b1.mutable_data()) v = 0;
  for (auto& v : w.b2.mutable_data()) v = 0;
}

}  // namespace

TEST(BilinearSample, GridPointReturnsThatPixel) {
  Rng rng(1);
  const FeatureMap<double> fm{rand_t({4, 4, 3}, rng, false), ViewId::front, 1};
  const auto [f, in] = bilinear_sample(fm, Vec2(2.5, 1.5));
  ASSERT_TRUE(in);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(f[c], fm.data[(1 * 4 + 2) * 3 + c], 1e-15);
}

TEST(BilinearSample, MidpointOfFourPixelsIsTheirMean) {
  Rng rng(2);
  const FeatureMap<double> fm{rand_t({4, 4, 2}, rng, false), ViewId::front, 1};
  const auto [f, in] = bilinear_sample(fm, Vec2(2.0, 3.0));
  ASSERT_TRUE(in);
  auto at = [&](int x, int y, int c) { return fm.data[(static_cast<std::size_t>(y) * 4 + x) * 2 + c]; };
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(f[c], (at(1, 2, c) + at(2, 2, c) + at(1, 3, c) + at(2, 3, c)) / 4, 1e-15);
}

TEST(BilinearSample, OutsideTheImageIsFlagged) {
  const FeatureMap<double> fm{TensorD::zeros({4, 4, 2}), ViewId::front, 1};
  EXPECT_FALSE(bilinear_sample(fm, Vec2(4.01, 1.0)).second);
  EXPECT_FALSE(bilinear_sample(fm, Vec2(1.0, -0.01)).second);
}

TEST(BilinearSample, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    FeatureMap<double> fm{rand_t({5, 5, 3}, rng), ViewId::front, 1};
    const auto target = rand_t({3}, rng, false);
    std::uniform_real_distribution<double> u(0, 5);
    const Vec2 uv(u(rng), u(rng));
    EXPECT_LT(fd_rel_error([&] { return mse(bilinear_sample(fm, uv).first, target); }, {&fm.data}), 1e-4);
  }
}

TEST(SampleViews, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    auto inst = random_attention_instance(500 + seed, 4, 3, 3);
    std::vector<Camera> others(inst.mv.cameras.begin() + 1, inst.mv.cameras.end());
    const auto q = truncated_query_points(inst.mv.cameras[0], inst.depth, 3, 0.1);
    const auto plan = plan_samples(q, others, Interpolation::bilinear, true);
    Rng rng(seed);
    const auto target = rand_t({plan.rows, plan.slots * (3 + kPluckerDim)}, rng, false);
    auto& a = inst.mv.features[1].data;
    auto& b = inst.mv.features[2].data;
    EXPECT_LT(fd_rel_error([&] { return mse(sample_views<double>({a, b}, plan), target); }, {&a, &b}), 1e-4);
  }
}

TEST(AggregateViews, OutOfBoundsViewsWithZeroBiasesGiveZero) {
  Rng rng(3);
  AttentionConfig cfg;
  cfg.d = 8;
  auto w = AttentionWeights<double>::init(cfg, 5, rng);
  zero_biases(w);
  const std::vector<TensorD> feats(5, rand_t({8}, rng, false));
  const std::vector<Vec6> codes(5, Vec6::Ones());
  const auto y = aggregate_views(feats, std::vector<bool>(5, false), &codes, w);
  for (const double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(AggregateViews, FiveViewsWithoutPluckerTakeWidth40) {
  AttentionConfig cfg;
  cfg.d = 8;
  cfg.use_plucker = false;
  EXPECT_EQ(cfg.mlp_input_width(5), 40);
  Rng rng(4);
  const auto w = AttentionWeights<double>::init(cfg, 5, rng);
  EXPECT_EQ(w.W1.shape(), (Shape{8, 40}));
}

TEST(AggregateViews, MatchesHandEvaluatedTwoLayerFormula) {
  Rng rng(5);
  AttentionConfig cfg;
  cfg.d = 4;
  const auto w = AttentionWeights<double>::init(cfg, 3, rng);
  std::vector<TensorD> feats;
  std::vector<Vec6> codes;
  for (int j = 0; j < 3; ++j) {
    feats.push_back(rand_t({4}, rng, false));
    codes.push_back(Vec6::Random());
  }
  const std::vector<bool> in{true, false, true};
  const auto y = aggregate_views(feats, in, &codes, w);

  std::vector<double> x;
  for (int j = 0; j < 3; ++j) {
    for (int c = 0; c < 4; ++c) x.push_back(in[j] ? feats[j][c] : 0.0);
    for (int e = 0; e < 6; ++e) x.push_back(in[j] ? codes[j][e] : 0.0);
  }
  std::vector<double> h(4);
  for (int o = 0; o < 4; ++o) {
    double s = w.b1[o];
    for (std::size_t i = 0; i < x.size(); ++i) s += w.W1[o * x.size() + i] * x[i];
    h[o] = std::max(0.0, s);
  }
  for (int o = 0; o < 4; ++o) {
    double s = w.b2[o];
    for (int i = 0; i < 4; ++i) s += w.W2[o * 4 + i] * h[i];
    EXPECT_NEAR(y[o], s, 1e-6);
  }
}

TEST(TruncatedAttention, SingleKeyPassesItsValueThrough) {
  auto inst = random_attention_instance(6, 8, 4, 1);
  const auto res = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
  for (const double a : res.weights.data()) EXPECT_EQ(a, 1.0);
  // With one key the output is f_ref + W_V·fused, whatever W_Q and W_K are.
  auto w2 = inst.w;
  w2.W_Q = rand_t({4, 4}, *std::make_unique<Rng>(9), false);
  const auto res2 = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, w2);
  EXPECT_LT(max_diff(res.features.data, res2.features.data), 1e-12);
}

TEST(TruncatedAttention, MatchesScalarOracle) {
  NoGradScope<double> off;
  for (int seed = 0; seed < 20; ++seed) {
    auto inst = random_attention_instance(100 + seed);
    inst.cfg.use_plucker = seed % 2 == 0;
    inst.cfg.residual = seed % 3 != 0;
    inst.cfg.interpolation = seed % 5 == 0 ? Interpolation::nearest : Interpolation::bilinear;
    Rng rng(seed);
    inst.w = AttentionWeights<double>::init(inst.cfg, 2, rng);
    const auto fast = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
    const auto slow = oracle::truncated_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
    double worst = 0;
    for (std::size_t i = 0; i < slow.size(); ++i) worst = std::max(worst, std::abs(fast.features.data[i] - slow[i]));
    EXPECT_LT(worst, 1e-5) << "seed " << seed;
  }
}

TEST(TruncatedAttention, GradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) EXPECT_LT(mvtest::attention_gradient_error(seed), 1e-4) << "seed " << seed;
}

TEST(TruncatedAttention, WeightsSumToOnePerPixel) {
  const auto inst = random_attention_instance(7);
  const auto res = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
  for (std::size_t p = 0; p < res.weights.dim(0); ++p) {
    double s = 0;
    for (std::size_t k = 0; k < res.keys_per_query; ++k) s += res.weights[p * res.keys_per_query + k];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(TruncatedAttention, InvariantToSampleOrder) {
  const auto inst = random_attention_instance(8);
  const auto& cam = inst.mv.cameras[0];
  auto q = truncated_query_points(cam, inst.depth, inst.cfg.n_p, inst.cfg.r);
  const auto base = epipolar_attention(inst.mv, ViewId::front, q, inst.cfg, inst.w);
  Rng rng(8);
  for (std::size_t p = 0; p < q.valid.size(); ++p) {
    auto first = q.points.begin() + static_cast<std::ptrdiff_t>(p * q.n_samples);
    std::shuffle(first, first + static_cast<std::ptrdiff_t>(q.n_samples), rng);
  }
  const auto shuffled = epipolar_attention(inst.mv, ViewId::front, q, inst.cfg, inst.w);
  EXPECT_LT(max_diff(base.features.data, shuffled.features.data), 1e-6);
}

TEST(TruncatedAttention, OccludedEverywhereReturnsReferenceExactly) {
  auto inst = random_attention_instance(9);
  zero_biases(inst.w);
  // Far along the front ray every sample leaves the two 45° views.
  inst.depth = DepthMap::constant(8, 8, 40.0f);
  const auto res = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
  for (std::size_t i = 0; i < res.features.data.numel(); ++i) {
    EXPECT_EQ(res.features.data[i], inst.mv.features[0].data[i]);
  }
}

TEST(TruncatedAttention, PixelsWithoutDepthPassThrough) {
  auto inst = random_attention_instance(10);
  inst.cfg.residual = false;
  const auto res = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
  for (std::size_t p = 0; p < 64; ++p) {
    EXPECT_EQ(res.passthrough[p], inst.depth.valid[p] ? 0 : 1);
    if (!inst.depth.valid[p])
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(res.features.data[p * 4 + c], inst.mv.features[0].data[p * 4 + c]);
  }
}

TEST(TruncatedAttention, RejectsMismatchedDepthResolution) {
  const auto inst = random_attention_instance(11);
  EXPECT_THROW(truncated_epipolar_attention(inst.mv, ViewId::front, DepthMap::constant(4, 4, 1.5f), inst.cfg, inst.w),
               DimensionError);
}

TEST(FullAttention, CollapsedRangeEqualsTruncated) {
  NoGradScope<double> off;
  for (int seed = 0; seed < 20; ++seed) {
    auto inst = random_attention_instance(300 + seed);
    inst.depth = DepthMap::constant(8, 8, 1.25f);
    const double z = inst.depth.values[0];
    const auto tr = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
    const auto fu = full_epipolar_attention(inst.mv, ViewId::front, ZRange{z - 0.1, z + 0.1}, 7, inst.cfg, inst.w);
    EXPECT_LT(max_diff(tr.features.data, fu.features.data), 1e-5);
  }
}

TEST(FullAttention, KeyCountIsLineSamplesWhateverTheDepth) {
  const auto inst = random_attention_instance(12);
  for (const int n : {4, 16}) {
    const auto res = full_epipolar_attention(inst.mv, ViewId::front, ZRange{}, n, inst.cfg, inst.w);
    EXPECT_EQ(res.keys_per_query, static_cast<std::size_t>(n));
    EXPECT_EQ(res.weights.dim(1), static_cast<std::size_t>(n));
  }
}

TEST(FullAttention, CostRatioIsLineSamplesOverNp) {
  CostParams p;
  p.n_p = {7};
  p.n_line_samples = 16;
  const auto tr = cost_model(AttentionMode::truncated, p), fu = cost_model(AttentionMode::full, p);
  for (std::size_t i = 0; i < tr.levels.size(); ++i) EXPECT_EQ(fu.levels[i].kv_floats / tr.levels[i].kv_floats, 16.0 / 7.0);
}

// ---------------------------------------------------------------------------
// Decoder

using mvtest::make_mini;

TEST(Decoder, DefaultLevelsRunFrom32To256) {
  const DecoderConfig cfg;
  EXPECT_EQ(cfg.resolution(1), 32);
  EXPECT_EQ(cfg.resolution(2), 64);
  EXPECT_EQ(cfg.resolution(3), 128);
  EXPECT_EQ(cfg.resolution(4), 256);
  EXPECT_EQ(cfg.output_resolution(), 256);
}

TEST(Decoder, SamplesPerLevelFollowTheSchedule) {
  const DecoderConfig cfg;
  EXPECT_EQ(cfg.n_p(1), 7);
  EXPECT_EQ(cfg.n_p(2), 7);
  EXPECT_EQ(cfg.n_p(3), 7);
  EXPECT_EQ(cfg.n_p(4), 2);
}

TEST(Decoder, FullModeDropsAttentionAboveItsCap) {
  DecoderConfig cfg;
  cfg.mode = AttentionMode::full;
  EXPECT_EQ(cfg.level_mode(3), AttentionMode::full);
  EXPECT_EQ(cfg.level_mode(4), AttentionMode::none);
}

TEST(Decoder, OutputsOneColourMapPerViewAtOutputResolution) {
  auto m = make_mini(1);
  const auto out = decoder_stack(m.input, m.cfg, m.w);
  ASSERT_EQ(out.size(), static_cast<std::size_t>(kNumViews));
  for (const auto& o : out) EXPECT_EQ(o.shape(), (Shape{8, 8, 3}));
}

TEST(Decoder, ZeroColourHeadReproducesUpsampledLatent) {
  auto m = make_mini(2);
  Rng rng(2);
  m.w = DecoderWeights<double>::init(m.cfg, rng);
  const auto out = decoder_stack(m.input, m.cfg, m.w);
  for (int v = 0; v < kNumViews; ++v)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c)
          EXPECT_FLOAT_EQ(static_cast<float>(out[v][(static_cast<std::size_t>(y) * 8 + x) * 3 + c]),
                          m.input.latents[v].at(x / 2, y / 2, c));
}

TEST(Decoder, ZeroValueWeightsReduceToTheNoAttentionStack) {
  auto m = make_mini(3);
  for (auto& a : m.w.attention) std::fill(a.W_V.mutable_data().begin(), a.W_V.mutable_data().end(), 0.0);
  const auto with = decoder_stack(m.input, m.cfg, m.w);
  auto none_cfg = m.cfg;
  none_cfg.mode = AttentionMode::none;
  const auto without = decoder_stack(m.input, none_cfg, m.w);
  for (int v = 0; v < kNumViews; ++v) EXPECT_LT(max_diff(with[v], without[v]), 1e-12);
}

TEST(Decoder, MissingInputsAreContractErrors) {
  auto m = make_mini(4);
  auto no_depth = m.input;
  no_depth.depths.pop_back();
  EXPECT_THROW(decoder_stack(no_depth, m.cfg, m.w), ContractError);
  auto no_front = m.input;
  no_front.front_image.reset();
  EXPECT_THROW(decoder_stack(no_front, m.cfg, m.w), ContractError);
}

TEST(Decoder, EndToEndGradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed)
    for (const auto mode : {AttentionMode::truncated, AttentionMode::full})
      EXPECT_LT(mvtest::decoder_gradient_error(seed, mode), 1e-3) << "seed " << seed << " " << mode_name(mode);
}
