#pragma once

// Finite-difference gradient cases shared by the unit tests and the acceptance run.

#include <string>
#include <utility>
#include <vector>

#include "mvalign/decoder.hpp"
#include "mvalign/harness/crosschecks.hpp"
#include "mvalign/ops.hpp"
#include "test_support.hpp"

namespace mvtest {

using namespace mvalign;

// Keeps rectifier inputs at least `gap` from the kink so ±h never crosses it.
inline TensorD away_from_zero(TensorD t, double gap = 0.05) {
  for (auto& v : t.mutable_data())
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  return t;
}

// Central differences are meaningless across a rectifier kink, and with hundreds of hidden
// pre-activations some always sit within reach of ±h. Pinning every hidden unit far to one
// side (alternately on and off) keeps the function smooth around the evaluation point.
inline void pin_hidden_units(AttentionWeights<double>& w) {
  auto b = w.b1.mutable_data();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = i % 2 == 0 ? 20.0 : -20.0;
}

using NamedErrors = std::vector<std::pair<std::string, double>>;

/// Relative error of every differentiable primitive for one seed.
inline NamedErrors primitive_gradient_errors(int seed) {
  Rng rng(1000 + seed);
  auto a = rand_t({3, 4}, rng), b = rand_t({4, 3}, rng), c = rand_t({3, 4}, rng), bias = rand_t({3}, rng);
  auto q = rand_t({5, 4}, rng), k = rand_t({5, 6, 4}, rng), attn = rand_t({5, 6}, rng);
  auto img = rand_t({2, 3, 2}, rng);
  auto r = away_from_zero(rand_t({4, 5}, rng));
  const auto t34 = rand_t({3, 4}, rng, false), t33 = rand_t({3, 3}, rng, false), t43 = rand_t({4, 3}, rng, false);
  const auto t56 = rand_t({5, 6}, rng, false), t54 = rand_t({5, 4}, rng, false);
  const auto t45 = rand_t({4, 5}, rng, false), tup = rand_t({4, 6, 2}, rng, false);
  const std::vector<unsigned char> keep{1, 0, 1, 1, 0};

  return {
      {"matmul", fd_rel_error([&] { return mse(matmul(a, b), t33); }, {&a, &b})},
      {"transpose", fd_rel_error([&] { return mse(transpose(a), t43); }, {&a})},
      {"linear", fd_rel_error([&] { return mse(linear(a, c), t33); }, {&a, &c})},
      {"linear+b", fd_rel_error([&] { return mse(linear(a, c, bias), t33); }, {&a, &c, &bias})},
      {"add", fd_rel_error([&] { return mse(add(a, c), t34); }, {&a, &c})},
      {"sub", fd_rel_error([&] { return mse(sub(a, c), t34); }, {&a, &c})},
      {"scale", fd_rel_error([&] { return mse(scale(a, -1.7), t34); }, {&a})},
      {"relu", fd_rel_error([&] { return mse(relu(r), t45); }, {&r})},
      {"softmax axis 1", fd_rel_error([&] { return mse(softmax(a, 1), t34); }, {&a})},
      {"softmax axis 0", fd_rel_error([&] { return mse(softmax(a, 0), t34); }, {&a})},
      {"reshape", fd_rel_error([&] { return mse(reshape(a, Shape{4, 3}), t43); }, {&a})},
      {"sum", fd_rel_error([&] { return sum(a); }, {&a})},
      {"mse", fd_rel_error([&] { return mse(a, c); }, {&a, &c})},
      {"rowdot", fd_rel_error([&] { return mse(rowdot(q, k), t56); }, {&q, &k})},
      {"weighted_sum", fd_rel_error([&] { return mse(weighted_sum(attn, k), t54); }, {&attn, &k})},
      {"mask_rows", fd_rel_error([&] { return mse(mask_rows(q, keep), t54); }, {&q})},
      {"upsample2x", fd_rel_error([&] { return mse(upsample2x(img), tup); }, {&img})},
  };
}

/// Truncated attention on a 4×4 instance: projections and every view's features.
inline double attention_gradient_error(int seed) {
  auto inst = harness::random_attention_instance(200 + seed, 4, 4, 7);
  pin_hidden_units(inst.w);
  Rng rng(seed);
  const auto target = rand_t({4, 4, 4}, rng, false);
  auto loss = [&] {
    return mse(truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w).features.data,
               target);
  };
  std::vector<TensorD*> params{&inst.w.W_Q, &inst.w.W_K, &inst.w.W_V};
  for (auto& f : inst.mv.features) params.push_back(&f.data);
  return fd_rel_error(loss, params);
}

struct Mini {
  DecoderConfig cfg;
  DecoderInput<double> input;
  DecoderWeights<double> w;
};

// Two levels, 4 → 8, every view with random latents and depth.
inline Mini make_mini(std::uint64_t seed, AttentionMode mode = AttentionMode::truncated) {
  Mini m;
  m.cfg.levels = 2;
  m.cfg.base_resolution = 4;
  m.cfg.d = 4;
  m.cfg.n_p_schedule = {3, 2};
  m.cfg.mode = mode;
  m.cfg.n_line_samples = 4;
  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0, 1), z(1.0, 2.0);
  for (int v = 0; v < kNumViews; ++v) {
    Image lat(4, 4, 3);
    for (auto& x : lat.data) x = static_cast<float>(u01(rng));
    m.input.latents.push_back(lat);
  }
  Image front(8, 8, 3);
  for (auto& x : front.data) x = static_cast<float>(u01(rng));
  m.input.front_image = front;
  std::vector<DepthMap> full;
  for (int v = 0; v < kNumViews; ++v) {
    DepthMap d(8, 8);
    for (std::size_t p = 0; p < d.values.size(); ++p) {
      d.values[p] = static_cast<float>(z(rng));
      d.valid[p] = u01(rng) < 0.9;
    }
    full.push_back(d);
  }
  m.input.depths = depth_pyramid(full, m.cfg);
  m.w = DecoderWeights<double>::init(m.cfg, rng);
  for (auto& a : m.w.attention) pin_hidden_units(a);
  // A live colour head, so gradients reach every parameter.
  m.w.out_W = rand_t({3, 4}, rng);
  m.w.out_b = rand_t({3}, rng);
  return m;
}

/// Whole 2-level decoder, all weights, 16 coordinates per tensor.
inline double decoder_gradient_error(int seed, AttentionMode mode) {
  auto m = make_mini(100 + seed, mode);
  Rng rng(seed);
  std::vector<TensorD> targets;
  for (int v = 0; v < kNumViews; ++v) targets.push_back(rand_t({8, 8, 3}, rng, false, 0, 1));
  auto loss = [&] {
    const auto out = decoder_stack(m.input, m.cfg, m.w);
    auto l = mse(out[0], targets[0]);
    for (int v = 1; v < kNumViews; ++v) l = add(l, mse(out[v], targets[v]));
    return l;
  };
  std::vector<TensorD*> params;
  for (auto& [name, t] : m.w.named()) params.push_back(t);
  return fd_rel_error(loss, params, 1e-3, 16);
}

}  // namespace mvtest
