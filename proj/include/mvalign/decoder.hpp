#pragma once

// Toy multi-view decoder: a latent-resolution feature map per view is expanded
// level by level (32 → 64 → 128 → 256 by default). Each level applies a
// per-pixel linear mixing layer, optionally fed with the front-view condition,
// and then cross-view attention with every view as reference. All views at a
// level read the same pre-attention snapshot, so view order does not matter.
// The last level does not upsample.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvalign/attention.hpp"
#include "mvalign/depthaug.hpp"
#include "mvalign/geometry.hpp"
#include "mvalign/image.hpp"
#include "mvalign/ops.hpp"

namespace mvalign {

enum class AttentionMode { truncated, full, none };

inline std::string_view mode_name(AttentionMode m) {
  switch (m) {
    case AttentionMode::truncated: return "truncated";
    case AttentionMode::full: return "full";
    case AttentionMode::none: return "none";
  }
  return "?";
}

inline constexpr int kColorChannels = 3;

struct DecoderConfig {
  int levels = 4;
  int base_resolution = 32;
  int d = 8;
  std::vector<int> n_p_schedule{7, 7, 7, 2};
  double r = 0.1;
  bool residual = true;
  bool use_plucker = true;
  bool front_condition = true;
  Interpolation interpolation = Interpolation::bilinear;
  AttentionMode mode = AttentionMode::truncated;
  int n_line_samples = 16;
  int full_max_resolution = 128;  // full attention is dropped above this resolution
  ZRange z_range{};
  double ortho_scale = kRigRadius;

  int resolution(int level) const { return base_resolution << (level - 1); }
  int output_resolution() const { return resolution(levels); }

  int n_p(int level) const {
    if (n_p_schedule.empty()) throw ContractError("decoder: empty N_p schedule");
    const auto i = static_cast<std::size_t>(level - 1);
    return i < n_p_schedule.size() ? n_p_schedule[i] : n_p_schedule.back();
  }

  AttentionMode level_mode(int level) const {
    if (mode == AttentionMode::full && resolution(level) > full_max_resolution) return AttentionMode::none;
    return mode;
  }

  AttentionConfig attention(int level) const {
    AttentionConfig c;
    c.n_p = n_p(level);
    c.r = r;
    c.d = d;
    c.residual = residual;
    c.use_plucker = use_plucker;
    c.interpolation = interpolation;
    return c;
  }

  int mix_input_width(int level) const { return (level == 1 ? kColorChannels : d) + kColorChannels; }
};

template <class T>
struct DecoderWeights {
  std::vector<BasicTensor<T>> mix_W;  // per level [d × (in + 3)]
  std::vector<BasicTensor<T>> mix_b;  // per level [d]
  std::vector<AttentionWeights<T>> attention;
  BasicTensor<T> out_W;  // [3 × d]
  BasicTensor<T> out_b;  // [3]

  /// Uniform ±1/√fan_in everywhere except the colour head, which starts at zero so an
  /// untrained stack reproduces the upsampled latent.
  template <class R>
  static DecoderWeights init(const DecoderConfig& cfg, R& rng) {
    DecoderWeights w;
    const auto d = static_cast<std::size_t>(cfg.d);
    for (int level = 1; level <= cfg.levels; ++level) {
      const auto in = static_cast<std::size_t>(cfg.mix_input_width(level));
      const double a = 1.0 / std::sqrt(static_cast<double>(in));
      w.mix_W.push_back(BasicTensor<T>::uniform({d, in}, -a, a, rng, true));
      w.mix_b.push_back(BasicTensor<T>::uniform({d}, -a, a, rng, true));
      w.attention.push_back(AttentionWeights<T>::init(cfg.attention(level), kNumViews - 1, rng));
    }
    w.out_W = BasicTensor<T>::zeros({kColorChannels, d}, true);
    w.out_b = BasicTensor<T>::zeros({kColorChannels}, true);
    return w;
  }

  std::vector<std::pair<std::string, BasicTensor<T>*>> named() {
    std::vector<std::pair<std::string, BasicTensor<T>*>> out;
    for (std::size_t l = 0; l < mix_W.size(); ++l) {
      const std::string p = "level" + std::to_string(l + 1) + ".";
      out.emplace_back(p + "mix_W", &mix_W[l]);
      out.emplace_back(p + "mix_b", &mix_b[l]);
      for (auto& [name, t] : attention[l].named()) out.emplace_back(p + "attn." + name, t);
    }
    out.emplace_back("out_W", &out_W);
    out.emplace_back("out_b", &out_b);
    return out;
  }

  template <class U>
  DecoderWeights<U> cast(bool requires_grad = true) const {
    DecoderWeights<U> w;
    for (const auto& t : mix_W) w.mix_W.push_back(t.template cast<U>(requires_grad));
    for (const auto& t : mix_b) w.mix_b.push_back(t.template cast<U>(requires_grad));
    for (const auto& a : attention) w.attention.push_back(a.template cast<U>(requires_grad));
    w.out_W = out_W.template cast<U>(requires_grad);
    w.out_b = out_b.template cast<U>(requires_grad);
    return w;
  }
};

template <class T>
struct DecoderInput {
  std::vector<Image> latents;                // rig order, base resolution, 3 channels
  std::optional<Image> front_image;          // full-resolution front view
  std::vector<std::vector<DepthMap>> depths; // [level-1][view], at each level's resolution
};

namespace detail {

template <class T>
BasicTensor<T> zeros_hw(int res, int c) {
  return BasicTensor<T>::zeros(Shape{static_cast<std::size_t>(res), static_cast<std::size_t>(res),
                                     static_cast<std::size_t>(c)});
}

// Per-pixel affine map of an [R×R×C] map to [R×R×out].
template <class T>
BasicTensor<T> pixelwise_linear(const BasicTensor<T>& x, const BasicTensor<T>& W, const BasicTensor<T>& b) {
  const std::size_t R = x.dim(0), C = x.dim(2);
  const auto y = linear(reshape(x, Shape{R * R, C}), W, b);
  return reshape(y, Shape{R, R, W.dim(0)});
}

inline Image nearest_upsample(const Image& img, int factor) {
  Image out(img.width * factor, img.height * factor, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x / factor, y / factor, c);
  return out;
}

}  // namespace detail

/// Runs the stack. Returns one [R×R×3] colour tensor per view, R = output resolution.
/// `jitter` switches truncated sampling to one random draw per stratum.
template <class T>
std::vector<BasicTensor<T>> decoder_stack(const DecoderInput<T>& input, const DecoderConfig& cfg,
                                          const DecoderWeights<T>& w, Rng* jitter = nullptr) {
  if (input.latents.size() != static_cast<std::size_t>(kNumViews)) {
    throw DimensionError("decoder: expected one latent per rig view");
  }
  if (static_cast<int>(w.mix_W.size()) != cfg.levels || static_cast<int>(w.attention.size()) != cfg.levels) {
    throw DimensionError("decoder: weights built for a different number of levels");
  }
  for (int level = 1; level <= cfg.levels; ++level) {
    if (cfg.level_mode(level) == AttentionMode::none) continue;
    const auto li = static_cast<std::size_t>(level - 1);
    if (input.depths.size() <= li || input.depths[li].size() != static_cast<std::size_t>(kNumViews)) {
      throw ContractError("decoder: missing depth maps for level " + std::to_string(level));
    }
  }
  const int out_res = cfg.output_resolution();
  if (cfg.front_condition && (!input.front_image || input.front_image->width != out_res)) {
    throw ContractError("decoder: front condition requires the full-resolution front image");
  }

  const auto rig = make_rig(cfg.ortho_scale, cfg.base_resolution);
  std::vector<BasicTensor<T>> h;
  for (const auto& lat : input.latents) {
    if (lat.width != cfg.base_resolution || lat.channels != kColorChannels) {
      throw DimensionError("decoder: latent must be " + std::to_string(cfg.base_resolution) + "² RGB");
    }
    h.push_back(image_to_tensor<T>(lat));
  }

  for (int level = 1; level <= cfg.levels; ++level) {
    const auto li = static_cast<std::size_t>(level - 1);
    const int res = cfg.resolution(level);
    BasicTensor<T> cond;
    if (cfg.front_condition) cond = image_to_tensor<T>(block_downsample(*input.front_image, out_res / res));
    const auto none = detail::zeros_hw<T>(res, kColorChannels);

    MultiViewSet<T> snapshot;
    for (int v = 0; v < kNumViews; ++v) {
      const auto vi = static_cast<std::size_t>(v);
      const bool is_front = kRigOrder[vi] == ViewId::front;
      const auto& c = cfg.front_condition && is_front ? cond : none;
      const auto mixed = detail::pixelwise_linear(concat<T>({h[vi], c}, 2), w.mix_W[li], w.mix_b[li]);
      snapshot.cameras.push_back(rig[vi].with_resolution(res));
      snapshot.features.push_back({mixed, kRigOrder[vi], level});
    }

    const AttentionMode mode = cfg.level_mode(level);
    const AttentionConfig acfg = cfg.attention(level);
    for (int v = 0; v < kNumViews; ++v) {
      const auto vi = static_cast<std::size_t>(v);
      switch (mode) {
        case AttentionMode::none:
          h[vi] = snapshot.features[vi].data;
          break;
        case AttentionMode::truncated:
          h[vi] = truncated_epipolar_attention(snapshot, kRigOrder[vi], input.depths[li][vi], acfg,
                                               w.attention[li], jitter)
                      .features.data;
          break;
        case AttentionMode::full:
          h[vi] = full_epipolar_attention(snapshot, kRigOrder[vi], cfg.z_range, cfg.n_line_samples, acfg,
                                          w.attention[li], &input.depths[li][vi])
                      .features.data;
          break;
      }
      if (level < cfg.levels) h[vi] = upsample2x(h[vi]);
    }
  }

  std::vector<BasicTensor<T>> colors;
  const int factor = out_res / cfg.base_resolution;
  for (int v = 0; v < kNumViews; ++v) {
    const auto vi = static_cast<std::size_t>(v);
    const auto base = image_to_tensor<T>(detail::nearest_upsample(input.latents[vi], factor));
    colors.push_back(add(base, detail::pixelwise_linear(h[vi], w.out_W, w.out_b)));
  }
  return colors;
}

/// Depth pyramid for every level of `cfg` from full-resolution maps (rig order).
inline std::vector<std::vector<DepthMap>> depth_pyramid(const std::vector<DepthMap>& full, const DecoderConfig& cfg) {
  std::vector<std::vector<DepthMap>> out(static_cast<std::size_t>(cfg.levels));
  for (int level = 1; level <= cfg.levels; ++level)
    for (const auto& d : full) out[static_cast<std::size_t>(level - 1)].push_back(pool_depth_to(d, cfg.resolution(level)));
  return out;
}

}  // namespace mvalign
