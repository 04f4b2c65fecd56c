#pragma once

// Depth perturbation for training (multi-resolution structured noise and the
// per-pixel independent baseline) and the depth pyramid fed to each decoder level.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mvalign/errors.hpp"
#include "mvalign/image.hpp"
#include "mvalign/rng.hpp"

namespace mvalign {

struct NoiseTerm {
  int resolution = 3;
  double scale = 0.0;
};

struct NoiseSpec {
  std::vector<NoiseTerm> terms;
  std::uint64_t seed = 0;

  /// Coarse-to-fine scales 0.1, 0.1/3, 0.1/9 at 3, 64 and 128; the optional fourth
  /// term (0.1/9 at full resolution) is off unless requested.
  static NoiseSpec standard(std::uint64_t seed = 0, bool include_full_res_term = false, int full_res = 256) {
    NoiseSpec s;
    s.seed = seed;
    s.terms = {{3, 0.1}, {64, 0.1 / 3.0}, {128, 0.1 / 9.0}};
    if (include_full_res_term) s.terms.push_back({full_res, 0.1 / 9.0});
    return s;
  }

  double scale_sum() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.scale;
    return s;
  }

  /// Per-pixel scale whose uniform variance equals the summed variance of the terms.
  double matched_independent_scale() const {
    double v = 0.0;
    for (const auto& t : terms) v += t.scale * t.scale;
    return std::sqrt(v);
  }
};

/// Bilinear resize of a res×res field to out×out (pixel-center alignment, edge clamped).
inline std::vector<float> upsample_field(const std::vector<float>& field, int res, int out) {
  std::vector<float> up(static_cast<std::size_t>(out) * out);
  const double ratio = static_cast<double>(res) / out;
  std::vector<int> i0(out), i1(out);
  std::vector<double> f(out);
  for (int x = 0; x < out; ++x) {
    const double s = std::clamp((x + 0.5) * ratio - 0.5, 0.0, static_cast<double>(res - 1));
    i0[x] = static_cast<int>(std::floor(s));
    i1[x] = std::min(i0[x] + 1, res - 1);
    f[x] = s - i0[x];
  }
  for (int y = 0; y < out; ++y) {
    const auto r0 = static_cast<std::size_t>(i0[y]) * res;
    const auto r1 = static_cast<std::size_t>(i1[y]) * res;
    for (int x = 0; x < out; ++x) {
      const double top = field[r0 + i0[x]] * (1.0 - f[x]) + field[r0 + i1[x]] * f[x];
      const double bot = field[r1 + i0[x]] * (1.0 - f[x]) + field[r1 + i1[x]] * f[x];
      up[static_cast<std::size_t>(y) * out + x] = static_cast<float>(top * (1.0 - f[y]) + bot * f[y]);
    }
  }
  return up;
}

/// D' = D + Σ upsample(U(-s, s)^{res×res}). Validity is left untouched.
inline DepthMap structured_noise(const DepthMap& depth, const NoiseSpec& spec) {
  if (depth.width != depth.height) throw DimensionError("structured_noise: depth map must be square");
  const int n = depth.width;
  DepthMap out = depth;
  Rng rng(spec.seed);
  for (const auto& term : spec.terms) {
    if (term.resolution < 1 || term.resolution > n) {
      throw DimensionError("structured_noise: term resolution " + std::to_string(term.resolution) +
                           " exceeds depth resolution " + std::to_string(n));
    }
    if (term.scale < 0.0) throw DomainError("structured_noise: negative scale");
    std::uniform_real_distribution<double> dist(-term.scale, term.scale);
    std::vector<float> field(static_cast<std::size_t>(term.resolution) * term.resolution);
    for (auto& v : field) v = static_cast<float>(term.scale > 0.0 ? dist(rng) : 0.0);
    if (term.scale == 0.0) continue;
    const auto up = upsample_field(field, term.resolution, n);
    for (std::size_t i = 0; i < up.size(); ++i) out.values[i] += up[i];
  }
  return out;
}

/// Per-pixel i.i.d. uniform noise in [-scale, scale].
inline DepthMap independent_noise(const DepthMap& depth, double scale, std::uint64_t seed) {
  if (scale < 0.0) throw DomainError("independent_noise: negative scale");
  DepthMap out = depth;
  if (scale == 0.0) return out;
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& v : out.values) v = static_cast<float>(v + dist(rng));
  return out;
}

/// Average over valid pixels of each factor×factor block; blocks without valid pixels become invalid.
inline DepthMap pool_depth_to(const DepthMap& depth, int target) {
  if (target < 1 || depth.width % target != 0 || depth.height != depth.width) {
    throw DimensionError("pool_depth: cannot pool " + std::to_string(depth.width) + " to " + std::to_string(target));
  }
  const int f = depth.width / target;
  if (f == 1) return depth;
  DepthMap out(target, target);
  for (int y = 0; y < target; ++y)
    for (int x = 0; x < target; ++x) {
      double s = 0.0;
      int n = 0;
      for (int dy = 0; dy < f; ++dy)
        for (int dx = 0; dx < f; ++dx) {
          const int sx = x * f + dx, sy = y * f + dy;
          if (depth.is_valid(sx, sy)) {
            s += depth.value(sx, sy);
            ++n;
          }
        }
      if (n > 0) {
        out.values[out.index(x, y)] = static_cast<float>(s / n);
        out.valid[out.index(x, y)] = 1;
      }
    }
  return out;
}

/// Decoder level (1..4) to its working resolution, for a full resolution of 32·2^(levels-1).
inline int level_resolution(int level, int full_resolution = 256, int levels = 4) {
  if (level < 1 || level > levels) throw DomainError("level out of range: " + std::to_string(level));
  return full_resolution >> (levels - level);
}

inline DepthMap pool_depth(const DepthMap& depth, int level, int levels = 4) {
  return pool_depth_to(depth, level_resolution(level, depth.width, levels));
}

}  // namespace mvalign
