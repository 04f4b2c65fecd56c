#pragma once

// Image-quality metrics, the epipolar-constrained correspondence counter and the
// analytic memory/compute model of full versus truncated attention.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mvalign/decoder.hpp"
#include "mvalign/errors.hpp"
#include "mvalign/geometry.hpp"
#include "mvalign/image.hpp"

namespace mvalign {

namespace detail {

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                         std::to_string(b.width) + "x" + std::to_string(b.height) + "x" + std::to_string(b.channels));
  }
}

}  // namespace detail

inline double mse(const Image& a, const Image& b) {
  detail::require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double e = static_cast<double>(a.data[i]) - b.data[i];
    s += e * e;
  }
  return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

/// 10·log10(peak²/MSE) in dB; +inf for identical images.
inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Normalised 1-D Gaussian taps.
inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    s += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= s;
  return k;
}

/// Mean local SSIM over the fully covered window positions, averaged over channels.
inline double ssim(const Image& a, const Image& b, const SsimConfig& cfg = {}) {
  detail::require_same_shape(a, b, "ssim");
  const int n = cfg.window;
  if (a.width < n || a.height < n) throw DimensionError("ssim: image smaller than the window");
  const auto k = gaussian_kernel(n, cfg.sigma);
  const double C1 = (cfg.k1 * cfg.peak) * (cfg.k1 * cfg.peak);
  const double C2 = (cfg.k2 * cfg.peak) * (cfg.k2 * cfg.peak);
  const int ow = a.width - n + 1, oh = a.height - n + 1;
  const auto W = static_cast<std::size_t>(a.width);

  // Separable filtering of x, y, x², y², xy: rows first, then columns.
  auto filter = [&](const std::vector<double>& img) {
    std::vector<double> rows(static_cast<std::size_t>(a.height) * ow);
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * img[y * W + static_cast<std::size_t>(x + i)];
        rows[static_cast<std::size_t>(y) * ow + x] = s;
      }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
        out[static_cast<std::size_t>(y) * ow + x] = s;
      }
    return out;
  };

  double total = 0.0;
  const std::size_t P = W * static_cast<std::size_t>(a.height);
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(P), y(P), xx(P), yy(P), xy(P);
    for (std::size_t p = 0; p < P; ++p) {
      x[p] = a.data[p * a.channels + c];
      y[p] = b.data[p * b.channels + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter(x), my = filter(y), mxx = filter(xx), myy = filter(yy), mxy = filter(xy);
    double s = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cxy = mxy[i] - mx[i] * my[i];
      s += ((2 * mx[i] * my[i] + C1) * (2 * cxy + C2)) / ((mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2));
    }
    total += s / static_cast<double>(mx.size());
  }
  return total / a.channels;
}

// ---------------------------------------------------------------------------
// Correspondence counting

struct MatcherConfig {
  int window = 7;
  double ncc_threshold = 0.9;
  int stride = 4;
  double mutual_tol_px = 1.0;
  double min_std = 1e-3;  // windows flatter than this are rejected
  ZRange z_range{};
};

namespace detail {

// Zero-mean, unit-norm grayscale window around every pixel whose window fits.
struct WindowBank {
  int width = 0, height = 0, half = 0, n = 0;
  std::vector<float> data;           // pixel-major, n floats each
  std::vector<unsigned char> usable; // window fits and has texture

  WindowBank(const Image& gray, int window, double min_std)
      : width(gray.width), height(gray.height), half(window / 2), n(window * window) {
    data.assign(static_cast<std::size_t>(width) * height * n, 0.0f);
    usable.assign(static_cast<std::size_t>(width) * height, 0);
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int y = half; y < height - half; ++y)
      for (int x = half; x < width - half; ++x) {
        double mean = 0.0;
        int i = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) mean += (w[static_cast<std::size_t>(i++)] = gray.at(x + dx, y + dy, 0));
        mean /= n;
        double ss = 0.0;
        for (auto& v : w) {
          v -= mean;
          ss += v * v;
        }
        if (std::sqrt(ss / n) < min_std) continue;
        const double inv = 1.0 / std::sqrt(ss);
        float* dst = &data[index(x, y) * n];
        for (int j = 0; j < n; ++j) dst[j] = static_cast<float>(w[static_cast<std::size_t>(j)] * inv);
        usable[index(x, y)] = 1;
      }
  }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

  double ncc(int x, int y, const WindowBank& o, int ox, int oy) const {
    const float* a = &data[index(x, y) * n];
    const float* b = &o.data[o.index(ox, oy) * n];
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += static_cast<double>(a[j]) * b[j];
    return s;
  }
};

struct Match {
  int x = -1, y = -1;
  double score = -2.0;
};

// Best usable pixel of `dst` along the epipolar segment of src pixel (x, y), walked in 1 px steps.
inline Match epipolar_search(const WindowBank& src, const Camera& cam_src, int x, int y, const WindowBank& dst,
                             const Camera& cam_dst, const ZRange& z) {
  Match best;
  const Segment seg = epipolar_segment(pixel_center(x, y), cam_src, cam_dst, z);
  if (seg.empty) return best;
  const int steps = static_cast<int>(std::ceil(seg.length())) + 1;
  int last_x = -1, last_y = -1;
  for (int s = 0; s <= steps; ++s) {
    const double t = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
    const Vec2 p = seg.start + t * (seg.end - seg.start);
    const int cx = std::clamp(static_cast<int>(std::floor(p.x())), 0, dst.width - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(p.y())), 0, dst.height - 1);
    if (cx == last_x && cy == last_y) continue;
    last_x = cx;
    last_y = cy;
    if (!dst.usable[dst.index(cx, cy)]) continue;
    const double score = src.ncc(x, y, dst, cx, cy);
    if (score > best.score) best = {cx, cy, score};
  }
  return best;
}

}  // namespace detail

/// Number of stride-grid pixels of view i (restricted to `mask_i` when given) whose best
/// epipolar NCC match in view j exceeds the threshold and maps back to within
/// `mutual_tol_px` of the starting pixel.
inline int correspondence_count(const Image& color_i, const Camera& cam_i, const Image& color_j, const Camera& cam_j,
                                const MatcherConfig& cfg = {}, const DepthMap* mask_i = nullptr) {
  if (cfg.window < 1 || cfg.window % 2 == 0) throw DomainError("matcher: window must be odd");
  if (cfg.stride < 1) throw DomainError("matcher: stride must be >= 1");
  if (color_i.width != cam_i.width || color_j.width != cam_j.width) {
    throw DimensionError("matcher: image and camera resolutions differ");
  }
  const detail::WindowBank bi(to_gray(color_i), cfg.window, cfg.min_std);
  const detail::WindowBank bj(to_gray(color_j), cfg.window, cfg.min_std);
  int count = 0;
  for (int y = 0; y < bi.height; y += cfg.stride)
    for (int x = 0; x < bi.width; x += cfg.stride) {
      if (!bi.usable[bi.index(x, y)]) continue;
      if (mask_i != nullptr && !mask_i->is_valid(x, y)) continue;
      const auto fwd = detail::epipolar_search(bi, cam_i, x, y, bj, cam_j, cfg.z_range);
      if (fwd.x < 0 || !(fwd.score > cfg.ncc_threshold)) continue;
      const auto back = detail::epipolar_search(bj, cam_j, fwd.x, fwd.y, bi, cam_i, cfg.z_range);
      if (back.x < 0) continue;
      if (std::abs(back.x - x) <= cfg.mutual_tol_px && std::abs(back.y - y) <= cfg.mutual_tol_px) ++count;
    }
  return count;
}

// ---------------------------------------------------------------------------
// Cost model

struct LevelCost {
  int resolution = 0;
  std::size_t keys_per_query = 0;  // 0 when the level runs without attention
  double kv_floats = 0.0;          // per view: H·W·keys·d·2 (keys and values)
  double attention_flops = 0.0;    // per view: H·W·keys·d·4 (QKᵀ and weighted V, multiply-add counted as 2)
  double kv_bytes_total = 0.0;     // all views
  bool feasible = true;            // kv_bytes_total within the budget
};

struct CostReport {
  AttentionMode mode = AttentionMode::truncated;
  int n_views = 0;
  int d = 0;
  std::vector<LevelCost> levels;
  double total_kv_floats = 0.0;  // summed over views and levels
  double total_flops = 0.0;
};

struct CostParams {
  std::vector<int> resolutions{32, 64, 128, 256};
  std::vector<int> n_p{7, 7, 7, 2};
  int n_views = kNumViews;
  int d = 8;
  int n_line_samples = 16;
  bool line_samples_match_resolution = false;  // full mode: one key per pixel of epipolar line length
  int full_max_resolution = std::numeric_limits<int>::max();
  int bytes_per_float = 4;
  double kv_budget_bytes = std::numeric_limits<double>::infinity();
};

inline LevelCost level_cost(int resolution, std::size_t keys, int d, int n_views, int bytes_per_float,
                            double kv_budget_bytes) {
  if (resolution < 1 || d < 1 || n_views < 1 || bytes_per_float < 1) throw DomainError("cost_model: parameters must be >= 1");
  LevelCost c;
  c.resolution = resolution;
  c.keys_per_query = keys;
  const double hw = static_cast<double>(resolution) * resolution;
  c.kv_floats = hw * static_cast<double>(keys) * d * 2.0;
  c.attention_flops = hw * static_cast<double>(keys) * d * 4.0;
  c.kv_bytes_total = c.kv_floats * n_views * bytes_per_float;
  c.feasible = c.kv_bytes_total <= kv_budget_bytes;
  return c;
}

inline CostReport cost_model(AttentionMode mode, const CostParams& p) {
  CostReport r;
  r.mode = mode;
  r.n_views = p.n_views;
  r.d = p.d;
  for (std::size_t i = 0; i < p.resolutions.size(); ++i) {
    const int res = p.resolutions[i];
    std::size_t keys = 0;
    if (mode == AttentionMode::truncated) {
      if (p.n_p.empty()) throw DomainError("cost_model: empty N_p schedule");
      keys = static_cast<std::size_t>(i < p.n_p.size() ? p.n_p[i] : p.n_p.back());
    } else if (mode == AttentionMode::full && res <= p.full_max_resolution) {
      keys = static_cast<std::size_t>(p.line_samples_match_resolution ? res : p.n_line_samples);
    }
    const bool attends = mode == AttentionMode::truncated || (mode == AttentionMode::full && res <= p.full_max_resolution);
    if (attends && keys < 1) throw DomainError("cost_model: keys per query must be >= 1");
    auto c = level_cost(res, keys, p.d, p.n_views, p.bytes_per_float, p.kv_budget_bytes);
    r.total_kv_floats += c.kv_floats * p.n_views;
    r.total_flops += c.attention_flops * p.n_views;
    r.levels.push_back(c);
  }
  return r;
}

}  // namespace mvalign
