#pragma once

// Scalar-loop reference implementations used to cross-check the vectorized code.
// Everything runs in double, one pixel at a time, with no shared plans.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mvalign/attention.hpp"
#include "mvalign/geometry.hpp"
#include "mvalign/image.hpp"

namespace mvalign::oracle {

// Bilinear read of an [H×W×d] tensor at continuous pixel coordinates, border-clamped.
// Returns false when uv lies outside [0,W]×[0,H].
template <class T>
bool read_feature(const BasicTensor<T>& f, double u, double v, Interpolation mode, std::vector<double>& out) {
  const int H = static_cast<int>(f.dim(0)), W = static_cast<int>(f.dim(1)), d = static_cast<int>(f.dim(2));
  out.assign(static_cast<std::size_t>(d), 0.0);
  if (!(u >= 0.0 && u <= W && v >= 0.0 && v <= H)) return false;
  auto at = [&](int x, int y, int c) { return static_cast<double>(f.data()[(static_cast<std::size_t>(y) * W + x) * d + c]); };
  if (mode == Interpolation::nearest) {
    const int x = std::min(static_cast<int>(u), W - 1), y = std::min(static_cast<int>(v), H - 1);
    for (int c = 0; c < d; ++c) out[c] = at(x, y, c);
    return true;
  }
  const double x = std::clamp(u - 0.5, 0.0, W - 1.0), y = std::clamp(v - 0.5, 0.0, H - 1.0);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
  const double fx = x - x0, fy = y - y0;
  for (int c = 0; c < d; ++c) {
    out[c] = (1 - fx) * (1 - fy) * at(x0, y0, c) + fx * (1 - fy) * at(x1, y0, c) + (1 - fx) * fy * at(x0, y1, c) +
             fx * fy * at(x1, y1, c);
  }
  return true;
}

// y = W x (+ b), W stored [out × in].
template <class T>
std::vector<double> matvec(const BasicTensor<T>& W, const std::vector<double>& x, const BasicTensor<T>* b = nullptr) {
  const std::size_t out = W.dim(0), in = W.dim(1);
  std::vector<double> y(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    double s = b != nullptr ? static_cast<double>(b->data()[o]) : 0.0;
    for (std::size_t i = 0; i < in; ++i) s += static_cast<double>(W.data()[o * in + i]) * x[i];
    y[o] = s;
  }
  return y;
}

/// Attention output of one reference pixel over explicit world points.
template <class T>
std::vector<double> attend_pixel(const MultiViewSet<T>& mv, std::size_t ref, int u, int v,
                                 const std::vector<Vec3>& points, const AttentionConfig& cfg,
                                 const AttentionWeights<T>& w) {
  const auto& fref = mv.features[ref].data;
  const int res = static_cast<int>(fref.dim(0));
  const int d = cfg.d;
  std::vector<double> f(static_cast<std::size_t>(d));
  for (int c = 0; c < d; ++c) f[c] = fref.data()[(static_cast<std::size_t>(v) * res + u) * d + c];

  const auto q = matvec(w.W_Q, f);
  std::vector<std::vector<double>> keys, values;
  std::vector<double> feat;
  for (const Vec3& X : points) {
    std::vector<double> slot_concat;
    for (std::size_t j = 0; j < mv.size(); ++j) {
      if (j == ref) continue;
      const auto pr = project(X, mv.cameras[j]);
      const bool in = read_feature(mv.features[j].data, pr.uv.x(), pr.uv.y(), cfg.interpolation, feat);
      slot_concat.insert(slot_concat.end(), feat.begin(), feat.end());
      if (cfg.use_plucker) {
        const Vec3 dir = mv.cameras[j].forward().normalized();
        const Vec3 m = X.cross(dir);
        for (int e = 0; e < 3; ++e) slot_concat.push_back(in ? dir[e] : 0.0);
        for (int e = 0; e < 3; ++e) slot_concat.push_back(in ? m[e] : 0.0);
      }
    }
    auto hidden = matvec(w.W1, slot_concat, &w.b1);
    for (double& h : hidden) h = std::max(0.0, h);
    const auto fused = matvec(w.W2, hidden, &w.b2);
    keys.push_back(matvec(w.W_K, fused));
    values.push_back(matvec(w.W_V, fused));
  }

  std::vector<double> score(points.size());
  double mx = -1e300;
  for (std::size_t k = 0; k < points.size(); ++k) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += q[c] * keys[k][c];
    score[k] = s / std::sqrt(static_cast<double>(d));
    mx = std::max(mx, score[k]);
  }
  double z = 0.0;
  for (double& s : score) z += (s = std::exp(s - mx));
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (std::size_t k = 0; k < points.size(); ++k)
    for (int c = 0; c < d; ++c) out[c] += score[k] / z * values[k][c];
  if (cfg.residual)
    for (int c = 0; c < d; ++c) out[c] += f[c];
  return out;
}

/// Truncated attention, one pixel at a time. Output is [H·W·d] row-major; pixels without
/// valid depth copy the reference feature.
template <class T>
std::vector<double> truncated_attention(const MultiViewSet<T>& mv, ViewId ref_view, const DepthMap& depth,
                                        const AttentionConfig& cfg, const AttentionWeights<T>& w) {
  std::size_t ref = 0;
  while (mv.features[ref].view != ref_view) ++ref;
  const Camera& cam = mv.cameras[ref];
  const auto& fref = mv.features[ref].data;
  const int res = static_cast<int>(fref.dim(0)), d = cfg.d;
  std::vector<double> out(static_cast<std::size_t>(res) * res * d);
  for (int v = 0; v < res; ++v) {
    for (int u = 0; u < res; ++u) {
      const std::size_t o = (static_cast<std::size_t>(v) * res + u) * d;
      if (!depth.is_valid(u, v)) {
        for (int c = 0; c < d; ++c) out[o + c] = fref.data()[o + c];
        continue;
      }
      const Vec3 center = unproject(pixel_center(u, v), depth.value(u, v), cam);
      std::vector<Vec3> pts;
      for (int k = 0; k < cfg.n_p; ++k) {
        const double t = -cfg.r + (k + 0.5) * (2.0 * cfg.r / cfg.n_p);
        pts.push_back(center + t * cam.forward());
      }
      const auto y = attend_pixel(mv, ref, u, v, pts, cfg, w);
      std::copy(y.begin(), y.end(), out.begin() + static_cast<std::ptrdiff_t>(o));
    }
  }
  return out;
}

}  // namespace mvalign::oracle
