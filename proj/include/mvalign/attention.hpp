#pragma once

// Cross-view epipolar attention over multi-view feature maps.
//
// For every pixel of a reference view we pick a set of 3D points along its
// viewing ray, read the other views' features at the projections of those
// points, fuse each point's per-view features with a two-layer MLP, and let
// the reference pixel attend over the fused points:
//
//   q = W_Q f_ref,  k_i = W_K f_mv_i,  v_i = W_V f_mv_i,
//   out = softmax(qᵀk / √d) · v  (+ f_ref with the residual connection)
//
// The truncated variant draws the points within ±r of the depth-lifted pixel;
// the full variant spreads them over the whole scene depth range.
//
// Feature maps are stored channel-last, [H × W × d]. Per-view features enter
// the fusion MLP in rig order with the reference view skipped.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvalign/geometry.hpp"
#include "mvalign/image.hpp"
#include "mvalign/ops.hpp"
#include "mvalign/rng.hpp"
#include "mvalign/tensor.hpp"

namespace mvalign {

enum class Interpolation { bilinear, nearest };

inline constexpr int kPluckerDim = 6;

struct AttentionConfig {
  int n_p = 7;
  double r = 0.1;
  int d = 8;
  int hidden = 0;  // fusion MLP hidden width; 0 means d
  bool residual = true;
  bool use_plucker = true;
  Interpolation interpolation = Interpolation::bilinear;

  int hidden_width() const { return hidden > 0 ? hidden : d; }
  int slot_width() const { return d + (use_plucker ? kPluckerDim : 0); }
  int mlp_input_width(int n_other_views) const { return n_other_views * slot_width(); }

  void validate() const {
    if (n_p < 1) throw DomainError("attention: n_p must be >= 1");
    if (!(r > 0.0)) throw DomainError("attention: r must be positive");
    if (d < 1) throw DomainError("attention: feature width must be >= 1");
  }
};

template <class T>
struct FeatureMap {
  BasicTensor<T> data;  // [H × W × d]
  ViewId view = ViewId::front;
  int level = 1;

  int resolution() const { return static_cast<int>(data.dim(0)); }
  int channels() const { return static_cast<int>(data.dim(2)); }

  void validate() const {
    if (data.rank() != 3 || data.dim(0) != data.dim(1)) {
      throw DimensionError("feature map must be square [H×W×d], got " + shape_str(data.shape()));
    }
  }
};

/// Views of one object in rig order. Cameras must match the feature resolution.
template <class T>
struct MultiViewSet {
  std::vector<Camera> cameras;
  std::vector<FeatureMap<T>> features;
  std::vector<Image> colors;      // optional
  std::vector<DepthMap> depths;   // optional

  std::size_t size() const { return features.size(); }
};

template <class T>
struct AttentionWeights {
  BasicTensor<T> W_Q, W_K, W_V;  // [d × d]
  BasicTensor<T> W1, b1;         // [hidden × N_v·slot], [hidden]
  BasicTensor<T> W2, b2;         // [d × hidden], [d]

  /// Uniform in ±1/√fan_in, biases included.
  template <class R>
  static AttentionWeights init(const AttentionConfig& cfg, int n_other_views, R& rng) {
    const auto d = static_cast<std::size_t>(cfg.d);
    const auto h = static_cast<std::size_t>(cfg.hidden_width());
    const auto in = static_cast<std::size_t>(cfg.mlp_input_width(n_other_views));
    auto u = [&](Shape s, std::size_t fan_in) {
      const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
      return BasicTensor<T>::uniform(std::move(s), -a, a, rng, true);
    };
    AttentionWeights w;
    w.W_Q = u({d, d}, d);
    w.W_K = u({d, d}, d);
    w.W_V = u({d, d}, d);
    w.W1 = u({h, in}, in);
    w.b1 = u({h}, in);
    w.W2 = u({d, h}, h);
    w.b2 = u({d}, h);
    return w;
  }

  std::vector<std::pair<std::string, BasicTensor<T>*>> named() {
    return {{"W_Q", &W_Q}, {"W_K", &W_K}, {"W_V", &W_V}, {"W1", &W1}, {"b1", &b1}, {"W2", &W2}, {"b2", &b2}};
  }

  template <class U>
  AttentionWeights<U> cast(bool requires_grad = true) const {
    return {W_Q.template cast<U>(requires_grad), W_K.template cast<U>(requires_grad),
            W_V.template cast<U>(requires_grad), W1.template cast<U>(requires_grad),
            b1.template cast<U>(requires_grad),  W2.template cast<U>(requires_grad),
            b2.template cast<U>(requires_grad)};
  }
};

// ---------------------------------------------------------------------------
// Sampling plans

struct SampleTap {
  std::array<std::uint32_t, 4> index{};  // pixel indices (y·W + x)
  std::array<float, 4> weight{};
};

/// Where each (query, sample) row reads from each source view.
struct SamplePlan {
  std::size_t rows = 0;
  std::size_t slots = 0;
  std::size_t extra = 0;                 // constant columns appended per slot
  std::vector<SampleTap> taps;           // rows × slots
  std::vector<unsigned char> in_bounds;  // rows × slots
  std::vector<float> extras;             // rows × slots × extra
};

/// Interpolation taps for a continuous image point; false when the point is outside the image.
inline bool make_tap(const Vec2& uv, int width, int height, Interpolation mode, SampleTap& tap) {
  if (!(uv.x() >= 0.0 && uv.x() <= width && uv.y() >= 0.0 && uv.y() <= height)) return false;
  if (mode == Interpolation::nearest) {
    const int x = std::min(static_cast<int>(std::floor(uv.x())), width - 1);
    const int y = std::min(static_cast<int>(std::floor(uv.y())), height - 1);
    tap.index = {static_cast<std::uint32_t>(y * width + x), 0, 0, 0};
    tap.weight = {1.0f, 0.0f, 0.0f, 0.0f};
    return true;
  }
  // Pixel centers sit at integer + 0.5; clamp to the outermost centers at the border.
  const double x = std::clamp(uv.x() - 0.5, 0.0, static_cast<double>(width - 1));
  const double y = std::clamp(uv.y() - 0.5, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0, fy = y - y0;
  tap.index = {static_cast<std::uint32_t>(y0 * width + x0), static_cast<std::uint32_t>(y0 * width + x1),
               static_cast<std::uint32_t>(y1 * width + x0), static_cast<std::uint32_t>(y1 * width + x1)};
  tap.weight = {static_cast<float>((1 - fx) * (1 - fy)), static_cast<float>(fx * (1 - fy)),
                static_cast<float>((1 - fx) * fy), static_cast<float>(fx * fy)};
  return true;
}

/// Gathers, for every plan row, each source's interpolated feature followed by the
/// row's constant extra columns: out[row] = concat_s(feature_s, extra_s). Out-of-bounds
/// slots read as zeros. Differentiable with respect to the sources.
template <class T>
BasicTensor<T> sample_views(const std::vector<BasicTensor<T>>& sources, const SamplePlan& plan) {
  detail::require(sources.size() == plan.slots, "sample_views: " + std::to_string(sources.size()) +
                                                    " sources for " + std::to_string(plan.slots) + " slots");
  detail::require(!sources.empty(), "sample_views: no sources");
  const std::size_t d = sources.front().dim(2);
  for (const auto& s : sources) {
    detail::require(s.rank() == 3 && s.dim(2) == d, "sample_views: inconsistent source " + shape_str(s.shape()));
  }
  const std::size_t slot_w = d + plan.extra;
  const std::size_t row_w = plan.slots * slot_w;
  std::vector<T> out(plan.rows * row_w, T(0));
  std::vector<double> acc(d);
  for (std::size_t r = 0; r < plan.rows; ++r) {
    for (std::size_t s = 0; s < plan.slots; ++s) {
      const std::size_t ps = r * plan.slots + s;
      if (!plan.in_bounds[ps]) continue;
      T* dst = &out[r * row_w + s * slot_w];
      const auto src = sources[s].data();
      const auto& tap = plan.taps[ps];
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int t = 0; t < 4; ++t) {
        const double w = tap.weight[t];
        if (w == 0.0) continue;
        const T* f = &src[tap.index[t] * d];
        for (std::size_t c = 0; c < d; ++c) acc[c] += w * f[c];
      }
      for (std::size_t c = 0; c < d; ++c) dst[c] = static_cast<T>(acc[c]);
      for (std::size_t e = 0; e < plan.extra; ++e) dst[d + e] = static_cast<T>(plan.extras[ps * plan.extra + e]);
    }
  }
  std::vector<detail::NodePtr<T>> inputs;
  std::vector<detail::TensorNode<T>*> raw;
  for (const auto& s : sources) {
    inputs.push_back(s.node());
    raw.push_back(s.node().get());
  }
  auto taps = std::make_shared<std::vector<SampleTap>>(plan.taps);
  auto inb = std::make_shared<std::vector<unsigned char>>(plan.in_bounds);
  return detail::finish_op<T>(
      "sample_views", Shape{plan.rows, row_w}, std::move(out), std::move(inputs),
      [raw, taps, inb, rows = plan.rows, slots = plan.slots, d, slot_w, row_w](detail::TensorNode<T>* o) {
        return [raw, taps, inb, rows, slots, d, slot_w, row_w, o] {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t s = 0; s < slots; ++s) {
              const std::size_t ps = r * slots + s;
              T* g = detail::grad_of(raw[s]);
              if (g == nullptr || !(*inb)[ps]) continue;
              const T* go = &o->grad[r * row_w + s * slot_w];
              const auto& tap = (*taps)[ps];
              for (int t = 0; t < 4; ++t) {
                const T w = static_cast<T>(tap.weight[t]);
                if (w == T(0)) continue;
                T* dst = &g[tap.index[t] * d];
                for (std::size_t c = 0; c < d; ++c) dst[c] += w * go[c];
              }
            }
          }
        };
      });
}

/// Feature at a continuous image point (pixel centers at integer + 0.5). Outside the
/// image: zero vector and false.
template <class T>
std::pair<BasicTensor<T>, bool> bilinear_sample(const FeatureMap<T>& fm, const Vec2& uv,
                                                Interpolation mode = Interpolation::bilinear) {
  fm.validate();
  SamplePlan plan;
  plan.rows = 1;
  plan.slots = 1;
  plan.taps.resize(1);
  plan.in_bounds.resize(1);
  plan.in_bounds[0] = make_tap(uv, fm.resolution(), fm.resolution(), mode, plan.taps[0]) ? 1 : 0;
  const auto g = sample_views<T>({fm.data}, plan);
  return {reshape(g, Shape{static_cast<std::size_t>(fm.channels())}), plan.in_bounds[0] != 0};
}

/// Fuses one sample point's per-view features: mlp2(concat_j([f_j, plücker_j])). Views flagged
/// out of bounds contribute zeros (feature and code).
template <class T>
BasicTensor<T> aggregate_views(const std::vector<BasicTensor<T>>& per_view, const std::vector<bool>& in_bounds,
                               const std::vector<Vec6>* plucker_codes, const AttentionWeights<T>& w) {
  detail::require(!per_view.empty() && in_bounds.size() == per_view.size(),
                  "aggregate_views: feature and flag counts differ");
  const std::size_t d = per_view.front().numel();
  const std::size_t extra = plucker_codes != nullptr ? kPluckerDim : 0;
  if (plucker_codes != nullptr) {
    detail::require(plucker_codes->size() == per_view.size(), "aggregate_views: one Plücker code per view");
  }
  detail::require(w.W1.rank() == 2 && w.W1.dim(1) == per_view.size() * (d + extra),
                  "aggregate_views: " + std::to_string(per_view.size()) + " views of width " +
                      std::to_string(d + extra) + " do not fit W1 " + shape_str(w.W1.shape()));
  std::vector<BasicTensor<T>> parts;
  for (std::size_t j = 0; j < per_view.size(); ++j) {
    detail::require(per_view[j].numel() == d, "aggregate_views: ragged feature widths");
    if (!in_bounds[j]) {
      parts.push_back(BasicTensor<T>::zeros(Shape{d + extra}));
      continue;
    }
    parts.push_back(reshape(per_view[j], Shape{d}));
    if (extra) {
      std::vector<T> code(kPluckerDim);
      for (int k = 0; k < kPluckerDim; ++k) code[static_cast<std::size_t>(k)] = static_cast<T>((*plucker_codes)[j][k]);
      parts.push_back(BasicTensor<T>(Shape{kPluckerDim}, std::move(code)));
    }
  }
  return mlp2(concat(parts, 0), w.W1, w.b1, w.W2, w.b2);
}

// ---------------------------------------------------------------------------
// Attention

/// World-space sample points for every reference pixel.
struct QueryPoints {
  int resolution = 0;
  std::size_t n_samples = 0;
  std::vector<unsigned char> valid;  // per pixel
  std::vector<Vec3> points;          // pixel-major, n_samples each
};

/// Points within ±r of each pixel's depth-lifted position (stratum midpoints, or one
/// uniform draw per stratum and pixel when `jitter` is given).
inline QueryPoints truncated_query_points(const Camera& cam, const DepthMap& depth, int n_p, double r,
                                          Rng* jitter = nullptr) {
  if (depth.width != cam.width || depth.height != cam.height) {
    throw DimensionError("attention: depth resolution " + std::to_string(depth.width) +
                         " does not match features at " + std::to_string(cam.width));
  }
  QueryPoints q;
  q.resolution = cam.width;
  q.n_samples = static_cast<std::size_t>(n_p);
  const std::size_t P = static_cast<std::size_t>(cam.width) * cam.height;
  q.valid.assign(P, 0);
  q.points.assign(P * q.n_samples, Vec3::Zero());
  const Vec3 dir = cam.forward();
  const auto fixed = stratified_offsets(n_p, r);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const std::size_t p = depth.index(u, v);
      if (!depth.valid[p] || !std::isfinite(depth.values[p])) continue;
      q.valid[p] = 1;
      const Vec3 center = unproject(pixel_center(u, v), depth.values[p], cam);
      const auto offsets = jitter != nullptr ? stratified_offsets(n_p, r, jitter) : fixed;
      for (std::size_t k = 0; k < q.n_samples; ++k) q.points[p * q.n_samples + k] = center + offsets[k] * dir;
    }
  }
  return q;
}

/// Stratum midpoints of the whole depth range along each pixel's ray. Pixels outside
/// `mask` (when given) are passed through.
inline QueryPoints full_query_points(const Camera& cam, const ZRange& z, int n_line_samples,
                                     const DepthMap* mask = nullptr) {
  if (n_line_samples < 2) throw DomainError("full attention: need at least two line samples");
  if (!(z.far > z.near)) throw DomainError("full attention: empty depth range");
  QueryPoints q;
  q.resolution = cam.width;
  q.n_samples = static_cast<std::size_t>(n_line_samples);
  const std::size_t P = static_cast<std::size_t>(cam.width) * cam.height;
  q.valid.assign(P, 1);
  q.points.resize(P * q.n_samples);
  const double step = (z.far - z.near) / n_line_samples;
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const std::size_t p = static_cast<std::size_t>(v) * cam.width + u;
      if (mask != nullptr && !mask->valid[p]) {
        q.valid[p] = 0;
        continue;
      }
      for (std::size_t k = 0; k < q.n_samples; ++k) {
        q.points[p * q.n_samples + k] = unproject(pixel_center(u, v), z.near + (k + 0.5) * step, cam);
      }
    }
  }
  return q;
}

/// Projects every query point into each of `others`.
inline SamplePlan plan_samples(const QueryPoints& q, std::span<const Camera> others, Interpolation mode,
                               bool with_plucker) {
  SamplePlan plan;
  plan.rows = q.valid.size() * q.n_samples;
  plan.slots = others.size();
  plan.extra = with_plucker ? kPluckerDim : 0;
  plan.taps.resize(plan.rows * plan.slots);
  plan.in_bounds.assign(plan.rows * plan.slots, 0);
  plan.extras.assign(plan.rows * plan.slots * plan.extra, 0.0f);
  for (std::size_t p = 0; p < q.valid.size(); ++p) {
    if (!q.valid[p]) continue;
    for (std::size_t k = 0; k < q.n_samples; ++k) {
      const std::size_t row = p * q.n_samples + k;
      const Vec3& X = q.points[row];
      for (std::size_t s = 0; s < others.size(); ++s) {
        const std::size_t ps = row * plan.slots + s;
        const auto pr = project(X, others[s]);
        if (!make_tap(pr.uv, others[s].width, others[s].height, mode, plan.taps[ps])) continue;
        plan.in_bounds[ps] = 1;
        if (with_plucker) {
          const Vec6 code = plucker(Ray{X, others[s].forward()});
          for (int e = 0; e < kPluckerDim; ++e) plan.extras[ps * plan.extra + e] = static_cast<float>(code[e]);
        }
      }
    }
  }
  return plan;
}

template <class T>
struct AttentionResult {
  FeatureMap<T> features;
  std::vector<unsigned char> passthrough;  // pixels returned unchanged (no valid depth)
  BasicTensor<T> weights;                  // [P × keys] attention weights
  std::size_t keys_per_query = 0;
};

namespace detail {

template <class T>
int ref_index(const MultiViewSet<T>& mv, ViewId ref) {
  for (std::size_t i = 0; i < mv.size(); ++i)
    if (mv.features[i].view == ref) return static_cast<int>(i);
  return static_cast<int>(mv.size());
}

template <class T>
void check_views(const MultiViewSet<T>& mv, ViewId ref) {
  if (mv.features.size() != mv.cameras.size() || mv.features.size() < 2) {
    throw DimensionError("attention: need matching cameras and feature maps for at least two views");
  }
  const int res = mv.features.front().resolution();
  for (std::size_t i = 0; i < mv.size(); ++i) {
    mv.features[i].validate();
    if (mv.features[i].resolution() != res || mv.cameras[i].width != res) {
      throw DimensionError("attention: all feature maps and cameras must share one resolution");
    }
  }
  if (static_cast<std::size_t>(ref_index(mv, ref)) >= mv.size()) {
    throw ContractError("attention: reference view not in set");
  }
}

}  // namespace detail

/// Attention of every reference pixel over the given query points. Shared by the
/// truncated and full variants.
template <class T>
AttentionResult<T> epipolar_attention(const MultiViewSet<T>& mv, ViewId ref, const QueryPoints& q,
                                      const AttentionConfig& cfg, const AttentionWeights<T>& w) {
  cfg.validate();
  detail::check_views(mv, ref);
  const int ri = detail::ref_index(mv, ref);
  const FeatureMap<T>& fref = mv.features[static_cast<std::size_t>(ri)];
  const std::size_t res = static_cast<std::size_t>(fref.resolution());
  const std::size_t d = static_cast<std::size_t>(fref.channels());
  if (static_cast<int>(d) != cfg.d) throw DimensionError("attention: feature width differs from config");
  const std::size_t P = res * res;
  if (q.valid.size() != P) throw DimensionError("attention: query points for a different resolution");

  std::vector<Camera> others;
  std::vector<BasicTensor<T>> sources;
  for (std::size_t i = 0; i < mv.size(); ++i) {
    if (static_cast<int>(i) == ri) continue;
    others.push_back(mv.cameras[i]);
    sources.push_back(mv.features[i].data);
  }
  const auto n_other = static_cast<int>(others.size());
  if (w.W1.rank() != 2 || static_cast<int>(w.W1.dim(1)) != cfg.mlp_input_width(n_other)) {
    throw DimensionError("attention: W1 " + shape_str(w.W1.shape()) + " does not fit " + std::to_string(n_other) +
                         " views of width " + std::to_string(cfg.slot_width()));
  }

  const SamplePlan plan = plan_samples(q, others, cfg.interpolation, cfg.use_plucker);
  const std::size_t N = q.n_samples;

  const auto gathered = sample_views(sources, plan);
  const auto fused = mlp2(gathered, w.W1, w.b1, w.W2, w.b2);  // [P·N × d]
  const auto keys = reshape(linear(fused, w.W_K), Shape{P, N, d});
  const auto values = reshape(linear(fused, w.W_V), Shape{P, N, d});
  const auto f = reshape(fref.data, Shape{P, d});
  const auto query = linear(f, w.W_Q);
  const auto scores = scale(rowdot(query, keys), 1.0 / std::sqrt(static_cast<double>(d)));
  const auto attn = softmax(scores, 1);
  const auto mixed = weighted_sum(attn, values);

  std::vector<unsigned char> passthrough(P);
  std::vector<unsigned char> keep_ref(P);
  for (std::size_t p = 0; p < P; ++p) {
    passthrough[p] = q.valid[p] ? 0 : 1;
    keep_ref[p] = cfg.residual ? 1 : passthrough[p];
  }
  const auto attended = mask_rows(mixed, q.valid);
  const auto out = cfg.residual ? add(f, attended) : add(attended, mask_rows(f, keep_ref));

  AttentionResult<T> result;
  result.features = {reshape(out, Shape{res, res, d}), ref, fref.level};
  result.passthrough = std::move(passthrough);
  result.weights = attn;
  result.keys_per_query = N;
  return result;
}

/// Depth-truncated epipolar attention for one reference view.
template <class T>
AttentionResult<T> truncated_epipolar_attention(const MultiViewSet<T>& mv, ViewId ref, const DepthMap& depth,
                                                const AttentionConfig& cfg, const AttentionWeights<T>& w,
                                                Rng* jitter = nullptr) {
  detail::check_views(mv, ref);
  const auto& cam = mv.cameras[static_cast<std::size_t>(detail::ref_index(mv, ref))];
  return epipolar_attention(mv, ref, truncated_query_points(cam, depth, cfg.n_p, cfg.r, jitter), cfg, w);
}

/// Full epipolar attention: n_line_samples keys spread over the whole depth range.
/// Pixels invalid in `mask` (optional) are passed through.
template <class T>
AttentionResult<T> full_epipolar_attention(const MultiViewSet<T>& mv, ViewId ref, const ZRange& z,
                                           int n_line_samples, const AttentionConfig& cfg,
                                           const AttentionWeights<T>& w, const DepthMap* mask = nullptr) {
  detail::check_views(mv, ref);
  const auto& cam = mv.cameras[static_cast<std::size_t>(detail::ref_index(mv, ref))];
  return epipolar_attention(mv, ref, full_query_points(cam, z, n_line_samples, mask), cfg, w);
}

}  // namespace mvalign
