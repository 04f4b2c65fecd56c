#pragma once

// Brute-force cross-checks shared by the `oracle` command and the acceptance suite.
// Each check returns its worst observed error next to the bound it is held to.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mvalign/attention.hpp"
#include "mvalign/depthaug.hpp"
#include "mvalign/geometry.hpp"
#include "mvalign/metrics.hpp"
#include "mvalign/oracle.hpp"
#include "mvalign/synthscene.hpp"

namespace mvalign::harness {

struct CheckResult {
  std::string name;
  double value = 0.0;  // worst error, or the measured quantity
  double bound = 0.0;
  bool passed = false;
  std::string detail;
};

/// project∘unproject over random views, pixels and depths. Worst of pixel and depth error.
inline CheckResult check_round_trip(int cases, std::uint64_t seed, int res = 256) {
  Rng rng(seed);
  const auto rig = make_rig(kRigRadius, res);
  std::uniform_int_distribution<int> view(0, kNumViews - 1);
  std::uniform_real_distribution<double> pix(0.0, res), z(0.5, 2.5);
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const auto& cam = rig[static_cast<std::size_t>(view(rng))];
    const Vec2 uv(pix(rng), pix(rng));
    const double depth = z(rng);
    const auto p = project(unproject(uv, depth, cam), cam);
    worst = std::max({worst, (p.uv - uv).norm(), std::abs(p.depth - depth)});
  }
  return {"geometry.round_trip", worst, 1e-5, worst < 1e-5, std::to_string(cases) + " cases"};
}

// Distance of q from the line through a and b.
inline double line_distance(const Vec2& a, const Vec2& b, const Vec2& q) {
  const Vec2 d = (b - a).normalized();
  const Vec2 e = q - a;
  return std::abs(d.x() * e.y() - d.y() * e.x());
}

/// Truncated samples lie on one 3D line, and their projections lie on the epipolar line
/// of the reference pixel in every other view.
inline std::pair<CheckResult, CheckResult> check_truncated_samples(int cases, std::uint64_t seed, int res = 256) {
  Rng rng(seed);
  const auto rig = make_rig(kRigRadius, res);
  std::uniform_int_distribution<int> view(0, kNumViews - 1);
  std::uniform_real_distribution<double> pix(0.0, res), z(0.8, 2.2);
  double collinear = 0.0, epipolar = 0.0;
  for (int i = 0; i < cases; ++i) {
    const auto ri = static_cast<std::size_t>(view(rng));
    std::vector<Camera> others;
    for (std::size_t j = 0; j < rig.size(); ++j)
      if (j != ri) others.push_back(rig[j]);
    const Vec2 uv(pix(rng), pix(rng));
    const auto s = truncated_samples(uv, z(rng), rig[ri], others, 7, 0.1, &rng);
    const Vec3 a = s.points.front(), dir = (s.points.back() - a).normalized();
    for (const auto& p : s.points) collinear = std::max(collinear, (p - a - (p - a).dot(dir) * dir).norm());
    // Epipolar line from two far-apart points of the reference ray.
    for (std::size_t j = 0; j < others.size(); ++j) {
      const Vec2 e0 = project(unproject(uv, 0.0, rig[ri]), others[j]).uv;
      const Vec2 e1 = project(unproject(uv, 3.0, rig[ri]), others[j]).uv;
      if ((e1 - e0).norm() < 1e-9) continue;  // opposite view: the ray projects to a point
      for (const auto& q : s.uv[j]) epipolar = std::max(epipolar, line_distance(e0, e1, q));
    }
  }
  return {{"geometry.truncated_collinear", collinear, 1e-6, collinear < 1e-6, std::to_string(cases) + " pixels"},
          {"geometry.samples_on_epipolar_line", epipolar, 1e-4, epipolar < 1e-4, "px"}};
}

struct AttentionInstance {
  MultiViewSet<double> mv;
  DepthMap depth;
  AttentionConfig cfg;
  AttentionWeights<double> w;
};

/// Random small instance: three rig views, reference first, random features and depths
/// (about one pixel in eight without depth).
inline AttentionInstance random_attention_instance(std::uint64_t seed, int res = 8, int d = 4, int n_p = 7) {
  Rng rng(seed);
  AttentionInstance inst;
  inst.cfg.d = d;
  inst.cfg.n_p = n_p;
  inst.cfg.r = 0.1;
  const auto rig = make_rig(kRigRadius, res);
  const std::array<ViewId, 3> views{ViewId::front, ViewId::front_right, ViewId::front_left};
  for (const auto v : views) {
    inst.mv.cameras.push_back(rig[static_cast<std::size_t>(v)]);
    inst.mv.features.push_back(
        {BasicTensor<double>::uniform({static_cast<std::size_t>(res), static_cast<std::size_t>(res),
                                       static_cast<std::size_t>(d)},
                                      -1.0, 1.0, rng),
         v, 1});
  }
  inst.depth = DepthMap(res, res);
  std::uniform_real_distribution<double> z(1.0, 2.0), u01(0.0, 1.0);
  for (std::size_t p = 0; p < inst.depth.values.size(); ++p) {
    inst.depth.values[p] = static_cast<float>(z(rng));
    inst.depth.valid[p] = u01(rng) < 0.875 ? 1 : 0;
  }
  inst.w = AttentionWeights<double>::init(inst.cfg, 2, rng);
  return inst;
}

inline double max_abs_diff(const BasicTensor<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b[i]));
  return worst;
}

/// Vectorized truncated attention against the per-pixel scalar oracle.
inline CheckResult check_attention_oracle(int instances, std::uint64_t seed) {
  NoGradScope<double> off;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const auto inst = random_attention_instance(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const auto fast = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
    const auto slow = oracle::truncated_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
    worst = std::max(worst, max_abs_diff(fast.features.data, slow));
  }
  return {"attention.vectorized_vs_oracle", worst, 1e-5, worst < 1e-5, std::to_string(instances) + " instances"};
}

/// With a constant depth z0, full attention over z_range [z0−r, z0+r] with N_p line
/// samples visits the same points as truncated attention.
inline CheckResult check_full_vs_truncated(int instances, std::uint64_t seed) {
  NoGradScope<double> off;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    auto inst = random_attention_instance(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const double z0 = inst.depth.values[0];
    inst.depth = DepthMap::constant(inst.depth.width, inst.depth.height, static_cast<float>(z0));
    const double zc = inst.depth.values[0];
    const auto tr = truncated_epipolar_attention(inst.mv, ViewId::front, inst.depth, inst.cfg, inst.w);
    const auto fu = full_epipolar_attention(inst.mv, ViewId::front, ZRange{zc - inst.cfg.r, zc + inst.cfg.r},
                                            inst.cfg.n_p, inst.cfg, inst.w);
    const auto& a = tr.features.data;
    const auto& b = fu.features.data;
    for (std::size_t k = 0; k < a.numel(); ++k) worst = std::max(worst, std::abs(a.data()[k] - b.data()[k]));
  }
  return {"attention.full_equals_truncated_collapsed", worst, 1e-5, worst < 1e-5,
          std::to_string(instances) + " instances"};
}

/// RMS of 85×85 block means of a zero-mean noise field over the top-left 255×255 pixels.
inline double block_mean_rms(const DepthMap& noisy, const DepthMap& clean, int block = 85) {
  const int nb = noisy.width / block;
  double sq = 0.0;
  for (int by = 0; by < nb; ++by)
    for (int bx = 0; bx < nb; ++bx) {
      double s = 0.0;
      for (int y = by * block; y < (by + 1) * block; ++y)
        for (int x = bx * block; x < (bx + 1) * block; ++x)
          s += static_cast<double>(noisy.value(x, y)) - clean.value(x, y);
      const double m = s / (static_cast<double>(block) * block);
      sq += m * m;
    }
  return std::sqrt(sq / (nb * nb));
}

/// Structured noise keeps its coarsest component after 3×3 block averaging; per-pixel
/// noise of matched variance averages away. Both measured relative to s₁/√3.
inline std::pair<CheckResult, CheckResult> check_noise_structure(int seeds, std::uint64_t seed) {
  const int res = 256;
  const auto flat = DepthMap::constant(res, res, 1.5f);
  double sq_s = 0.0, sq_i = 0.0;
  double s1 = 0.0;
  for (int i = 0; i < seeds; ++i) {
    const auto spec = NoiseSpec::standard(derive_seed(seed, static_cast<std::uint64_t>(i)));
    s1 = spec.terms.front().scale;
    const double a = block_mean_rms(structured_noise(flat, spec), flat);
    const double b = block_mean_rms(independent_noise(flat, spec.matched_independent_scale(), spec.seed ^ 0x5a5a), flat);
    sq_s += a * a;
    sq_i += b * b;
  }
  const double ref = s1 / std::sqrt(3.0);
  const double rs = std::sqrt(sq_s / seeds) / ref, ri = std::sqrt(sq_i / seeds) / ref;
  return {{"depthaug.structured_survives_pooling", rs, 0.4, rs >= 0.4, "block-mean rms / (s1/sqrt3)"},
          {"depthaug.independent_cancels", ri, 0.05, ri < 0.05, "block-mean rms / (s1/sqrt3)"}};
}

/// Cost ratios: full/truncated = n_line_samples/N_p at every level, and with one key per
/// pixel of line length full attention at 256 costs 8× that at 128.
inline std::pair<CheckResult, CheckResult> check_cost_ratios(int n_line_samples = 16, int n_p = 7) {
  CostParams p;
  p.n_p = {n_p};
  p.n_line_samples = n_line_samples;
  const auto tr = cost_model(AttentionMode::truncated, p);
  const auto fu = cost_model(AttentionMode::full, p);
  double worst = 0.0;
  const double want = static_cast<double>(n_line_samples) / n_p;
  for (std::size_t i = 0; i < tr.levels.size(); ++i) {
    worst = std::max(worst, std::abs(fu.levels[i].kv_floats / tr.levels[i].kv_floats - want));
  }
  p.line_samples_match_resolution = true;
  const auto lin = cost_model(AttentionMode::full, p);
  double r128 = 0, r256 = 0;
  for (const auto& l : lin.levels) {
    if (l.resolution == 128) r128 = l.kv_floats;
    if (l.resolution == 256) r256 = l.kv_floats;
  }
  const double ratio = r256 / r128;
  return {{"cost.full_over_truncated", worst, 0.0, worst == 0.0, "deviation from n_line_samples/N_p"},
          {"cost.full_256_over_128", ratio, 8.0, ratio == 8.0, "line samples = resolution"}};
}

/// psnr against a direct formula, and ssim(a, a) == 1.
inline std::pair<CheckResult, CheckResult> check_image_metrics(int pairs, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double psnr_err = 0.0, ssim_err = 0.0;
  for (int i = 0; i < pairs; ++i) {
    Image a(24, 24, 3), b(24, 24, 3);
    for (auto& v : a.data) v = static_cast<float>(u01(rng));
    for (auto& v : b.data) v = static_cast<float>(u01(rng));
    double s = 0.0;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
      const double e = static_cast<double>(a.data[k]) - static_cast<double>(b.data[k]);
      s += e * e;
    }
    const double want = -10.0 * std::log10(s / static_cast<double>(a.data.size()));
    psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - want));
    ssim_err = std::max(ssim_err, std::abs(ssim(a, a) - 1.0));
  }
  return {{"metrics.psnr_formula", psnr_err, 1e-9, psnr_err < 1e-9, std::to_string(pairs) + " pairs"},
          {"metrics.ssim_identity", ssim_err, 0.0, ssim_err == 0.0, "|ssim(a,a) - 1|"}};
}

/// Image shifted down by `dy` pixels; vacated rows repeat the top row.
inline Image shift_rows(const Image& img, int dy) {
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x, std::max(0, y - dy), c);
  return out;
}

struct MatcherStudy {
  long gt_pairs = 0;           // stride-grid GT correspondences of each view with itself
  long aligned = 0;            // matcher count on the identical aligned renders
  std::vector<long> shifted;   // counts at each misalignment, same order as the shifts
  long adjacent_gt = 0;        // GT correspondences between neighbouring rig views
  long adjacent_matched = 0;   // matcher count between neighbouring rig views
};

/// Matcher behaviour on rendered scenes: identical aligned renders against the GT oracle,
/// vertical misalignment (across the horizontal epipolar lines), and adjacent rig views.
inline MatcherStudy study_matcher(int n_scenes, std::uint64_t seed, int res, const MatcherConfig& m,
                                  const std::vector<int>& shifts) {
  MatcherStudy st;
  st.shifted.assign(shifts.size(), 0);
  for (const auto& rec : make_dataset(n_scenes, seed, res)) {
    for (std::size_t v = 0; v < rec.views.size(); ++v) {
      const auto& vi = rec.views[v];
      st.gt_pairs += static_cast<long>(gt_correspondences(vi, vi, m.stride).size());
      st.aligned += correspondence_count(vi.color, vi.camera, vi.color, vi.camera, m, &vi.depth);
      for (std::size_t s = 0; s < shifts.size(); ++s) {
        st.shifted[s] += correspondence_count(vi.color, vi.camera, shift_rows(vi.color, shifts[s]), vi.camera, m,
                                              &vi.depth);
      }
      const auto& vj = rec.views[(v + 1) % rec.views.size()];
      st.adjacent_gt += static_cast<long>(gt_correspondences(vi, vj, m.stride).size());
      st.adjacent_matched += correspondence_count(vi.color, vi.camera, vj.color, vj.camera, m, &vi.depth);
    }
  }
  return st;
}

}  // namespace mvalign::harness
