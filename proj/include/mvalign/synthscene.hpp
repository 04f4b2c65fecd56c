#pragma once

// Procedural ground truth: albedo-only orthographic ray casting of textured
// spheres and boxes, plus exact cross-view correspondences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <variant>
#include <vector>

#include "mvalign/geometry.hpp"
#include "mvalign/image.hpp"
#include "mvalign/rng.hpp"

namespace mvalign {

/// Solid-texture albedo defined on world coordinates, so every view sees the same colour at a surface point.
struct Texture {
  enum class Kind { checker, stripes };
  Kind kind = Kind::stripes;
  Vec3 color_a{0.2, 0.2, 0.2};
  Vec3 color_b{0.8, 0.8, 0.8};
  Vec3 axis{1.0, 0.0, 0.0};  // stripe normal (unit)
  double period = 0.25;      // world units
  double phase = 0.0;

  Vec3 albedo(const Vec3& p) const {
    const double w = 2.0 * std::numbers::pi / period;
    double s = 0.0;
    if (kind == Kind::stripes) {
      s = 0.5 + 0.5 * std::sin(w * axis.dot(p) + phase);
    } else {
      const double c = std::sin(w * p.x() + phase) * std::sin(w * p.y()) * std::sin(w * p.z() + 0.5 * phase);
      s = 0.5 + 0.5 * std::clamp(3.0 * c, -1.0, 1.0);
    }
    return color_a + s * (color_b - color_a);
  }
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Texture texture;
};

struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents{0.5, 0.5, 0.5};
  Texture texture;
};

using Primitive = std::variant<Sphere, Box>;

struct Scene {
  std::vector<Primitive> primitives;
  Vec3 background{1.0, 1.0, 1.0};
};

struct RenderedView {
  Image color;
  DepthMap depth;
  Camera camera;
};

namespace detail {

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  const Texture* texture = nullptr;
};

inline void intersect(const Sphere& s, const Ray& ray, Hit& hit) {
  const Vec3 oc = ray.origin - s.center;
  const double b = oc.dot(ray.dir);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= 0.0) t = -b + sq;
  if (t > 0.0 && t < hit.t) hit = {t, &s.texture};
}

inline void intersect(const Box& box, const Ray& ray, Hit& hit) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = box.center[a] - box.half_extents[a];
    const double hi = box.center[a] + box.half_extents[a];
    if (ray.dir[a] == 0.0) {
      if (ray.origin[a] < lo || ray.origin[a] > hi) return;
      continue;
    }
    double ta = (lo - ray.origin[a]) / ray.dir[a];
    double tb = (hi - ray.origin[a]) / ray.dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return;
  }
  const double t = t0 > 0.0 ? t0 : t1;
  if (t > 0.0 && t < hit.t) hit = {t, &box.texture};
}

}  // namespace detail

/// Albedo-only orthographic render. Depth is valid exactly where a primitive is hit.
inline RenderedView render(const Scene& scene, const Camera& rig_cam, int resolution) {
  const Camera cam = rig_cam.with_resolution(resolution);
  RenderedView view{Image(resolution, resolution, 3), DepthMap(resolution, resolution), cam};
  const Vec3 dir = cam.forward();
  for (int v = 0; v < resolution; ++v) {
    for (int u = 0; u < resolution; ++u) {
      const Ray ray{unproject(pixel_center(u, v), 0.0, cam), dir};
      detail::Hit hit;
      for (const auto& prim : scene.primitives) std::visit([&](const auto& p) { detail::intersect(p, ray, hit); }, prim);
      Vec3 c = scene.background;
      if (hit.texture != nullptr) {
        c = hit.texture->albedo(ray.origin + hit.t * dir);
        view.depth.values[view.depth.index(u, v)] = static_cast<float>(hit.t);
        view.depth.valid[view.depth.index(u, v)] = 1;
      }
      for (int ch = 0; ch < 3; ++ch) view.color.at(u, v, ch) = static_cast<float>(c[ch]);
    }
  }
  return view;
}

struct PixelPair {
  int ui, vi;
  int uj, vj;
  bool operator==(const PixelPair&) const = default;
};

inline constexpr double kCorrReprojTolPx = 0.5;
inline constexpr double kCorrDepthTol = 1e-3;

/// Depth at a continuous image point by bilinear interpolation of the surrounding pixel
/// centers; nullopt when any center with non-negligible weight is invalid. Weights below
/// 1e-9 are round-off from points sitting on a pixel center and are dropped.
inline std::optional<double> interpolate_depth(const DepthMap& d, const Vec2& uv) {
  const double x = uv.x() - 0.5, y = uv.y() - 0.5;
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  if (x0 < 0 || y0 < 0 || x0 + 1 >= d.width || y0 + 1 >= d.height) {
    // Edge pixels: fall back to the containing pixel.
    const int px = static_cast<int>(std::floor(uv.x())), py = static_cast<int>(std::floor(uv.y()));
    if (px < 0 || py < 0 || px >= d.width || py >= d.height || !d.is_valid(px, py)) return std::nullopt;
    return d.value(px, py);
  }
  const double fx = x - x0, fy = y - y0;
  const std::array<double, 4> wt{(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const std::array<int, 4> dx{0, 1, 0, 1}, dy{0, 0, 1, 1};
  double z = 0.0, wsum = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (wt[k] < 1e-9) continue;
    if (!d.is_valid(x0 + dx[k], y0 + dy[k])) return std::nullopt;
    z += wt[k] * d.value(x0 + dx[k], y0 + dy[k]);
    wsum += wt[k];
  }
  return z / wsum;
}

/// Exact pixel correspondences i→j: lift each valid pixel of i with its depth, project into j,
/// and keep it when j's surface agrees (depth residual < 1e-3) and lifting back from j lands
/// within 0.5 px of the original pixel center. Occluded pixels fail the depth test.
inline std::vector<PixelPair> gt_correspondences(const RenderedView& vi, const RenderedView& vj, int stride = 1,
                                                 double reproj_tol = kCorrReprojTolPx,
                                                 double depth_tol = kCorrDepthTol) {
  std::vector<PixelPair> pairs;
  const auto& di = vi.depth;
  for (int v = 0; v < di.height; v += stride) {
    for (int u = 0; u < di.width; u += stride) {
      if (!di.is_valid(u, v)) continue;
      const Vec2 ci = pixel_center(u, v);
      const Vec3 X = unproject(ci, di.value(u, v), vi.camera);
      const auto pj = project(X, vj.camera);
      if (!(pj.uv.x() >= 0.0 && pj.uv.x() < vj.camera.width && pj.uv.y() >= 0.0 && pj.uv.y() < vj.camera.height)) {
        continue;
      }
      const int uj = static_cast<int>(std::floor(pj.uv.x()));
      const int vjj = static_cast<int>(std::floor(pj.uv.y()));
      if (!vj.depth.is_valid(uj, vjj)) continue;
      const auto dj = interpolate_depth(vj.depth, pj.uv);
      if (!dj || std::abs(*dj - pj.depth) >= depth_tol) continue;
      const Vec3 Xj = unproject(pj.uv, *dj, vj.camera);
      const auto back = project(Xj, vi.camera);
      if ((back.uv - ci).norm() >= reproj_tol) continue;
      pairs.push_back({u, v, uj, vjj});
    }
  }
  return pairs;
}

struct SceneRecord {
  std::uint64_t seed = 0;
  Scene scene;
  std::vector<RenderedView> views;  // rig order
};

namespace detail {

inline Texture random_texture(Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Texture t;
  t.kind = u01(rng) < 0.5 ? Texture::Kind::checker : Texture::Kind::stripes;
  auto color = [&] { return Vec3(0.1 + 0.8 * u01(rng), 0.1 + 0.8 * u01(rng), 0.1 + 0.8 * u01(rng)); };
  t.color_a = color();
  do {
    t.color_b = color();
  } while ((t.color_b - t.color_a).norm() < 0.4);
  Vec3 axis(u01(rng) - 0.5, u01(rng) - 0.5, u01(rng) - 0.5);
  if (axis.norm() < 1e-3) axis = Vec3(1, 0, 0);
  t.axis = axis.normalized();
  t.period = 0.16 + 0.16 * u01(rng);
  t.phase = 2.0 * std::numbers::pi * u01(rng);
  return t;
}

inline Scene random_scene(Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 4);
  Scene scene;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const bool sphere = u01(rng) < 0.5;
    const double spread = i == 0 ? 0.15 : 0.5;
    Vec3 c(spread * (2 * u01(rng) - 1), spread * (2 * u01(rng) - 1), spread * (2 * u01(rng) - 1));
    if (sphere) {
      double r = i == 0 ? 0.45 + 0.25 * u01(rng) : 0.2 + 0.25 * u01(rng);
      r = std::min(r, kSceneBound - c.norm());
      scene.primitives.push_back(Sphere{c, r, random_texture(rng)});
    } else {
      Vec3 h(0.2 + 0.3 * u01(rng), 0.2 + 0.3 * u01(rng), 0.2 + 0.3 * u01(rng));
      if (i == 0) h = h.cwiseMax(Vec3(0.35, 0.35, 0.35));
      const double excess = c.norm() + h.norm() - kSceneBound;
      if (excess > 0.0) h *= std::max(0.1, (h.norm() - excess) / h.norm());
      scene.primitives.push_back(Box{c, h, random_texture(rng)});
    }
  }
  return scene;
}

inline bool views_usable(const std::vector<RenderedView>& views) {
  for (const auto& v : views) {
    if (v.depth.valid_count() == 0) return false;
    double mean = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < v.color.height; ++y)
      for (int x = 0; x < v.color.width; ++x) {
        if (!v.depth.is_valid(x, y)) continue;
        for (int c = 0; c < 3; ++c) {
          const double val = v.color.at(x, y, c);
          mean += val;
          sq += val * val;
          ++n;
        }
      }
    mean /= static_cast<double>(n);
    if (sq / static_cast<double>(n) - mean * mean <= 1e-6) return false;
  }
  return true;
}

}  // namespace detail

inline std::vector<RenderedView> render_rig(const Scene& scene, const std::vector<Camera>& rig, int resolution) {
  std::vector<RenderedView> views;
  views.reserve(rig.size());
  for (const auto& cam : rig) views.push_back(render(scene, cam, resolution));
  return views;
}

/// Seeded random scenes rendered from the full rig. Scenes are re-drawn until every
/// view has visible, non-constant texture.
inline std::vector<SceneRecord> make_dataset(int n_scenes, std::uint64_t seed, int resolution,
                                             double ortho_scale = kRigRadius) {
  if (n_scenes < 1) throw DomainError("make_dataset: need at least one scene");
  const auto rig = make_rig(ortho_scale, resolution);
  std::vector<SceneRecord> out;
  out.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i) * 1000 + attempt);
      Rng rng(s);
      SceneRecord rec{s, detail::random_scene(rng), {}};
      rec.views = render_rig(rec.scene, rig, resolution);
      if (detail::views_usable(rec.views)) {
        out.push_back(std::move(rec));
        break;
      }
    }
  }
  return out;
}

}  // namespace mvalign
