#pragma once

// Orthographic six-view rig, projection, epipolar segments, depth-truncated
// ray sampling and Plücker codes.
//
// Conventions:
//   * world z is up; the front camera sits at (0, -radius, 0) looking along +y.
//   * camera frame: x = image right, y = image down, z = viewing direction.
//     Depth is the camera-frame z coordinate.
//   * image coordinates are continuous, (0,0) is the top-left image corner and
//     (W,H) the bottom-right one; integer pixel (u,v) has its center at
//     (u + 0.5, v + 0.5).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvalign/errors.hpp"
#include "mvalign/rng.hpp"

namespace mvalign {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

enum class ViewId : int { front = 0, front_right = 1, right = 2, back = 3, left = 4, front_left = 5 };

inline constexpr std::array<ViewId, 6> kRigOrder{ViewId::front, ViewId::front_right, ViewId::right,
                                                 ViewId::back,  ViewId::left,        ViewId::front_left};
inline constexpr int kNumViews = 6;
inline constexpr double kRigRadius = 1.5;
inline constexpr double kSceneBound = 1.0;

inline std::string_view view_name(ViewId v) {
  static constexpr std::array<std::string_view, 6> names{"front", "front_right", "right",
                                                         "back",  "left",        "front_left"};
  return names[static_cast<int>(v)];
}

inline std::optional<ViewId> parse_view(std::string_view name) {
  for (const auto v : kRigOrder)
    if (view_name(v) == name) return v;
  return std::nullopt;
}

/// Azimuth in degrees; front_left sits at -45°.
inline double view_azimuth_deg(ViewId v) {
  static constexpr std::array<double, 6> az{0.0, 45.0, 90.0, 180.0, 270.0, 315.0};
  return az[static_cast<int>(v)];
}

struct Camera {
  ViewId view = ViewId::front;
  Mat3 R = Mat3::Identity();  // world → camera
  Vec3 t = Vec3::Zero();      // world → camera
  double ortho_scale = 1.0;   // world units per image half-extent
  int width = 1;
  int height = 1;

  Vec3 forward() const { return R.row(2).transpose(); }

  /// Camera-to-world rotation and translation, (Rᵀ, −Rᵀt).
  Mat3 c2w_rotation() const { return R.transpose(); }
  Vec3 c2w_translation() const { return -R.transpose() * t; }

  /// World units spanned by one pixel.
  double pixel_size() const { return 2.0 * ortho_scale / width; }

  Camera with_resolution(int resolution) const {
    Camera c = *this;
    c.width = c.height = resolution;
    return c;
  }

  void validate() const {
    if (!(ortho_scale > 0.0)) throw DomainError("camera ortho_scale must be positive");
    if (width <= 0 || width != height) throw DomainError("camera image must be square and non-empty");
    if (!(R.transpose() * R).isIdentity(1e-6) || std::abs(R.determinant() - 1.0) > 1e-6) {
      throw DomainError("camera rotation is not a proper rotation");
    }
  }
};

/// Camera on the rig circle at the given azimuth (degrees), elevation 0, looking at the origin.
inline Camera make_camera(ViewId view, double azimuth_deg, double ortho_scale, int resolution,
                          double radius = kRigRadius) {
  if (resolution <= 0) throw DomainError("resolution must be positive");
  const double a = azimuth_deg * std::numbers::pi / 180.0;
  const Vec3 fwd(std::sin(a), std::cos(a), 0.0);
  const Vec3 up(0.0, 0.0, 1.0);
  const Vec3 right = fwd.cross(up).normalized();
  const Vec3 down = fwd.cross(right);
  Camera cam;
  cam.view = view;
  cam.R.row(0) = right.transpose();
  cam.R.row(1) = down.transpose();
  cam.R.row(2) = fwd.transpose();
  const Vec3 position = -radius * fwd;
  cam.t = -cam.R * position;
  cam.ortho_scale = ortho_scale;
  cam.width = cam.height = resolution;
  cam.validate();
  return cam;
}

/// The six fixed views in rig order.
inline std::vector<Camera> make_rig(double ortho_scale, int resolution, double radius = kRigRadius) {
  std::vector<Camera> rig;
  rig.reserve(kNumViews);
  for (const auto v : kRigOrder) rig.push_back(make_camera(v, view_azimuth_deg(v), ortho_scale, resolution, radius));
  return rig;
}

inline Vec2 pixel_center(int u, int v) { return {u + 0.5, v + 0.5}; }

struct Projection {
  Vec2 uv;
  double depth = 0.0;
  bool in_bounds = false;
};

inline bool inside_image(const Vec2& uv, const Camera& cam) {
  return uv.x() >= 0.0 && uv.x() <= cam.width && uv.y() >= 0.0 && uv.y() <= cam.height;
}

/// Orthographic projection. Out-of-image results are flagged, never clamped.
inline Projection project(const Vec3& world, const Camera& cam) {
  const Vec3 pc = cam.R * world + cam.t;
  Projection p;
  p.uv = Vec2((pc.x() / cam.ortho_scale + 1.0) * 0.5 * cam.width,
              (pc.y() / cam.ortho_scale + 1.0) * 0.5 * cam.height);
  p.depth = pc.z();
  p.in_bounds = inside_image(p.uv, cam);
  return p;
}

/// World point at `depth` along the orthographic ray through image point uv.
inline Vec3 unproject(const Vec2& uv, double depth, const Camera& cam) {
  if (!std::isfinite(depth)) throw DomainError("unproject: depth is not finite");
  if (!(uv.x() >= 0.0 && uv.x() < cam.width && uv.y() >= 0.0 && uv.y() < cam.height)) {
    throw DomainError("unproject: image point outside the image");
  }
  const Vec3 pc((2.0 * uv.x() / cam.width - 1.0) * cam.ortho_scale,
                (2.0 * uv.y() / cam.height - 1.0) * cam.ortho_scale, depth);
  return cam.R.transpose() * (pc - cam.t);
}

struct Ray {
  Vec3 origin;
  Vec3 dir;
};

/// Viewing ray through uv, with its origin on the camera plane (depth 0).
inline Ray pixel_ray(const Vec2& uv, const Camera& cam) { return {unproject(uv, 0.0, cam), cam.forward()}; }

/// Plücker code (direction, origin × direction).
inline Vec6 plucker(const Ray& ray) {
  const double n = ray.dir.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("plucker: zero or non-finite direction");
  if (std::abs(n - 1.0) > 1e-6) throw DomainError("plucker: direction is not unit length");
  Vec6 out;
  out.head<3>() = ray.dir;
  out.tail<3>() = ray.origin.cross(ray.dir);
  return out;
}

struct ZRange {
  double near = kRigRadius - kSceneBound;
  double far = kRigRadius + kSceneBound;
};

struct Segment {
  Vec2 start = Vec2::Zero();
  Vec2 end = Vec2::Zero();
  bool empty = true;

  double length() const { return empty ? 0.0 : (end - start).norm(); }
};

namespace detail {

// Liang–Barsky clip of p0→p1 against [0,W]×[0,H].
inline Segment clip_to_image(const Vec2& p0, const Vec2& p1, double W, double H) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2 d = p1 - p0;
  const std::array<double, 4> p{-d.x(), d.x(), -d.y(), d.y()};
  const std::array<double, 4> q{p0.x(), W - p0.x(), p0.y(), H - p0.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return {};
    } else {
      const double r = q[i] / p[i];
      if (p[i] < 0.0) {
        t0 = std::max(t0, r);
      } else {
        t1 = std::min(t1, r);
      }
      if (t0 > t1) return {};
    }
  }
  Segment s;
  s.start = p0 + t0 * d;
  s.end = p0 + t1 * d;
  s.start = s.start.cwiseMax(Vec2(0, 0)).cwiseMin(Vec2(W, H));
  s.end = s.end.cwiseMax(Vec2(0, 0)).cwiseMin(Vec2(W, H));
  s.empty = false;
  return s;
}

}  // namespace detail

/// Projection into cam_j of the reference ray's [near, far] depth interval, clipped to the image.
inline Segment epipolar_segment(const Vec2& uv, const Camera& cam_ref, const Camera& cam_j, const ZRange& z) {
  const Vec3 a = unproject(uv, z.near, cam_ref);
  const Vec3 b = unproject(uv, z.far, cam_ref);
  return detail::clip_to_image(project(a, cam_j).uv, project(b, cam_j).uv, cam_j.width, cam_j.height);
}

/// Offsets in [-r, r], one per stratum: midpoints when rng is null, one uniform draw per stratum otherwise.
inline std::vector<double> stratified_offsets(int n_p, double r, Rng* rng = nullptr) {
  if (n_p < 1) throw DomainError("stratified_offsets: need at least one sample");
  if (!(r > 0.0)) throw DomainError("stratified_offsets: range must be positive");
  const double width = 2.0 * r / n_p;
  std::vector<double> t(static_cast<std::size_t>(n_p));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int k = 0; k < n_p; ++k) {
    const double frac = rng != nullptr ? u01(*rng) : 0.5;
    t[static_cast<std::size_t>(k)] = -r + (k + frac) * width;
  }
  return t;
}

struct TruncatedSamples {
  std::vector<Vec3> points;
  std::vector<double> t_offsets;
  std::vector<std::vector<Vec2>> uv;         // [view][sample]
  std::vector<std::vector<bool>> in_bounds;  // [view][sample]
};

/// Stratified samples within ±r of the depth-lifted point along the reference ray,
/// projected into every camera in `others`.
inline TruncatedSamples truncated_samples(const Vec2& uv, double depth, const Camera& cam_ref,
                                          std::span<const Camera> others, int n_p, double r, Rng* jitter = nullptr) {
  TruncatedSamples s;
  const Vec3 center = unproject(uv, depth, cam_ref);
  const Vec3 dir = cam_ref.forward();
  s.t_offsets = stratified_offsets(n_p, r, jitter);
  s.points.reserve(s.t_offsets.size());
  for (const double t : s.t_offsets) s.points.push_back(center + t * dir);
  s.uv.resize(others.size());
  s.in_bounds.resize(others.size());
  for (std::size_t j = 0; j < others.size(); ++j) {
    for (const auto& p : s.points) {
      const auto pr = project(p, others[j]);
      s.uv[j].push_back(pr.uv);
      s.in_bounds[j].push_back(pr.in_bounds);
    }
  }
  return s;
}

}  // namespace mvalign
