#include <gtest/gtest.h>

#include <cmath>

#include "mvalign/synthscene.hpp"

using namespace mvalign;

namespace {

Scene unit_sphere_scene(double radius = 1.0) {
  Scene s;
  s.primitives.push_back(Sphere{Vec3::Zero(), radius, Texture{}});
  return s;
}

const Camera& front_cam(const std::vector<Camera>& rig) { return rig[static_cast<std::size_t>(ViewId::front)]; }

}  // namespace

TEST(Render, EmptySceneIsBackgroundWithNoDepth) {
  const auto rig = make_rig(kRigRadius, 32);
  const auto v = render(Scene{}, front_cam(rig), 32);
  EXPECT_EQ(v.depth.valid_count(), 0u);
  for (float c : v.color.data) EXPECT_FLOAT_EQ(c, 1.0f);
}

TEST(Render, SphereCoversADiscOfTheProjectedRadius) {
  const int W = 96;
  const auto v = render(unit_sphere_scene(1.0), front_cam(make_rig(kRigRadius, W)), W);
  // Radius 1 under half-extent 1.5 is a third of the image width.
  const double expected = W / 3.0;
  for (int y = 0; y < W; ++y)
    for (int x = 0; x < W; ++x) {
      const double r = std::hypot(x + 0.5 - W / 2.0, y + 0.5 - W / 2.0);
      if (r < expected - 1) EXPECT_TRUE(v.depth.is_valid(x, y)) << x << "," << y;
      if (r > expected + 1) EXPECT_FALSE(v.depth.is_valid(x, y)) << x << "," << y;
    }
}

TEST(Render, CenterDepthIsDistanceToTheNearSurface) {
  const int W = 64;
  const auto v = render(unit_sphere_scene(1.0), front_cam(make_rig(kRigRadius, W)), W);
  // Pixel centers straddle the optical axis by half a pixel, so the surface is slightly further.
  const double off = 0.5 * (2 * kRigRadius / W);
  const double expected = kRigRadius - std::sqrt(1.0 - 2 * off * off);
  EXPECT_NEAR(v.depth.value(W / 2, W / 2), expected, 1e-4);
  EXPECT_NEAR(v.depth.value(W / 2, W / 2), 0.5, 1e-3);
}

TEST(Render, ColorMatchesTextureAtTheHitPoint) {
  const int W = 32;
  Scene s = unit_sphere_scene(0.8);
  auto& tex = std::get<Sphere>(s.primitives[0]).texture;
  tex.color_a = Vec3(0.1, 0.2, 0.3);
  tex.color_b = Vec3(0.9, 0.7, 0.5);
  const Camera cam = front_cam(make_rig(kRigRadius, W));
  const auto v = render(s, cam, W);
  for (int y = 0; y < W; y += 3)
    for (int x = 0; x < W; x += 3) {
      if (!v.depth.is_valid(x, y)) continue;
      const Vec3 p = unproject(pixel_center(x, y), v.depth.value(x, y), cam);
      const Vec3 c = tex.albedo(p);
      for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(v.color.at(x, y, ch), c[ch], 1e-6);
    }
}

TEST(Render, BoxFaceIsPlanarInDepth) {
  Scene s;
  s.primitives.push_back(Box{Vec3::Zero(), Vec3(0.5, 0.5, 0.5), Texture{}});
  const auto v = render(s, front_cam(make_rig(kRigRadius, 64)), 64);
  // The front camera sees the y = -0.5 face head on.
  EXPECT_NEAR(v.depth.value(32, 32), kRigRadius - 0.5, 1e-6);
  EXPECT_NEAR(v.depth.value(25, 40), kRigRadius - 0.5, 1e-6);
}

TEST(GtCorrespondences, SelfPairsAreEveryValidPixel) {
  const auto rig = make_rig(kRigRadius, 48);
  const auto v = render(unit_sphere_scene(0.9), front_cam(rig), 48);
  const auto pairs = gt_correspondences(v, v);
  EXPECT_EQ(pairs.size(), v.depth.valid_count());
  for (const auto& p : pairs) {
    EXPECT_EQ(p.ui, p.uj);
    EXPECT_EQ(p.vi, p.vj);
  }
}

TEST(GtCorrespondences, OpposingViewsOfASphereShareNothing) {
  const auto rig = make_rig(kRigRadius, 48);
  const Scene s = unit_sphere_scene(0.9);
  const auto f = render(s, rig[static_cast<std::size_t>(ViewId::front)], 48);
  const auto b = render(s, rig[static_cast<std::size_t>(ViewId::back)], 48);
  EXPECT_TRUE(gt_correspondences(f, b).empty());
}

TEST(GtCorrespondences, PairsLandOnTheProjectedPixel) {
  const auto ds = make_dataset(2, 21, 64);
  for (const auto& rec : ds) {
    const auto& a = rec.views[0];
    const auto& b = rec.views[1];
    const auto ab = gt_correspondences(a, b);
    ASSERT_FALSE(ab.empty());
    // A strided query keeps exactly the pairs whose source pixel lies on the stride grid.
    std::size_t on_grid = 0;
    for (const auto& p : ab) on_grid += p.ui % 4 == 0 && p.vi % 4 == 0;
    EXPECT_EQ(gt_correspondences(a, b, 4).size(), on_grid);
    for (const auto& p : ab) {
      const Vec3 X = unproject(pixel_center(p.ui, p.vi), a.depth.value(p.ui, p.vi), a.camera);
      const auto pj = project(X, b.camera);
      EXPECT_EQ(static_cast<int>(std::floor(pj.uv.x())), p.uj);
      EXPECT_EQ(static_cast<int>(std::floor(pj.uv.y())), p.vj);
      EXPECT_NEAR(pj.depth, b.depth.value(p.uj, p.vj), 0.05);
    }
  }
}

TEST(Dataset, SameSeedSameScenes) {
  const auto a = make_dataset(2, 5, 32);
  const auto b = make_dataset(2, 5, 32);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seed, b[i].seed);
    for (std::size_t v = 0; v < a[i].views.size(); ++v) {
      EXPECT_EQ(a[i].views[v].color.data, b[i].views[v].color.data);
      EXPECT_EQ(a[i].views[v].depth.values, b[i].views[v].depth.values);
    }
  }
  EXPECT_NE(make_dataset(1, 6, 32)[0].views[0].color.data, a[0].views[0].color.data);
}

TEST(Dataset, EveryViewIsUsable) {
  for (const auto& rec : make_dataset(6, 77, 32)) {
    ASSERT_EQ(rec.views.size(), static_cast<std::size_t>(kNumViews));
    EXPECT_TRUE(detail::views_usable(rec.views));
    for (const auto& p : rec.scene.primitives) {
      std::visit(
          [](const auto& prim) {
            using P = std::decay_t<decltype(prim)>;
            if constexpr (std::is_same_v<P, Sphere>) EXPECT_LE(prim.center.norm() + prim.radius, kSceneBound + 1e-9);
          },
          p);
    }
  }
  EXPECT_THROW(make_dataset(0, 1, 32), DomainError);
}

TEST(Dataset, HalfResolutionAgreesWithPooledFullResolution) {
  const auto hi = make_dataset(1, 3, 128)[0].views;
  const auto lo = make_dataset(1, 3, 64)[0].views;
  for (std::size_t v = 0; v < hi.size(); ++v) {
    double err = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) {
          double m = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) m += hi[v].color.at(2 * x + dx, 2 * y + dy, c);
          err += std::abs(m / 4 - lo[v].color.at(x, y, c));
        }
    EXPECT_LT(err / (64 * 64 * 3), 0.1) << "view " << v;
  }
}
