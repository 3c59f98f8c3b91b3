#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "ms/perception.hpp"

namespace {

using namespace ms;
using namespace ms::perception;

world::ObjectInstance box(int id, double side, double h, double x, double y, double z = 0.0) {
  const double s = side / 2;
  world::ObjectInstance o;
  o.id = id;
  o.shape = {{{-s, -s}, {s, -s}, {s, s}, {-s, s}}, h};
  o.pose = {x, y, 0.0};
  o.z_base = z;
  return o;
}

world::WorldState scene(std::vector<world::ObjectInstance> objs) {
  world::WorldState w;
  w.objects = std::move(objs);
  return w;
}

TEST(Render, EmptyBinIsFlat) {
  const auto w = scene({});
  const auto cam = CameraModel::for_bin(w.config);
  const auto r = render(w, cam);
  EXPECT_EQ(r.depth.rows(), kImageRows);
  EXPECT_EQ(r.depth.cols(), kImageCols);
  const auto rect = bin_pixels(w.config, cam);
  for (int v = rect.v0; v < rect.v1; ++v)
    for (int u = rect.u0; u < rect.u1; ++u) {
      EXPECT_EQ(r.depth(v, u), cam.camera_height);
      EXPECT_EQ(r.bin_bottom(v, u), 1);
    }
  for (const auto& m : r.masks) EXPECT_EQ(visible_area(m), 0);
  EXPECT_EQ(visible_area(r.bin_bottom), static_cast<std::int64_t>(rect.u1 - rect.u0) * (rect.v1 - rect.v0));
}

TEST(Render, BoxDepthIsCameraHeightMinusHeight) {
  const auto w = scene({box(1, 0.05, 0.04, 0.2, 0.2)});
  const auto cam = CameraModel::for_bin(w.config);
  const auto r = render(w, cam);
  const auto* m = r.mask_of(1);
  ASSERT_NE(m, nullptr);
  EXPECT_GT(visible_area(*m), 0);
  for (int v = 0; v < cam.rows; ++v)
    for (int u = 0; u < cam.cols; ++u) {
      if (m->mask(v, u)) {
        EXPECT_NEAR(r.depth(v, u), cam.camera_height - 0.04, 1e-12);
        EXPECT_EQ(r.labels(v, u), 1);
      }
    }
  // mask area matches the footprint area in pixels within a boundary row
  const double px = 0.05 / cam.mpp;
  EXPECT_NEAR(static_cast<double>(visible_area(*m)), px * px, 4 * px + 4);
}

TEST(Render, CoveredObjectIsInvisible) {
  const auto w = scene({box(1, 0.04, 0.03, 0.2, 0.2), box(2, 0.06, 0.02, 0.2, 0.2, 0.04)});
  const auto r = render(w, CameraModel::for_bin(w.config));
  EXPECT_EQ(visible_area(*r.mask_of(1)), 0);
  EXPECT_GT(visible_area(*r.mask_of(2)), 0);
}

TEST(Render, OccludedAreaBelowUnoccluded) {
  const auto alone = scene({box(1, 0.06, 0.03, 0.2, 0.2)});
  const auto covered = scene({box(1, 0.06, 0.03, 0.2, 0.2), box(2, 0.04, 0.02, 0.22, 0.2, 0.03)});
  const auto cam = CameraModel::for_bin(alone.config);
  EXPECT_LT(visible_area(*render(covered, cam).mask_of(1)), visible_area(*render(alone, cam).mask_of(1)));
}

TEST(Render, MasksPartitionAndAgreeWithDepth) {
  const auto w = world::init_heap(BinConfig{}, 15, 5);
  const auto cam = CameraModel::for_bin(w.config);
  const auto r = render(w, cam);
  Grid<int> hits(cam.rows, cam.cols, 0);
  for (const auto& m : r.masks)
    for (int v = 0; v < cam.rows; ++v)
      for (int u = 0; u < cam.cols; ++u)
        if (m.mask(v, u)) {
          ++hits(v, u);
          EXPECT_LT(r.depth(v, u), cam.camera_height);
          EXPECT_EQ(r.labels(v, u), m.object_id);
        }
  for (int v = 0; v < cam.rows; ++v)
    for (int u = 0; u < cam.cols; ++u) EXPECT_LE(hits(v, u), 1);
  for (double d : r.depth.values()) {
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, cam.camera_height);
  }
}

TEST(Render, TopPixelDeprojectsToObjectTop) {
  const auto w = world::init_heap(BinConfig{}, 12, 9);
  const auto cam = CameraModel::for_bin(w.config);
  const auto r = render(w, cam);
  for (const auto& m : r.masks) {
    if (visible_area(m) == 0) continue;
    const auto c = mask_centroid(m.mask);
    // any set pixel
    for (int v = 0; v < cam.rows; ++v)
      for (int u = 0; u < cam.cols; ++u)
        if (m.mask(v, u)) {
          const auto p = deproject(u, v, r.depth(v, u), cam);
          EXPECT_NEAR(p.height, w.find(m.object_id)->top(), 1e-9);
          v = cam.rows;
          break;
        }
    EXPECT_TRUE(std::isfinite(c.x));
  }
}

TEST(Deproject, CenterAndRoundTrip) {
  const auto cam = CameraModel::for_bin(BinConfig{});
  const auto p = deproject(cam.cols / 2.0, cam.rows / 2.0, cam.camera_height, cam);
  EXPECT_NEAR(p.xy.x, 0.2, 1e-12);
  EXPECT_NEAR(p.xy.y, 0.2, 1e-12);
  EXPECT_NEAR(p.height, 0.0, 1e-12);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const geom::Vec2 w{rng.uniform(0, 0.4), rng.uniform(0, 0.4)};
    const auto px = cam.world_to_pixel(w);
    const auto back = deproject(std::round(px.x), std::round(px.y), cam.camera_height, cam).xy;
    EXPECT_LE(std::abs(back.x - w.x), 0.5 * cam.mpp + 1e-12);
    EXPECT_LE(std::abs(back.y - w.y), 0.5 * cam.mpp + 1e-12);
  }
}

TEST(Crop, CenterWindowArithmetic) {
  const auto cam = CameraModel::for_bin(BinConfig{});
  // image holding its own column index: the crop starting at column 210
  DepthImage img(cam.rows, cam.cols);
  for (int v = 0; v < cam.rows; ++v)
    for (int u = 0; u < cam.cols; ++u) img(v, u) = u + 1000.0 * v;
  const auto c = crop_downscale(img, 320, 240, cam);
  // first cell averages columns 210..215.5 and rows 130..135.5
  const double s = 220.0 / 40.0;
  double sum = 0, w = 0;
  for (int v = 130; v < 136; ++v)
    for (int u = 210; u < 216; ++u) {
      const double wu = u == 215 ? s - 5 : 1.0;
      const double wv = v == 135 ? s - 5 : 1.0;
      sum += wu * wv * img(v, u);
      w += wu * wv;
    }
  EXPECT_NEAR(c.at(0, 0), sum / w, 1e-9);
}

TEST(Crop, CornerPadsWithCameraHeight) {
  const auto cam = CameraModel::for_bin(BinConfig{});
  DepthImage img(cam.rows, cam.cols, 0.5);
  const auto c = crop_downscale(img, 0, 0, cam);
  EXPECT_NEAR(c.at(0, 0), cam.camera_height, 1e-12);
  EXPECT_NEAR(c.at(0, 39), cam.camera_height, 1e-12);
  EXPECT_NEAR(c.at(39, 0), cam.camera_height, 1e-12);
  EXPECT_NEAR(c.at(39, 39), 0.5, 1e-12);
  Mask m(cam.rows, cam.cols, 1);
  const auto cm = crop_downscale(m, 0, 0);
  EXPECT_EQ(cm.at(0, 0), 0.0);
  EXPECT_EQ(cm.at(39, 39), 1.0);
}

TEST(Crop, ConstantImageAndConservation) {
  const auto cam = CameraModel::for_bin(BinConfig{});
  DepthImage flat(cam.rows, cam.cols, 0.73);
  for (double x : crop_downscale(flat, 300, 200, cam).values) EXPECT_NEAR(x, 0.73, 1e-12);
  Rng rng(4);
  DepthImage img(cam.rows, cam.cols);
  for (double& x : img.values()) x = rng.uniform(0.5, 1.0);
  for (auto [u, v] : {std::pair{320, 240}, std::pair{5, 470}, std::pair{600, 20}}) {
    const auto c = crop_downscale(img, u, v, cam);
    double window = 0;
    for (int r = v - kCropHalf; r < v + kCropHalf; ++r)
      for (int q = u - kCropHalf; q < u + kCropHalf; ++q)
        window += img.in_bounds(r, q) ? img(r, q) : cam.camera_height;
    window /= kCropSide * kCropSide;
    const double mean = std::accumulate(c.values.begin(), c.values.end(), 0.0) / c.values.size();
    EXPECT_NEAR(mean, window, 1e-6);
  }
}

TEST(VisibleArea, Counts) {
  Mask m(10, 10, 0);
  EXPECT_EQ(visible_area(m), 0);
  m(2, 3) = 1;
  m(4, 4) = 1;
  EXPECT_EQ(visible_area(m), 2);
  const auto c = mask_centroid(m);
  EXPECT_DOUBLE_EQ(c.x, 3.5);
  EXPECT_DOUBLE_EQ(c.y, 3.0);
}

TEST(DebugExport, PgmAndPbmRoundTrip) {
  const auto w = world::init_heap(BinConfig{}, 6, 2);
  const auto cam = CameraModel::for_bin(w.config);
  const auto r = render(w, cam);
  const auto dir = std::filesystem::temp_directory_path() / "ms_perception_test";
  std::filesystem::create_directories(dir);
  write_depth_pgm(dir / "d.pgm", r.depth);
  write_mask_pbm(dir / "m.pbm", r.masks[0].mask);
  const auto d = read_depth_pgm(dir / "d.pgm");
  ASSERT_EQ(d.rows(), r.depth.rows());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d.values()[i], r.depth.values()[i], 0.5e-4 + 1e-12);
  EXPECT_EQ(read_mask_pbm(dir / "m.pbm"), r.masks[0].mask);
  std::filesystem::remove_all(dir);
}

}  // namespace
