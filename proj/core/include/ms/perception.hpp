#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ms/grid.hpp"
#include "ms/world.hpp"

namespace ms::perception {

inline constexpr int kImageRows = 480;
inline constexpr int kImageCols = 640;
inline constexpr int kCropSide = 220;
inline constexpr int kCropHalf = kCropSide / 2;
inline constexpr int kObsSide = 40;

// Orthographic top-down camera centered over the bin. Pixel (u, v) has its
// center at world (x, y) = ((u - cols/2) * mpp + cx, (v - rows/2) * mpp + cy).
struct CameraModel {
  int rows = kImageRows;
  int cols = kImageCols;
  double mpp = 0.40 / 420.0;  // meters per pixel
  double camera_height = 1.0;
  geom::Vec2 center{0.20, 0.20};

  // Observation camera: fixed 480x640 frame with the bin spanning ~420 px.
  static CameraModel for_bin(const BinConfig& config);

  // Coarser camera over the same field of view (factor 2 -> 240x320).
  CameraModel downscaled(int factor) const;

  geom::Vec2 pixel_to_world(double u, double v) const {
    return {(u - cols / 2.0) * mpp + center.x, (v - rows / 2.0) * mpp + center.y};
  }
  // Continuous pixel coordinates; round to get the containing pixel.
  geom::Vec2 world_to_pixel(geom::Vec2 p) const {
    return {(p.x - center.x) / mpp + cols / 2.0, (p.y - center.y) / mpp + rows / 2.0};
  }
};

using DepthImage = Grid<double>;

struct ObjectMask {
  int object_id = 0;
  Mask mask;
};

struct RenderResult {
  DepthImage depth;
  std::vector<ObjectMask> masks;  // one per object, in world order; may be empty
  Mask bin_bottom;
  Grid<std::int32_t> labels;      // visible object id per pixel, 0 for none

  const ObjectMask* mask_of(int id) const;
};

RenderResult render(const world::WorldState& state, const CameraModel& cam);

// Pixel rectangle [u0, u1) x [v0, v1) covered by the bin floor.
struct PixelRect {
  int u0, u1, v0, v1;
};
PixelRect bin_pixels(const BinConfig& config, const CameraModel& cam);

enum class Channel { depth, mask };

struct ObservationCrop {
  int center_u = 0;
  int center_v = 0;
  Channel channel = Channel::depth;
  std::array<double, kObsSide * kObsSide> values{};  // row-major 40x40

  double at(int r, int c) const { return values[static_cast<std::size_t>(r * kObsSide + c)]; }
};

// 220x220 window centered at (u, v) (columns [u-110, u+110)), padded with
// camera_height for depth and 0 for masks, area-averaged down to 40x40.
ObservationCrop crop_downscale(const DepthImage& depth, int u, int v, const CameraModel& cam);
ObservationCrop crop_downscale(const Mask& mask, int u, int v);

struct SurfacePoint {
  geom::Vec2 xy;
  double height = 0.0;
};
SurfacePoint deproject(double u, double v, double depth, const CameraModel& cam);

std::int64_t visible_area(const Mask& mask);
inline std::int64_t visible_area(const ObjectMask& m) { return visible_area(m.mask); }

// Mean pixel position of a mask as (u, v); requires a non-empty mask.
geom::Vec2 mask_centroid(const Mask& mask);

// Debug exports. Depth: binary 16-bit PGM (P5, maxval 65535, big-endian)
// storing round(depth_m * 10000). Masks: binary PBM (P4), 1 = set.
void write_depth_pgm(const std::filesystem::path& path, const DepthImage& depth);
void write_mask_pbm(const std::filesystem::path& path, const Mask& mask);
DepthImage read_depth_pgm(const std::filesystem::path& path);
Mask read_mask_pbm(const std::filesystem::path& path);

}  // namespace ms::perception
