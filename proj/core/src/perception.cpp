#include "ms/perception.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace ms::perception {

CameraModel CameraModel::for_bin(const BinConfig& config) {
  CameraModel cam;
  cam.mpp = std::max(config.bin_w, config.bin_d) / 420.0;
  cam.center = {config.bin_w / 2.0, config.bin_d / 2.0};
  return cam;
}

CameraModel CameraModel::downscaled(int factor) const {
  if (factor < 1) throw std::invalid_argument("CameraModel::downscaled: factor must be >= 1");
  CameraModel c = *this;
  c.rows = rows / factor;
  c.cols = cols / factor;
  c.mpp = mpp * factor;
  return c;
}

const ObjectMask* RenderResult::mask_of(int id) const {
  for (const auto& m : masks)
    if (m.object_id == id) return &m;
  return nullptr;
}

PixelRect bin_pixels(const BinConfig& config, const CameraModel& cam) {
  const geom::Vec2 lo = cam.world_to_pixel({0.0, 0.0});
  const geom::Vec2 hi = cam.world_to_pixel({config.bin_w, config.bin_d});
  PixelRect r{static_cast<int>(std::ceil(lo.x - 1e-9)), static_cast<int>(std::ceil(hi.x - 1e-9)),
              static_cast<int>(std::ceil(lo.y - 1e-9)), static_cast<int>(std::ceil(hi.y - 1e-9))};
  r.u0 = std::clamp(r.u0, 0, cam.cols);
  r.u1 = std::clamp(r.u1, 0, cam.cols);
  r.v0 = std::clamp(r.v0, 0, cam.rows);
  r.v1 = std::clamp(r.v1, 0, cam.rows);
  return r;
}

RenderResult render(const world::WorldState& state, const CameraModel& cam) {
  RenderResult out;
  out.depth = DepthImage(cam.rows, cam.cols, cam.camera_height);
  out.bin_bottom = Mask(cam.rows, cam.cols, 0);
  out.labels = Grid<std::int32_t>(cam.rows, cam.cols, 0);
  const PixelRect bin = bin_pixels(state.config, cam);
  for (int v = bin.v0; v < bin.v1; ++v)
    for (int u = bin.u0; u < bin.u1; ++u) out.bin_bottom(v, u) = 1;

  Grid<double> top(cam.rows, cam.cols, -1.0);
  Grid<double> base(cam.rows, cam.cols, -1.0);
  for (const auto& obj : state.objects) {
    const geom::Polygon fp = obj.footprint();
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : fp) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    const geom::Vec2 plo = cam.world_to_pixel({xmin, ymin});
    const geom::Vec2 phi = cam.world_to_pixel({xmax, ymax});
    const int u0 = std::max(bin.u0, static_cast<int>(std::floor(plo.x)));
    const int u1 = std::min(bin.u1 - 1, static_cast<int>(std::ceil(phi.x)));
    const int v0 = std::max(bin.v0, static_cast<int>(std::floor(plo.y)));
    const int v1 = std::min(bin.v1 - 1, static_cast<int>(std::ceil(phi.y)));
    const double t = obj.top();
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        if (!geom::contains(fp, cam.pixel_to_world(u, v))) continue;
        const std::int32_t cur = out.labels(v, u);
        // Highest top wins; ties go to the higher base, then the lower id.
        const bool wins = cur == 0 || t > top(v, u) ||
                          (t == top(v, u) && (obj.z_base > base(v, u) || (obj.z_base == base(v, u) && obj.id < cur)));
        if (!wins) continue;
        top(v, u) = t;
        base(v, u) = obj.z_base;
        out.labels(v, u) = obj.id;
      }
    }
  }

  out.masks.reserve(state.objects.size());
  for (const auto& obj : state.objects) out.masks.push_back({obj.id, Mask(cam.rows, cam.cols, 0)});
  for (int v = bin.v0; v < bin.v1; ++v) {
    for (int u = bin.u0; u < bin.u1; ++u) {
      const std::int32_t id = out.labels(v, u);
      if (id == 0) continue;
      out.depth(v, u) = cam.camera_height - top(v, u);
      for (auto& m : out.masks) {
        if (m.object_id == id) {
          m.mask(v, u) = 1;
          break;
        }
      }
    }
  }
  return out;
}

namespace {

// Area-averaging weights mapping 220 source samples onto 40 output cells of
// width 5.5; each source sample's weights sum to 40/220.
struct DownscaleWeights {
  struct Tap {
    int src;
    double w;
  };
  std::array<std::vector<Tap>, kObsSide> taps;

  DownscaleWeights() {
    const double cell = static_cast<double>(kCropSide) / kObsSide;
    for (int i = 0; i < kObsSide; ++i) {
      const double a = i * cell;
      const double b = (i + 1) * cell;
      for (int j = static_cast<int>(std::floor(a)); j < static_cast<int>(std::ceil(b)); ++j) {
        const double overlap = std::min(b, j + 1.0) - std::max(a, static_cast<double>(j));
        if (overlap > 0.0) taps[static_cast<std::size_t>(i)].push_back({j, overlap / cell});
      }
    }
  }
};

const DownscaleWeights& weights() {
  static const DownscaleWeights w;
  return w;
}

template <typename Sample>
ObservationCrop downscale(int u, int v, Channel channel, Sample&& sample) {
  ObservationCrop crop;
  crop.center_u = u;
  crop.center_v = v;
  crop.channel = channel;
  const auto& w = weights();
  // Separable: first collapse columns for every window row, then rows.
  std::vector<double> partial(static_cast<std::size_t>(kCropSide * kObsSide), 0.0);
  for (int r = 0; r < kCropSide; ++r) {
    for (int oc = 0; oc < kObsSide; ++oc) {
      double acc = 0.0;
      for (const auto& tap : w.taps[static_cast<std::size_t>(oc)]) acc += tap.w * sample(v - kCropHalf + r, u - kCropHalf + tap.src);
      partial[static_cast<std::size_t>(r * kObsSide + oc)] = acc;
    }
  }
  for (int orow = 0; orow < kObsSide; ++orow) {
    for (int oc = 0; oc < kObsSide; ++oc) {
      double acc = 0.0;
      for (const auto& tap : w.taps[static_cast<std::size_t>(orow)]) acc += tap.w * partial[static_cast<std::size_t>(tap.src * kObsSide + oc)];
      crop.values[static_cast<std::size_t>(orow * kObsSide + oc)] = acc;
    }
  }
  return crop;
}

}  // namespace

ObservationCrop crop_downscale(const DepthImage& depth, int u, int v, const CameraModel& cam) {
  const double pad = cam.camera_height;
  return downscale(u, v, Channel::depth, [&](int r, int c) { return depth.in_bounds(r, c) ? depth(r, c) : pad; });
}

ObservationCrop crop_downscale(const Mask& mask, int u, int v) {
  return downscale(u, v, Channel::mask,
                   [&](int r, int c) { return mask.in_bounds(r, c) ? static_cast<double>(mask(r, c)) : 0.0; });
}

SurfacePoint deproject(double u, double v, double depth, const CameraModel& cam) {
  return {cam.pixel_to_world(u, v), cam.camera_height - depth};
}

std::int64_t visible_area(const Mask& mask) {
  std::int64_t n = 0;
  for (auto b : mask.values()) n += (b != 0);
  return n;
}

geom::Vec2 mask_centroid(const Mask& mask) {
  double su = 0.0, sv = 0.0;
  std::int64_t n = 0;
  for (int v = 0; v < mask.rows(); ++v)
    for (int u = 0; u < mask.cols(); ++u)
      if (mask(v, u)) {
        su += u;
        sv += v;
        ++n;
      }
  if (n == 0) throw std::invalid_argument("mask_centroid: empty mask");
  return {su / static_cast<double>(n), sv / static_cast<double>(n)};
}

void write_depth_pgm(const std::filesystem::path& path, const DepthImage& depth) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "P5\n" << depth.cols() << ' ' << depth.rows() << "\n65535\n";
  for (double d : depth.values()) {
    const long q = std::lround(std::clamp(d * 10000.0, 0.0, 65535.0));
    const unsigned char be[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q & 0xff)};
    f.write(reinterpret_cast<const char*>(be), 2);
  }
}

void write_mask_pbm(const std::filesystem::path& path, const Mask& mask) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "P4\n" << mask.cols() << ' ' << mask.rows() << '\n';
  const int row_bytes = (mask.cols() + 7) / 8;
  std::vector<unsigned char> row(static_cast<std::size_t>(row_bytes));
  for (int r = 0; r < mask.rows(); ++r) {
    std::fill(row.begin(), row.end(), 0);
    for (int c = 0; c < mask.cols(); ++c)
      if (mask(r, c)) row[static_cast<std::size_t>(c / 8)] |= static_cast<unsigned char>(0x80 >> (c % 8));
    f.write(reinterpret_cast<const char*>(row.data()), row_bytes);
  }
}

namespace {

std::string read_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

DepthImage read_depth_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f || read_token(f) != "P5") throw std::runtime_error("not a binary PGM: " + path.string());
  const int cols = std::stoi(read_token(f));
  const int rows = std::stoi(read_token(f));
  if (std::stoi(read_token(f)) != 65535) throw std::runtime_error("expected 16-bit PGM: " + path.string());
  DepthImage img(rows, cols, 0.0);
  for (auto& d : img.values()) {
    unsigned char be[2];
    f.read(reinterpret_cast<char*>(be), 2);
    d = ((be[0] << 8) | be[1]) / 10000.0;
  }
  if (!f) throw std::runtime_error("truncated PGM: " + path.string());
  return img;
}

Mask read_mask_pbm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f || read_token(f) != "P4") throw std::runtime_error("not a binary PBM: " + path.string());
  const int cols = std::stoi(read_token(f));
  const int rows = std::stoi(read_token(f));
  Mask m(rows, cols, 0);
  const int row_bytes = (cols + 7) / 8;
  std::vector<unsigned char> row(static_cast<std::size_t>(row_bytes));
  for (int r = 0; r < rows; ++r) {
    f.read(reinterpret_cast<char*>(row.data()), row_bytes);
    for (int c = 0; c < cols; ++c) m(r, c) = (row[static_cast<std::size_t>(c / 8)] >> (7 - c % 8)) & 1;
  }
  if (!f) throw std::runtime_error("truncated PBM: " + path.string());
  return m;
}

}  // namespace ms::perception
