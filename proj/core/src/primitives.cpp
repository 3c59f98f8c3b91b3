#include "ms/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ms/freespace.hpp"

namespace ms::primitives {

using geom::Vec2;
using perception::CameraModel;

PushAction6 PushAction6::clamped() const {
  PushAction6 out = *this;
  for (auto& x : out.v) x = std::clamp(x, -1.0, 1.0);
  return out;
}

void ActionQuality::validate() const {
  if (!valid_quality(q_grasp) || !valid_quality(q_push)) {
    throw std::invalid_argument("ActionQuality: values must be -1 or within [0, 1]");
  }
}

void Thresholds::validate() const {
  if (!(q_grasp_thresh >= 0.0 && q_grasp_thresh <= 1.0 && q_push_thresh >= 0.0 && q_push_thresh <= 1.0)) {
    throw std::invalid_argument("Thresholds: must lie within [0, 1]");
  }
}

const char* to_string(AspAction a) {
  switch (a) {
    case AspAction::skip: return "skip";
    case AspAction::grasp: return "grasp";
    case AspAction::push: return "push";
  }
  return "?";
}

double decode_angle(double s, double c) {
  if (s == 0.0 && c == 0.0) return 0.0;
  return std::atan2(s, c);
}

namespace {

double surface_height(const SceneView& view, int v, int u) {
  return view.cam.camera_height - view.render.depth(v, u);
}

// Calls fn(r, c) for each image pixel whose center lies inside the convex
// polygon; returns false if the polygon reaches outside the image.
template <typename Fn>
bool for_each_pixel_in(const geom::Polygon& poly, const CameraModel& cam, Fn&& fn) {
  double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
  for (const auto& p : poly) {
    const Vec2 px = cam.world_to_pixel(p);
    umin = std::min(umin, px.x);
    umax = std::max(umax, px.x);
    vmin = std::min(vmin, px.y);
    vmax = std::max(vmax, px.y);
  }
  const int u0 = static_cast<int>(std::floor(umin));
  const int u1 = static_cast<int>(std::ceil(umax));
  const int v0 = static_cast<int>(std::floor(vmin));
  const int v1 = static_cast<int>(std::ceil(vmax));
  const bool inside = u0 >= 0 && v0 >= 0 && u1 < cam.cols && v1 < cam.rows;
  for (int v = std::max(0, v0); v <= std::min(cam.rows - 1, v1); ++v)
    for (int u = std::max(0, u0); u <= std::min(cam.cols - 1, u1); ++u)
      if (geom::contains(poly, cam.pixel_to_world(u, v))) fn(v, u);
  return inside;
}

const perception::ObjectMask& require_mask(const SceneView& view, int ooi_id) {
  const perception::ObjectMask* m = view.render.mask_of(ooi_id);
  if (!m) throw std::invalid_argument("unknown object id " + std::to_string(ooi_id));
  return *m;
}

struct MaskPixels {
  std::vector<Vec2> world;  // pixel centers in meters
  int r0 = 0, r1 = -1, c0 = 0, c1 = -1;
  double top = 0.0;         // highest visible surface of the object
};

MaskPixels collect(const SceneView& view, const Mask& mask) {
  MaskPixels mp;
  mp.r0 = mask.rows();
  mp.c0 = mask.cols();
  for (int v = 0; v < mask.rows(); ++v) {
    for (int u = 0; u < mask.cols(); ++u) {
      if (!mask(v, u)) continue;
      mp.world.push_back(view.cam.pixel_to_world(u, v));
      mp.r0 = std::min(mp.r0, v);
      mp.r1 = std::max(mp.r1, v);
      mp.c0 = std::min(mp.c0, u);
      mp.c1 = std::max(mp.c1, u);
      mp.top = std::max(mp.top, surface_height(view, v, u));
    }
  }
  return mp;
}

// Lowest surface bordering the mask: our estimate of where the object rests.
double estimate_base(const SceneView& view, const Mask& mask, const MaskPixels& mp) {
  double base = std::numeric_limits<double>::infinity();
  for (int v = std::max(0, mp.r0 - 1); v <= std::min(mask.rows() - 1, mp.r1 + 1); ++v) {
    for (int u = std::max(0, mp.c0 - 1); u <= std::min(mask.cols() - 1, mp.c1 + 1); ++u) {
      if (mask(v, u)) continue;
      bool touches = false;
      for (int dv = -1; dv <= 1 && !touches; ++dv)
        for (int du = -1; du <= 1 && !touches; ++du)
          touches = mask.in_bounds(v + dv, u + du) && mask(v + dv, u + du);
      if (touches) base = std::min(base, surface_height(view, v, u));
    }
  }
  if (!std::isfinite(base)) base = 0.0;
  return std::clamp(base, 0.0, std::max(0.0, mp.top - 0.005));
}

}  // namespace

world::PushCommand decode_push_pixel(double u, double v, double alpha, double phi, const SceneView& view) {
  const int pu = static_cast<int>(std::lround(u));
  const int pv = static_cast<int>(std::lround(v));
  double min_depth = view.cam.camera_height;
  for (int dv = -2; dv <= 2; ++dv) {
    for (int du = -2; du <= 2; ++du) {
      const int r = std::clamp(pv + dv, 0, view.cam.rows - 1);
      const int c = std::clamp(pu + du, 0, view.cam.cols - 1);
      min_depth = std::min(min_depth, view.render.depth(r, c));
    }
  }
  world::PushCommand cmd;
  const perception::SurfacePoint sp = perception::deproject(u, v, min_depth - 0.005, view.cam);
  cmd.p_start = {std::clamp(sp.xy.x, 0.0, view.config.bin_w), std::clamp(sp.xy.y, 0.0, view.config.bin_d)};
  cmd.z_push = sp.height;
  cmd.alpha_push = alpha;
  cmd.phi_yaw = phi;
  cmd.length = view.config.push_length;
  return cmd;
}

std::optional<world::PushCommand> decode_push_action(const PushAction6& action, int crop_u, int crop_v,
                                                     const SceneView& view) {
  const PushAction6 a = action.clamped();
  const perception::PixelRect bin = perception::bin_pixels(view.config, view.cam);
  const int cu0 = crop_u - perception::kCropHalf;
  const int cu1 = crop_u + perception::kCropHalf;
  const int cv0 = crop_v - perception::kCropHalf;
  const int cv1 = crop_v + perception::kCropHalf;
  if (cu1 <= bin.u0 || cu0 >= bin.u1 || cv1 <= bin.v0 || cv0 >= bin.v1) return std::nullopt;
  const double u = crop_u + a.x_rel() * perception::kCropHalf;
  const double v = crop_v + a.y_rel() * perception::kCropHalf;
  return decode_push_pixel(u, v, decode_angle(a.sin_alpha(), a.cos_alpha()), decode_angle(a.sin_phi(), a.cos_phi()),
                           view);
}

GraspPlan plan_grasp(const SceneView& view, int ooi_id, const GraspSampling& sampling) {
  const Mask& mask = require_mask(view, ooi_id).mask;
  const MaskPixels mp = collect(view, mask);
  if (mp.world.empty()) return {};
  const CameraModel& cam = view.cam;
  const BinConfig& cfg = view.config;
  const double base = estimate_base(view, mask, mp);

  // Local blocker raster: out-of-bin floor and other objects rising above
  // the estimated base.
  const int margin = static_cast<int>(std::ceil((cfg.jaw_max / 2.0 + cfg.jaw_thickness + cfg.jaw_length +
                                                 sampling.clearance_ref) / cam.mpp)) + 3;
  const int wr0 = std::max(0, mp.r0 - margin);
  const int wr1 = std::min(cam.rows - 1, mp.r1 + margin);
  const int wc0 = std::max(0, mp.c0 - margin);
  const int wc1 = std::min(cam.cols - 1, mp.c1 + margin);
  Mask free(wr1 - wr0 + 1, wc1 - wc0 + 1, 1);
  for (int v = wr0; v <= wr1; ++v) {
    for (int u = wc0; u <= wc1; ++u) {
      const std::int32_t label = view.render.labels(v, u);
      const bool blocker = !view.render.bin_bottom(v, u) ||
                           (label != 0 && label != ooi_id && surface_height(view, v, u) > base + 0.001);
      if (blocker) free(v - wr0, u - wc0) = 0;
    }
  }
  const freespace::DistanceField dt = freespace::distance_transform(free);

  // Principal axis of the visible pixels.
  Vec2 mean{};
  for (const auto& p : mp.world) mean = mean + p;
  mean = mean * (1.0 / static_cast<double>(mp.world.size()));
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : mp.world) {
    const Vec2 d = p - mean;
    sxx += d.x * d.x;
    sxy += d.x * d.y;
    syy += d.y * d.y;
  }
  const double axis_angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  const Vec2 e1 = geom::unit(axis_angle);
  double half_len = 0.0;
  for (const auto& p : mp.world) half_len = std::max(half_len, std::abs(geom::dot(p - mean, e1)));

  GraspPlan best;
  const double half_px = cam.mpp / 2.0;
  for (int ci = 0; ci < sampling.centers; ++ci) {
    const double frac = sampling.centers == 1 ? 0.0 : -0.5 + static_cast<double>(ci) / (sampling.centers - 1);
    const Vec2 center = mean + e1 * (frac * half_len);
    for (int ai = 0; ai < sampling.angles; ++ai) {
      const double theta = std::numbers::pi * ai / sampling.angles;
      const Vec2 u = geom::unit(theta);
      const Vec2 n = geom::perp(u);
      double lo = 1e300, hi = -1e300;
      for (const auto& p : mp.world) {
        const Vec2 d = p - center;
        if (std::abs(geom::dot(d, n)) > cfg.jaw_length / 2.0) continue;
        const double s = geom::dot(d, u);
        lo = std::min(lo, s - half_px);
        hi = std::max(hi, s + half_px);
      }
      if (lo > hi) continue;
      const double reach = std::max(std::abs(lo), std::abs(hi));
      if (2.0 * reach >= cfg.jaw_max) continue;
      world::GraspCommand cmd{center, theta, std::min(cfg.jaw_max, 2.0 * reach + 2.0 * sampling.open_margin), ooi_id};
      const world::JawGeometry g = world::jaw_geometry(cmd, {lo, hi}, cfg);

      bool blocked = false;
      std::int64_t min_sq = freespace::DistanceField::kUnreachable;
      auto scan = [&](int v, int u) {
        const int r = v - wr0;
        const int c = u - wc0;
        if (!free.in_bounds(r, c)) return;
        min_sq = std::min(min_sq, dt.squared(r, c));
        if (!free(r, c)) blocked = true;
      };
      if (!for_each_pixel_in(g.sweep_lo, cam, scan) || !for_each_pixel_in(g.sweep_hi, cam, scan) || blocked) continue;
      auto covered = [&](int v, int u) {
        const std::int32_t label = view.render.labels(v, u);
        if (label != 0 && label != ooi_id) blocked = true;
      };
      for_each_pixel_in(g.contact_lo, cam, covered);
      for_each_pixel_in(g.contact_hi, cam, covered);
      if (blocked) continue;

      const double clearance = min_sq == freespace::DistanceField::kUnreachable
                                   ? sampling.clearance_ref
                                   : std::sqrt(static_cast<double>(min_sq)) * cam.mpp;
      const double q_clear = std::min(1.0, clearance / sampling.clearance_ref);
      const double q_slack = std::min(1.0, (cfg.jaw_max - (hi - lo)) / (0.5 * cfg.jaw_max));
      const double q = std::min(q_clear, q_slack);
      if (q <= 0.0) continue;
      if (q > best.quality) {
        best.quality = q;
        best.cmd = cmd;
      }
    }
  }
  return best;
}

PushPlan fsp_plan_push(const SceneView& view, int ooi_id) {
  const Mask& mask = require_mask(view, ooi_id).mask;
  const MaskPixels mp = collect(view, mask);
  if (mp.world.empty()) return {};
  const CameraModel& cam = view.cam;
  const BinConfig& cfg = view.config;

  const Mask bfs = freespace::bfs_mask(view.render.bin_bottom, view.render.masks, ooi_id);
  const freespace::DistanceField dt = freespace::distance_transform(bfs);
  std::int64_t best_sq = -1;
  PushPlan plan;
  for (int v = 0; v < bfs.rows(); ++v) {
    for (int u = 0; u < bfs.cols(); ++u) {
      if (!bfs(v, u)) continue;
      const std::int64_t s = dt.squared(v, u);
      if (s > best_sq) {
        best_sq = s;
        plan.goal_u = u;
        plan.goal_v = v;
      }
    }
  }
  if (best_sq < 0) return plan;

  Vec2 centroid{};
  for (const auto& p : mp.world) centroid = centroid + p;
  centroid = centroid * (1.0 / static_cast<double>(mp.world.size()));
  const Vec2 goal = cam.pixel_to_world(plan.goal_u, plan.goal_v);
  const Vec2 delta = goal - centroid;
  if (geom::norm(delta) < cam.mpp) return plan;
  const double alpha = std::atan2(delta.y, delta.x);
  const Vec2 dir = geom::unit(alpha);
  double radius = 0.0;
  for (const auto& p : mp.world) radius = std::max(radius, geom::norm(p - centroid));
  radius += cam.mpp / 2.0 + cfg.pusher_r + 0.002;

  world::PushCommand cmd;
  cmd.p_start = centroid - dir * radius;
  cmd.z_push = std::max(0.005, mp.top - 0.01);
  cmd.alpha_push = alpha;
  cmd.phi_yaw = alpha + std::numbers::pi / 2.0;
  cmd.length = cfg.push_length;

  const Vec2 s = cmd.p_start;
  if (s.x < cfg.pusher_r || s.y < cfg.pusher_r || s.x > cfg.bin_w - cfg.pusher_r || s.y > cfg.bin_d - cfg.pusher_r) {
    return plan;
  }
  // The pusher must be able to descend to z_push at its start pose.
  const geom::Polygon disc = geom::regular_polygon(s, cfg.pusher_r, 16);
  bool blocked = false;
  for_each_pixel_in(disc, cam, [&](int v, int u) {
    if (view.render.labels(v, u) != 0 && surface_height(view, v, u) >= cmd.z_push) blocked = true;
  });
  if (blocked) return plan;

  const double ref = std::min(cfg.bin_w, cfg.bin_d) / (2.0 * cam.mpp);
  plan.cmd = cmd;
  plan.quality = std::clamp(std::sqrt(static_cast<double>(best_sq)) / ref, 0.0, 1.0);
  return plan;
}

AspAction heuristic_asp(const ActionQuality& q, const Thresholds& th) {
  if (q.q_grasp >= 0.0 && q.q_grasp >= th.q_grasp_thresh) return AspAction::grasp;
  if (q.q_push >= 0.0 && q.q_push >= th.q_push_thresh) return AspAction::push;
  return AspAction::skip;
}

std::vector<int> select_object(std::span<const perception::ObjectMask> masks, std::optional<int> target_id,
                               std::int64_t min_area) {
  std::vector<std::pair<std::int64_t, int>> others;
  bool target_visible = false;
  for (const auto& m : masks) {
    const std::int64_t a = perception::visible_area(m.mask);
    if (a <= min_area) continue;
    if (target_id && m.object_id == *target_id) {
      target_visible = true;
      continue;
    }
    others.emplace_back(a, m.object_id);
  }
  std::sort(others.begin(), others.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  std::vector<int> order;
  order.reserve(others.size() + 1);
  if (target_visible) order.push_back(*target_id);
  for (const auto& [_, id] : others) order.push_back(id);
  return order;
}

}  // namespace ms::primitives
