#include "ms/world.hpp"

#include <algorithm>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace ms::world {

using geom::Polygon;
using geom::Vec2;

namespace {

constexpr double kLayerEps = 1e-9;
constexpr double kSeparationEps = 1e-9;
constexpr int kPusherSides = 16;
constexpr int kBisectIterations = 14;

bool z_contains(const ObjectInstance& o, double z) { return z >= o.z_base && z <= o.top(); }

double drop_height(const std::vector<ObjectInstance>& placed, const Polygon& fp, double support_frac) {
  const double a = geom::area(fp);
  double z = 0.0;
  for (const auto& other : placed) {
    if (geom::intersection_area(fp, other.footprint()) > support_frac * a) z = std::max(z, other.top());
  }
  return z;
}

bool collides(const std::vector<ObjectInstance>& placed, const ObjectInstance& cand,
              const Polygon& fp, int skip_id) {
  for (const auto& other : placed) {
    if (other.id == skip_id || other.id == cand.id) continue;
    if (!share_layer(cand, other)) continue;
    if (geom::overlaps(fp, other.footprint())) return true;
  }
  return false;
}

}  // namespace

void Shape::validate() const {
  if (vertices.size() < 3 || vertices.size() > 8) {
    throw std::invalid_argument("Shape: needs 3-8 vertices");
  }
  if (!geom::is_convex_ccw(vertices)) throw std::invalid_argument("Shape: not convex/CCW");
  if (!(geom::area(vertices) > 0.0)) throw std::invalid_argument("Shape: zero area");
  if (!(height >= 0.01 && height <= 0.12)) throw std::invalid_argument("Shape: height outside [0.01, 0.12]");
}

const ObjectInstance* WorldState::find(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

ObjectInstance* WorldState::find(int id) {
  for (auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

std::optional<int> WorldState::target_id() const {
  for (const auto& o : objects)
    if (o.is_target) return o.id;
  return std::nullopt;
}

bool WorldState::operator==(const WorldState& other) const { return serialize(*this) == serialize(other); }

bool share_layer(const ObjectInstance& a, const ObjectInstance& b) {
  return std::max(a.z_base, b.z_base) < std::min(a.top(), b.top()) - kLayerEps;
}

bool footprint_inside_bin(const Polygon& fp, const BinConfig& config, double tol) {
  for (const auto& p : fp) {
    if (p.x < -tol || p.y < -tol || p.x > config.bin_w + tol || p.y > config.bin_d + tol) return false;
  }
  return true;
}

double support_fraction(const WorldState& state, const ObjectInstance& obj) {
  if (obj.z_base <= 0.0) return 1.0;
  const Polygon fp = obj.footprint();
  double supported = 0.0;
  for (const auto& other : state.objects) {
    if (other.id == obj.id) continue;
    if (std::abs(other.top() - obj.z_base) > kLayerEps) continue;
    supported += geom::intersection_area(fp, other.footprint());
  }
  return supported / geom::area(fp);
}

void resettle(WorldState& state) {
  std::vector<std::size_t> order(state.objects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return state.objects[a].z_base < state.objects[b].z_base;
  });
  for (std::size_t idx : order) {
    ObjectInstance& obj = state.objects[idx];
    if (obj.z_base <= 0.0) continue;
    if (support_fraction(state, obj) >= state.config.support_frac) continue;
    const Polygon fp = obj.footprint();
    double z = 0.0;
    for (const auto& other : state.objects) {
      if (other.id == obj.id || other.top() > obj.z_base + kLayerEps) continue;
      if (geom::intersection_area(fp, other.footprint()) > 1e-12) z = std::max(z, other.top());
    }
    obj.z_base = z;
  }
}

Shape random_shape(const BinConfig& config, Rng& rng) {
  Shape s;
  const int sides = 3 + static_cast<int>(rng.below(6));
  const double a = 0.5 * rng.uniform(config.min_extent, config.max_extent);
  const double b = 0.5 * rng.uniform(config.min_extent, config.max_extent);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double step = 2.0 * std::numbers::pi / sides;
  // Points on an ellipse taken in angular order always form a convex polygon.
  for (int k = 0; k < sides; ++k) {
    const double ang = phase + step * k + rng.uniform(-0.3, 0.3) * step;
    s.vertices.push_back({a * std::cos(ang), b * std::sin(ang)});
  }
  // Re-center on the area centroid so pose (x, y) is the object's centroid.
  const Vec2 c = geom::centroid(s.vertices);
  for (auto& v : s.vertices) v = v - c;
  s.height = rng.uniform(config.min_height, config.max_height);
  return s;
}

WorldState init_heap(const BinConfig& config, int n_objects, std::uint64_t seed) {
  if (n_objects < 1) throw std::invalid_argument("init_heap: n_objects must be >= 1");
  config.validate();
  WorldState state;
  state.config = config;
  state.rng = Rng(seed);
  Rng& rng = state.rng;

  const int target_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_objects)));
  std::vector<Shape> shapes;
  shapes.reserve(static_cast<std::size_t>(n_objects));
  for (int i = 0; i < n_objects; ++i) shapes.push_back(random_shape(config, rng));

  const Vec2 center{config.bin_w / 2.0, config.bin_d / 2.0};
  for (int i = 0; i < n_objects; ++i) {
    ObjectInstance obj;
    obj.id = i + 1;
    obj.shape = shapes[static_cast<std::size_t>(i)];
    obj.is_target = (i == target_index);
    bool placed = false;
    for (int attempt = 0; attempt < config.placement_retries && !placed; ++attempt) {
      const double spread = config.heap_spread * (1.0 + attempt / 40.0);
      obj.pose = {center.x + spread * rng.normal(), center.y + spread * rng.normal(),
                  rng.uniform(0.0, 2.0 * std::numbers::pi)};
      const Polygon fp = obj.footprint();
      if (!footprint_inside_bin(fp, config, 0.0)) continue;
      obj.z_base = drop_height(state.objects, fp, config.support_frac);
      if (collides(state.objects, obj, fp, -1)) continue;
      placed = true;
    }
    if (!placed) {
      throw PlacementError("init_heap: could not place object " + std::to_string(obj.id) + " of " +
                           std::to_string(n_objects) + " after " +
                           std::to_string(config.placement_retries) + " attempts");
    }
    state.objects.push_back(std::move(obj));
  }
  return state;
}

namespace {

struct Sweep {
  const BinConfig& config;
  Vec2 dir;
  double z_push;
  std::vector<bool> excluded;

  // Resolves pusher and object-object penetration for a pusher at `at`.
  // Returns false when the configuration cannot be resolved without pushing
  // an object through a wall.
  bool advance(std::vector<ObjectInstance>& objs, Vec2 at) const {
    const Polygon pusher = geom::regular_polygon(at, config.pusher_r, kPusherSides);
    const std::size_t n = objs.size();
    std::vector<Polygon> fps(n);
    for (std::size_t i = 0; i < n; ++i) fps[i] = objs[i].footprint();

    auto shift = [&](std::size_t i, double t) {
      objs[i].pose.x += dir.x * t;
      objs[i].pose.y += dir.y * t;
      fps[i] = geom::translate(fps[i], dir * t);
      return footprint_inside_bin(fps[i], config);
    };

    for (std::size_t i = 0; i < n; ++i) {
      if (excluded[i] || !z_contains(objs[i], z_push)) continue;
      const double t = geom::exit_distance(pusher, fps[i], dir);
      if (t > 0.0 && !shift(i, t + kSeparationEps)) return false;
    }
    for (int iter = 0; iter < config.contact_iterations; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          if (!share_layer(objs[i], objs[j]) || !geom::overlaps(fps[i], fps[j])) continue;
          const double tij = geom::exit_distance(fps[i], fps[j], dir);
          const double tji = geom::exit_distance(fps[j], fps[i], dir);
          const bool move_j = tij <= tji;
          if (!shift(move_j ? j : i, (move_j ? tij : tji) + kSeparationEps)) return false;
          changed = true;
        }
      }
      if (!changed) return true;
    }
    return false;
  }
};

}  // namespace

WorldState apply_push(const WorldState& state, const PushCommand& cmd) {
  WorldState next = state;
  const BinConfig& cfg = state.config;
  Sweep sweep{cfg, geom::unit(cmd.alpha_push), cmd.z_push, {}};
  sweep.excluded.resize(next.objects.size(), false);
  {
    // Anything the end effector would land on at its start pose is treated
    // as passed over rather than contacted.
    const Polygon start = geom::regular_polygon(cmd.p_start, cfg.pusher_r, kPusherSides);
    for (std::size_t i = 0; i < next.objects.size(); ++i) {
      const auto& o = next.objects[i];
      sweep.excluded[i] = z_contains(o, cmd.z_push) && geom::overlaps(start, o.footprint());
    }
  }

  const int k_steps = cfg.substeps;
  for (int k = 1; k <= k_steps; ++k) {
    const Vec2 from = cmd.p_start + sweep.dir * (cmd.length * (k - 1) / k_steps);
    const Vec2 to = cmd.p_start + sweep.dir * (cmd.length * k / k_steps);
    std::vector<ObjectInstance> trial = next.objects;
    if (sweep.advance(trial, to)) {
      next.objects = std::move(trial);
      continue;
    }
    // Jammed against a wall: advance as far as the chain allows, then stall.
    double lo = 0.0;
    double hi = 1.0;
    std::vector<ObjectInstance> best = next.objects;
    for (int it = 0; it < kBisectIterations; ++it) {
      const double mid = 0.5 * (lo + hi);
      std::vector<ObjectInstance> probe = next.objects;
      if (sweep.advance(probe, from + (to - from) * mid)) {
        lo = mid;
        best = std::move(probe);
      } else {
        hi = mid;
      }
    }
    next.objects = std::move(best);
    break;
  }
  resettle(next);
  return next;
}

JawGeometry jaw_geometry(const GraspCommand& cmd, geom::Interval extent, const BinConfig& config) {
  const Vec2 u = geom::unit(cmd.axis_angle);
  const double half_w = cmd.jaw_width / 2.0;
  const double half_l = config.jaw_length / 2.0;
  const double t = config.jaw_thickness;
  const double s = config.contact_strip;
  JawGeometry g;
  g.sweep_hi = geom::oriented_rect(cmd.center, u, extent.hi, half_w + t, -half_l, half_l);
  g.sweep_lo = geom::oriented_rect(cmd.center, u, -half_w - t, extent.lo, -half_l, half_l);
  g.contact_hi = geom::oriented_rect(cmd.center, u, extent.hi - s, extent.hi, -half_l, half_l);
  g.contact_lo = geom::oriented_rect(cmd.center, u, extent.lo, extent.lo + s, -half_l, half_l);
  return g;
}

GraspCheck check_grasp(const WorldState& state, const GraspCommand& cmd) {
  const ObjectInstance* obj = state.find(cmd.object_id);
  if (!obj) throw std::invalid_argument("grasp: unknown object id " + std::to_string(cmd.object_id));
  const BinConfig& cfg = state.config;
  if (!(cmd.jaw_width > 0.0 && cmd.jaw_width <= cfg.jaw_max + 1e-12)) {
    throw std::invalid_argument("grasp: jaw_width outside (0, jaw_max]");
  }
  GraspCheck check;
  const Vec2 u = geom::unit(cmd.axis_angle);
  const Polygon fp = obj->footprint();
  const Polygon strip = geom::oriented_rect(cmd.center, u, -1.0, 1.0, -cfg.jaw_length / 2.0, cfg.jaw_length / 2.0);
  const Polygon band = geom::clip_convex(fp, strip);
  if (band.empty()) {
    check.block = GraspBlock::missed;
    return check;
  }
  const geom::Interval proj = geom::project(band, u);
  const double c = geom::dot(cmd.center, u);
  check.extent = {proj.lo - c, proj.hi - c};
  const double half_w = cmd.jaw_width / 2.0;
  if (!(check.extent.lo > -half_w && check.extent.hi < half_w)) {
    check.block = GraspBlock::too_wide;
    return check;
  }
  const JawGeometry g = jaw_geometry(cmd, check.extent, cfg);
  if (!footprint_inside_bin(g.sweep_lo, cfg, 1e-9) || !footprint_inside_bin(g.sweep_hi, cfg, 1e-9)) {
    check.block = GraspBlock::wall_blocked;
    return check;
  }
  for (const auto& other : state.objects) {
    if (other.id == obj->id) continue;
    const Polygon ofp = other.footprint();
    if (other.top() > obj->z_base + kLayerEps &&
        (geom::overlaps(g.sweep_lo, ofp) || geom::overlaps(g.sweep_hi, ofp))) {
      check.block = GraspBlock::jaw_blocked;
      return check;
    }
    if (other.z_base >= obj->top() - kLayerEps &&
        (geom::overlaps(g.contact_lo, ofp) || geom::overlaps(g.contact_hi, ofp))) {
      check.block = GraspBlock::covered;
      return check;
    }
  }
  return check;
}

std::pair<WorldState, GraspOutcome> apply_grasp(const WorldState& state, const GraspCommand& cmd) {
  const GraspCheck check = check_grasp(state, cmd);
  WorldState next = state;
  if (check.feasible()) {
    auto it = std::find_if(next.objects.begin(), next.objects.end(),
                           [&](const ObjectInstance& o) { return o.id == cmd.object_id; });
    const bool target = it->is_target;
    next.objects.erase(it);
    GraspOutcome outcome = GraspOutcome::removed_to_secondary;
    if (target) {
      next.delivered_target = true;
      outcome = GraspOutcome::delivered_target;
    } else {
      next.secondary_bin_contents.push_back(cmd.object_id);
    }
    resettle(next);
    return {std::move(next), outcome};
  }

  const BinConfig& cfg = state.config;
  const double dx = next.rng.uniform(-cfg.grasp_noise_xy, cfg.grasp_noise_xy);
  const double dy = next.rng.uniform(-cfg.grasp_noise_xy, cfg.grasp_noise_xy);
  const double dth = next.rng.uniform(-cfg.grasp_noise_theta, cfg.grasp_noise_theta);
  ObjectInstance* obj = next.find(cmd.object_id);
  const geom::Pose original = obj->pose;
  // Scale the disturbance down until it fits without interpenetration.
  for (double scale = 1.0; scale > 0.1; scale *= 0.5) {
    obj->pose = {original.x + dx * scale, original.y + dy * scale, original.theta + dth * scale};
    const Polygon fp = obj->footprint();
    if (footprint_inside_bin(fp, cfg) && !collides(next.objects, *obj, fp, obj->id)) break;
    obj->pose = original;
  }
  resettle(next);
  return {std::move(next), GraspOutcome::failed};
}

std::string serialize(const WorldState& state) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%a ", v);
    out << buf;
  };
  const BinConfig& c = state.config;
  out << "config ";
  for (double v : {c.bin_w, c.bin_d, c.jaw_max, c.pusher_r, c.support_frac, c.push_length,
                   c.grasp_noise_xy, c.grasp_noise_theta, c.jaw_thickness, c.jaw_length,
                   c.contact_strip, c.min_extent, c.max_extent, c.min_height, c.max_height,
                   c.heap_spread}) {
    num(v);
  }
  out << c.substeps << ' ' << c.contact_iterations << ' ' << c.placement_retries << ' ' << c.seed << '\n';
  for (const auto& o : state.objects) {
    out << "object " << o.id << ' ' << (o.is_target ? 1 : 0) << ' ';
    num(o.pose.x);
    num(o.pose.y);
    num(o.pose.theta);
    num(o.z_base);
    num(o.shape.height);
    out << o.shape.vertices.size() << ' ';
    for (const auto& v : o.shape.vertices) {
      num(v.x);
      num(v.y);
    }
    out << '\n';
  }
  out << "secondary";
  for (int id : state.secondary_bin_contents) out << ' ' << id;
  out << "\ndelivered " << (state.delivered_target ? 1 : 0) << "\nrng " << state.rng.engine() << '\n';
  return out.str();
}

}  // namespace ms::world
