#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ms/config.hpp"
#include "ms/geometry.hpp"
#include "ms/rng.hpp"

namespace ms::world {

struct PlacementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Convex footprint in object-local coordinates plus an extrusion height.
struct Shape {
  geom::Polygon vertices;  // m, counterclockwise, convex
  double height = 0.0;     // m

  void validate() const;
};

struct ObjectInstance {
  int id = 0;
  Shape shape;
  geom::Pose pose;
  double z_base = 0.0;
  bool is_target = false;

  geom::Polygon footprint() const { return geom::transform(shape.vertices, pose); }
  double top() const { return z_base + shape.height; }
};

struct WorldState {
  BinConfig config;
  std::vector<ObjectInstance> objects;
  std::vector<int> secondary_bin_contents;
  bool delivered_target = false;
  Rng rng;

  const ObjectInstance* find(int id) const;
  ObjectInstance* find(int id);
  std::optional<int> target_id() const;
  bool target_in_bin() const { return target_id().has_value(); }

  bool operator==(const WorldState& other) const;
};

struct PushCommand {
  geom::Vec2 p_start;
  double z_push = 0.0;
  double alpha_push = 0.0;  // push direction
  double phi_yaw = 0.0;     // end-effector yaw; a disc pusher is yaw-invariant
  double length = 0.10;

  geom::Vec2 p_end() const { return p_start + geom::unit(alpha_push) * length; }
};

struct GraspCommand {
  geom::Vec2 center;
  double axis_angle = 0.0;  // jaw closing direction
  double jaw_width = 0.0;   // opening before closing
  int object_id = 0;
};

enum class GraspOutcome { delivered_target, removed_to_secondary, failed };

enum class GraspBlock { none, missed, too_wide, jaw_blocked, wall_blocked, covered };

// Ground-truth evaluation of the three grasp success conditions without
// mutating the world.
struct GraspCheck {
  GraspBlock block = GraspBlock::none;
  geom::Interval extent{0.0, 0.0};  // object extent along the jaw axis, relative to center
  bool feasible() const { return block == GraspBlock::none; }
};

WorldState init_heap(const BinConfig& config, int n_objects, std::uint64_t seed);

WorldState apply_push(const WorldState& state, const PushCommand& cmd);

GraspCheck check_grasp(const WorldState& state, const GraspCommand& cmd);

std::pair<WorldState, GraspOutcome> apply_grasp(const WorldState& state, const GraspCommand& cmd);

// Shared geometry of a parallel-jaw approach: closing-sweep rectangles on
// either side of an object extent and the contact strips at its ends.
struct JawGeometry {
  geom::Polygon sweep_lo;
  geom::Polygon sweep_hi;
  geom::Polygon contact_lo;
  geom::Polygon contact_hi;
};
JawGeometry jaw_geometry(const GraspCommand& cmd, geom::Interval extent, const BinConfig& config);

// Objects whose vertical extents share an open interval.
bool share_layer(const ObjectInstance& a, const ObjectInstance& b);

// Fraction of `obj`'s footprint area resting on tops at exactly obj.z_base.
double support_fraction(const WorldState& state, const ObjectInstance& obj);

// Drops unsupported stacked objects (support below config.support_frac) to
// the highest surface under their footprint. Idempotent.
void resettle(WorldState& state);

bool footprint_inside_bin(const geom::Polygon& fp, const BinConfig& config, double tol = 1e-12);

Shape random_shape(const BinConfig& config, Rng& rng);

// Canonical byte representation (hexfloat text); equal states serialize
// identically and vice versa.
std::string serialize(const WorldState& state);

}  // namespace ms::world
