#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ms/perception.hpp"
#include "ms/world.hpp"

namespace ms::primitives {

// Policy-space push: (x_rel, y_rel, sin a, cos a, sin phi, cos phi).
struct PushAction6 {
  std::array<double, 6> v{};

  double x_rel() const { return v[0]; }
  double y_rel() const { return v[1]; }
  double sin_alpha() const { return v[2]; }
  double cos_alpha() const { return v[3]; }
  double sin_phi() const { return v[4]; }
  double cos_phi() const { return v[5]; }

  PushAction6 clamped() const;
};

// Quality of -1 means the primitive could not produce an action.
struct ActionQuality {
  double q_grasp = -1.0;
  double q_push = -1.0;

  static bool valid_quality(double q) { return q == -1.0 || (q >= 0.0 && q <= 1.0); }
  void validate() const;
};

struct Thresholds {
  double q_grasp_thresh = 0.5;
  double q_push_thresh = 0.25;
  void validate() const;
};

enum class AspAction : int { skip = 0, grasp = 1, push = 2 };
const char* to_string(AspAction a);

// Everything a planner may look at: rendered observation plus the static
// camera and bin description. No ground-truth object state.
struct SceneView {
  const perception::RenderResult& render;
  const perception::CameraModel& cam;
  const BinConfig& config;
};

// Angle of (sin, cos) with the degenerate origin resolved to 0.
double decode_angle(double s, double c);

// Push starting at image pixel (u, v): height from the highest surface in a
// 5x5 neighborhood plus 5 mm clearance, start clamped into the bin.
world::PushCommand decode_push_pixel(double u, double v, double alpha, double phi, const SceneView& view);

// Maps a policy action relative to a crop centered at (crop_u, crop_v) onto
// a metric push. Empty when the crop does not overlap the bin at all.
std::optional<world::PushCommand> decode_push_action(const PushAction6& a, int crop_u, int crop_v,
                                                     const SceneView& view);

struct GraspSampling {
  int angles = 16;
  int centers = 5;
  double clearance_ref = 0.02;  // m of free clearance that saturates quality
  double open_margin = 0.01;    // m added to the object width when opening
};

struct GraspPlan {
  std::optional<world::GraspCommand> cmd;
  double quality = -1.0;
};

GraspPlan plan_grasp(const SceneView& view, int ooi_id, const GraspSampling& sampling = {});

struct PushPlan {
  std::optional<world::PushCommand> cmd;
  double quality = -1.0;
  int goal_u = -1;
  int goal_v = -1;
};

// Free-space-policy baseline: push the OOI toward the bin's freest pixel.
PushPlan fsp_plan_push(const SceneView& view, int ooi_id);

AspAction heuristic_asp(const ActionQuality& q, const Thresholds& th);

inline constexpr std::int64_t kMinVisibleArea = 30;

// Objects with visible area above `min_area`: target first when visible,
// then by descending area, ties by ascending id.
std::vector<int> select_object(std::span<const perception::ObjectMask> masks, std::optional<int> target_id,
                               std::int64_t min_area = kMinVisibleArea);

}  // namespace ms::primitives
