#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ms/perception.hpp"
#include "ms/primitives.hpp"
#include "ms/world.hpp"

namespace ms::episode {

inline constexpr int kActionCap = 25;

struct PushProposal {
  std::optional<world::PushCommand> cmd;
  double quality = -1.0;
};

// Supplies the push primitive for an OOI: the free-space baseline or a
// learned policy.
class PushPlanner {
 public:
  virtual ~PushPlanner() = default;
  virtual PushProposal propose(const primitives::SceneView& view, int ooi_id) const = 0;
  virtual std::string name() const = 0;
};

class FspPushPlanner final : public PushPlanner {
 public:
  PushProposal propose(const primitives::SceneView& view, int ooi_id) const override;
  std::string name() const override { return "fsp"; }
};

// Pixel-space push as entered by an operator.
struct PixelPush {
  double u = 0.0, v = 0.0;
  double alpha = 0.0, phi = 0.0;  // radians
};

struct SkipAction {};
struct GraspAction {
  std::optional<int> object_id;  // default: current OOI
};
struct PushAction {
  std::optional<PixelPush> pixel;  // default: the planner's proposal
};
using Action = std::variant<SkipAction, GraspAction, PushAction>;

primitives::AspAction kind_of(const Action& a);

enum class Outcome { running, success, target_lost, cap_exceeded };
const char* to_string(Outcome o);

// Everything visible at a decision point.
struct Observation {
  perception::RenderResult render;
  std::vector<int> ranking;
  int cursor = 0;
  std::optional<int> ooi;
  primitives::ActionQuality quality;
  std::optional<world::GraspCommand> grasp;
  std::optional<world::PushCommand> push;
};

struct StepRecord {
  int index = 0;
  primitives::AspAction chosen = primitives::AspAction::skip;
  primitives::AspAction executed = primitives::AspAction::skip;
  std::optional<int> ooi;
  primitives::ActionQuality quality;
  std::optional<world::GraspCommand> grasp;
  std::optional<world::PushCommand> push;
  std::optional<PixelPush> pixel_push;
  std::optional<int> grasp_object;
  std::string grasp_result;  // delivered_target | removed_to_secondary | failed
  double reward = 0.0;
  bool charged = false;      // consumed an action slot
  int action_count = 0;      // after this step
  Outcome outcome = Outcome::running;
};

class MalformedAction : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EpisodeFinished : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// One mechanical-search trial: ranking, quality evaluation, primitive
// execution, Skip accounting and stopping criteria.
class Episode {
 public:
  Episode(world::WorldState initial, std::shared_ptr<const PushPlanner> push, int action_cap = kActionCap,
          primitives::GraspSampling sampling = {});

  const Observation& observation() const { return obs_; }
  const world::WorldState& state() const { return state_; }
  const perception::CameraModel& camera() const { return cam_; }
  primitives::SceneView view() const { return {obs_.render, cam_, state_.config}; }
  const std::vector<StepRecord>& log() const { return log_; }
  Outcome outcome() const { return outcome_; }
  bool finished() const { return outcome_ != Outcome::running; }
  int action_count() const { return action_count_; }
  int action_cap() const { return cap_; }

  // Executes `a` at the current decision point. Throws MalformedAction
  // (state unchanged) or EpisodeFinished.
  const StepRecord& step(const Action& a);

 private:
  void observe(bool rerank);
  void evaluate_stop();
  void advance_cursor(StepRecord& rec);

  world::WorldState state_;
  std::shared_ptr<const PushPlanner> push_;
  int cap_;
  primitives::GraspSampling sampling_;
  perception::CameraModel cam_;
  Observation obs_;
  std::vector<StepRecord> log_;
  int action_count_ = 0;
  Outcome outcome_ = Outcome::running;
};

}  // namespace ms::episode
