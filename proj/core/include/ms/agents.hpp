#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ms/episode.hpp"
#include "ms/learn/dqn.hpp"
#include "ms/learn/sac.hpp"
#include "ms/perception.hpp"
#include "ms/primitives.hpp"

namespace ms::agents {

using Real = float;
inline constexpr int kObsCells = perception::kObsSide * perception::kObsSide;
// Depth crops are fed as height above the bin floor in units of this many
// meters.
inline constexpr double kHeightScale = 0.1;

struct PushObservation {
  std::array<Real, kObsCells> depth{};
  int crop_u = 0;
  int crop_v = 0;
};

struct AspObservation {
  std::array<Real, kObsCells> depth{};
  std::array<Real, kObsCells> mask{};
  double x_rel = 0.0;
  double y_rel = 0.0;
  double q_grasp = -1.0;
  double q_push = -1.0;

  // depth, mask, x_rel, y_rel, q_grasp, q_push
  std::vector<Real> flatten() const;
};

// Crop center: rounded centroid of the OOI's visible pixels.
std::array<int, 2> ooi_pixel(const perception::RenderResult& render, int ooi_id);

PushObservation push_observation(const perception::RenderResult& render, const perception::CameraModel& cam, int ooi_id);

// With no OOI every image cell is zero and both qualities are -1.
AspObservation asp_observation(const episode::Observation& obs, const perception::CameraModel& cam);

learn::SacConfig default_push_sac(std::uint64_t seed = 0);
learn::DqnConfig default_asp_dqn(std::uint64_t seed = 0);

struct BundleMeta {
  std::string kind;  // push | asp
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int episodes = 0;
  std::string git_revision;
};

// Learned push primitive: SAC actor on a depth crop around the OOI.
class PushPolicy final : public episode::PushPlanner {
 public:
  explicit PushPolicy(const learn::SacConfig& cfg, double quality_scale = 1.0);

  primitives::PushAction6 act(const PushObservation& obs, bool deterministic, Rng* rng = nullptr) const;
  // sigmoid(min twin critic / scale)
  double quality(const PushObservation& obs, const primitives::PushAction6& a) const;
  episode::PushProposal propose(const primitives::SceneView& view, int ooi_id) const override;
  std::string name() const override { return "learned"; }

  learn::SacAgent<Real>& agent() { return agent_; }
  const learn::SacAgent<Real>& agent() const { return agent_; }
  double quality_scale() const { return quality_scale_; }

  void save(const std::filesystem::path& path, const BundleMeta& meta) const;
  static std::unique_ptr<PushPolicy> load(const std::filesystem::path& path);

 private:
  learn::SacAgent<Real> agent_;
  double quality_scale_;
};

double sigmoid(double x);

// Decides Skip/Grasp/Push at an episode's decision point.
class AspDecider {
 public:
  virtual ~AspDecider() = default;
  virtual primitives::AspAction decide(const episode::Observation& obs, const perception::CameraModel& cam) = 0;
  virtual std::string name() const = 0;
};

class HeuristicAsp final : public AspDecider {
 public:
  explicit HeuristicAsp(primitives::Thresholds th = {}) : th_(th) {}
  primitives::AspAction decide(const episode::Observation& obs, const perception::CameraModel&) override;
  std::string name() const override { return "heuristic"; }

 private:
  primitives::Thresholds th_;
};

// DQN over (Skip, Grasp, Push) with epsilon-greedy exploration.
class AspPolicy {
 public:
  explicit AspPolicy(const learn::DqnConfig& cfg);

  std::array<double, 3> q_values(const AspObservation& obs) const;
  primitives::AspAction act(const AspObservation& obs, double epsilon, Rng& rng) const;

  learn::DqnAgent<Real>& agent() { return agent_; }
  const learn::DqnAgent<Real>& agent() const { return agent_; }

  void save(const std::filesystem::path& path, const BundleMeta& meta) const;
  static std::unique_ptr<AspPolicy> load(const std::filesystem::path& path);

 private:
  learn::DqnAgent<Real> agent_;
};

class LearnedAsp final : public AspDecider {
 public:
  explicit LearnedAsp(std::shared_ptr<const AspPolicy> policy, double epsilon = 0.0, std::uint64_t seed = 0)
      : policy_(std::move(policy)), epsilon_(epsilon), rng_(seed) {}
  primitives::AspAction decide(const episode::Observation& obs, const perception::CameraModel& cam) override;
  std::string name() const override { return "learned"; }

 private:
  std::shared_ptr<const AspPolicy> policy_;
  double epsilon_;
  Rng rng_;
};

// Maps a decision onto the episode's action type (planner-driven primitives).
episode::Action to_action(primitives::AspAction a);

struct PushTrainConfig {
  BinConfig bin;
  learn::SacConfig sac = default_push_sac();
  int episodes = 2000;
  int heap_size = 10;
  int pushes_per_episode = 5;
  int updates_per_step = 5;
  int warmup_steps = 500;
  int batch = 64;
  std::size_t buffer = 100000;
  int checkpoint_every = 500;
  double quality_scale = 1.0;
  std::uint64_t seed = 0;
};

struct AspTrainConfig {
  BinConfig bin;
  learn::DqnConfig dqn = default_asp_dqn();
  int episodes = 100;
  int heap_size = 8;
  int action_cap = episode::kActionCap;
  int updates_per_step = 20;
  int batch = 64;
  std::size_t buffer = 100000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int checkpoint_every = 50;
  std::uint64_t seed = 0;
};

struct CurveRow {
  int episode = 0;
  int steps = 0;
  double reward = 0.0;
  double loss_a = 0.0;  // critic or TD loss
  double loss_b = 0.0;  // actor loss (push) or epsilon (asp)
  double alpha = 0.0;
  std::string outcome;
};

// Training settings from a key-value file; bin keys are read alongside.
PushTrainConfig push_train_config_from(const KeyValueConfig& kv);
AspTrainConfig asp_train_config_from(const KeyValueConfig& kv);

using ProgressFn = std::function<void(const CurveRow&)>;

// Writes push.msnn (+ .json sidecar), checkpoints and curve.csv into out_dir
// when it is non-empty.
std::unique_ptr<PushPolicy> train_push(const PushTrainConfig& cfg, const std::filesystem::path& out_dir,
                                       std::vector<CurveRow>* curve = nullptr, const ProgressFn& progress = {});

std::unique_ptr<AspPolicy> train_asp(const AspTrainConfig& cfg, std::shared_ptr<const episode::PushPlanner> push,
                                     const std::filesystem::path& out_dir, std::vector<CurveRow>* curve = nullptr,
                                     const ProgressFn& progress = {});

// Per-step push reward after applying `cmd`, measured on half-resolution
// renders.
double measure_push_reward(const world::WorldState& before, const world::WorldState& after, int ooi_id);

std::string git_revision();

}  // namespace ms::agents
