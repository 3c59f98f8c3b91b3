#include "ms/episode.hpp"

#include <algorithm>
#include <cmath>

#include "ms/freespace.hpp"

namespace ms::episode {

using primitives::AspAction;

PushProposal FspPushPlanner::propose(const primitives::SceneView& view, int ooi_id) const {
  const primitives::PushPlan p = primitives::fsp_plan_push(view, ooi_id);
  return {p.cmd, p.quality};
}

AspAction kind_of(const Action& a) {
  if (std::holds_alternative<GraspAction>(a)) return AspAction::grasp;
  if (std::holds_alternative<PushAction>(a)) return AspAction::push;
  return AspAction::skip;
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::running: return "running";
    case Outcome::success: return "success";
    case Outcome::target_lost: return "target_lost";
    case Outcome::cap_exceeded: return "cap_exceeded";
  }
  return "?";
}

namespace {

const char* grasp_result_name(world::GraspOutcome g) {
  switch (g) {
    case world::GraspOutcome::delivered_target: return "delivered_target";
    case world::GraspOutcome::removed_to_secondary: return "removed_to_secondary";
    case world::GraspOutcome::failed: return "failed";
  }
  return "failed";
}

}  // namespace

Episode::Episode(world::WorldState initial, std::shared_ptr<const PushPlanner> push, int action_cap,
                 primitives::GraspSampling sampling)
    : state_(std::move(initial)),
      push_(std::move(push)),
      cap_(action_cap),
      sampling_(sampling),
      cam_(perception::CameraModel::for_bin(state_.config)) {
  if (!push_) throw std::invalid_argument("Episode: push planner required");
  if (cap_ < 1) throw std::invalid_argument("Episode: action cap must be >= 1");
  observe(true);
  evaluate_stop();
}

void Episode::observe(bool rerank) {
  if (rerank) {
    obs_.render = perception::render(state_, cam_);
    obs_.ranking = primitives::select_object(obs_.render.masks, state_.target_id());
    obs_.cursor = 0;
  }
  obs_.ooi.reset();
  obs_.grasp.reset();
  obs_.push.reset();
  obs_.quality = {};
  if (obs_.cursor >= static_cast<int>(obs_.ranking.size())) return;
  const int id = obs_.ranking[static_cast<std::size_t>(obs_.cursor)];
  obs_.ooi = id;
  const primitives::SceneView v = view();
  const primitives::GraspPlan g = primitives::plan_grasp(v, id, sampling_);
  const PushProposal p = push_->propose(v, id);
  obs_.grasp = g.cmd;
  obs_.push = p.cmd;
  obs_.quality = {g.cmd ? g.quality : -1.0, p.cmd ? p.quality : -1.0};
}

void Episode::evaluate_stop() {
  if (state_.delivered_target) {
    outcome_ = Outcome::success;
  } else if (!state_.target_in_bin()) {
    outcome_ = Outcome::target_lost;
  } else if (action_count_ >= cap_) {
    outcome_ = Outcome::cap_exceeded;
  }
}

void Episode::advance_cursor(StepRecord& rec) {
  ++obs_.cursor;
  if (obs_.cursor >= static_cast<int>(obs_.ranking.size())) {
    ++action_count_;
    rec.charged = true;
    observe(true);
  } else {
    observe(false);
  }
}

const StepRecord& Episode::step(const Action& a) {
  if (finished()) throw EpisodeFinished(std::string("episode already finished: ") + to_string(outcome_));

  StepRecord rec;
  rec.index = static_cast<int>(log_.size());
  rec.chosen = kind_of(a);
  rec.ooi = obs_.ooi;
  rec.quality = obs_.quality;

  std::optional<world::GraspCommand> grasp;
  std::optional<world::PushCommand> push;
  if (const auto* g = std::get_if<GraspAction>(&a)) {
    if (g->object_id) {
      const auto& r = obs_.ranking;
      if (std::find(r.begin(), r.end(), *g->object_id) == r.end()) {
        throw MalformedAction("grasp target " + std::to_string(*g->object_id) + " is not a visible object");
      }
      rec.grasp_object = g->object_id;
      if (*g->object_id == obs_.ooi) {
        grasp = obs_.grasp;
      } else {
        grasp = primitives::plan_grasp(view(), *g->object_id, sampling_).cmd;
      }
    } else {
      rec.grasp_object = obs_.ooi;
      grasp = obs_.grasp;
    }
  } else if (const auto* p = std::get_if<PushAction>(&a)) {
    if (p->pixel) {
      const PixelPush& px = *p->pixel;
      if (!std::isfinite(px.u) || !std::isfinite(px.v) || !std::isfinite(px.alpha) || !std::isfinite(px.phi)) {
        throw MalformedAction("push parameters must be finite");
      }
      if (px.u < 0.0 || px.v < 0.0 || px.u > cam_.cols - 1 || px.v > cam_.rows - 1) {
        throw MalformedAction("push pixel outside the image");
      }
      rec.pixel_push = px;
      const perception::PixelRect bin = perception::bin_pixels(state_.config, cam_);
      if (px.u >= bin.u0 && px.u <= bin.u1 - 1 && px.v >= bin.v0 && px.v <= bin.v1 - 1) {
        push = primitives::decode_push_pixel(px.u, px.v, px.alpha, px.phi, view());
      }
    } else {
      push = obs_.push;
    }
  }

  const bool infeasible = (rec.chosen == AspAction::grasp && !grasp) || (rec.chosen == AspAction::push && !push);
  if (rec.chosen == AspAction::skip || infeasible) {
    rec.executed = AspAction::skip;
    rec.reward = infeasible ? freespace::asp_reward(freespace::AspOutcome::infeasible_selected)
                            : freespace::asp_reward(freespace::AspOutcome::other);
    advance_cursor(rec);
  } else if (rec.chosen == AspAction::grasp) {
    rec.executed = AspAction::grasp;
    rec.grasp = grasp;
    auto [next, result] = world::apply_grasp(state_, *grasp);
    state_ = std::move(next);
    rec.grasp_result = grasp_result_name(result);
    rec.reward = result == world::GraspOutcome::delivered_target
                     ? freespace::asp_reward(freespace::AspOutcome::extracted_target)
                     : freespace::asp_reward(freespace::AspOutcome::other);
    ++action_count_;
    rec.charged = true;
    observe(true);
  } else {
    rec.executed = AspAction::push;
    rec.push = push;
    state_ = world::apply_push(state_, *push);
    rec.reward = freespace::asp_reward(freespace::AspOutcome::other);
    ++action_count_;
    rec.charged = true;
    observe(true);
  }
  evaluate_stop();
  rec.action_count = action_count_;
  rec.outcome = outcome_;
  log_.push_back(std::move(rec));
  return log_.back();
}

}  // namespace ms::episode
