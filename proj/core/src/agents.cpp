#include "ms/agents.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ms/freespace.hpp"
#include "ms/learn/weights_io.hpp"

#ifndef MS_GIT_REVISION
#define MS_GIT_REVISION "unknown"
#endif

namespace ms::agents {

using json = nlohmann::ordered_json;
using learn::Mat;
using primitives::AspAction;

std::string git_revision() { return MS_GIT_REVISION; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<Real> AspObservation::flatten() const {
  std::vector<Real> out;
  out.reserve(2 * kObsCells + 4);
  out.insert(out.end(), depth.begin(), depth.end());
  out.insert(out.end(), mask.begin(), mask.end());
  out.push_back(static_cast<Real>(x_rel));
  out.push_back(static_cast<Real>(y_rel));
  out.push_back(static_cast<Real>(q_grasp));
  out.push_back(static_cast<Real>(q_push));
  return out;
}

std::array<int, 2> ooi_pixel(const perception::RenderResult& render, int ooi_id) {
  const perception::ObjectMask* m = render.mask_of(ooi_id);
  if (!m) throw std::invalid_argument("ooi_pixel: unknown object " + std::to_string(ooi_id));
  const geom::Vec2 c = perception::mask_centroid(m->mask);
  return {static_cast<int>(std::lround(c.x)), static_cast<int>(std::lround(c.y))};
}

namespace {

void fill_heights(const perception::ObservationCrop& crop, const perception::CameraModel& cam,
                  std::array<Real, kObsCells>& out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>((cam.camera_height - crop.values[i]) / kHeightScale);
}

}  // namespace

PushObservation push_observation(const perception::RenderResult& render, const perception::CameraModel& cam, int ooi_id) {
  const auto [u, v] = ooi_pixel(render, ooi_id);
  PushObservation obs;
  obs.crop_u = u;
  obs.crop_v = v;
  fill_heights(perception::crop_downscale(render.depth, u, v, cam), cam, obs.depth);
  return obs;
}

AspObservation asp_observation(const episode::Observation& obs, const perception::CameraModel& cam) {
  AspObservation out;
  if (!obs.ooi) return out;
  const auto [u, v] = ooi_pixel(obs.render, *obs.ooi);
  fill_heights(perception::crop_downscale(obs.render.depth, u, v, cam), cam, out.depth);
  const perception::ObservationCrop m = perception::crop_downscale(obs.render.mask_of(*obs.ooi)->mask, u, v);
  for (std::size_t i = 0; i < out.mask.size(); ++i) out.mask[i] = static_cast<Real>(m.values[i]);
  const double half_u = cam.cols / 2.0;
  const double half_v = cam.rows / 2.0;
  out.x_rel = (u - half_u) / half_u;
  out.y_rel = (v - half_v) / half_v;
  out.q_grasp = obs.quality.q_grasp;
  out.q_push = obs.quality.q_push;
  return out;
}

learn::SacConfig default_push_sac(std::uint64_t seed) {
  learn::SacConfig cfg;
  cfg.layout = {1, perception::kObsSide, 0};
  cfg.action_dim = 6;
  cfg.gamma = 0.9;
  cfg.seed = seed;
  return cfg;
}

learn::DqnConfig default_asp_dqn(std::uint64_t seed) {
  learn::DqnConfig cfg;
  cfg.layout = {2, perception::kObsSide, 4};
  cfg.actions = 3;
  cfg.hidden = {128};
  cfg.gamma = 0.99;
  cfg.sync_period = 500;
  cfg.seed = seed;
  return cfg;
}

namespace {

json layout_json(const learn::ObsLayout& l) { return {{"channels", l.channels}, {"side", l.side}, {"extras", l.extras}}; }

learn::ObsLayout layout_from(const json& j) {
  return {j.at("channels").get<int>(), j.at("side").get<int>(), j.at("extras").get<int>()};
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

json meta_json(const BundleMeta& meta) {
  return {{"kind", meta.kind},
          {"config_hash", hex64(meta.config_hash)},
          {"seed", meta.seed},
          {"episodes", meta.episodes},
          {"git_revision", meta.git_revision}};
}

void write_sidecar(const std::filesystem::path& weights, const json& j) {
  std::ofstream out(weights.string() + ".json");
  if (!out) throw std::runtime_error("cannot write sidecar for " + weights.string());
  out << j.dump(2) << '\n';
}

json read_sidecar(const std::filesystem::path& weights) {
  std::ifstream in(weights.string() + ".json");
  if (!in) throw std::runtime_error("missing metadata sidecar " + weights.string() + ".json");
  return json::parse(in);
}

Mat<Real> row_of(const std::array<Real, kObsCells>& a) {
  return Eigen::Map<const Mat<Real>>(a.data(), 1, kObsCells);
}

}  // namespace

PushPolicy::PushPolicy(const learn::SacConfig& cfg, double quality_scale) : agent_(cfg), quality_scale_(quality_scale) {
  if (!(quality_scale > 0.0)) throw std::invalid_argument("PushPolicy: quality scale must be positive");
  if (cfg.action_dim != 6 || cfg.layout.size() != kObsCells) throw std::invalid_argument("PushPolicy: expects 40x40 input and 6-D actions");
}

primitives::PushAction6 PushPolicy::act(const PushObservation& obs, bool deterministic, Rng* rng) const {
  Rng fallback(0);
  const Mat<Real> a = agent_.act(row_of(obs.depth), deterministic || !rng, rng ? *rng : fallback);
  primitives::PushAction6 out;
  for (int i = 0; i < 6; ++i) out.v[static_cast<std::size_t>(i)] = static_cast<double>(a(0, i));
  return out;
}

double PushPolicy::quality(const PushObservation& obs, const primitives::PushAction6& a) const {
  Mat<Real> act(1, 6);
  for (int i = 0; i < 6; ++i) act(0, i) = static_cast<Real>(a.v[static_cast<std::size_t>(i)]);
  return sigmoid(static_cast<double>(agent_.min_q(row_of(obs.depth), act)(0)) / quality_scale_);
}

episode::PushProposal PushPolicy::propose(const primitives::SceneView& view, int ooi_id) const {
  const perception::ObjectMask* m = view.render.mask_of(ooi_id);
  if (!m || perception::visible_area(m->mask) == 0) return {};
  const PushObservation obs = push_observation(view.render, view.cam, ooi_id);
  const primitives::PushAction6 a = act(obs, true);
  const auto cmd = primitives::decode_push_action(a, obs.crop_u, obs.crop_v, view);
  if (!cmd) return {};
  return {cmd, quality(obs, a)};
}

void PushPolicy::save(const std::filesystem::path& path, const BundleMeta& meta) const {
  learn::WeightFile f;
  f.put("encoder", agent_.encoder().encoder());
  f.put("actor", agent_.actor());
  f.put("q1", agent_.q1());
  f.put("q2", agent_.q2());
  f.set_scalar("log_alpha", static_cast<double>(agent_.log_alpha()));
  f.set_scalar("quality_scale", quality_scale_);
  f.save(path);
  const auto& c = agent_.config();
  json j = meta_json(meta);
  j["architecture"] = {{"layout", layout_json(c.layout)},
                       {"action_dim", c.action_dim},
                       {"feature_size", c.feature_size},
                       {"actor_hidden", c.actor_hidden},
                       {"critic_hidden", c.critic_hidden},
                       {"log_std_min", c.log_std_min},
                       {"log_std_max", c.log_std_max}};
  j["hyperparameters"] = {{"gamma", c.gamma}, {"tau", c.tau}, {"lr", c.lr}, {"alpha_lr", c.alpha_lr}};
  write_sidecar(path, j);
}

std::unique_ptr<PushPolicy> PushPolicy::load(const std::filesystem::path& path) {
  const json j = read_sidecar(path);
  if (j.at("kind") != "push") throw std::runtime_error(path.string() + " is not a push policy bundle");
  const json& a = j.at("architecture");
  learn::SacConfig cfg = default_push_sac();
  cfg.layout = layout_from(a.at("layout"));
  cfg.action_dim = a.at("action_dim");
  cfg.feature_size = a.at("feature_size");
  cfg.actor_hidden = a.at("actor_hidden").get<std::vector<int>>();
  cfg.critic_hidden = a.at("critic_hidden").get<std::vector<int>>();
  cfg.log_std_min = a.at("log_std_min");
  cfg.log_std_max = a.at("log_std_max");
  const learn::WeightFile f = learn::WeightFile::load(path);
  auto policy = std::make_unique<PushPolicy>(cfg, f.scalar("quality_scale"));
  auto& ag = policy->agent();
  f.get("encoder", ag.encoder().encoder());
  f.get("actor", ag.actor());
  f.get("q1", ag.q1());
  f.get("q2", ag.q2());
  ag.set_log_alpha(static_cast<Real>(f.scalar("log_alpha")));
  ag.target_encoder().copy_from(ag.encoder());
  ag.target_q1().copy_from(ag.q1());
  ag.target_q2().copy_from(ag.q2());
  return policy;
}

AspAction HeuristicAsp::decide(const episode::Observation& obs, const perception::CameraModel&) {
  if (!obs.ooi) return AspAction::skip;
  return primitives::heuristic_asp(obs.quality, th_);
}

AspPolicy::AspPolicy(const learn::DqnConfig& cfg) : agent_(cfg) {
  if (cfg.actions != 3 || cfg.layout.size() != 2 * kObsCells + 4) {
    throw std::invalid_argument("AspPolicy: expects two 40x40 channels, four scalars and three actions");
  }
}

std::array<double, 3> AspPolicy::q_values(const AspObservation& obs) const {
  const std::vector<Real> flat = obs.flatten();
  const Mat<Real> q = agent_.q_values(Eigen::Map<const Mat<Real>>(flat.data(), 1, static_cast<Eigen::Index>(flat.size())));
  return {static_cast<double>(q(0, 0)), static_cast<double>(q(0, 1)), static_cast<double>(q(0, 2))};
}

AspAction AspPolicy::act(const AspObservation& obs, double epsilon, Rng& rng) const {
  if (epsilon > 0.0 && rng.uniform() < epsilon) return static_cast<AspAction>(rng.below(3));
  const auto q = q_values(obs);
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (q[static_cast<std::size_t>(i)] > q[static_cast<std::size_t>(best)]) best = i;
  return static_cast<AspAction>(best);
}

void AspPolicy::save(const std::filesystem::path& path, const BundleMeta& meta) const {
  learn::WeightFile f;
  f.put("encoder", agent_.features().encoder());
  f.put("head", agent_.head());
  f.save(path);
  const auto& c = agent_.config();
  json j = meta_json(meta);
  j["architecture"] = {{"layout", layout_json(c.layout)},
                       {"actions", c.actions},
                       {"feature_size", c.feature_size},
                       {"hidden", c.hidden}};
  j["hyperparameters"] = {{"gamma", c.gamma}, {"lr", c.lr}, {"sync_period", c.sync_period}};
  write_sidecar(path, j);
}

std::unique_ptr<AspPolicy> AspPolicy::load(const std::filesystem::path& path) {
  const json j = read_sidecar(path);
  if (j.at("kind") != "asp") throw std::runtime_error(path.string() + " is not an ASP bundle");
  const json& a = j.at("architecture");
  learn::DqnConfig cfg = default_asp_dqn();
  cfg.layout = layout_from(a.at("layout"));
  cfg.actions = a.at("actions");
  cfg.feature_size = a.at("feature_size");
  cfg.hidden = a.at("hidden").get<std::vector<int>>();
  const learn::WeightFile f = learn::WeightFile::load(path);
  auto policy = std::make_unique<AspPolicy>(cfg);
  f.get("encoder", policy->agent().features().encoder());
  f.get("head", policy->agent().head());
  policy->agent().sync_target();
  return policy;
}

AspAction LearnedAsp::decide(const episode::Observation& obs, const perception::CameraModel& cam) {
  if (!obs.ooi) return AspAction::skip;
  return policy_->act(asp_observation(obs, cam), epsilon_, rng_);
}

episode::Action to_action(AspAction a) {
  switch (a) {
    case AspAction::grasp: return episode::GraspAction{};
    case AspAction::push: return episode::PushAction{};
    case AspAction::skip: break;
  }
  return episode::SkipAction{};
}

double measure_push_reward(const world::WorldState& before, const world::WorldState& after, int ooi_id) {
  const perception::CameraModel cam = perception::CameraModel::for_bin(before.config).downscaled(2);
  const auto prev = freespace::compute_report(perception::render(before, cam), 0);
  const auto cur = freespace::compute_report(perception::render(after, cam), 1);
  return freespace::push_reward(prev, cur, ooi_id);
}

PushTrainConfig push_train_config_from(const KeyValueConfig& kv) {
  PushTrainConfig c;
  c.bin = bin_config_from(kv);
  c.episodes = static_cast<int>(kv.get_int("episodes", c.episodes));
  c.heap_size = static_cast<int>(kv.get_int("heap_size", c.heap_size));
  c.pushes_per_episode = static_cast<int>(kv.get_int("pushes_per_episode", c.pushes_per_episode));
  c.updates_per_step = static_cast<int>(kv.get_int("updates_per_step", c.updates_per_step));
  c.warmup_steps = static_cast<int>(kv.get_int("warmup_steps", c.warmup_steps));
  c.batch = static_cast<int>(kv.get_int("batch", c.batch));
  c.buffer = static_cast<std::size_t>(kv.get_int("buffer", static_cast<std::int64_t>(c.buffer)));
  c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", c.checkpoint_every));
  c.quality_scale = kv.get_double("quality_scale", c.quality_scale);
  c.seed = kv.get_u64("train_seed", c.seed);
  c.sac.gamma = kv.get_double("gamma", c.sac.gamma);
  c.sac.tau = kv.get_double("tau", c.sac.tau);
  c.sac.lr = kv.get_double("lr", c.sac.lr);
  c.sac.alpha_lr = kv.get_double("alpha_lr", c.sac.alpha_lr);
  c.sac.init_alpha = kv.get_double("init_alpha", c.sac.init_alpha);
  if (c.episodes < 1 || c.heap_size < 1 || c.pushes_per_episode < 1 || c.updates_per_step < 0 || c.batch < 1 ||
      c.buffer < static_cast<std::size_t>(c.batch) || c.warmup_steps < 0) {
    throw std::invalid_argument("push training config: counts out of range");
  }
  c.sac.validate();
  return c;
}

AspTrainConfig asp_train_config_from(const KeyValueConfig& kv) {
  AspTrainConfig c;
  c.bin = bin_config_from(kv);
  c.episodes = static_cast<int>(kv.get_int("episodes", c.episodes));
  c.heap_size = static_cast<int>(kv.get_int("heap_size", c.heap_size));
  c.action_cap = static_cast<int>(kv.get_int("action_cap", c.action_cap));
  c.updates_per_step = static_cast<int>(kv.get_int("updates_per_step", c.updates_per_step));
  c.batch = static_cast<int>(kv.get_int("batch", c.batch));
  c.buffer = static_cast<std::size_t>(kv.get_int("buffer", static_cast<std::int64_t>(c.buffer)));
  c.epsilon_start = kv.get_double("epsilon_start", c.epsilon_start);
  c.epsilon_end = kv.get_double("epsilon_end", c.epsilon_end);
  c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", c.checkpoint_every));
  c.seed = kv.get_u64("train_seed", c.seed);
  c.dqn.gamma = kv.get_double("gamma", c.dqn.gamma);
  c.dqn.lr = kv.get_double("lr", c.dqn.lr);
  c.dqn.sync_period = static_cast<int>(kv.get_int("sync_period", c.dqn.sync_period));
  if (c.episodes < 1 || c.heap_size < 1 || c.action_cap < 1 || c.updates_per_step < 0 || c.batch < 1 ||
      c.buffer < static_cast<std::size_t>(c.batch)) {
    throw std::invalid_argument("ASP training config: counts out of range");
  }
  if (!(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0 && c.epsilon_end >= 0.0 && c.epsilon_end <= 1.0)) {
    throw std::invalid_argument("ASP training config: epsilon must lie in [0, 1]");
  }
  c.dqn.validate();
  return c;
}

namespace {

std::uint64_t hash_of(const std::string& text) { return fnv1a64(text); }

std::string push_config_text(const PushTrainConfig& c) {
  std::ostringstream os;
  os << "push episodes=" << c.episodes << " heap=" << c.heap_size << " pushes=" << c.pushes_per_episode
     << " updates=" << c.updates_per_step << " warmup=" << c.warmup_steps << " batch=" << c.batch << " buffer=" << c.buffer
     << " gamma=" << c.sac.gamma << " tau=" << c.sac.tau << " lr=" << c.sac.lr << " scale=" << c.quality_scale
     << " seed=" << c.seed << "\n" << to_key_values(c.bin).canonical();
  return os.str();
}

std::string asp_config_text(const AspTrainConfig& c, const std::string& push) {
  std::ostringstream os;
  os << "asp episodes=" << c.episodes << " heap=" << c.heap_size << " cap=" << c.action_cap
     << " updates=" << c.updates_per_step << " batch=" << c.batch << " buffer=" << c.buffer << " gamma=" << c.dqn.gamma
     << " lr=" << c.dqn.lr << " sync=" << c.dqn.sync_period << " eps=" << c.epsilon_start << ".." << c.epsilon_end
     << " seed=" << c.seed << " push=" << push << "\n" << to_key_values(c.bin).canonical();
  return os.str();
}

void write_curve(const std::filesystem::path& path, const std::vector<CurveRow>& rows, const char* b_name) {
  std::ofstream out(path);
  out << "episode,steps,reward,loss," << b_name << ",alpha,outcome\n";
  out << std::setprecision(9);
  for (const auto& r : rows)
    out << r.episode << ',' << r.steps << ',' << r.reward << ',' << r.loss_a << ',' << r.loss_b << ',' << r.alpha << ','
        << r.outcome << '\n';
}

// init_heap with a bounded number of reseeds for rare placement failures.
world::WorldState fresh_heap(const BinConfig& bin, int n, std::uint64_t seed) {
  for (std::uint64_t k = 0;; ++k) {
    try {
      return world::init_heap(bin, n, k == 0 ? seed : mix_seed(seed, k));
    } catch (const world::PlacementError&) {
      if (k >= 8) throw;
    }
  }
}

}  // namespace

std::unique_ptr<PushPolicy> train_push(const PushTrainConfig& cfg, const std::filesystem::path& out_dir,
                                       std::vector<CurveRow>* curve, const ProgressFn& progress) {
  learn::SacConfig sac = cfg.sac;
  sac.seed = mix_seed(cfg.seed, 1);
  auto policy = std::make_unique<PushPolicy>(sac, cfg.quality_scale);
  auto& agent = policy->agent();
  learn::ReplayBuffer<Real> buffer(cfg.buffer, kObsCells, 6, mix_seed(cfg.seed, 2));
  Rng rng(mix_seed(cfg.seed, 3));
  const perception::CameraModel cam = perception::CameraModel::for_bin(cfg.bin);
  const std::string cfg_text = push_config_text(cfg);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  std::vector<CurveRow> rows;
  auto save = [&](const std::filesystem::path& p, int episodes) {
    policy->save(p, {"push", hash_of(cfg_text), cfg.seed, episodes, git_revision()});
  };

  long total_steps = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    world::WorldState state = fresh_heap(cfg.bin, cfg.heap_size, mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(ep)));
    perception::RenderResult render = perception::render(state, cam);
    const auto ranking = primitives::select_object(render.masks, state.target_id());
    CurveRow row;
    row.episode = ep + 1;
    if (!ranking.empty()) {
      const int ooi = ranking.front() == state.target_id() ? ranking.front()
                                                            : ranking[static_cast<std::size_t>(rng.below(ranking.size()))];
      PushObservation obs = push_observation(render, cam, ooi);
      int updates = 0;
      for (int k = 0; k < cfg.pushes_per_episode; ++k) {
        primitives::PushAction6 a;
        if (total_steps < cfg.warmup_steps) {
          for (auto& x : a.v) x = rng.uniform(-1.0, 1.0);
        } else {
          a = policy->act(obs, false, &rng);
        }
        const primitives::SceneView view{render, cam, cfg.bin};
        const auto cmd = primitives::decode_push_action(a, obs.crop_u, obs.crop_v, view);
        world::WorldState next = cmd ? world::apply_push(state, *cmd) : state;
        const double r = measure_push_reward(state, next, ooi);
        perception::RenderResult next_render = perception::render(next, cam);
        const bool visible = perception::visible_area(next_render.mask_of(ooi)->mask) > primitives::kMinVisibleArea;
        const PushObservation next_obs = visible ? push_observation(next_render, cam, ooi) : obs;
        std::array<Real, 6> act{};
        for (std::size_t i = 0; i < 6; ++i) act[i] = static_cast<Real>(a.v[i]);
        buffer.push(obs.depth, act, static_cast<Real>(r), next_obs.depth, !visible);
        ++total_steps;
        ++row.steps;
        row.reward += r;
        if (total_steps >= cfg.warmup_steps && buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
          for (int u = 0; u < cfg.updates_per_step; ++u) {
            const learn::SacLosses l = agent.update(buffer.sample(static_cast<std::size_t>(cfg.batch)));
            row.loss_a += l.critic;
            row.loss_b += l.actor;
            row.alpha = l.alpha;
            ++updates;
          }
        }
        state = std::move(next);
        render = std::move(next_render);
        obs = next_obs;
        if (!visible) break;
      }
      if (updates > 0) {
        row.loss_a /= updates;
        row.loss_b /= updates;
      }
      row.outcome = "ok";
    } else {
      row.outcome = "no_visible_object";
    }
    rows.push_back(row);
    if (progress) progress(row);
    if (!out_dir.empty() && cfg.checkpoint_every > 0 && (ep + 1) % cfg.checkpoint_every == 0) {
      save(out_dir / ("push_ep" + std::to_string(ep + 1) + ".msnn"), ep + 1);
    }
  }
  if (!out_dir.empty()) {
    save(out_dir / "push.msnn", cfg.episodes);
    write_curve(out_dir / "curve.csv", rows, "actor_loss");
  }
  if (curve) *curve = std::move(rows);
  return policy;
}

std::unique_ptr<AspPolicy> train_asp(const AspTrainConfig& cfg, std::shared_ptr<const episode::PushPlanner> push,
                                     const std::filesystem::path& out_dir, std::vector<CurveRow>* curve,
                                     const ProgressFn& progress) {
  if (!push) throw std::invalid_argument("train_asp: a push planner is required");
  learn::DqnConfig dqn = cfg.dqn;
  dqn.seed = mix_seed(cfg.seed, 1);
  auto policy = std::make_unique<AspPolicy>(dqn);
  const int obs_dim = 2 * kObsCells + 4;
  learn::ReplayBuffer<Real> buffer(cfg.buffer, obs_dim, 1, mix_seed(cfg.seed, 2));
  Rng rng(mix_seed(cfg.seed, 3));
  const perception::CameraModel cam = perception::CameraModel::for_bin(cfg.bin);
  const learn::EpsilonSchedule schedule{cfg.epsilon_start, cfg.epsilon_end,
                                        static_cast<std::uint64_t>(std::max(1, cfg.episodes / 2))};
  const std::string cfg_text = asp_config_text(cfg, push->name());
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  std::vector<CurveRow> rows;
  auto save = [&](const std::filesystem::path& p, int episodes) {
    policy->save(p, {"asp", hash_of(cfg_text), cfg.seed, episodes, git_revision()});
  };

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = schedule.value(static_cast<std::uint64_t>(ep));
    episode::Episode run(fresh_heap(cfg.bin, cfg.heap_size, mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(ep))), push,
                         cfg.action_cap);
    CurveRow row;
    row.episode = ep + 1;
    row.loss_b = eps;
    int updates = 0;
    AspObservation obs = asp_observation(run.observation(), cam);
    while (!run.finished()) {
      const AspAction a = run.observation().ooi ? policy->act(obs, eps, rng) : AspAction::skip;
      const episode::StepRecord& rec = run.step(to_action(a));
      const AspObservation next = asp_observation(run.observation(), cam);
      const bool terminal = run.outcome() == episode::Outcome::success || run.outcome() == episode::Outcome::target_lost;
      const std::vector<Real> o = obs.flatten();
      const std::vector<Real> n = next.flatten();
      const Real act[1] = {static_cast<Real>(static_cast<int>(a))};
      buffer.push(o, act, static_cast<Real>(rec.reward), n, terminal);
      row.reward += rec.reward;
      ++row.steps;
      if (buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
        for (int u = 0; u < cfg.updates_per_step; ++u) {
          row.loss_a += policy->agent().update(buffer.sample(static_cast<std::size_t>(cfg.batch))).loss;
          ++updates;
        }
      }
      obs = next;
    }
    if (updates > 0) row.loss_a /= updates;
    row.outcome = episode::to_string(run.outcome());
    rows.push_back(row);
    if (progress) progress(row);
    if (!out_dir.empty() && cfg.checkpoint_every > 0 && (ep + 1) % cfg.checkpoint_every == 0) {
      save(out_dir / ("asp_ep" + std::to_string(ep + 1) + ".msnn"), ep + 1);
    }
  }
  if (!out_dir.empty()) {
    save(out_dir / "asp.msnn", cfg.episodes);
    write_curve(out_dir / "curve.csv", rows, "epsilon");
  }
  if (curve) *curve = std::move(rows);
  return policy;
}

}  // namespace ms::agents
