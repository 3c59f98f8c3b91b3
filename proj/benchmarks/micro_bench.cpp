#include <benchmark/benchmark.h>

#include <memory>

#include "ms/agents.hpp"
#include "ms/episode.hpp"
#include "ms/freespace.hpp"
#include "ms/learn/replay.hpp"
#include "ms/perception.hpp"
#include "ms/primitives.hpp"
#include "ms/world.hpp"

namespace {

using namespace ms;

struct Scene {
  BinConfig bin;
  perception::CameraModel cam = perception::CameraModel::for_bin(bin);
  world::WorldState state = world::init_heap(bin, 10, 7);
  perception::RenderResult render = perception::render(state, cam);
};

const Scene& scene() {
  static const Scene s;
  return s;
}

void BM_Render(benchmark::State& st) {
  const Scene& s = scene();
  for (auto _ : st) benchmark::DoNotOptimize(perception::render(s.state, s.cam));
}
BENCHMARK(BM_Render)->Unit(benchmark::kMillisecond);

void BM_DistanceTransform(benchmark::State& st) {
  const Scene& s = scene();
  const Mask free = freespace::bfs_mask(s.render.bin_bottom, s.render.masks, *s.state.target_id());
  for (auto _ : st) benchmark::DoNotOptimize(freespace::distance_transform(free));
  st.SetItemsProcessed(st.iterations() * free.rows() * free.cols());
}
BENCHMARK(BM_DistanceTransform)->Unit(benchmark::kMillisecond);

void BM_FreeSpaceReportHalfRes(benchmark::State& st) {
  const Scene& s = scene();
  const auto cam = s.cam.downscaled(2);
  const auto r = perception::render(s.state, cam);
  for (auto _ : st) benchmark::DoNotOptimize(freespace::compute_report(r, 0));
}
BENCHMARK(BM_FreeSpaceReportHalfRes)->Unit(benchmark::kMillisecond);

void BM_FspPlanPush(benchmark::State& st) {
  const Scene& s = scene();
  const primitives::SceneView view{s.render, s.cam, s.bin};
  for (auto _ : st) benchmark::DoNotOptimize(primitives::fsp_plan_push(view, *s.state.target_id()));
}
BENCHMARK(BM_FspPlanPush)->Unit(benchmark::kMillisecond);

void BM_PlanGrasp(benchmark::State& st) {
  const Scene& s = scene();
  const primitives::SceneView view{s.render, s.cam, s.bin};
  for (auto _ : st) benchmark::DoNotOptimize(primitives::plan_grasp(view, *s.state.target_id()));
}
BENCHMARK(BM_PlanGrasp)->Unit(benchmark::kMillisecond);

void BM_LearnedPushPropose(benchmark::State& st) {
  const Scene& s = scene();
  const agents::PushPolicy policy(agents::default_push_sac(1));
  const primitives::SceneView view{s.render, s.cam, s.bin};
  for (auto _ : st) benchmark::DoNotOptimize(policy.propose(view, *s.state.target_id()));
}
BENCHMARK(BM_LearnedPushPropose)->Unit(benchmark::kMillisecond);

void BM_ApplyPush(benchmark::State& st) {
  const Scene& s = scene();
  const primitives::SceneView view{s.render, s.cam, s.bin};
  const auto cmd = primitives::decode_push_pixel(320, 240, 0.3, 1.8, view);
  for (auto _ : st) benchmark::DoNotOptimize(world::apply_push(s.state, cmd));
}
BENCHMARK(BM_ApplyPush)->Unit(benchmark::kMillisecond);

void BM_SacUpdate(benchmark::State& st) {
  learn::SacAgent<agents::Real> agent(agents::default_push_sac(3));
  learn::ReplayBuffer<agents::Real> buf(1024, agents::kObsCells, 6, 5);
  Rng rng(9);
  std::vector<agents::Real> o(agents::kObsCells), n(agents::kObsCells), a(6);
  for (int i = 0; i < 256; ++i) {
    for (auto& x : o) x = static_cast<agents::Real>(rng.uniform());
    for (auto& x : n) x = static_cast<agents::Real>(rng.uniform());
    for (auto& x : a) x = static_cast<agents::Real>(rng.uniform(-1.0, 1.0));
    buf.push(o, a, static_cast<agents::Real>(rng.uniform()), n, false);
  }
  const auto batch = buf.sample(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(agent.update(batch));
}
BENCHMARK(BM_SacUpdate)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DqnUpdate(benchmark::State& st) {
  learn::DqnAgent<agents::Real> agent(agents::default_asp_dqn(3));
  const int dim = 2 * agents::kObsCells + 4;
  learn::ReplayBuffer<agents::Real> buf(1024, dim, 1, 5);
  Rng rng(9);
  std::vector<agents::Real> o(dim), n(dim), a(1);
  for (int i = 0; i < 256; ++i) {
    for (auto& x : o) x = static_cast<agents::Real>(rng.uniform());
    for (auto& x : n) x = static_cast<agents::Real>(rng.uniform());
    a[0] = static_cast<agents::Real>(rng.below(3));
    buf.push(o, a, -1.0f, n, false);
  }
  const auto batch = buf.sample(64);
  for (auto _ : st) benchmark::DoNotOptimize(agent.update(batch));
}
BENCHMARK(BM_DqnUpdate)->Unit(benchmark::kMillisecond);

void BM_HeuristicEpisode(benchmark::State& st) {
  const BinConfig bin;
  auto fsp = std::make_shared<episode::FspPushPlanner>();
  agents::HeuristicAsp asp;
  std::uint64_t seed = 100;
  for (auto _ : st) {
    episode::Episode ep(world::init_heap(bin, 8, seed++), fsp);
    while (!ep.finished()) ep.step(agents::to_action(asp.decide(ep.observation(), ep.camera())));
    benchmark::DoNotOptimize(ep.outcome());
  }
}
BENCHMARK(BM_HeuristicEpisode)->Unit(benchmark::kMillisecond)->Iterations(10);

}  // namespace

BENCHMARK_MAIN();
