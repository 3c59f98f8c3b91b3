#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ms/agents.hpp"
#include "ms/harness.hpp"
#include "ms/service.hpp"

namespace fs = std::filesystem;
using ms::harness::json;

namespace {

ms::KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? ms::KeyValueConfig{} : ms::KeyValueConfig::load(path);
}

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

void write_manifest(const fs::path& dir, const std::string& command, const ms::KeyValueConfig& cfg) {
  json m;
  m["command"] = command;
  m["git_revision"] = ms::agents::git_revision();
  m["config"] = cfg.values();
  json files = json::array();
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  for (const auto& n : names) files.push_back(n);
  m["files"] = files;
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

int cmd_bench(const std::string& setups, int heap, int trials, std::uint64_t seed, const std::string& push_w,
              const std::string& asp_w, const std::string& out, const std::string& config, int threads) {
  const ms::KeyValueConfig kv = load_config(config);
  const ms::BinConfig bin = ms::bin_config_from(kv);
  std::vector<ms::harness::SetupSpec> specs;
  for (int id : ms::harness::parse_setups(setups)) specs.push_back(ms::harness::setup_spec(id, heap, trials, seed));
  const auto policies = ms::harness::PolicySet::load(opt_path(push_w), opt_path(asp_w));
  for (const auto& s : specs) policies.require(s);
  std::vector<std::vector<ms::harness::TrialRecord>> records;
  const auto report = ms::harness::run_benchmark(specs, policies, bin, threads, &records);
  ms::harness::report_emit(report, records, out);
  for (const auto& s : report.setups) {
    std::printf("setup %d (%s/%s): %d/%d success, mean actions %s, within 17: %.3f\n", s.setup, s.asp.c_str(),
                s.push.c_str(), s.successes, s.trials,
                s.mean_actions ? std::to_string(*s.mean_actions).c_str() : "n/a", s.success_within(17));
  }
  return 0;
}

int cmd_train(const std::string& which, const std::string& config, const std::string& out, const std::string& push_w,
              bool quiet) {
  const ms::KeyValueConfig kv = load_config(config);
  fs::create_directories(out);
  auto report = [quiet](const ms::agents::CurveRow& r) {
    if (!quiet && (r.episode % 10 == 0 || r.episode == 1)) {
      std::printf("episode %d steps %d reward %.4f loss %.4g %s\n", r.episode, r.steps, r.reward, r.loss_a,
                  r.outcome.c_str());
      std::fflush(stdout);
    }
  };
  if (which == "push") {
    ms::agents::train_push(ms::agents::push_train_config_from(kv), out, nullptr, report);
  } else {
    const auto cfg = ms::agents::asp_train_config_from(kv);
    std::string push = push_w.empty() ? kv.get_string("push", "fsp") : push_w;
    std::shared_ptr<const ms::episode::PushPlanner> planner;
    if (push == "fsp") {
      planner = std::make_shared<ms::episode::FspPushPlanner>();
    } else {
      planner = ms::agents::PushPolicy::load(push);
    }
    ms::agents::train_asp(cfg, planner, out, nullptr, report);
  }
  write_manifest(out, "train " + which, kv);
  return 0;
}

// Each line is either a trial record (benchmark trials.jsonl) or a service
// session log record; session logs are grouped by session id.
int cmd_replay(const std::string& file, const std::string& push_w, const std::string& config) {
  const ms::BinConfig bin = ms::bin_config_from(load_config(config));
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file);
  const auto policies = ms::harness::PolicySet::load(opt_path(push_w), std::nullopt);
  int bad = 0;
  for (const auto& t : ms::harness::trials_from_jsonl(in)) {
    const auto r = ms::harness::replay(t, policies, bin);
    std::printf("seed %llu: %s in %d actions, final %s %s\n", static_cast<unsigned long long>(t.seed),
                ms::episode::to_string(r.replayed.outcome), r.replayed.action_count, r.replayed.final_state.c_str(),
                r.match ? "MATCH" : "MISMATCH");
    if (!r.match) ++bad;
  }
  return bad == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mechanical search simulator, policies and benchmark harness"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "run the setup matrix and write a report");
  std::string setups = "all", push_w, asp_w, out = "out", config;
  int heap = 8, trials = 50, threads = 0;
  std::uint64_t seed = 0;
  bench->add_option("--setup", setups, "1|2|3|4|all or a comma list");
  bench->add_option("--heap-size", heap)->check(CLI::PositiveNumber);
  bench->add_option("--trials", trials)->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed);
  bench->add_option("--push-weights", push_w);
  bench->add_option("--asp-weights", asp_w);
  bench->add_option("--out", out);
  bench->add_option("--config", config, "bin config (key = value)");
  bench->add_option("--threads", threads, "worker count; MS_THREADS overrides the default");

  auto* train = app.add_subcommand("train", "train the push or ASP policy");
  std::string which, train_cfg, train_out = "out", train_push;
  bool quiet = false;
  train->add_option("policy", which)->required()->check(CLI::IsMember({"push", "asp"}));
  train->add_option("--config", train_cfg);
  train->add_option("--out", train_out);
  train->add_option("--push-weights", train_push, "push policy for ASP training (default: config key push, else fsp)");
  train->add_flag("--quiet", quiet);

  auto* replay = app.add_subcommand("replay", "re-execute recorded trials or session logs and compare");
  std::string trial_file, replay_push, replay_cfg;
  replay->add_option("--trial", trial_file)->required();
  replay->add_option("--push-weights", replay_push);
  replay->add_option("--config", replay_cfg);

  auto* serve = app.add_subcommand("serve", "run the rollout server");
  ms::service::ServerOptions so;
  std::string serve_push, serve_cfg;
  serve->add_option("--port", so.port);
  serve->add_option("--host", so.host);
  serve->add_option("--capacity", so.capacity);
  serve->add_option("--log-dir", so.log_dir);
  serve->add_option("--static-dir", so.static_dir, "operator UI bundle to serve at /");
  serve->add_option("--push-weights", serve_push);
  serve->add_option("--config", serve_cfg);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*bench) return cmd_bench(setups, heap, trials, seed, push_w, asp_w, out, config, threads);
    if (*train) return cmd_train(which, train_cfg, train_out, train_push, quiet);
    if (*replay) return cmd_replay(trial_file, replay_push, replay_cfg);
    if (*serve) {
      so.bin = ms::bin_config_from(load_config(serve_cfg));
      if (!serve_push.empty()) so.push = ms::agents::PushPolicy::load(serve_push);
      ms::service::Server server(so);
      std::printf("listening on %s:%d\n", so.host.c_str(), server.port());
      std::fflush(stdout);
      server.run();
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
