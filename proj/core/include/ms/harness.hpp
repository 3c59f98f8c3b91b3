#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ms/agents.hpp"
#include "ms/config.hpp"
#include "ms/episode.hpp"

namespace ms::harness {

using json = nlohmann::ordered_json;

inline constexpr int kReportVersion = 1;

enum class AspKind { heuristic, learned };
enum class PushKind { fsp, learned };
const char* to_string(AspKind k);
const char* to_string(PushKind k);

struct SetupSpec {
  int id = 1;
  AspKind asp = AspKind::heuristic;
  PushKind push = PushKind::fsp;
  int heap_size = 8;
  int trials = 50;
  std::uint64_t seed = 0;
  int action_cap = episode::kActionCap;
};

// Setups 1..4: (heuristic, fsp), (heuristic, learned), (learned, fsp),
// (learned, learned).
SetupSpec setup_spec(int id, int heap_size = 8, int trials = 50, std::uint64_t seed = 0);
// "all", a single id, or a comma list.
std::vector<int> parse_setups(const std::string& text);

class PolicyLoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Frozen policies shared read-only across trials.
struct PolicySet {
  std::shared_ptr<const episode::PushPlanner> fsp = std::make_shared<episode::FspPushPlanner>();
  std::shared_ptr<const agents::PushPolicy> push;
  std::shared_ptr<const agents::AspPolicy> asp;
  primitives::Thresholds thresholds;
  primitives::GraspSampling sampling;
  std::string push_source;  // provenance strings for the config snapshot
  std::string asp_source;

  static PolicySet load(const std::optional<std::filesystem::path>& push_weights,
                        const std::optional<std::filesystem::path>& asp_weights);
  // Throws PolicyLoadError when `spec` needs a policy that is not loaded.
  void require(const SetupSpec& spec) const;
  std::shared_ptr<const episode::PushPlanner> planner(PushKind k) const;
  std::unique_ptr<agents::AspDecider> decider(AspKind k) const;
};

struct TrialRecord {
  int setup = 0;
  std::uint64_t seed = 0;
  int heap_size = 0;
  int action_cap = episode::kActionCap;
  std::string asp;
  std::string push;
  std::vector<episode::StepRecord> steps;
  episode::Outcome outcome = episode::Outcome::running;
  int action_count = 0;
  std::string final_state;  // hex FNV-1a of the serialized terminal world

  bool success() const { return outcome == episode::Outcome::success; }
};

// Paired seeds: trial i draws the same heap under every setup.
std::uint64_t trial_seed(std::uint64_t base, int trial);

TrialRecord run_trial(const SetupSpec& spec, const PolicySet& policies, std::uint64_t seed, const BinConfig& bin = {});

// Re-executes a recorded action sequence on the heap drawn from `seed`.
TrialRecord run_scripted(const SetupSpec& spec, const PolicySet& policies, std::uint64_t seed,
                         const std::vector<episode::Action>& script, const BinConfig& bin = {});

// The action a step record was produced from.
episode::Action action_of(const episode::StepRecord& rec);

TrialRecord record_of(const episode::Episode& ep, const SetupSpec& spec, std::uint64_t seed, const std::string& asp_name);

struct SetupSummary {
  int setup = 0;
  std::string asp;
  std::string push;
  int heap_size = 0;
  int trials = 0;
  int successes = 0;
  std::map<std::string, int> outcomes;
  std::optional<double> mean_actions;  // over successful trials
  std::optional<double> std_actions;   // sample std, needs >= 2 successes
  std::vector<double> success_curve;   // k = 1..action_cap: P(success with <= k actions)
  long grasps = 0;
  long pushes = 0;
  long skips = 0;          // executed skips, including converted infeasible choices
  long charged_skips = 0;  // skips that consumed an action slot
  long infeasible = 0;     // chosen primitive with no plan, executed as skip
  std::optional<double> grasp_fraction;  // over executed grasps + pushes
  std::optional<double> push_fraction;

  double success_within(int k) const;
};

struct BenchmarkReport {
  int version = kReportVersion;
  std::vector<SetupSummary> setups;
  std::map<std::string, std::string> config;
  std::string action_accounting;
};

extern const char* const kAccountingNote;

SetupSummary summarize(const SetupSpec& spec, std::span<const TrialRecord> trials);

// Worker count: MS_THREADS when set, else the hardware concurrency.
int worker_count();

// Runs every spec's trials over `threads` workers. Per-trial records are
// returned in (spec, trial) order when `records` is non-null.
BenchmarkReport run_benchmark(const std::vector<SetupSpec>& specs, const PolicySet& policies, const BinConfig& bin = {},
                              int threads = 0, std::vector<std::vector<TrialRecord>>* records = nullptr);

// Report from stored trial records; run_benchmark uses the same path.
BenchmarkReport aggregate(const std::vector<SetupSpec>& specs, const std::vector<std::vector<TrialRecord>>& records,
                          const PolicySet& policies, const BinConfig& bin);

json to_json(const world::PushCommand& c);
json to_json(const world::GraspCommand& c);
json to_json(const episode::StepRecord& r);
json to_json(const TrialRecord& t);
json to_json(const SetupSummary& s);
json to_json(const BenchmarkReport& r);

world::PushCommand push_command_from(const json& j);
world::GraspCommand grasp_command_from(const json& j);
episode::StepRecord step_from_json(const json& j);
TrialRecord trial_from_json(const json& j);
SetupSummary summary_from_json(const json& j);
BenchmarkReport report_from_json(const json& j);

// Parses JSONL holding benchmark trial records and/or service session log
// lines; session lines are grouped into one record per session id, in order
// of first appearance after all plain trial records.
std::vector<TrialRecord> trials_from_jsonl(std::istream& in);

// Re-executes a recorded trial and reports whether outcome, action count and
// final state hash (when recorded) agree.
struct ReplayResult {
  TrialRecord replayed;
  bool match = false;
};
ReplayResult replay(const TrialRecord& recorded, const PolicySet& policies, const BinConfig& bin = {});

primitives::AspAction asp_action_from(const std::string& s);
episode::Outcome outcome_from(const std::string& s);

// Writes report.json, curves.csv, curves.dat (gnuplot blocks), trials.jsonl
// and manifest.json into `dir`.
void report_emit(const BenchmarkReport& report, const std::vector<std::vector<TrialRecord>>& records,
                 const std::filesystem::path& dir);

std::string dump_report(const BenchmarkReport& report);
std::string curves_csv(const BenchmarkReport& report);
std::string curves_dat(const BenchmarkReport& report);

std::string hash_hex(const std::string& bytes);

}  // namespace ms::harness
