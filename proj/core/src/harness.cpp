#include "ms/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "ms/learn/weights_io.hpp"

namespace ms::harness {

using episode::Outcome;
using primitives::AspAction;

const char* const kAccountingNote =
    "action_count counts executed grasps and pushes plus one slot each time a full pass over the ranked "
    "objects ends in skips; skips inside a pass are free but cost -1 reward";

const char* to_string(AspKind k) { return k == AspKind::heuristic ? "heuristic" : "learned"; }
const char* to_string(PushKind k) { return k == PushKind::fsp ? "fsp" : "learned"; }

SetupSpec setup_spec(int id, int heap_size, int trials, std::uint64_t seed) {
  if (id < 1 || id > 4) throw std::invalid_argument("setup must be 1..4, got " + std::to_string(id));
  if (heap_size < 1) throw std::invalid_argument("heap size must be >= 1");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  SetupSpec s;
  s.id = id;
  s.asp = id <= 2 ? AspKind::heuristic : AspKind::learned;
  s.push = id % 2 == 1 ? PushKind::fsp : PushKind::learned;
  s.heap_size = heap_size;
  s.trials = trials;
  s.seed = seed;
  return s;
}

std::vector<int> parse_setups(const std::string& text) {
  if (text == "all") return {1, 2, 3, 4};
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    int id = 0;
    try {
      id = std::stoi(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size() || id < 1 || id > 4) throw std::invalid_argument("bad setup '" + item + "'");
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  }
  if (out.empty()) throw std::invalid_argument("no setups given");
  return out;
}

namespace {

std::string file_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ostringstream os;
  os << p.filename().string() << " crc32=" << std::hex << std::setw(8) << std::setfill('0')
     << learn::crc32_of({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
  return os.str();
}

}  // namespace

PolicySet PolicySet::load(const std::optional<std::filesystem::path>& push_weights,
                          const std::optional<std::filesystem::path>& asp_weights) {
  PolicySet p;
  try {
    if (push_weights) {
      p.push = agents::PushPolicy::load(*push_weights);
      p.push_source = file_digest(*push_weights);
    }
    if (asp_weights) {
      p.asp = agents::AspPolicy::load(*asp_weights);
      p.asp_source = file_digest(*asp_weights);
    }
  } catch (const std::exception& e) {
    throw PolicyLoadError(std::string("cannot load policy: ") + e.what());
  }
  return p;
}

void PolicySet::require(const SetupSpec& spec) const {
  if (spec.push == PushKind::learned && !push) {
    throw PolicyLoadError("setup " + std::to_string(spec.id) + " needs learned push weights");
  }
  if (spec.asp == AspKind::learned && !asp) {
    throw PolicyLoadError("setup " + std::to_string(spec.id) + " needs learned ASP weights");
  }
}

std::shared_ptr<const episode::PushPlanner> PolicySet::planner(PushKind k) const {
  if (k == PushKind::fsp) return fsp;
  if (!push) throw PolicyLoadError("learned push policy not loaded");
  return push;
}

std::unique_ptr<agents::AspDecider> PolicySet::decider(AspKind k) const {
  if (k == AspKind::heuristic) return std::make_unique<agents::HeuristicAsp>(thresholds);
  if (!asp) throw PolicyLoadError("learned ASP not loaded");
  return std::make_unique<agents::LearnedAsp>(asp, 0.0);
}

std::uint64_t trial_seed(std::uint64_t base, int trial) { return mix_seed(base, static_cast<std::uint64_t>(trial)); }

std::string hash_hex(const std::string& bytes) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return os.str();
}

TrialRecord record_of(const episode::Episode& ep, const SetupSpec& spec, std::uint64_t seed, const std::string& asp_name) {
  TrialRecord t;
  t.setup = spec.id;
  t.seed = seed;
  t.heap_size = spec.heap_size;
  t.action_cap = spec.action_cap;
  t.asp = asp_name;
  t.push = to_string(spec.push);
  t.steps = ep.log();
  t.outcome = ep.outcome();
  t.action_count = ep.action_count();
  t.final_state = hash_hex(world::serialize(ep.state()));
  return t;
}

TrialRecord run_trial(const SetupSpec& spec, const PolicySet& policies, std::uint64_t seed, const BinConfig& bin) {
  policies.require(spec);
  auto decider = policies.decider(spec.asp);
  episode::Episode ep(world::init_heap(bin, spec.heap_size, seed), policies.planner(spec.push), spec.action_cap,
                      policies.sampling);
  while (!ep.finished()) ep.step(agents::to_action(decider->decide(ep.observation(), ep.camera())));
  return record_of(ep, spec, seed, decider->name());
}

TrialRecord run_scripted(const SetupSpec& spec, const PolicySet& policies, std::uint64_t seed,
                         const std::vector<episode::Action>& script, const BinConfig& bin) {
  episode::Episode ep(world::init_heap(bin, spec.heap_size, seed), policies.planner(spec.push), spec.action_cap,
                      policies.sampling);
  for (const auto& a : script) {
    if (ep.finished()) throw episode::EpisodeFinished("script continues past the end of the episode");
    ep.step(a);
  }
  return record_of(ep, spec, seed, "scripted");
}

episode::Action action_of(const episode::StepRecord& rec) {
  switch (rec.chosen) {
    case AspAction::skip: return episode::SkipAction{};
    case AspAction::grasp: return episode::GraspAction{rec.grasp_object};
    case AspAction::push: return episode::PushAction{rec.pixel_push};
  }
  return episode::SkipAction{};
}

double SetupSummary::success_within(int k) const {
  if (k < 1 || success_curve.empty()) return 0.0;
  return success_curve[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(success_curve.size())) - 1)];
}

SetupSummary summarize(const SetupSpec& spec, std::span<const TrialRecord> trials) {
  SetupSummary s;
  s.setup = spec.id;
  s.asp = to_string(spec.asp);
  s.push = to_string(spec.push);
  s.heap_size = spec.heap_size;
  s.trials = static_cast<int>(trials.size());
  for (const char* o : {"success", "target_lost", "cap_exceeded"}) s.outcomes[o] = 0;
  std::vector<double> counts;
  std::vector<int> by_k(static_cast<std::size_t>(spec.action_cap) + 1, 0);
  for (const auto& t : trials) {
    ++s.outcomes[episode::to_string(t.outcome)];
    if (t.success()) {
      counts.push_back(t.action_count);
      ++by_k[static_cast<std::size_t>(std::clamp(t.action_count, 0, spec.action_cap))];
    }
    for (const auto& r : t.steps) {
      switch (r.executed) {
        case AspAction::grasp: ++s.grasps; break;
        case AspAction::push: ++s.pushes; break;
        case AspAction::skip:
          ++s.skips;
          if (r.charged) ++s.charged_skips;
          if (r.chosen != AspAction::skip) ++s.infeasible;
          break;
      }
    }
  }
  s.successes = static_cast<int>(counts.size());
  if (!counts.empty()) {
    double sum = 0.0;
    for (double c : counts) sum += c;
    const double mean = sum / static_cast<double>(counts.size());
    s.mean_actions = mean;
    if (counts.size() >= 2) {
      double ss = 0.0;
      for (double c : counts) ss += (c - mean) * (c - mean);
      s.std_actions = std::sqrt(ss / static_cast<double>(counts.size() - 1));
    }
  }
  s.success_curve.assign(static_cast<std::size_t>(spec.action_cap), 0.0);
  int cum = by_k[0];
  for (int k = 1; k <= spec.action_cap; ++k) {
    cum += by_k[static_cast<std::size_t>(k)];
    s.success_curve[static_cast<std::size_t>(k - 1)] = trials.empty() ? 0.0 : static_cast<double>(cum) / s.trials;
  }
  const long executed = s.grasps + s.pushes;
  if (executed > 0) {
    s.grasp_fraction = static_cast<double>(s.grasps) / static_cast<double>(executed);
    s.push_fraction = static_cast<double>(s.pushes) / static_cast<double>(executed);
  }
  return s;
}

int worker_count() {
  if (const char* env = std::getenv("MS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw std::invalid_argument(std::string("MS_THREADS must be a positive integer, got '") + env + "'");
  }
  return static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
}

BenchmarkReport aggregate(const std::vector<SetupSpec>& specs, const std::vector<std::vector<TrialRecord>>& records,
                          const PolicySet& policies, const BinConfig& bin) {
  if (specs.size() != records.size()) throw std::invalid_argument("aggregate: one record list per setup expected");
  BenchmarkReport r;
  r.action_accounting = kAccountingNote;
  for (std::size_t i = 0; i < specs.size(); ++i) r.setups.push_back(summarize(specs[i], records[i]));
  const KeyValueConfig bin_kv = to_key_values(bin);
  for (const auto& [k, v] : bin_kv.values()) r.config["bin." + k] = v;
  std::ostringstream th;
  th << std::setprecision(17) << policies.thresholds.q_grasp_thresh;
  r.config["thresholds.q_grasp"] = th.str();
  th.str("");
  th << policies.thresholds.q_push_thresh;
  r.config["thresholds.q_push"] = th.str();
  r.config["sampling.angles"] = std::to_string(policies.sampling.angles);
  r.config["sampling.centers"] = std::to_string(policies.sampling.centers);
  if (!specs.empty()) {
    r.config["seed"] = std::to_string(specs.front().seed);
    r.config["trials"] = std::to_string(specs.front().trials);
    r.config["heap_size"] = std::to_string(specs.front().heap_size);
    r.config["action_cap"] = std::to_string(specs.front().action_cap);
  }
  r.config["push_weights"] = policies.push_source.empty() ? "none" : policies.push_source;
  r.config["asp_weights"] = policies.asp_source.empty() ? "none" : policies.asp_source;
  return r;
}

BenchmarkReport run_benchmark(const std::vector<SetupSpec>& specs, const PolicySet& policies, const BinConfig& bin,
                              int threads, std::vector<std::vector<TrialRecord>>* records) {
  for (const auto& s : specs) policies.require(s);
  std::vector<std::vector<TrialRecord>> out(specs.size());
  std::vector<std::pair<std::size_t, int>> jobs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out[i].resize(static_cast<std::size_t>(specs[i].trials));
    for (int t = 0; t < specs[i].trials; ++t) jobs.emplace_back(i, t);
  }
  const int n = std::max(1, std::min<int>(threads > 0 ? threads : worker_count(), static_cast<int>(jobs.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto work = [&](int w) {
    try {
      for (std::size_t j = next++; j < jobs.size(); j = next++) {
        const auto [si, t] = jobs[j];
        out[si][static_cast<std::size_t>(t)] = run_trial(specs[si], policies, trial_seed(specs[si].seed, t), bin);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
      next = jobs.size();
    }
  };
  if (n == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  BenchmarkReport r = aggregate(specs, out, policies, bin);
  if (records) *records = std::move(out);
  return r;
}

// ---- JSON ----

namespace {

json opt_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
json opt_double(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<int> read_opt_int(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<int>();
}
std::optional<double> read_opt_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

json to_json(const world::PushCommand& c) {
  return {{"x", c.p_start.x}, {"y", c.p_start.y},     {"z", c.z_push},
          {"alpha", c.alpha_push}, {"phi", c.phi_yaw}, {"length", c.length}};
}

json to_json(const world::GraspCommand& c) {
  return {{"x", c.center.x}, {"y", c.center.y}, {"axis", c.axis_angle}, {"width", c.jaw_width}, {"object_id", c.object_id}};
}

world::PushCommand push_command_from(const json& j) {
  world::PushCommand c;
  c.p_start = {j.at("x").get<double>(), j.at("y").get<double>()};
  c.z_push = j.at("z");
  c.alpha_push = j.at("alpha");
  c.phi_yaw = j.at("phi");
  c.length = j.at("length");
  return c;
}

world::GraspCommand grasp_command_from(const json& j) {
  world::GraspCommand c;
  c.center = {j.at("x").get<double>(), j.at("y").get<double>()};
  c.axis_angle = j.at("axis");
  c.jaw_width = j.at("width");
  c.object_id = j.at("object_id");
  return c;
}

AspAction asp_action_from(const std::string& s) {
  if (s == "skip") return AspAction::skip;
  if (s == "grasp") return AspAction::grasp;
  if (s == "push") return AspAction::push;
  throw std::invalid_argument("unknown action '" + s + "'");
}

Outcome outcome_from(const std::string& s) {
  for (Outcome o : {Outcome::running, Outcome::success, Outcome::target_lost, Outcome::cap_exceeded})
    if (s == episode::to_string(o)) return o;
  throw std::invalid_argument("unknown outcome '" + s + "'");
}

json to_json(const episode::StepRecord& r) {
  json j;
  j["index"] = r.index;
  j["chosen"] = primitives::to_string(r.chosen);
  j["executed"] = primitives::to_string(r.executed);
  j["ooi"] = opt_int(r.ooi);
  j["q_grasp"] = r.quality.q_grasp;
  j["q_push"] = r.quality.q_push;
  j["grasp_object"] = opt_int(r.grasp_object);
  j["grasp"] = r.grasp ? to_json(*r.grasp) : json(nullptr);
  j["push"] = r.push ? to_json(*r.push) : json(nullptr);
  j["pixel_push"] = r.pixel_push ? json{{"u", r.pixel_push->u},
                                        {"v", r.pixel_push->v},
                                        {"alpha", r.pixel_push->alpha},
                                        {"phi", r.pixel_push->phi}}
                                 : json(nullptr);
  j["grasp_result"] = r.grasp_result.empty() ? json(nullptr) : json(r.grasp_result);
  j["reward"] = r.reward;
  j["charged"] = r.charged;
  j["action_count"] = r.action_count;
  j["outcome"] = episode::to_string(r.outcome);
  return j;
}

episode::StepRecord step_from_json(const json& j) {
  episode::StepRecord r;
  r.index = j.at("index");
  r.chosen = asp_action_from(j.at("chosen"));
  r.executed = asp_action_from(j.at("executed"));
  r.ooi = read_opt_int(j, "ooi");
  r.quality = {j.at("q_grasp").get<double>(), j.at("q_push").get<double>()};
  r.grasp_object = read_opt_int(j, "grasp_object");
  if (!j.at("grasp").is_null()) r.grasp = grasp_command_from(j.at("grasp"));
  if (!j.at("push").is_null()) r.push = push_command_from(j.at("push"));
  if (!j.at("pixel_push").is_null()) {
    const json& p = j.at("pixel_push");
    r.pixel_push = episode::PixelPush{p.at("u"), p.at("v"), p.at("alpha"), p.at("phi")};
  }
  if (!j.at("grasp_result").is_null()) r.grasp_result = j.at("grasp_result");
  r.reward = j.at("reward");
  r.charged = j.at("charged");
  r.action_count = j.at("action_count");
  r.outcome = outcome_from(j.at("outcome"));
  return r;
}

json to_json(const TrialRecord& t) {
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back(to_json(s));
  return {{"setup", t.setup},
          {"seed", t.seed},
          {"heap_size", t.heap_size},
          {"action_cap", t.action_cap},
          {"asp", t.asp},
          {"push", t.push},
          {"outcome", episode::to_string(t.outcome)},
          {"action_count", t.action_count},
          {"final_state", t.final_state},
          {"steps", std::move(steps)}};
}

TrialRecord trial_from_json(const json& j) {
  TrialRecord t;
  t.setup = j.at("setup");
  t.seed = j.at("seed");
  t.heap_size = j.at("heap_size");
  t.action_cap = j.at("action_cap");
  t.asp = j.at("asp");
  t.push = j.at("push");
  t.outcome = outcome_from(j.at("outcome"));
  t.action_count = j.at("action_count");
  t.final_state = j.at("final_state");
  for (const auto& s : j.at("steps")) t.steps.push_back(step_from_json(s));
  return t;
}

json to_json(const SetupSummary& s) {
  return {{"setup", s.setup},
          {"asp", s.asp},
          {"push", s.push},
          {"heap_size", s.heap_size},
          {"trials", s.trials},
          {"successes", s.successes},
          {"outcomes", s.outcomes},
          {"mean_actions", opt_double(s.mean_actions)},
          {"std_actions", opt_double(s.std_actions)},
          {"success_curve", s.success_curve},
          {"executed", {{"grasp", s.grasps}, {"push", s.pushes}, {"skip", s.skips}}},
          {"charged_skips", s.charged_skips},
          {"infeasible_to_skip", s.infeasible},
          {"proportions", {{"grasp", opt_double(s.grasp_fraction)}, {"push", opt_double(s.push_fraction)}}}};
}

SetupSummary summary_from_json(const json& j) {
  SetupSummary s;
  s.setup = j.at("setup");
  s.asp = j.at("asp");
  s.push = j.at("push");
  s.heap_size = j.at("heap_size");
  s.trials = j.at("trials");
  s.successes = j.at("successes");
  s.outcomes = j.at("outcomes").get<std::map<std::string, int>>();
  s.mean_actions = read_opt_double(j, "mean_actions");
  s.std_actions = read_opt_double(j, "std_actions");
  s.success_curve = j.at("success_curve").get<std::vector<double>>();
  s.grasps = j.at("executed").at("grasp");
  s.pushes = j.at("executed").at("push");
  s.skips = j.at("executed").at("skip");
  s.charged_skips = j.at("charged_skips");
  s.infeasible = j.at("infeasible_to_skip");
  s.grasp_fraction = read_opt_double(j.at("proportions"), "grasp");
  s.push_fraction = read_opt_double(j.at("proportions"), "push");
  return s;
}

json to_json(const BenchmarkReport& r) {
  json setups = json::array();
  for (const auto& s : r.setups) setups.push_back(to_json(s));
  return {{"version", r.version},
          {"action_accounting", r.action_accounting},
          {"config", r.config},
          {"setups", std::move(setups)}};
}

BenchmarkReport report_from_json(const json& j) {
  BenchmarkReport r;
  r.version = j.at("version");
  if (r.version != kReportVersion) throw std::runtime_error("unsupported report version " + std::to_string(r.version));
  r.action_accounting = j.at("action_accounting");
  r.config = j.at("config").get<std::map<std::string, std::string>>();
  for (const auto& s : j.at("setups")) r.setups.push_back(summary_from_json(s));
  return r;
}

std::string dump_report(const BenchmarkReport& report) { return to_json(report).dump(2) + "\n"; }

std::string curves_csv(const BenchmarkReport& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "setup,k,success_rate\n";
  for (const auto& s : report.setups)
    for (std::size_t k = 0; k < s.success_curve.size(); ++k) os << s.setup << ',' << k + 1 << ',' << s.success_curve[k] << '\n';
  return os.str();
}

std::string curves_dat(const BenchmarkReport& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  bool first = true;
  for (const auto& s : report.setups) {
    if (!first) os << "\n\n";
    first = false;
    os << "# setup " << s.setup << " asp=" << s.asp << " push=" << s.push << " heap=" << s.heap_size << "\n";
    os << "# k success_rate\n";
    for (std::size_t k = 0; k < s.success_curve.size(); ++k) os << k + 1 << ' ' << s.success_curve[k] << '\n';
  }
  return os.str();
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace

void report_emit(const BenchmarkReport& report, const std::vector<std::vector<TrialRecord>>& records,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::string> files;
  files["report.json"] = dump_report(report);
  files["curves.csv"] = curves_csv(report);
  files["curves.dat"] = curves_dat(report);
  std::string lines;
  for (const auto& per_setup : records)
    for (const auto& t : per_setup) lines += to_json(t).dump() + "\n";
  files["trials.jsonl"] = lines;
  json manifest;
  manifest["version"] = kReportVersion;
  manifest["git_revision"] = agents::git_revision();
  json listing = json::object();
  for (const auto& [name, text] : files) {
    write_text(dir / name, text);
    listing[name] = {{"bytes", text.size()}, {"fnv1a64", hash_hex(text)}};
  }
  manifest["files"] = std::move(listing);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace ms::harness

namespace ms::harness {

std::vector<TrialRecord> trials_from_jsonl(std::istream& in) {
  std::vector<TrialRecord> trials;
  std::map<std::string, TrialRecord> sessions;
  std::vector<std::string> order;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.contains("steps")) {
      trials.push_back(trial_from_json(j));
      continue;
    }
    const std::string id = j.at("session_id");
    auto [it, fresh] = sessions.try_emplace(id);
    TrialRecord& t = it->second;
    if (fresh) {
      order.push_back(id);
      t.seed = j.at("seed");
      t.heap_size = j.at("heap_size");
      t.action_cap = j.at("action_cap");
      t.push = j.at("push");
      t.asp = "human";
    }
    t.steps.push_back(step_from_json(j.at("step")));
    t.final_state = j.value("final_state", std::string());
    t.outcome = t.steps.back().outcome;
    t.action_count = t.steps.back().action_count;
  }
  for (const auto& id : order) trials.push_back(std::move(sessions.at(id)));
  return trials;
}

ReplayResult replay(const TrialRecord& recorded, const PolicySet& policies, const BinConfig& bin) {
  SetupSpec spec;
  spec.id = recorded.setup;
  spec.heap_size = recorded.heap_size;
  spec.action_cap = recorded.action_cap;
  spec.push = recorded.push == "fsp" ? PushKind::fsp : PushKind::learned;
  std::vector<episode::Action> script;
  for (const auto& s : recorded.steps) script.push_back(action_of(s));
  ReplayResult r;
  r.replayed = run_scripted(spec, policies, recorded.seed, script, bin);
  r.match = r.replayed.outcome == recorded.outcome && r.replayed.action_count == recorded.action_count &&
            (recorded.final_state.empty() || r.replayed.final_state == recorded.final_state);
  return r;
}

}  // namespace ms::harness
