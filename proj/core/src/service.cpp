#include "ms/service.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <queue>

#include "ms/harness.hpp"

namespace ms::service {

json ServiceError::to_json() const {
  return {{"type", "error"}, {"protocol_version", kProtocolVersion}, {"code", code_}, {"message", what()}};
}

namespace {

[[noreturn]] void bad_request(const std::string& msg) { throw ServiceError(400, "malformed", msg); }

int int_field(const json& j, const char* key, int fallback, int lo, int hi) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) bad_request(std::string(key) + " must be an integer");
  const auto v = j.at(key).get<std::int64_t>();
  if (v < lo || v > hi) bad_request(std::string(key) + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(v);
}

double finite_number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) bad_request(std::string("push needs numeric ") + key);
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) bad_request(std::string(key) + " must be finite");
  return v;
}

}  // namespace

SessionConfig SessionConfig::from_json(const json& j) {
  if (!j.is_object()) bad_request("session config must be an object");
  SessionConfig c;
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<std::int64_t>() >= 0)) {
      bad_request("seed must be a non-negative integer");
    }
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  c.heap_size = int_field(j, "heap_size", c.heap_size, 1, 40);
  c.action_cap = int_field(j, "action_cap", c.action_cap, 1, episode::kActionCap);
  if (j.contains("push")) {
    if (!j.at("push").is_string()) bad_request("push must be \"fsp\" or \"learned\"");
    c.push = j.at("push").get<std::string>();
    if (c.push != "fsp" && c.push != "learned") bad_request("push must be \"fsp\" or \"learned\"");
  }
  return c;
}

episode::Action parse_action(const json& j) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) bad_request("action needs a string type");
  const std::string type = j.at("type");
  if (type == "skip") return episode::SkipAction{};
  if (type == "grasp") {
    episode::GraspAction g;
    if (j.contains("object_id") && !j.at("object_id").is_null()) {
      if (!j.at("object_id").is_number_integer()) bad_request("object_id must be an integer");
      g.object_id = j.at("object_id").get<int>();
    }
    return g;
  }
  if (type == "push") {
    constexpr double kDeg = std::numbers::pi / 180.0;
    episode::PixelPush p;
    p.u = finite_number(j, "u");
    p.v = finite_number(j, "v");
    p.alpha = finite_number(j, "alpha_deg") * kDeg;
    p.phi = j.contains("phi_deg") ? finite_number(j, "phi_deg") * kDeg : p.alpha + std::numbers::pi / 2.0;
    return episode::PushAction{p};
  }
  bad_request("unknown action type '" + type + "'");
}

// ---- base64 ----

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t n = bytes[i] << 16;
    if (i + 1 < bytes.size()) n |= bytes[i + 1] << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length not a multiple of 4");
  auto val = [](char c) -> int {
    const char* p = std::strchr(kAlphabet, c);
    if (c == '\0' || !p) throw std::invalid_argument("base64: bad character");
    return static_cast<int>(p - kAlphabet);
  };
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const int a = val(text[i]), b = val(text[i + 1]);
    const bool pad2 = text[i + 2] == '=', pad3 = text[i + 3] == '=';
    if ((pad2 || pad3) && i + 4 != text.size()) throw std::invalid_argument("base64: padding inside data");
    const int c = pad2 ? 0 : val(text[i + 2]);
    const int d = pad3 ? 0 : val(text[i + 3]);
    const std::uint32_t n = (a << 18) | (b << 12) | (c << 6) | d;
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (!pad2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 255));
    if (!pad3) out.push_back(static_cast<std::uint8_t>(n & 255));
  }
  return out;
}

// ---- PNG ----

std::vector<std::uint8_t> encode_depth_png(const perception::DepthImage& depth) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(depth.cols());
  img.height = static_cast<png_uint_32>(depth.rows());
  img.format = PNG_FORMAT_LINEAR_Y;  // 16-bit gray
  std::vector<png_uint_16> px(depth.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double q = std::round(depth.values()[i] / kDepthUnit);
    px[i] = static_cast<png_uint_16>(std::clamp(q, 0.0, 65535.0));
  }
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, px.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, px.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png: ") + img.message);
  }
  out.resize(size);
  return out;
}

perception::DepthImage decode_depth_png(std::span<const std::uint8_t> png) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, png.data(), png.size())) {
    throw std::runtime_error(std::string("png: ") + img.message);
  }
  img.format = PNG_FORMAT_LINEAR_Y;
  std::vector<png_uint_16> px(static_cast<std::size_t>(img.width) * img.height);
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png: ") + img.message);
  }
  perception::DepthImage d(static_cast<int>(img.height), static_cast<int>(img.width));
  for (std::size_t i = 0; i < px.size(); ++i) d.values()[i] = px[i] * kDepthUnit;
  return d;
}

// ---- outlines ----

std::vector<Outline> mask_outlines(const Mask& mask) {
  // Clockwise on screen (v grows downward), starting east.
  static constexpr int du[8] = {1, 1, 0, -1, -1, -1, 0, 1};
  static constexpr int dv[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  const int rows = mask.rows(), cols = mask.cols();
  auto on = [&](int u, int v) { return u >= 0 && v >= 0 && u < cols && v < rows && mask(v, u) != 0; };
  auto dir_of = [](int ddu, int ddv) {
    for (int d = 0; d < 8; ++d)
      if (du[d] == ddu && dv[d] == ddv) return d;
    return 0;
  };
  Grid<std::uint8_t> seen(rows, cols, 0);
  std::vector<Outline> out;
  for (int v = 0; v < rows; ++v) {
    for (int u = 0; u < cols; ++u) {
      if (!on(u, v) || seen(v, u)) continue;
      // Flood the component so it is traced once.
      std::queue<std::array<int, 2>> q;
      q.push({u, v});
      seen(v, u) = 1;
      while (!q.empty()) {
        const auto [cu, cv] = q.front();
        q.pop();
        for (int d = 0; d < 8; ++d) {
          const int nu = cu + du[d], nv = cv + dv[d];
          if (on(nu, nv) && !seen(nv, nu)) {
            seen(nv, nu) = 1;
            q.push({nu, nv});
          }
        }
      }
      // (u, v) is the component's first pixel in raster order, so its west
      // neighbor is background.
      Outline path{{u, v}};
      int cu = u, cv = v, back = 4, first = -1;
      const std::size_t limit = 4 * static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) + 8;
      for (std::size_t step = 0; step < limit; ++step) {
        int found = -1;
        for (int k = 1; k <= 8; ++k) {
          const int d = (back + k) % 8;
          if (on(cu + du[d], cv + dv[d])) {
            found = d;
            break;
          }
        }
        if (found < 0) break;  // isolated pixel
        // Done once the start pixel is about to be left the same way again.
        if (cu == u && cv == v) {
          if (first < 0) {
            first = found;
          } else if (found == first) {
            break;
          }
        }
        const int prev = (found + 7) % 8;
        const int nu = cu + du[found], nv = cv + dv[found];
        back = dir_of(cu + du[prev] - nu, cv + dv[prev] - nv);
        cu = nu;
        cv = nv;
        path.push_back({cu, cv});
      }
      if (path.size() > 1 && path.back() == path.front()) path.pop_back();
      out.push_back(std::move(path));
    }
  }
  return out;
}

// ---- sessions ----

SessionManager::SessionManager(ServerOptions options)
    : options_(std::move(options)), fsp_(std::make_shared<episode::FspPushPlanner>()) {
  options_.bin.validate();
  if (options_.capacity < 1) throw std::invalid_argument("service capacity must be >= 1");
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown_session", "no session '" + id + "'");
  return it->second;
}

json SessionManager::create(const json& config) {
  const SessionConfig cfg = SessionConfig::from_json(config);
  std::shared_ptr<const episode::PushPlanner> planner = fsp_;
  if (cfg.push == "learned") {
    if (!options_.push) throw ServiceError(400, "malformed", "server has no learned push policy loaded");
    planner = options_.push;
  }
  auto s = std::make_shared<Session>();
  s->config = cfg;
  {
    std::lock_guard lock(mutex_);
    std::size_t live = 0;
    for (const auto& [_, other] : sessions_)
      if (!other->done) ++live;
    if (live >= static_cast<std::size_t>(options_.capacity)) {
      throw ServiceError(503, "capacity_exceeded", "session capacity " + std::to_string(options_.capacity) + " reached");
    }
    s->id = "s" + std::to_string(next_id_++);
    // Reserve the slot before the (slow) heap initialization.
    sessions_[s->id] = s;
  }
  try {
    std::lock_guard busy(s->busy);
    s->episode = std::make_unique<episode::Episode>(world::init_heap(options_.bin, cfg.heap_size, cfg.seed), planner,
                                                    cfg.action_cap);
    s->done = s->episode->finished();
  } catch (...) {
    std::lock_guard lock(mutex_);
    sessions_.erase(s->id);
    throw;
  }
  std::lock_guard busy(s->busy);
  return {{"session_id", s->id}, {"packet", packet_of(*s)}};
}

json SessionManager::packet(const std::string& id) {
  auto s = find(id);
  std::lock_guard busy(s->busy);
  if (!s->episode) throw ServiceError(409, "busy", "session is initializing");
  return packet_of(*s);
}

json SessionManager::packet_of(const Session& s) const {
  const episode::Episode& ep = *s.episode;
  const episode::Observation& o = ep.observation();
  const auto png = encode_depth_png(o.render.depth);
  json objects = json::array();
  for (const auto& m : o.render.masks) {
    const std::int64_t area = perception::visible_area(m.mask);
    if (area == 0) continue;
    const world::ObjectInstance* obj = ep.state().find(m.object_id);
    json outlines = json::array();
    for (const auto& path : mask_outlines(m.mask)) outlines.push_back(path);
    objects.push_back({{"id", m.object_id},
                       {"is_target", obj && obj->is_target},
                       {"visible_area", area},
                       {"outlines", std::move(outlines)}});
  }
  const auto target = ep.state().target_id();
  return {{"type", "observation"},
          {"protocol_version", kProtocolVersion},
          {"session_id", s.id},
          {"step", static_cast<int>(ep.log().size())},
          {"depth",
           {{"encoding", "png16"},
            {"width", o.render.depth.cols()},
            {"height", o.render.depth.rows()},
            {"unit_m", kDepthUnit},
            {"data", base64_encode(png)}}},
          {"target_id", target ? json(*target) : json(nullptr)},
          {"ooi_id", o.ooi ? json(*o.ooi) : json(nullptr)},
          {"ranking", o.ranking},
          {"cursor", o.cursor},
          {"objects", std::move(objects)},
          {"quality", {{"grasp", o.quality.q_grasp}, {"push", o.quality.q_push}}},
          {"action_count", ep.action_count()},
          {"action_cap", ep.action_cap()},
          {"cumulative_reward", s.cumulative_reward},
          {"status", episode::to_string(ep.outcome())},
          {"terminal", ep.finished()}};
}

json SessionManager::act(const std::string& id, const json& action) {
  auto s = find(id);
  std::unique_lock busy(s->busy, std::try_to_lock);
  if (!busy.owns_lock()) throw ServiceError(409, "busy", "an action is already in flight for this session");
  if (!s->episode) throw ServiceError(409, "busy", "session is initializing");
  const episode::Action a = parse_action(action);
  if (s->episode->finished()) {
    throw ServiceError(409, "finished",
                       std::string("session already finished: ") + episode::to_string(s->episode->outcome()));
  }
  const episode::StepRecord* rec = nullptr;
  try {
    rec = &s->episode->step(a);
  } catch (const episode::MalformedAction& e) {
    throw ServiceError(400, "malformed", e.what());
  }
  s->cumulative_reward += rec->reward;
  s->done = s->episode->finished();
  json line = {{"session_id", s->id},
               {"seed", s->config.seed},
               {"heap_size", s->config.heap_size},
               {"action_cap", s->config.action_cap},
               {"push", s->config.push},
               {"step", harness::to_json(*rec)},
               {"final_state", harness::hash_hex(world::serialize(s->episode->state()))}};
  s->log.push_back(line.dump());
  if (!options_.log_dir.empty()) {
    std::ofstream out(std::filesystem::path(options_.log_dir) / (s->id + ".jsonl"), std::ios::app);
    out << s->log.back() << '\n';
  }
  json result = {{"index", rec->index},
                 {"chosen", primitives::to_string(rec->chosen)},
                 {"executed", primitives::to_string(rec->executed)},
                 {"infeasible", rec->chosen != rec->executed},
                 {"reward", rec->reward},
                 {"charged", rec->charged},
                 {"grasp_result", rec->grasp_result.empty() ? json(nullptr) : json(rec->grasp_result)},
                 {"action_count", rec->action_count},
                 {"outcome", episode::to_string(rec->outcome)}};
  return {{"type", "step"}, {"protocol_version", kProtocolVersion}, {"result", std::move(result)}, {"packet", packet_of(*s)}};
}

std::string SessionManager::log_jsonl(const std::string& id) {
  auto s = find(id);
  std::lock_guard busy(s->busy);
  std::string out;
  for (const auto& l : s->log) out += l + "\n";
  return out;
}

json SessionManager::proportions() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [_, s] : sessions_) all.push_back(s);
  }
  long grasp = 0, push = 0, skip = 0;
  int finished = 0, with_actions = 0;
  for (const auto& s : all) {
    std::lock_guard busy(s->busy);
    if (!s->episode) continue;
    if (s->episode->finished()) ++finished;
    if (!s->episode->log().empty()) ++with_actions;
    for (const auto& r : s->episode->log()) {
      switch (r.executed) {
        case primitives::AspAction::grasp: ++grasp; break;
        case primitives::AspAction::push: ++push; break;
        case primitives::AspAction::skip: ++skip; break;
      }
    }
  }
  const long executed = grasp + push;
  auto frac = [&](long n) { return executed > 0 ? json(static_cast<double>(n) / static_cast<double>(executed)) : json(nullptr); };
  return {{"type", "proportions"},
          {"protocol_version", kProtocolVersion},
          {"asp", "human"},
          {"sessions", with_actions},
          {"finished_sessions", finished},
          {"executed", {{"grasp", grasp}, {"push", push}, {"skip", skip}}},
          {"rows",
           {{{"action", "grasp"}, {"proportion", frac(grasp)}, {"applicable", true}},
            {{"action", "push"}, {"proportion", frac(push)}, {"applicable", true}},
            {{"action", "suction"}, {"proportion", nullptr}, {"applicable", false}}}},
          {"note", "proportions are over executed grasps and pushes; skips are counted separately"}};
}

std::size_t SessionManager::size() {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

}  // namespace ms::service
