#include "ms/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ms {

namespace {

std::string trim(std::string_view s) {
  auto b = s.begin();
  auto e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.values_[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::optional<std::string> KeyValueConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not a number: " + *v);
  }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) {
    throw std::invalid_argument("config key '" + key + "': not an integer: " + *v);
  }
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) {
    throw std::invalid_argument("config key '" + key + "': not an unsigned integer: " + *v);
  }
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw std::invalid_argument("config key '" + key + "': not a boolean: " + *v);
}

std::string KeyValueConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void BinConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("BinConfig: " + msg); };
  if (!(bin_w > 0.0 && bin_d > 0.0)) fail("bin dimensions must be positive");
  if (!(jaw_max > 0.0)) fail("jaw_max must be positive");
  if (!(pusher_r > 0.0)) fail("pusher_r must be positive");
  if (substeps < 1) fail("substeps must be >= 1");
  if (!(support_frac > 0.0 && support_frac < 1.0)) fail("support_frac must be in (0, 1)");
  if (!(push_length > 0.0)) fail("push_length must be positive");
  if (!(min_extent > 0.0 && max_extent >= min_extent)) fail("bad object extent range");
  if (!(min_height >= 0.01 && max_height <= 0.12 && max_height >= min_height)) {
    fail("object heights must lie in [0.01, 0.12]");
  }
  if (contact_iterations < 1) fail("contact_iterations must be >= 1");
  if (placement_retries < 1) fail("placement_retries must be >= 1");
}

BinConfig bin_config_from(const KeyValueConfig& cfg) {
  BinConfig b;
  b.bin_w = cfg.get_double("bin_w", b.bin_w);
  b.bin_d = cfg.get_double("bin_d", b.bin_d);
  b.jaw_max = cfg.get_double("jaw_max", b.jaw_max);
  b.pusher_r = cfg.get_double("pusher_r", b.pusher_r);
  b.substeps = static_cast<int>(cfg.get_int("substeps", b.substeps));
  b.support_frac = cfg.get_double("support_frac", b.support_frac);
  b.seed = cfg.get_u64("seed", b.seed);
  b.push_length = cfg.get_double("push_length", b.push_length);
  b.contact_iterations = static_cast<int>(cfg.get_int("contact_iterations", b.contact_iterations));
  b.grasp_noise_xy = cfg.get_double("grasp_noise_xy", b.grasp_noise_xy);
  b.grasp_noise_theta = cfg.get_double("grasp_noise_theta", b.grasp_noise_theta);
  b.jaw_thickness = cfg.get_double("jaw_thickness", b.jaw_thickness);
  b.jaw_length = cfg.get_double("jaw_length", b.jaw_length);
  b.contact_strip = cfg.get_double("contact_strip", b.contact_strip);
  b.min_extent = cfg.get_double("min_extent", b.min_extent);
  b.max_extent = cfg.get_double("max_extent", b.max_extent);
  b.min_height = cfg.get_double("min_height", b.min_height);
  b.max_height = cfg.get_double("max_height", b.max_height);
  b.heap_spread = cfg.get_double("heap_spread", b.heap_spread);
  b.placement_retries = static_cast<int>(cfg.get_int("placement_retries", b.placement_retries));
  b.validate();
  return b;
}

KeyValueConfig to_key_values(const BinConfig& b) {
  KeyValueConfig c;
  auto num = [](auto v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  c.set("bin_w", num(b.bin_w));
  c.set("bin_d", num(b.bin_d));
  c.set("jaw_max", num(b.jaw_max));
  c.set("pusher_r", num(b.pusher_r));
  c.set("substeps", num(b.substeps));
  c.set("support_frac", num(b.support_frac));
  c.set("seed", num(b.seed));
  c.set("push_length", num(b.push_length));
  c.set("contact_iterations", num(b.contact_iterations));
  c.set("grasp_noise_xy", num(b.grasp_noise_xy));
  c.set("grasp_noise_theta", num(b.grasp_noise_theta));
  c.set("jaw_thickness", num(b.jaw_thickness));
  c.set("jaw_length", num(b.jaw_length));
  c.set("contact_strip", num(b.contact_strip));
  c.set("min_extent", num(b.min_extent));
  c.set("max_extent", num(b.max_extent));
  c.set("min_height", num(b.min_height));
  c.set("max_height", num(b.max_height));
  c.set("heap_spread", num(b.heap_spread));
  c.set("placement_retries", num(b.placement_retries));
  return c;
}

}  // namespace ms
