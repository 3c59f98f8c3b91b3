#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace ms {

// Plain-text `key = value` configuration. Lines starting with '#' are
// comments; later keys override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::optional<std::string> raw(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Canonical `key = value\n` text in key order; stable input for hashing.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> values_;
};

// FNV-1a 64-bit; used for config fingerprints in metadata sidecars.
std::uint64_t fnv1a64(const std::string& data);

struct BinConfig {
  double bin_w = 0.40;          // m
  double bin_d = 0.40;          // m
  double jaw_max = 0.085;       // m, maximum parallel-jaw opening
  double pusher_r = 0.008;      // m
  int substeps = 50;            // push sweep sub-steps
  double support_frac = 0.40;   // stacking support threshold
  std::uint64_t seed = 0;

  double push_length = 0.10;    // m
  int contact_iterations = 20;  // per sub-step propagation cap
  double grasp_noise_xy = 0.005;
  double grasp_noise_theta = 0.05;

  // Jaw plate geometry used by both the world grasp check and the planner.
  double jaw_thickness = 0.008;
  double jaw_length = 0.02;
  double contact_strip = 0.005;

  // Object generator.
  double min_extent = 0.03;
  double max_extent = 0.10;
  double min_height = 0.02;
  double max_height = 0.08;
  double heap_spread = 0.06;    // m, std-dev of drop positions around bin center
  int placement_retries = 400;

  void validate() const;
};

BinConfig bin_config_from(const KeyValueConfig& cfg);
// Inverse of bin_config_from; doubles are written with round-trip precision.
KeyValueConfig to_key_values(const BinConfig& b);

}  // namespace ms
