#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ms/learn/network.hpp"

namespace ms::learn {

class WeightFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

// Named networks plus named scalars in a little-endian binary container:
// "MSNN", u32 version, network table, scalar table, trailing CRC-32.
class WeightFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  template <typename T>
  void put(const std::string& name, const Network<T>& net);
  // Restores parameters into `net`, whose architecture must match.
  template <typename T>
  void get(const std::string& name, Network<T>& net) const;
  bool has(const std::string& name) const;
  std::vector<std::string> names() const;

  void set_scalar(const std::string& name, double v);
  double scalar(const std::string& name) const;
  bool has_scalar(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static WeightFile parse(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static WeightFile load(const std::filesystem::path& path);

 private:
  struct Param {
    DType dtype = DType::f64;
    std::uint32_t rows = 0, cols = 0;
    std::vector<double> values;  // widened; f32 values round-trip exactly
  };
  struct Entry {
    std::string name;
    Shape3 input;
    std::vector<LayerSpec> layers;
    std::vector<Param> params;
  };

  const Entry& entry(const std::string& name) const;

  std::vector<Entry> entries_;
  std::vector<std::pair<std::string, double>> scalars_;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace ms::learn
