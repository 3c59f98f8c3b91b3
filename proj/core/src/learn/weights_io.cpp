#include "ms/learn/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace ms::learn {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large files.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw WeightFormatError("weight file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::f32 : DType::f64;
}

}  // namespace

template <typename T>
void WeightFile::put(const std::string& name, const Network<T>& net) {
  Entry e{name, net.input_shape(), net.layers(), {}};
  for (const auto& p : net.params()) {
    Param q{dtype_of<T>(), static_cast<std::uint32_t>(p.rows()), static_cast<std::uint32_t>(p.cols()), {}};
    q.values.assign(p.data(), p.data() + p.size());
    e.params.push_back(std::move(q));
  }
  for (auto& existing : entries_) {
    if (existing.name == name) {
      existing = std::move(e);
      return;
    }
  }
  entries_.push_back(std::move(e));
}

template <typename T>
void WeightFile::get(const std::string& name, Network<T>& net) const {
  const Entry& e = entry(name);
  if (!(e.input == net.input_shape()) || e.layers != net.layers()) {
    throw WeightFormatError("weight file network '" + name + "' does not match the expected architecture");
  }
  auto& params = net.params_mut();
  if (params.size() != e.params.size()) throw WeightFormatError("weight file network '" + name + "' parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& q = e.params[i];
    if (params[i].rows() != static_cast<Eigen::Index>(q.rows) || params[i].cols() != static_cast<Eigen::Index>(q.cols)) {
      throw WeightFormatError("weight file network '" + name + "' parameter shape mismatch");
    }
    for (std::size_t j = 0; j < q.values.size(); ++j) params[i].data()[j] = static_cast<T>(q.values[j]);
  }
}

template void WeightFile::put<float>(const std::string&, const Network<float>&);
template void WeightFile::put<double>(const std::string&, const Network<double>&);
template void WeightFile::get<float>(const std::string&, Network<float>&) const;
template void WeightFile::get<double>(const std::string&, Network<double>&) const;

const WeightFile::Entry& WeightFile::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw WeightFormatError("weight file has no network named '" + name + "'");
}

bool WeightFile::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::vector<std::string> WeightFile::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

void WeightFile::set_scalar(const std::string& name, double v) {
  for (auto& [n, x] : scalars_) {
    if (n == name) {
      x = v;
      return;
    }
  }
  scalars_.emplace_back(name, v);
}

double WeightFile::scalar(const std::string& name) const {
  for (const auto& [n, x] : scalars_)
    if (n == name) return x;
  throw WeightFormatError("weight file has no scalar named '" + name + "'");
}

bool WeightFile::has_scalar(const std::string& name) const {
  for (const auto& [n, x] : scalars_)
    if (n == name) return true;
  return false;
}

std::vector<std::uint8_t> WeightFile::serialize() const {
  Writer w;
  w.raw("MSNN", 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.str(e.name);
    w.i32(e.input.c);
    w.i32(e.input.h);
    w.i32(e.input.w);
    w.u32(static_cast<std::uint32_t>(e.layers.size()));
    for (const auto& l : e.layers) {
      w.u8(static_cast<std::uint8_t>(l.kind));
      w.i32(l.units);
      w.i32(l.kernel);
      w.i32(l.stride);
      w.u8(l.zero_init ? 1 : 0);
    }
    w.u32(static_cast<std::uint32_t>(e.params.size()));
    for (const auto& p : e.params) {
      w.u8(static_cast<std::uint8_t>(p.dtype));
      w.u32(p.rows);
      w.u32(p.cols);
      for (double v : p.values) {
        if (p.dtype == DType::f32) w.f32(static_cast<float>(v));
        else w.f64(v);
      }
    }
  }
  w.u32(static_cast<std::uint32_t>(scalars_.size()));
  for (const auto& [n, x] : scalars_) {
    w.str(n);
    w.f64(x);
  }
  const std::uint32_t crc = crc32_of(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

WeightFile WeightFile::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "MSNN", 4) != 0) throw WeightFormatError("not an MSNN weight file");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.u32() != crc32_of(body)) throw WeightFormatError("weight file checksum mismatch");
  Reader r(body);
  r.u32();  // magic
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw WeightFormatError("unsupported weight file version " + std::to_string(version));
  WeightFile f;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Entry e;
    e.name = r.str();
    e.input.c = r.i32();
    e.input.h = r.i32();
    e.input.w = r.i32();
    const std::uint32_t nl = r.u32();
    for (std::uint32_t j = 0; j < nl; ++j) {
      LayerSpec l;
      const std::uint8_t kind = r.u8();
      if (kind < 1 || kind > 7) throw WeightFormatError("unknown layer kind in weight file");
      l.kind = static_cast<LayerKind>(kind);
      l.units = r.i32();
      l.kernel = r.i32();
      l.stride = r.i32();
      l.zero_init = r.u8() != 0;
      e.layers.push_back(l);
    }
    const std::uint32_t np = r.u32();
    for (std::uint32_t j = 0; j < np; ++j) {
      Param p;
      const std::uint8_t dt = r.u8();
      if (dt != 1 && dt != 2) throw WeightFormatError("unknown dtype in weight file");
      p.dtype = static_cast<DType>(dt);
      p.rows = r.u32();
      p.cols = r.u32();
      const std::size_t count = static_cast<std::size_t>(p.rows) * p.cols;
      r.need(count * (p.dtype == DType::f32 ? 4 : 8));
      p.values.resize(count);
      for (auto& v : p.values) v = p.dtype == DType::f32 ? static_cast<double>(r.f32()) : r.f64();
      e.params.push_back(std::move(p));
    }
    f.entries_.push_back(std::move(e));
  }
  const std::uint32_t ns = r.u32();
  for (std::uint32_t i = 0; i < ns; ++i) {
    std::string name = r.str();
    f.scalars_.emplace_back(std::move(name), r.f64());
  }
  if (r.pos() != body.size()) throw WeightFormatError("trailing bytes in weight file");
  return f;
}

void WeightFile::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

WeightFile WeightFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

}  // namespace ms::learn
