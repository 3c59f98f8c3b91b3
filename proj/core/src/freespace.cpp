#include "ms/freespace.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ms::freespace {

double DistanceField::at(int r, int c) const {
  const std::int64_t s = squared(r, c);
  if (s == kUnreachable) return std::numeric_limits<double>::infinity();
  return std::sqrt(static_cast<double>(s));
}

Mask bfs_mask(const Mask& bin_bottom, std::span<const perception::ObjectMask> object_masks, int exclude_id) {
  bool found = false;
  for (const auto& m : object_masks) {
    if (m.mask.rows() != bin_bottom.rows() || m.mask.cols() != bin_bottom.cols()) {
      throw std::invalid_argument("bfs_mask: mask dimensions differ from bin bottom");
    }
    found = found || m.object_id == exclude_id;
  }
  // an empty scene has nothing to exclude
  if (!found && !object_masks.empty()) throw std::invalid_argument("bfs_mask: excluded object " + std::to_string(exclude_id) + " not present");
  Mask out = bin_bottom;
  auto& dst = out.values();
  for (const auto& m : object_masks) {
    if (m.object_id == exclude_id) continue;
    const auto& src = m.mask.values();
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (src[i]) dst[i] = 0;
  }
  for (auto& v : dst) v = v ? 1 : 0;
  return out;
}

namespace {

// 1-D squared distance transform of sampled function f (kUnreachable = +inf)
// via the lower envelope of parabolas rooted at finite samples.
void edt_1d(const std::int64_t* f, std::int64_t* d, int n, int stride_in, int stride_out,
            std::vector<int>& v, std::vector<double>& z) {
  constexpr std::int64_t inf = DistanceField::kUnreachable;
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const std::int64_t fq = f[q * stride_in];
    if (fq == inf) continue;
    const double fq_term = static_cast<double>(fq) + static_cast<double>(q) * q;
    double s = -std::numeric_limits<double>::infinity();
    while (k >= 0) {
      const int p = v[static_cast<std::size_t>(k)];
      const double fp_term = static_cast<double>(f[p * stride_in]) + static_cast<double>(p) * p;
      s = (fq_term - fp_term) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = k == 0 ? -std::numeric_limits<double>::infinity() : s;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q * stride_out] = inf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (j < k && z[static_cast<std::size_t>(j + 1)] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    const std::int64_t dq = q - p;
    d[q * stride_out] = f[p * stride_in] + dq * dq;
  }
}

}  // namespace

DistanceField distance_transform(const Mask& free) {
  const int rows = free.rows();
  const int cols = free.cols();
  constexpr std::int64_t inf = DistanceField::kUnreachable;
  Grid<std::int64_t> g(rows, cols, inf);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (free.values()[i] == 0) g.values()[i] = 0;

  DistanceField out{Grid<std::int64_t>(rows, cols, inf)};
  const int n = std::max(rows, cols);
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  std::vector<std::int64_t> tmp(static_cast<std::size_t>(n));
  // Columns first (stride = cols), written back in place.
  for (int c = 0; c < cols; ++c) {
    edt_1d(g.data() + c, tmp.data(), rows, cols, 1, v, z);
    for (int r = 0; r < rows; ++r) g(r, c) = tmp[static_cast<std::size_t>(r)];
  }
  for (int r = 0; r < rows; ++r) {
    edt_1d(g.data() + static_cast<std::size_t>(r) * cols, out.squared.data() + static_cast<std::size_t>(r) * cols, cols, 1, 1, v, z);
  }
  return out;
}

double free_space(const Mask& object_mask, const DistanceField& dt) {
  if (object_mask.rows() != dt.rows() || object_mask.cols() != dt.cols()) {
    throw std::invalid_argument("free_space: mask and distance field sizes differ");
  }
  double sum = 0.0;
  std::int64_t count = 0;
  const auto& m = object_mask.values();
  const auto& sq = dt.squared.values();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    ++count;
    sum += sq[i] == DistanceField::kUnreachable ? std::numeric_limits<double>::infinity()
                                                : std::sqrt(static_cast<double>(sq[i]));
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

FreeSpaceReport compute_report(const perception::RenderResult& view, int t, bool keep_masks) {
  FreeSpaceReport report;
  report.t = t;
  for (const auto& m : view.masks) {
    if (perception::visible_area(m.mask) == 0) {
      report.fs[m.object_id] = 0.0;
      continue;
    }
    Mask bfs = bfs_mask(view.bin_bottom, view.masks, m.object_id);
    report.fs[m.object_id] = free_space(m.mask, distance_transform(bfs));
    if (keep_masks) report.bfs_masks.emplace(m.object_id, std::move(bfs));
  }
  return report;
}

double push_reward(const FreeSpaceReport& prev, const FreeSpaceReport& cur, int ooi_id) {
  if (prev.fs.size() != cur.fs.size()) throw std::invalid_argument("push_reward: object sets differ");
  for (const auto& [id, _] : prev.fs)
    if (!cur.fs.contains(id)) throw std::invalid_argument("push_reward: object sets differ");
  if (!prev.fs.contains(ooi_id)) throw std::invalid_argument("push_reward: OOI missing from reports");

  const std::size_t n = prev.fs.size();
  const double d_ooi = cur.fs.at(ooi_id) - prev.fs.at(ooi_id);
  double others = 0.0;
  for (const auto& [id, before] : prev.fs) {
    if (id == ooi_id) continue;
    others += cur.fs.at(id) - before;
  }
  const double other_term = n > 1 ? others / static_cast<double>(n - 1) : 0.0;
  return (10.0 * d_ooi + other_term) / 11.0;
}

double asp_reward(AspOutcome outcome) {
  switch (outcome) {
    case AspOutcome::extracted_target: return 20.0;
    case AspOutcome::infeasible_selected: return -10.0;
    case AspOutcome::other: return -1.0;
  }
  return -1.0;
}

}  // namespace ms::freespace
