#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "ms/grid.hpp"

namespace ms::test {

// Squared Euclidean distance to the nearest zero pixel by direct search:
// rows are scanned outward from the query row and the scan stops once the
// row offset alone exceeds the best distance found. No envelope tricks.
inline Grid<std::int64_t> brute_force_sq_dt(const Mask& free) {
  const std::int64_t inf = std::numeric_limits<std::int64_t>::max();
  std::vector<std::vector<int>> cols(static_cast<std::size_t>(free.rows()));
  for (int r = 0; r < free.rows(); ++r)
    for (int c = 0; c < free.cols(); ++c)
      if (!free(r, c)) cols[r].push_back(c);
  auto nearest_in_row = [&](int r, int c) -> std::int64_t {
    const auto& row = cols[r];
    if (row.empty()) return inf;
    auto it = std::lower_bound(row.begin(), row.end(), c);
    std::int64_t best = inf;
    if (it != row.end()) best = std::min<std::int64_t>(best, *it - c);
    if (it != row.begin()) best = std::min<std::int64_t>(best, c - *std::prev(it));
    return best;
  };
  Grid<std::int64_t> out(free.rows(), free.cols(), inf);
  for (int r = 0; r < free.rows(); ++r)
    for (int c = 0; c < free.cols(); ++c) {
      std::int64_t best = inf;
      for (int d = 0; d < free.rows(); ++d) {
        const std::int64_t dd = static_cast<std::int64_t>(d) * d;
        if (dd >= best) break;
        for (int rr : {r - d, r + d}) {
          if (rr < 0 || rr >= free.rows()) continue;
          const std::int64_t dc = nearest_in_row(rr, c);
          if (dc != inf) best = std::min(best, dd + dc * dc);
          if (d == 0) break;
        }
      }
      out(r, c) = best;
    }
  return out;
}

// Literal all-pairs version for small masks; checks the pruned search.
inline Grid<std::int64_t> all_pairs_sq_dt(const Mask& free) {
  const std::int64_t inf = std::numeric_limits<std::int64_t>::max();
  Grid<std::int64_t> out(free.rows(), free.cols(), inf);
  for (int r = 0; r < free.rows(); ++r)
    for (int c = 0; c < free.cols(); ++c)
      for (int r2 = 0; r2 < free.rows(); ++r2)
        for (int c2 = 0; c2 < free.cols(); ++c2) {
          if (free(r2, c2)) continue;
          const std::int64_t dr = r - r2, dc = c - c2;
          out(r, c) = std::min(out(r, c), dr * dr + dc * dc);
        }
  return out;
}

}  // namespace ms::test
