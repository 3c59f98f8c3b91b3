#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ms/grid.hpp"
#include "ms/perception.hpp"

namespace ms::freespace {

// Exact Euclidean distance (in pixels) from every pixel to the nearest
// obstacle pixel. Squared distances are kept as integers; a mask without any
// obstacle yields kUnreachable everywhere.
struct DistanceField {
  static constexpr std::int64_t kUnreachable = std::numeric_limits<std::int64_t>::max();

  Grid<std::int64_t> squared;

  int rows() const { return squared.rows(); }
  int cols() const { return squared.cols(); }
  double at(int r, int c) const;
};

// Bin-free-space mask for evaluating `exclude_id`: bin bottom minus every
// object mask except the excluded object's own.
Mask bfs_mask(const Mask& bin_bottom, std::span<const perception::ObjectMask> object_masks, int exclude_id);

// Separable lower-envelope transform over rows then columns. Pixels with a
// zero in `free` are obstacles (distance sources).
DistanceField distance_transform(const Mask& free);

// Area-normalized masked sum of the distance field; 0 for an empty mask.
double free_space(const Mask& object_mask, const DistanceField& dt);

struct FreeSpaceReport {
  int t = 0;
  std::map<int, double> fs;       // object id -> free space (pixels)
  std::map<int, Mask> bfs_masks;  // populated only when requested
};

FreeSpaceReport compute_report(const perception::RenderResult& view, int t, bool keep_masks = false);

// Weighted push reward: (10 * dOOI + mean of the other deltas) / 11.
double push_reward(const FreeSpaceReport& prev, const FreeSpaceReport& cur, int ooi_id);

enum class AspOutcome { extracted_target, infeasible_selected, other };
double asp_reward(AspOutcome outcome);

}  // namespace ms::freespace
