#pragma once

#include "ms/primitives.hpp"

namespace ms::test {

// Priority tree written out longhand: grasp if it clears its bar, else push
// if it clears its bar, else skip. A quality of -1 clears nothing.
inline primitives::AspAction heuristic_oracle(double qg, double qp, double tg, double tp) {
  const bool grasp_ok = qg != -1.0 && qg >= tg;
  const bool push_ok = qp != -1.0 && qp >= tp;
  if (grasp_ok) return primitives::AspAction::grasp;
  if (push_ok) return primitives::AspAction::push;
  return primitives::AspAction::skip;
}

inline constexpr double kQualityGrid[] = {-1.0, 0.0, 0.1, 0.24, 0.25, 0.26, 0.49, 0.5, 0.51, 0.75, 1.0};
inline constexpr double kThresholdGrid[] = {0.0, 0.25, 0.5, 0.75, 1.0};

}  // namespace ms::test
