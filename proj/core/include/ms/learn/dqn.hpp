#pragma once

#include <cstdint>
#include <vector>

#include "ms/learn/adam.hpp"
#include "ms/learn/model.hpp"
#include "ms/learn/replay.hpp"

namespace ms::learn {

struct DqnConfig {
  ObsLayout layout;
  int actions = 3;
  int feature_size = 98;
  std::vector<int> hidden{128};
  double gamma = 0.99;
  double lr = 3e-4;
  int sync_period = 500;  // updates between hard target syncs
  std::uint64_t seed = 0;

  void validate() const;
};

// Linear anneal from `start` to `end` over `steps` calls, then constant.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::uint64_t steps = 1;

  double value(std::uint64_t t) const {
    if (t >= steps) return end;
    return start + (end - start) * static_cast<double>(t) / static_cast<double>(steps);
  }
};

struct DqnLosses {
  double loss = 0.0;
};

template <typename T>
class DqnAgent {
 public:
  struct LossGrad {
    T loss{};
    std::vector<Mat<T>> encoder;
    std::vector<Mat<T>> head;
  };

  explicit DqnAgent(const DqnConfig& cfg);

  const DqnConfig& config() const { return cfg_; }
  Mat<T> q_values(const Mat<T>& obs) const;
  Mat<T> target_q_values(const Mat<T>& obs) const;

  // r for terminal transitions, else r + gamma * max_a' targetQ(s', a').
  Vec<T> targets(const Batch<T>& batch) const;
  static T bellman_target(T reward, bool done, T max_next, T gamma) { return done ? reward : reward + gamma * max_next; }

  // 0.5 * mean over the batch of (Q(s, a) - y)^2; actions stored as indices.
  LossGrad loss_and_grad(const Batch<T>& batch) const;
  DqnLosses update(const Batch<T>& batch);
  void sync_target();
  std::uint64_t updates() const { return updates_; }

  FeatureNet<T>& features() { return feat_; }
  Network<T>& head() { return head_; }
  const FeatureNet<T>& features() const { return feat_; }
  const Network<T>& head() const { return head_; }
  const FeatureNet<T>& target_features() const { return target_feat_; }
  const Network<T>& target_head() const { return target_head_; }

 private:
  DqnConfig cfg_;
  FeatureNet<T> feat_, target_feat_;
  Network<T> head_, target_head_;
  Adam<T> enc_opt_, head_opt_;
  std::uint64_t updates_ = 0;
};

extern template class DqnAgent<float>;
extern template class DqnAgent<double>;

}  // namespace ms::learn
