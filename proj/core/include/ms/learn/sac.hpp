#pragma once

#include <cstdint>
#include <vector>

#include "ms/learn/adam.hpp"
#include "ms/learn/model.hpp"
#include "ms/learn/replay.hpp"
#include "ms/rng.hpp"

namespace ms::learn {

struct SacConfig {
  ObsLayout layout;
  int action_dim = 6;
  int feature_size = 98;
  std::vector<int> actor_hidden{256, 256};
  std::vector<int> critic_hidden{256, 256};
  double gamma = 0.9;
  double tau = 0.01;
  double lr = 3e-4;
  double alpha_lr = 3e-4;
  double init_alpha = 0.1;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double target_entropy = 0.0;  // 0 selects -action_dim
  bool zero_actor_output = true;
  std::uint64_t seed = 0;

  double resolved_target_entropy() const { return target_entropy == 0.0 ? -static_cast<double>(action_dim) : target_entropy; }
  void validate() const;
};

struct SacLosses {
  double critic = 0.0;
  double actor = 0.0;
  double temperature = 0.0;
  double alpha = 0.0;
  double mean_log_prob = 0.0;
};

// Twin-critic soft actor-critic with a shared convolutional encoder. The
// encoder learns through the critic loss; the actor consumes its features
// without back-propagating into it.
template <typename T>
class SacAgent {
 public:
  using Cache = typename Network<T>::Cache;

  struct PolicySample {
    Mat<T> action;    // tanh(u)
    Mat<T> u;         // mean + std * eps
    Mat<T> mean;
    Mat<T> log_std;
    Mat<T> raw_log_std;
    Mat<T> eps;
    Vec<T> log_prob;
  };

  struct CriticGrad {
    T loss{};
    std::vector<Mat<T>> encoder, q1, q2;
  };
  struct ActorGrad {
    T loss{};
    std::vector<Mat<T>> actor;
    Vec<T> log_prob;
  };
  struct TemperatureGrad {
    T loss{};
    T d_log_alpha{};
  };

  explicit SacAgent(const SacConfig& cfg);

  const SacConfig& config() const { return cfg_; }

  Mat<T> features(const Mat<T>& obs) const { return enc_.forward(obs); }
  // eps == 0 gives the deterministic (squashed mean) action.
  PolicySample policy(const Mat<T>& feats, const Mat<T>& eps, Cache* cache = nullptr) const;
  Mat<T> act(const Mat<T>& obs, bool deterministic, Rng& rng) const;
  // Elementwise min of the twin critics at (obs, action).
  Vec<T> min_q(const Mat<T>& obs, const Mat<T>& action) const;

  // Critic target: r + gamma * (1 - done) * (min target Q - alpha * log pi)
  // with the next action drawn from the actor on target-encoder features.
  Vec<T> critic_targets(const Batch<T>& batch, const Mat<T>& eps_next) const;
  // 0.5 * mean (Q1 - y)^2 + 0.5 * mean (Q2 - y)^2
  CriticGrad critic_loss(const Batch<T>& batch, const Mat<T>& eps_next) const;
  // mean(alpha * log pi - min Q) on fixed features.
  ActorGrad actor_loss(const Mat<T>& feats, const Mat<T>& eps) const;
  // -log_alpha * mean(log pi + target entropy)
  TemperatureGrad temperature_loss(const Vec<T>& log_prob) const;

  SacLosses update(const Batch<T>& batch);
  Mat<T> draw_noise(Eigen::Index rows);

  T alpha() const;
  T log_alpha() const { return log_alpha_; }
  void set_log_alpha(T v) { log_alpha_ = v; }
  std::uint64_t updates() const { return updates_; }
  Rng& rng() { return rng_; }

  FeatureNet<T>& encoder() { return enc_; }
  FeatureNet<T>& target_encoder() { return target_enc_; }
  Network<T>& actor() { return actor_; }
  Network<T>& q1() { return q1_; }
  Network<T>& q2() { return q2_; }
  Network<T>& target_q1() { return tq1_; }
  Network<T>& target_q2() { return tq2_; }
  const FeatureNet<T>& encoder() const { return enc_; }
  const FeatureNet<T>& target_encoder() const { return target_enc_; }
  const Network<T>& actor() const { return actor_; }
  const Network<T>& q1() const { return q1_; }
  const Network<T>& q2() const { return q2_; }
  const Network<T>& target_q1() const { return tq1_; }
  const Network<T>& target_q2() const { return tq2_; }

 private:
  Mat<T> critic_input(const Mat<T>& feats, const Mat<T>& action) const;

  SacConfig cfg_;
  FeatureNet<T> enc_, target_enc_;
  Network<T> actor_, q1_, q2_, tq1_, tq2_;
  T log_alpha_{};
  Adam<T> enc_opt_, actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
  Rng rng_;
  std::uint64_t updates_ = 0;
};

extern template class SacAgent<float>;
extern template class SacAgent<double>;

}  // namespace ms::learn
