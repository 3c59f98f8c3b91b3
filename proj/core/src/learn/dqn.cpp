#include "ms/learn/dqn.hpp"

#include <stdexcept>

namespace ms::learn {

void DqnConfig::validate() const {
  if (actions < 1) throw std::invalid_argument("DqnConfig: need at least one action");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("DqnConfig: gamma must lie in (0, 1)");
  if (!(lr > 0.0)) throw std::invalid_argument("DqnConfig: lr must be positive");
  if (sync_period < 1) throw std::invalid_argument("DqnConfig: sync_period must be >= 1");
  if (layout.size() <= 0) throw std::invalid_argument("DqnConfig: empty observation layout");
}

template <typename T>
DqnAgent<T>::DqnAgent(const DqnConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  feat_ = FeatureNet<T>(cfg.layout, cfg.feature_size, mix_seed(cfg.seed, 0));
  head_ = Network<T>({feat_.output_size(), 1, 1}, mlp(cfg.hidden, cfg.actions), mix_seed(cfg.seed, 1));
  target_feat_ = feat_;
  target_head_ = head_;
  const AdamConfig adam{cfg.lr};
  if (feat_.has_encoder()) enc_opt_ = Adam<T>(feat_.encoder(), adam);
  head_opt_ = Adam<T>(head_, adam);
}

template <typename T>
Mat<T> DqnAgent<T>::q_values(const Mat<T>& obs) const {
  return head_.forward(feat_.forward(obs));
}

template <typename T>
Mat<T> DqnAgent<T>::target_q_values(const Mat<T>& obs) const {
  return target_head_.forward(target_feat_.forward(obs));
}

template <typename T>
Vec<T> DqnAgent<T>::targets(const Batch<T>& batch) const {
  const Mat<T> next_q = target_q_values(batch.next_obs);
  Vec<T> y(batch.size());
  const T gamma = static_cast<T>(cfg_.gamma);
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    y(i) = bellman_target(batch.reward(i), batch.done(i) != T(0), next_q.row(i).maxCoeff(), gamma);
  return y;
}

template <typename T>
typename DqnAgent<T>::LossGrad DqnAgent<T>::loss_and_grad(const Batch<T>& batch) const {
  if (batch.size() == 0) throw std::invalid_argument("DqnAgent: empty batch");
  const Vec<T> y = targets(batch);
  typename Network<T>::Cache fcache, hcache;
  const Mat<T> f = feat_.forward(batch.obs, &fcache);
  const Mat<T> q = head_.forward(f, &hcache);
  Mat<T> dq = Mat<T>::Zero(q.rows(), q.cols());
  LossGrad out;
  const T inv_b = T(1) / static_cast<T>(batch.size());
  T loss = 0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto a = static_cast<Eigen::Index>(batch.act(i, 0));
    if (a < 0 || a >= q.cols()) throw std::invalid_argument("DqnAgent: action index out of range");
    const T err = q(i, a) - y(i);
    loss += T(0.5) * err * err;
    dq(i, a) = err * inv_b;
  }
  out.loss = loss * inv_b;
  auto hg = head_.backward(hcache, dq, feat_.has_encoder());
  out.head = std::move(hg.params);
  if (feat_.has_encoder()) out.encoder = feat_.backward(fcache, hg.input);
  return out;
}

template <typename T>
DqnLosses DqnAgent<T>::update(const Batch<T>& batch) {
  LossGrad g = loss_and_grad(batch);
  head_opt_.step(head_, g.head);
  if (feat_.has_encoder()) enc_opt_.step(feat_.encoder(), g.encoder);
  ++updates_;
  if (updates_ % static_cast<std::uint64_t>(cfg_.sync_period) == 0) sync_target();
  return {static_cast<double>(g.loss)};
}

template <typename T>
void DqnAgent<T>::sync_target() {
  target_feat_.copy_from(feat_);
  target_head_.copy_from(head_);
}

template class DqnAgent<float>;
template class DqnAgent<double>;

}  // namespace ms::learn
