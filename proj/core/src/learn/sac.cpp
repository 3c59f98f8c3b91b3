#include "ms/learn/sac.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ms::learn {

void SacConfig::validate() const {
  if (action_dim < 1) throw std::invalid_argument("SacConfig: action_dim must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("SacConfig: gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("SacConfig: tau must lie in (0, 1]");
  if (!(lr > 0.0 && alpha_lr > 0.0)) throw std::invalid_argument("SacConfig: learning rates must be positive");
  if (!(init_alpha > 0.0)) throw std::invalid_argument("SacConfig: init_alpha must be positive");
  if (!(log_std_min < log_std_max)) throw std::invalid_argument("SacConfig: empty log-std range");
  if (layout.size() <= 0) throw std::invalid_argument("SacConfig: empty observation layout");
}

namespace {

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

template <typename T>
SacAgent<T>::SacAgent(const SacConfig& cfg) : cfg_(cfg), rng_(mix_seed(cfg.seed, 4)) {
  cfg_.validate();
  enc_ = FeatureNet<T>(cfg.layout, cfg.feature_size, mix_seed(cfg.seed, 0));
  target_enc_ = enc_;
  const int f = enc_.output_size();
  const int a = cfg.action_dim;
  actor_ = Network<T>({f, 1, 1}, mlp(cfg.actor_hidden, 2 * a, cfg.zero_actor_output), mix_seed(cfg.seed, 1));
  q1_ = Network<T>({f + a, 1, 1}, mlp(cfg.critic_hidden, 1), mix_seed(cfg.seed, 2));
  q2_ = Network<T>({f + a, 1, 1}, mlp(cfg.critic_hidden, 1), mix_seed(cfg.seed, 3));
  tq1_ = q1_;
  tq2_ = q2_;
  log_alpha_ = static_cast<T>(std::log(cfg.init_alpha));
  const AdamConfig adam{cfg.lr};
  if (enc_.has_encoder()) enc_opt_ = Adam<T>(enc_.encoder(), adam);
  actor_opt_ = Adam<T>(actor_, adam);
  q1_opt_ = Adam<T>(q1_, adam);
  q2_opt_ = Adam<T>(q2_, adam);
  alpha_opt_ = Adam<T>(std::vector<Mat<T>>{Mat<T>::Zero(1, 1)}, AdamConfig{cfg.alpha_lr});
}

template <typename T>
T SacAgent<T>::alpha() const {
  return std::exp(log_alpha_);
}

template <typename T>
Mat<T> SacAgent<T>::critic_input(const Mat<T>& feats, const Mat<T>& action) const {
  Mat<T> in(feats.rows(), feats.cols() + action.cols());
  in << feats, action;
  return in;
}

template <typename T>
typename SacAgent<T>::PolicySample SacAgent<T>::policy(const Mat<T>& feats, const Mat<T>& eps, Cache* cache) const {
  const int a = cfg_.action_dim;
  const Mat<T> out = actor_.forward(feats, cache);
  if (eps.rows() != feats.rows() || eps.cols() != a) throw std::invalid_argument("SacAgent::policy: noise shape mismatch");
  PolicySample s;
  s.mean = out.leftCols(a);
  s.raw_log_std = out.rightCols(a);
  const T lo = static_cast<T>(cfg_.log_std_min);
  const T half_span = static_cast<T>(0.5 * (cfg_.log_std_max - cfg_.log_std_min));
  s.log_std = (lo + half_span * (s.raw_log_std.array().tanh() + T(1))).matrix();
  s.eps = eps;
  s.u = (s.mean.array() + s.log_std.array().exp() * eps.array()).matrix();
  s.action = s.u.array().tanh().matrix();
  s.log_prob.resize(feats.rows());
  const T half_log_2pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
  const T log2 = static_cast<T>(std::numbers::ln2);
  for (Eigen::Index r = 0; r < feats.rows(); ++r) {
    T lp = 0;
    for (int j = 0; j < a; ++j) {
      const T u = s.u(r, j);
      // log(1 - tanh(u)^2) written without cancellation.
      const T log_jac = T(2) * (log2 - u - softplus(T(-2) * u));
      lp += T(-0.5) * eps(r, j) * eps(r, j) - s.log_std(r, j) - half_log_2pi - log_jac;
    }
    s.log_prob(r) = lp;
  }
  return s;
}

template <typename T>
Mat<T> SacAgent<T>::draw_noise(Eigen::Index rows) {
  Mat<T> eps(rows, cfg_.action_dim);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<T>(rng_.normal());
  return eps;
}

template <typename T>
Mat<T> SacAgent<T>::act(const Mat<T>& obs, bool deterministic, Rng& rng) const {
  Mat<T> eps = Mat<T>::Zero(obs.rows(), cfg_.action_dim);
  if (!deterministic)
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<T>(rng.normal());
  return policy(features(obs), eps).action;
}

template <typename T>
Vec<T> SacAgent<T>::min_q(const Mat<T>& obs, const Mat<T>& action) const {
  const Mat<T> in = critic_input(features(obs), action);
  return q1_.forward(in).col(0).cwiseMin(q2_.forward(in).col(0));
}

template <typename T>
Vec<T> SacAgent<T>::critic_targets(const Batch<T>& batch, const Mat<T>& eps_next) const {
  const Mat<T> f = target_enc_.forward(batch.next_obs);
  const PolicySample s = policy(f, eps_next);
  const Mat<T> in = critic_input(f, s.action);
  const Vec<T> tq = tq1_.forward(in).col(0).cwiseMin(tq2_.forward(in).col(0));
  const T gamma = static_cast<T>(cfg_.gamma);
  const T al = alpha();
  Vec<T> y(batch.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    y(i) = batch.done(i) != T(0) ? batch.reward(i) : batch.reward(i) + gamma * (tq(i) - al * s.log_prob(i));
  }
  return y;
}

template <typename T>
typename SacAgent<T>::CriticGrad SacAgent<T>::critic_loss(const Batch<T>& batch, const Mat<T>& eps_next) const {
  if (batch.size() == 0) throw std::invalid_argument("SacAgent: empty batch");
  const Vec<T> y = critic_targets(batch, eps_next);
  Cache ec, c1, c2;
  const Mat<T> f = enc_.forward(batch.obs, &ec);
  const Mat<T> in = critic_input(f, batch.act);
  const Mat<T> q1 = q1_.forward(in, &c1);
  const Mat<T> q2 = q2_.forward(in, &c2);
  const T inv_b = T(1) / static_cast<T>(batch.size());
  const Mat<T> e1 = q1.col(0) - y;
  const Mat<T> e2 = q2.col(0) - y;
  CriticGrad out;
  out.loss = T(0.5) * inv_b * (e1.squaredNorm() + e2.squaredNorm());
  const bool enc = enc_.has_encoder();
  auto g1 = q1_.backward(c1, e1 * inv_b, enc);
  auto g2 = q2_.backward(c2, e2 * inv_b, enc);
  out.q1 = std::move(g1.params);
  out.q2 = std::move(g2.params);
  if (enc) {
    const Mat<T> dfeat = g1.input.leftCols(f.cols()) + g2.input.leftCols(f.cols());
    out.encoder = enc_.backward(ec, dfeat);
  }
  return out;
}

template <typename T>
typename SacAgent<T>::ActorGrad SacAgent<T>::actor_loss(const Mat<T>& feats, const Mat<T>& eps) const {
  const int a = cfg_.action_dim;
  const Eigen::Index b = feats.rows();
  Cache ac, c1, c2;
  const PolicySample s = policy(feats, eps, &ac);
  const Mat<T> in = critic_input(feats, s.action);
  const Mat<T> q1 = q1_.forward(in, &c1);
  const Mat<T> q2 = q2_.forward(in, &c2);
  const T inv_b = T(1) / static_cast<T>(b);
  const T al = alpha();
  Mat<T> sel1(b, 1), sel2(b, 1);
  T loss = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const bool first = q1(i, 0) <= q2(i, 0);
    sel1(i, 0) = first ? T(1) : T(0);
    sel2(i, 0) = first ? T(0) : T(1);
    loss += al * s.log_prob(i) - (first ? q1(i, 0) : q2(i, 0));
  }
  const Mat<T> dq_da = (q1_.backward(c1, sel1).input + q2_.backward(c2, sel2).input).rightCols(a);

  const T half_span = static_cast<T>(0.5 * (cfg_.log_std_max - cfg_.log_std_min));
  Mat<T> up(b, 2 * a);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (int j = 0; j < a; ++j) {
      const T t = s.action(i, j);
      const T sigma_eps = std::exp(s.log_std(i, j)) * s.eps(i, j);
      const T d_u = inv_b * (al * T(2) * t - dq_da(i, j) * (T(1) - t * t));
      const T d_ls = -inv_b * al + d_u * sigma_eps;
      const T th = std::tanh(s.raw_log_std(i, j));
      up(i, j) = d_u;
      up(i, a + j) = d_ls * half_span * (T(1) - th * th);
    }
  }
  ActorGrad out;
  out.loss = loss * inv_b;
  out.actor = actor_.backward(ac, up, false).params;
  out.log_prob = s.log_prob;
  return out;
}

template <typename T>
typename SacAgent<T>::TemperatureGrad SacAgent<T>::temperature_loss(const Vec<T>& log_prob) const {
  const T m = log_prob.mean() + static_cast<T>(cfg_.resolved_target_entropy());
  return {-log_alpha_ * m, -m};
}

template <typename T>
SacLosses SacAgent<T>::update(const Batch<T>& batch) {
  SacLosses losses;
  const Mat<T> eps_next = draw_noise(batch.size());
  CriticGrad cg = critic_loss(batch, eps_next);
  q1_opt_.step(q1_, cg.q1);
  q2_opt_.step(q2_, cg.q2);
  if (enc_.has_encoder()) enc_opt_.step(enc_.encoder(), cg.encoder);

  const Mat<T> feats = features(batch.obs);
  const Mat<T> eps = draw_noise(batch.size());
  ActorGrad ag = actor_loss(feats, eps);
  actor_opt_.step(actor_, ag.actor);

  TemperatureGrad tg = temperature_loss(ag.log_prob);
  std::vector<Mat<T>> la{Mat<T>::Constant(1, 1, log_alpha_)};
  alpha_opt_.step(la, {Mat<T>::Constant(1, 1, tg.d_log_alpha)});
  log_alpha_ = la[0](0, 0);

  const T tau = static_cast<T>(cfg_.tau);
  target_enc_.polyak_from(enc_, tau);
  tq1_.polyak_from(q1_, tau);
  tq2_.polyak_from(q2_, tau);
  ++updates_;

  losses.critic = static_cast<double>(cg.loss);
  losses.actor = static_cast<double>(ag.loss);
  losses.temperature = static_cast<double>(tg.loss);
  losses.alpha = static_cast<double>(alpha());
  losses.mean_log_prob = static_cast<double>(ag.log_prob.mean());
  return losses;
}

template class SacAgent<float>;
template class SacAgent<double>;

}  // namespace ms::learn
