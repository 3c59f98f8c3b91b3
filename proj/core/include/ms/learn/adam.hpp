#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ms/learn/network.hpp"

namespace ms::learn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<Mat<T>>& params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& p : params) {
      m_.push_back(Mat<T>::Zero(p.rows(), p.cols()));
      v_.push_back(Mat<T>::Zero(p.rows(), p.cols()));
    }
  }
  Adam(const Network<T>& net, AdamConfig cfg) : Adam(net.params(), cfg) {}

  void step(std::vector<Mat<T>>& params, const std::vector<Mat<T>>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw std::invalid_argument("Adam: parameter count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T step = static_cast<T>(cfg_.lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (T(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (T(1) - b2) * grads[i].cwiseProduct(grads[i]);
      params[i].array() -= step * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  void step(Network<T>& net, const std::vector<Mat<T>>& grads) { step(net.params_mut(), grads); }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Mat<T>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace ms::learn
