#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace ms::learn {

// Batch-major activations: one sample per row.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Dense N-d array (N <= 4) with contiguous row-major storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T{}) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(count(shape_), fill);
  }
  Tensor(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != count(shape_)) throw std::invalid_argument("Tensor: element count does not match shape");
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool operator==(const Tensor&) const = default;

  static std::size_t count(const std::vector<int>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
  }

 private:
  void check_shape() const {
    if (shape_.empty() || shape_.size() > 4) throw std::invalid_argument("Tensor: rank must be 1..4");
    for (int d : shape_)
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

}  // namespace ms::learn
