#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ms/learn/tensor.hpp"

namespace ms::learn {

enum class LayerKind : std::uint8_t { dense = 1, conv = 2, maxpool = 3, relu = 4, tanh = 5, sigmoid = 6, linear = 7 };

const char* to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::linear;
  int units = 0;   // dense width or conv output channels
  int kernel = 0;  // conv kernel side or pool window
  int stride = 1;
  bool zero_init = false;

  static LayerSpec dense(int width, bool zero = false) { return {LayerKind::dense, width, 0, 1, zero}; }
  static LayerSpec conv(int channels, int kernel, int stride = 1) { return {LayerKind::conv, channels, kernel, stride, false}; }
  static LayerSpec maxpool(int window) { return {LayerKind::maxpool, 0, window, window, false}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec tanh() { return {LayerKind::tanh}; }
  static LayerSpec sigmoid() { return {LayerKind::sigmoid}; }
  static LayerSpec linear() { return {LayerKind::linear}; }

  bool operator==(const LayerSpec&) const = default;
};

// Channel-major activation shape; dense activations are (n, 1, 1).
struct Shape3 {
  int c = 0, h = 1, w = 1;
  int size() const { return c * h * w; }
  bool operator==(const Shape3&) const = default;
};

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
class Network {
 public:
  struct Cache {
    const Network* owner = nullptr;
    std::uint64_t version = 0;
    std::vector<Mat<T>> inputs;           // input to each layer
    Mat<T> output;
    std::vector<Mat<T>> cols;             // im2col buffers, conv layers only
    std::vector<std::vector<int>> argmax; // flat source index per pooled value
  };

  struct Gradients {
    std::vector<Mat<T>> params;
    Mat<T> input;
  };

  Network() = default;
  Network(Shape3 input, std::vector<LayerSpec> layers, std::uint64_t seed);

  Shape3 input_shape() const { return input_; }
  Shape3 output_shape() const { return shapes_.empty() ? input_ : shapes_.back(); }
  int input_size() const { return input_.size(); }
  int output_size() const { return output_shape().size(); }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<Shape3>& layer_output_shapes() const { return shapes_; }

  // Parameter matrices in layer order: (W, b) per dense/conv layer.
  // W is (out, fan_in); b is (1, out).
  const std::vector<Mat<T>>& params() const { return params_; }
  // Mutable access invalidates outstanding caches.
  std::vector<Mat<T>>& params_mut() {
    ++version_;
    return params_;
  }
  std::size_t param_count() const;
  std::uint64_t version() const { return version_; }

  Mat<T> forward(const Mat<T>& x, Cache* cache = nullptr) const;
  Tensor<T> forward(const Tensor<T>& x) const;
  Gradients backward(const Cache& cache, const Mat<T>& dy, bool want_input_grad = true) const;

  Gradients zero_gradients() const;

  void copy_from(const Network& other);
  // this <- tau * other + (1 - tau) * this
  void polyak_from(const Network& other, T tau);
  bool same_architecture(const Network& other) const {
    return input_ == other.input_ && layers_ == other.layers_;
  }

  template <typename U>
  Network<U> cast() const {
    Network<U> out;
    out.input_ = input_;
    out.layers_ = layers_;
    out.shapes_ = shapes_;
    out.param_index_ = param_index_;
    for (const auto& p : params_) out.params_.push_back(p.template cast<U>());
    return out;
  }

 private:
  template <typename U>
  friend class Network;

  void check_input(const Mat<T>& x) const;

  Shape3 input_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape3> shapes_;
  std::vector<int> param_index_;  // first param slot of each layer, -1 if none
  std::vector<Mat<T>> params_;
  std::uint64_t version_ = 1;
};

extern template class Network<float>;
extern template class Network<double>;

// Features of size 98 from a 40x40 single- or multi-channel crop.
std::vector<LayerSpec> default_encoder(int feature_size = 98);

// Fully connected head: hidden relu layers then a linear output.
std::vector<LayerSpec> mlp(const std::vector<int>& hidden, int out, bool zero_output = false);

}  // namespace ms::learn
