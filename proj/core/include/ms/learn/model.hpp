#pragma once

#include <cstdint>
#include <optional>

#include "ms/learn/network.hpp"

namespace ms::learn {

// Observation row: channels*side*side image values (channel-major) followed
// by `extras` plain scalars. With no image, the extras are the features.
struct ObsLayout {
  int channels = 0;
  int side = 0;
  int extras = 0;

  int image_size() const { return channels * side * side; }
  int size() const { return image_size() + extras; }
  bool has_image() const { return channels > 0; }
  bool operator==(const ObsLayout&) const = default;
};

// Optional convolutional encoder whose output is concatenated with the
// observation's extra scalars.
template <typename T>
class FeatureNet {
 public:
  using Cache = typename Network<T>::Cache;

  FeatureNet() = default;
  FeatureNet(ObsLayout layout, int feature_size, std::uint64_t seed) : layout_(layout) {
    if (layout.has_image()) encoder_ = Network<T>({layout.channels, layout.side, layout.side}, default_encoder(feature_size), seed);
  }

  const ObsLayout& layout() const { return layout_; }
  int output_size() const { return (layout_.has_image() ? encoder_->output_size() : 0) + layout_.extras; }
  bool has_encoder() const { return encoder_.has_value(); }
  Network<T>& encoder() { return *encoder_; }
  const Network<T>& encoder() const { return *encoder_; }

  Mat<T> forward(const Mat<T>& obs, Cache* cache = nullptr) const {
    if (obs.cols() != layout_.size()) throw std::invalid_argument("FeatureNet: observation width mismatch");
    if (!encoder_) return obs;
    Mat<T> enc = encoder_->forward(obs.leftCols(layout_.image_size()), cache);
    if (layout_.extras == 0) return enc;
    Mat<T> out(obs.rows(), output_size());
    out << enc, obs.rightCols(layout_.extras);
    return out;
  }

  // Encoder parameter gradients for an upstream gradient on the features;
  // empty when there is no encoder.
  std::vector<Mat<T>> backward(const Cache& cache, const Mat<T>& dfeat) const {
    if (!encoder_) return {};
    return encoder_->backward(cache, dfeat.leftCols(encoder_->output_size()), false).params;
  }

  void copy_from(const FeatureNet& o) {
    if (encoder_) encoder_->copy_from(*o.encoder_);
  }
  void polyak_from(const FeatureNet& o, T tau) {
    if (encoder_) encoder_->polyak_from(*o.encoder_, tau);
  }

 private:
  ObsLayout layout_;
  std::optional<Network<T>> encoder_;
};

}  // namespace ms::learn
