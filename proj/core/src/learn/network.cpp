#include "ms/learn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ms/rng.hpp"

namespace ms::learn {

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

std::vector<LayerSpec> default_encoder(int feature_size) {
  return {LayerSpec::conv(8, 5),  LayerSpec::relu(), LayerSpec::maxpool(2),
          LayerSpec::conv(16, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
          LayerSpec::conv(16, 3), LayerSpec::relu(), LayerSpec::dense(feature_size),
          LayerSpec::tanh()};
}

std::vector<LayerSpec> mlp(const std::vector<int>& hidden, int out, bool zero_output) {
  std::vector<LayerSpec> layers;
  for (int h : hidden) {
    layers.push_back(LayerSpec::dense(h));
    layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::dense(out, zero_output));
  return layers;
}

template <typename T>
Network<T>::Network(Shape3 input, std::vector<LayerSpec> layers, std::uint64_t seed)
    : input_(input), layers_(std::move(layers)) {
  if (input_.size() <= 0) throw std::invalid_argument("Network: empty input shape");
  Rng rng(seed);
  Shape3 s = input_;
  for (const auto& l : layers_) {
    int first_param = -1;
    switch (l.kind) {
      case LayerKind::dense: {
        if (l.units <= 0) throw std::invalid_argument("Network: dense width must be positive");
        const int fan_in = s.size();
        first_param = static_cast<int>(params_.size());
        Mat<T> w(l.units, fan_in);
        Mat<T> b(1, l.units);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = l.zero_init ? T(0) : static_cast<T>(rng.uniform(-bound, bound));
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = l.zero_init ? T(0) : static_cast<T>(rng.uniform(-bound, bound));
        params_.push_back(std::move(w));
        params_.push_back(std::move(b));
        s = {l.units, 1, 1};
        break;
      }
      case LayerKind::conv: {
        if (l.units <= 0 || l.kernel <= 0 || l.stride <= 0) throw std::invalid_argument("Network: bad conv parameters");
        if (s.h < l.kernel || s.w < l.kernel) throw std::invalid_argument("Network: conv kernel larger than input");
        const int fan_in = s.c * l.kernel * l.kernel;
        first_param = static_cast<int>(params_.size());
        Mat<T> w(l.units, fan_in);
        Mat<T> b(1, l.units);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = l.zero_init ? T(0) : static_cast<T>(rng.uniform(-bound, bound));
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = l.zero_init ? T(0) : static_cast<T>(rng.uniform(-bound, bound));
        params_.push_back(std::move(w));
        params_.push_back(std::move(b));
        s = {l.units, (s.h - l.kernel) / l.stride + 1, (s.w - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::maxpool:
        if (l.kernel <= 0 || s.h < l.kernel || s.w < l.kernel) throw std::invalid_argument("Network: bad pool window");
        s = {s.c, s.h / l.kernel, s.w / l.kernel};
        break;
      case LayerKind::relu:
      case LayerKind::tanh:
      case LayerKind::sigmoid:
      case LayerKind::linear:
        break;
      default:
        throw std::invalid_argument("Network: unknown layer kind");
    }
    param_index_.push_back(first_param);
    shapes_.push_back(s);
  }
}

template <typename T>
std::size_t Network<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

template <typename T>
void Network<T>::check_input(const Mat<T>& x) const {
  if (x.cols() != input_.size()) {
    throw std::invalid_argument("Network: input has " + std::to_string(x.cols()) + " features, expected " +
                                std::to_string(input_.size()));
  }
}

namespace {

// Per sample: a (c*k*k) x (oh*ow) block, one row per kernel tap, stacked over
// the batch. Rows are the same fan-in order as the weight columns.
template <typename T>
void im2col(const Mat<T>& x, Shape3 in, int k, int stride, Shape3 out, Mat<T>& col) {
  const Eigen::Index batch = x.rows();
  const int fan = in.c * k * k;
  const int hw = out.h * out.w;
  col.resize(batch * fan, hw);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const T* src = x.row(b).data();
    for (int c = 0; c < in.c; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          T* dst = col.row(b * fan + (c * k + ky) * k + kx).data();
          for (int oy = 0; oy < out.h; ++oy) {
            const T* line = src + c * in.h * in.w + (oy * stride + ky) * in.w + kx;
            if (stride == 1) {
              std::copy(line, line + out.w, dst);
              dst += out.w;
            } else {
              for (int ox = 0; ox < out.w; ++ox) *dst++ = line[ox * stride];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& dcol, Eigen::Index b, Shape3 in, int k, int stride, Shape3 out, T* dst) {
  const int fan = in.c * k * k;
  for (int c = 0; c < in.c; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = dcol.row(b * fan + (c * k + ky) * k + kx).data();
        for (int oy = 0; oy < out.h; ++oy) {
          T* line = dst + c * in.h * in.w + (oy * stride + ky) * in.w + kx;
          for (int ox = 0; ox < out.w; ++ox) line[ox * stride] += *src++;
        }
      }
    }
  }
}

template <typename T>
using Block = Eigen::Map<Mat<T>>;
template <typename T>
using ConstBlock = Eigen::Map<const Mat<T>>;

}  // namespace

template <typename T>
Mat<T> Network<T>::forward(const Mat<T>& x, Cache* cache) const {
  check_input(x);
  if (cache) {
    cache->owner = this;
    cache->version = version_;
    cache->inputs.assign(layers_.size(), Mat<T>());
    cache->cols.assign(layers_.size(), Mat<T>());
    cache->argmax.assign(layers_.size(), {});
  }
  Mat<T> a = x;
  Shape3 s = input_;
  const Eigen::Index batch = x.rows();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Shape3 o = shapes_[i];
    Mat<T> y;
    switch (l.kind) {
      case LayerKind::dense: {
        const auto& w = params_[static_cast<std::size_t>(param_index_[i])];
        const auto& b = params_[static_cast<std::size_t>(param_index_[i]) + 1];
        y.noalias() = a * w.transpose();
        y.rowwise() += b.row(0);
        break;
      }
      case LayerKind::conv: {
        const auto& w = params_[static_cast<std::size_t>(param_index_[i])];
        const auto& b = params_[static_cast<std::size_t>(param_index_[i]) + 1];
        Mat<T> col;
        im2col(a, s, l.kernel, l.stride, o, col);
        const int hw = o.h * o.w;
        const Eigen::Index fan = w.cols();
        y.resize(batch, o.size());
        for (Eigen::Index bi = 0; bi < batch; ++bi) {
          Block<T> yb(y.row(bi).data(), o.c, hw);
          yb.noalias() = w * col.middleRows(bi * fan, fan);
          yb.colwise() += b.row(0).transpose();
        }
        if (cache) cache->cols[i] = std::move(col);
        break;
      }
      case LayerKind::maxpool: {
        y.resize(batch, o.size());
        std::vector<int> arg(cache ? static_cast<std::size_t>(batch * o.size()) : 0);
        const int k = l.kernel;
        for (Eigen::Index bi = 0; bi < batch; ++bi) {
          const T* src = a.row(bi).data();
          T* dst = y.row(bi).data();
          int* am = cache ? arg.data() + bi * o.size() : nullptr;
          for (int c = 0; c < o.c; ++c) {
            const int plane = c * s.h * s.w;
            for (int oy = 0; oy < o.h; ++oy) {
              for (int ox = 0; ox < o.w; ++ox) {
                int best = plane + oy * k * s.w + ox * k;
                T bv = src[best];
                for (int ky = 0; ky < k; ++ky) {
                  const int row = plane + (oy * k + ky) * s.w + ox * k;
                  for (int kx = 0; kx < k; ++kx) {
                    if (src[row + kx] > bv) {
                      bv = src[row + kx];
                      best = row + kx;
                    }
                  }
                }
                const int out_idx = c * o.h * o.w + oy * o.w + ox;
                dst[out_idx] = bv;
                if (am) am[out_idx] = best;
              }
            }
          }
        }
        if (cache) cache->argmax[i] = std::move(arg);
        break;
      }
      case LayerKind::relu:
        y = a.cwiseMax(T(0));
        break;
      case LayerKind::tanh:
        y = a.array().tanh();
        break;
      case LayerKind::sigmoid:
        y = (T(1) / (T(1) + (-a.array()).exp())).matrix();
        break;
      case LayerKind::linear:
        y = a;
        break;
    }
    if (cache) cache->inputs[i] = std::move(a);
    a = std::move(y);
    s = o;
  }
  if (cache) cache->output = a;
  return a;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x) const {
  if (x.rank() < 2) throw std::invalid_argument("Network: tensor input needs a batch dimension");
  const int batch = x.dim(0);
  const std::size_t per = x.size() / static_cast<std::size_t>(std::max(batch, 1));
  if (per != static_cast<std::size_t>(input_.size())) throw std::invalid_argument("Network: tensor input shape mismatch");
  Mat<T> m = Eigen::Map<const Mat<T>>(x.data(), batch, input_.size());
  Mat<T> y = forward(m);
  const Shape3 o = output_shape();
  std::vector<int> shape = (o.h == 1 && o.w == 1) ? std::vector<int>{batch, o.c} : std::vector<int>{batch, o.c, o.h, o.w};
  return Tensor<T>(shape, std::vector<T>(y.data(), y.data() + y.size()));
}

template <typename T>
typename Network<T>::Gradients Network<T>::zero_gradients() const {
  Gradients g;
  for (const auto& p : params_) g.params.push_back(Mat<T>::Zero(p.rows(), p.cols()));
  return g;
}

template <typename T>
typename Network<T>::Gradients Network<T>::backward(const Cache& cache, const Mat<T>& dy, bool want_input_grad) const {
  if (cache.owner != this || cache.version != version_ || cache.inputs.size() != layers_.size()) {
    throw StaleCacheError("Network::backward: cache does not belong to the current parameters");
  }
  if (dy.rows() != cache.output.rows() || dy.cols() != cache.output.cols()) {
    throw std::invalid_argument("Network::backward: upstream gradient shape mismatch");
  }
  Gradients g = zero_gradients();
  Mat<T> d = dy;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const LayerSpec& l = layers_[li];
    const Mat<T>& in = cache.inputs[li];
    const Mat<T>& out = li + 1 < layers_.size() ? cache.inputs[li + 1] : cache.output;
    const Shape3 s = li == 0 ? input_ : shapes_[li - 1];
    const Shape3 o = shapes_[li];
    const bool need_dx = want_input_grad || li > 0;
    const Eigen::Index batch = in.rows();
    switch (l.kind) {
      case LayerKind::dense: {
        const auto pi = static_cast<std::size_t>(param_index_[li]);
        g.params[pi].noalias() = d.transpose() * in;
        g.params[pi + 1] = d.colwise().sum();
        if (need_dx) d = d * params_[pi];
        break;
      }
      case LayerKind::conv: {
        const auto pi = static_cast<std::size_t>(param_index_[li]);
        const int hw = o.h * o.w;
        const Mat<T>& w = params_[pi];
        const Eigen::Index fan = w.cols();
        const Mat<T>& col = cache.cols[li];
        Mat<T> dx;
        if (need_dx) dx = Mat<T>::Zero(batch, s.size());
        Mat<T> dcol(fan, hw);
        for (Eigen::Index bi = 0; bi < batch; ++bi) {
          ConstBlock<T> db(d.row(bi).data(), o.c, hw);
          g.params[pi].noalias() += db * col.middleRows(bi * fan, fan).transpose();
          g.params[pi + 1] += db.rowwise().sum().transpose();
          if (need_dx) {
            dcol.noalias() = w.transpose() * db;
            col2im(dcol, 0, s, l.kernel, l.stride, o, dx.row(bi).data());
          }
        }
        if (need_dx) d = std::move(dx);
        break;
      }
      case LayerKind::maxpool: {
        Mat<T> dx = Mat<T>::Zero(batch, s.size());
        const auto& arg = cache.argmax[li];
        for (Eigen::Index bi = 0; bi < batch; ++bi)
          for (int j = 0; j < o.size(); ++j) dx(bi, arg[static_cast<std::size_t>(bi * o.size() + j)]) += d(bi, j);
        d = std::move(dx);
        break;
      }
      case LayerKind::relu:
        d = (in.array() > T(0)).select(d, T(0));
        break;
      case LayerKind::tanh:
        d = (d.array() * (T(1) - out.array().square())).matrix();
        break;
      case LayerKind::sigmoid:
        d = (d.array() * out.array() * (T(1) - out.array())).matrix();
        break;
      case LayerKind::linear:
        break;
    }
  }
  if (want_input_grad) g.input = std::move(d);
  return g;
}

template <typename T>
void Network<T>::copy_from(const Network& other) {
  if (!same_architecture(other)) throw std::invalid_argument("Network::copy_from: architecture mismatch");
  params_ = other.params_;
  ++version_;
}

template <typename T>
void Network<T>::polyak_from(const Network& other, T tau) {
  if (!same_architecture(other)) throw std::invalid_argument("Network::polyak_from: architecture mismatch");
  if (!(tau > T(0) && tau <= T(1))) throw std::invalid_argument("Network::polyak_from: tau must lie in (0, 1]");
  if (tau == T(1)) {
    params_ = other.params_;
  } else {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] = tau * other.params_[i] + (T(1) - tau) * params_[i];
  }
  ++version_;
}

template class Network<float>;
template class Network<double>;

}  // namespace ms::learn
