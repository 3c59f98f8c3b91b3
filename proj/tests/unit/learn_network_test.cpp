#include <gtest/gtest.h>

#include "finite_diff.hpp"
#include "ms/learn/network.hpp"
#include "ms/rng.hpp"
#include "naive_net.hpp"

using namespace ms::learn;

namespace {

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, ms::Rng& rng, double scale = 1.0) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.uniform(-1.0, 1.0);
  return m;
}

// Weighted-sum loss L = <R, f(x)>, so dL/dy = R.
struct Probe {
  Network<double>& net;
  Mat<double> x, r;

  double loss() const { return net.forward(x).cwiseProduct(r).sum(); }
};

ms::test::FdResult check_layer_grads(Network<double>& net, int batch, std::uint64_t seed, std::size_t stride = 1) {
  ms::Rng rng(seed);
  Probe probe{net, random_mat(batch, net.input_size(), rng), random_mat(batch, net.output_size(), rng)};
  Network<double>::Cache cache;
  net.forward(probe.x, &cache);
  auto g = net.backward(cache, probe.r);
  auto params = ms::test::finite_difference_check(net.params_mut(), g.params, [&] { return probe.loss(); }, 1e-4, 1e-5,
                                                  1e-6, stride);
  std::vector<Mat<double>> xs{probe.x};
  auto input = ms::test::finite_difference_check(xs, {g.input}, [&] {
    probe.x = xs[0];
    return probe.loss();
  }, 1e-4, 1e-5, 1e-6, stride);
  params.worst = std::max(params.worst, input.worst);
  params.checked += input.checked;
  params.kinks += input.kinks;
  return params;
}

}  // namespace

TEST(Network, IdentityDensePassesInputThrough) {
  Network<double> net({4, 1, 1}, {LayerSpec::dense(4)}, 1);
  net.params_mut()[0] = Mat<double>::Identity(4, 4);
  net.params_mut()[1].setZero();
  Mat<double> x(2, 4);
  x << 1, -2, 3, 0.5, 0, 7, -1, 2;
  EXPECT_EQ(net.forward(x), x);
}

TEST(Network, ZeroWeightsWithReluGiveZero) {
  Network<double> net({6, 1, 1}, {LayerSpec::dense(5, true), LayerSpec::relu()}, 3);
  ms::Rng rng(2);
  EXPECT_TRUE(net.forward(random_mat(3, 6, rng)).isZero(0.0));
}

TEST(Network, MatchesNaiveEvaluator) {
  Network<double> net({2, 12, 12},
                      {LayerSpec::conv(3, 3), LayerSpec::relu(), LayerSpec::maxpool(2), LayerSpec::conv(4, 2, 2),
                       LayerSpec::tanh(), LayerSpec::dense(7), LayerSpec::sigmoid(), LayerSpec::dense(3), LayerSpec::linear()},
                      11);
  ms::Rng rng(5);
  const Mat<double> x = random_mat(4, net.input_size(), rng);
  const Mat<double> y = net.forward(x);
  for (int b = 0; b < 4; ++b) {
    std::vector<double> row(x.row(b).data(), x.row(b).data() + x.cols());
    const auto ref = ms::test::naive_forward(net, row);
    for (int j = 0; j < y.cols(); ++j) EXPECT_NEAR(y(b, j), ref[static_cast<std::size_t>(j)], 1e-12);
  }
}

TEST(Network, SingleWeightGradientIsUpstreamTimesInput) {
  Network<double> net({1, 1, 1}, {LayerSpec::dense(1)}, 0);
  net.params_mut()[0](0, 0) = 0.7;
  Mat<double> x(1, 1);
  x(0, 0) = 3.0;
  Network<double>::Cache c;
  net.forward(x, &c);
  Mat<double> up(1, 1);
  up(0, 0) = 2.0;
  const auto g = net.backward(c, up);
  EXPECT_DOUBLE_EQ(g.params[0](0, 0), 6.0);
  EXPECT_DOUBLE_EQ(g.params[1](0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.input(0, 0), 1.4);
}

struct LayerCase {
  const char* name;
  Shape3 input;
  std::vector<LayerSpec> layers;
};

class LayerGradient : public ::testing::TestWithParam<LayerCase> {};

TEST_P(LayerGradient, MatchesCentralDifferences) {
  const LayerCase& lc = GetParam();
  Network<double> net(lc.input, lc.layers, 17);
  const auto r = check_layer_grads(net, 3, 23, net.param_count() > 10000 ? 13 : 1);
  EXPECT_LT(r.worst, 1e-4) << lc.name;
  EXPECT_LE(r.kink_fraction(), 0.01) << lc.name;
}

INSTANTIATE_TEST_SUITE_P(
    AllKinds, LayerGradient,
    ::testing::Values(LayerCase{"dense", {5, 1, 1}, {LayerSpec::dense(4)}},
                      LayerCase{"conv", {2, 7, 7}, {LayerSpec::conv(3, 3)}},
                      LayerCase{"conv_stride2", {2, 9, 9}, {LayerSpec::conv(2, 3, 2)}},
                      LayerCase{"maxpool", {2, 6, 6}, {LayerSpec::maxpool(2)}},
                      LayerCase{"relu", {8, 1, 1}, {LayerSpec::dense(6), LayerSpec::relu()}},
                      LayerCase{"tanh", {8, 1, 1}, {LayerSpec::tanh()}},
                      LayerCase{"sigmoid", {8, 1, 1}, {LayerSpec::sigmoid()}},
                      LayerCase{"linear", {8, 1, 1}, {LayerSpec::linear()}},
                      LayerCase{"encoder", {1, 40, 40}, default_encoder()}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Network, MaxPoolRoutesGradientToArgmaxOnly) {
  Network<double> net({1, 2, 2}, {LayerSpec::maxpool(2)}, 0);
  Mat<double> x(1, 4);
  x << 0.1, 0.9, -0.3, 0.2;
  Network<double>::Cache c;
  net.forward(x, &c);
  Mat<double> up(1, 1);
  up(0, 0) = 5.0;
  const auto g = net.backward(c, up);
  Mat<double> expect(1, 4);
  expect << 0, 5, 0, 0;
  EXPECT_EQ(g.input, expect);
}

TEST(Network, BackwardOnStaleCacheThrows) {
  Network<double> net({3, 1, 1}, {LayerSpec::dense(2)}, 0);
  Network<double>::Cache c;
  net.forward(Mat<double>::Ones(1, 3), &c);
  net.params_mut()[0](0, 0) += 1.0;
  EXPECT_THROW(net.backward(c, Mat<double>::Ones(1, 2)), StaleCacheError);
  Network<double> other = net;
  net.forward(Mat<double>::Ones(1, 3), &c);
  EXPECT_THROW(other.backward(c, Mat<double>::Ones(1, 2)), StaleCacheError);
}

TEST(Network, InputShapeMismatchThrows) {
  Network<double> net({3, 1, 1}, {LayerSpec::dense(2)}, 0);
  EXPECT_THROW(net.forward(Mat<double>::Ones(1, 4)), std::invalid_argument);
  EXPECT_THROW(Network<double>({1, 3, 3}, {LayerSpec::conv(1, 5)}, 0), std::invalid_argument);
}

TEST(Network, InitializationIsDeterministicPerSeed) {
  Network<double> a({1, 40, 40}, default_encoder(), 9), b({1, 40, 40}, default_encoder(), 9), c({1, 40, 40}, default_encoder(), 10);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  EXPECT_EQ(a.output_size(), 98);
  EXPECT_EQ((Shape3{16, 6, 6}), a.layer_output_shapes()[6]);
}

TEST(Network, PolyakWithUnitTauEqualsCopyAndLeavesSourceUntouched) {
  Network<double> live({4, 1, 1}, mlp({8}, 2), 1);
  Network<double> t1({4, 1, 1}, mlp({8}, 2), 2);
  Network<double> t2 = t1;
  const auto before = live.params();
  t1.polyak_from(live, 1.0);
  t2.copy_from(live);
  EXPECT_EQ(t1.params(), t2.params());
  EXPECT_EQ(live.params(), before);
  EXPECT_THROW(t1.polyak_from(live, 0.0), std::invalid_argument);
}

TEST(Network, TensorForwardShapes) {
  Network<double> conv({1, 6, 6}, {LayerSpec::conv(2, 3)}, 0);
  Tensor<double> x({3, 1, 6, 6}, 0.5);
  EXPECT_EQ(conv.forward(x).shape(), (std::vector<int>{3, 2, 4, 4}));
  EXPECT_THROW(conv.forward(Tensor<double>({3, 35}, 0.0)), std::invalid_argument);
  EXPECT_THROW(Tensor<double>({1, 2, 3, 4, 5}), std::invalid_argument);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>(3)), std::invalid_argument);
}

TEST(Network, FloatCastAgreesWithDouble) {
  Network<double> d({1, 40, 40}, default_encoder(), 4);
  Network<float> f = d.cast<float>();
  ms::Rng rng(1);
  const Mat<double> x = random_mat(2, d.input_size(), rng);
  const Mat<double> yd = d.forward(x);
  const Mat<float> yf = f.forward(x.cast<float>());
  EXPECT_LT((yd - yf.cast<double>()).cwiseAbs().maxCoeff(), 1e-4);
}
