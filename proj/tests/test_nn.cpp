#include "servoscope/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "servoscope/errors.hpp"

namespace nn = servoscope::nn;
using servoscope::ConfigError;
using servoscope::FormatError;
using servoscope::NumericError;
using servoscope::ShapeError;

namespace {

std::vector<nn::LayerSpec> small_specs() {
  return {{6, 5, nn::Activation::kTanh},
          {5, 4, nn::Activation::kTanh},
          {4, 3, nn::Activation::kTanh}};
}

Eigen::VectorXd random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = gauss(rng);
  return v;
}

Eigen::VectorXd flatten(const nn::Gradient& grad) {
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < grad.weights.size(); ++l)
    total += grad.weights[l].size() + grad.bias[l].size();
  Eigen::VectorXd flat(total);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < grad.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < grad.weights[l].size(); ++i)
      flat[at++] = grad.weights[l].data()[i];
    for (Eigen::Index i = 0; i < grad.bias[l].size(); ++i)
      flat[at++] = grad.bias[l].data()[i];
  }
  return flat;
}

double functional(const nn::NetworkParams& params, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& err) {
  return err.dot(nn::forward(params, x).first);
}

// Central finite differences over every weight and bias.
nn::Gradient fd_gradient(nn::NetworkParams params, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& err, double h) {
  nn::Gradient grad;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    grad.weights.emplace_back(params.layers[l].weights.rows(),
                              params.layers[l].weights.cols());
    grad.bias.emplace_back(params.layers[l].bias.size());
    for (Eigen::Index i = 0; i < params.layers[l].weights.size(); ++i) {
      double& w = params.layers[l].weights.data()[i];
      const double saved = w;
      w = saved + h;
      const double up = functional(params, x, err);
      w = saved - h;
      const double down = functional(params, x, err);
      w = saved;
      grad.weights[l].data()[i] = (up - down) / (2 * h);
    }
    for (Eigen::Index i = 0; i < params.layers[l].bias.size(); ++i) {
      double& b = params.layers[l].bias.data()[i];
      const double saved = b;
      b = saved + h;
      const double up = functional(params, x, err);
      b = saved - h;
      const double down = functional(params, x, err);
      b = saved;
      grad.bias[l].data()[i] = (up - down) / (2 * h);
    }
  }
  return grad;
}

}  // namespace

TEST(InitNetwork, DeterministicForSeed) {
  const auto specs = small_specs();
  const nn::NetworkParams a = nn::init_network(specs, 42);
  const nn::NetworkParams b = nn::init_network(specs, 42);
  ASSERT_EQ(a.layers.size(), b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    EXPECT_TRUE(a.layers[l].weights == b.layers[l].weights);
    EXPECT_TRUE(a.layers[l].bias == b.layers[l].bias);
  }
  const nn::NetworkParams c = nn::init_network(specs, 43);
  EXPECT_FALSE(a.layers[0].weights == c.layers[0].weights);
}

TEST(InitNetwork, ChainMismatchRejected) {
  std::vector<nn::LayerSpec> specs = {{6, 5, nn::Activation::kTanh},
                                      {4, 3, nn::Activation::kTanh}};
  EXPECT_THROW(nn::init_network(specs, 1), ConfigError);
}

TEST(InitNetwork, FinalActivationMustBeTanh) {
  std::vector<nn::LayerSpec> specs = {{6, 3, nn::Activation::kIdentity}};
  EXPECT_THROW(nn::init_network(specs, 1), ConfigError);
}

TEST(InitNetwork, DefaultConfigShape) {
  const std::vector<int> hidden = {512, 256, 128, 64};
  const auto specs = nn::chain_specs(4096, hidden, 3);
  const nn::NetworkParams params = nn::init_network(specs, 7);
  EXPECT_EQ(params.layers.size(), 5u);
  EXPECT_EQ(params.input_dim, 4096);
  EXPECT_EQ(params.output_dim, 3);
  // oracle: count parameters layer by layer
  std::size_t expected = 0;
  int prev = 4096;
  for (int dims : {512, 256, 128, 64, 3}) {
    expected += static_cast<std::size_t>(prev) * dims + dims;
    prev = dims;
  }
  EXPECT_EQ(nn::parameter_count(params), expected);
  EXPECT_EQ(expected, 2270339u);
}

TEST(InitNetwork, GlorotBoundsRespected) {
  const auto specs = small_specs();
  const nn::NetworkParams params = nn::init_network(specs, 99);
  for (const nn::Layer& layer : params.layers) {
    const double limit = std::sqrt(6.0 / (layer.spec.in_dim + layer.spec.out_dim));
    EXPECT_LE(layer.weights.maxCoeff(), limit);
    EXPECT_GE(layer.weights.minCoeff(), -limit);
    EXPECT_TRUE(layer.bias.isZero(0.0));
  }
}

TEST(Forward, ZeroNetworkGivesZeroOutput) {
  nn::NetworkParams params = nn::init_network(small_specs(), 3);
  for (nn::Layer& layer : params.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  std::mt19937_64 rng(5);
  const auto [y, cache] = nn::forward(params, random_vector(6, rng));
  EXPECT_TRUE(y.isZero(0.0));
}

TEST(Forward, ScalarTanhOracle) {
  nn::NetworkParams params;
  params.input_dim = 1;
  params.output_dim = 1;
  nn::Layer layer;
  layer.spec = {1, 1, nn::Activation::kTanh};
  layer.weights = Eigen::MatrixXd::Constant(1, 1, 1.0);
  layer.bias = Eigen::VectorXd::Zero(1);
  params.layers.push_back(layer);
  const auto [y, cache] = nn::forward(params, Eigen::VectorXd::Constant(1, 0.5));
  EXPECT_DOUBLE_EQ(y[0], std::tanh(0.5));
  EXPECT_NEAR(y[0], 0.46211715726000974, 1e-15);
}

TEST(Forward, OutputAlwaysInUnitRange) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const nn::NetworkParams params = nn::init_network(small_specs(), 1000 + trial);
    const auto [y, cache] = nn::forward(params, random_vector(6, rng, 10.0));
    for (int i = 0; i < y.size(); ++i) {
      EXPECT_GE(y[i], -1.0);
      EXPECT_LE(y[i], 1.0);
    }
  }
}

TEST(Forward, RejectsBadInput) {
  const nn::NetworkParams params = nn::init_network(small_specs(), 3);
  EXPECT_THROW(nn::forward(params, Eigen::VectorXd::Zero(5)), ShapeError);
  Eigen::VectorXd bad = Eigen::VectorXd::Zero(6);
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(nn::forward(params, bad), NumericError);
}

TEST(Backprop, ZeroErrorGivesZeroGradient) {
  const nn::NetworkParams params = nn::init_network(small_specs(), 11);
  std::mt19937_64 rng(2);
  const auto [y, cache] = nn::forward(params, random_vector(6, rng));
  const nn::Gradient grad = nn::backprop(params, cache, Eigen::VectorXd::Zero(3));
  EXPECT_TRUE(flatten(grad).isZero(0.0));
}

TEST(Backprop, MatchesCentralFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const nn::NetworkParams params = nn::init_network(small_specs(), 500 + trial);
    const Eigen::VectorXd x = random_vector(6, rng);
    const Eigen::VectorXd err = random_vector(3, rng);
    const auto [y, cache] = nn::forward(params, x);
    const Eigen::VectorXd analytic = flatten(nn::backprop(params, cache, err));
    const Eigen::VectorXd numeric = flatten(fd_gradient(params, x, err, 1e-5));
    const double rel = (analytic - numeric).norm() / std::max(numeric.norm(), 1e-12);
    EXPECT_LT(rel, 1e-4) << "trial " << trial;
  }
}

TEST(Backprop, LinearInOutputError) {
  const nn::NetworkParams params = nn::init_network(small_specs(), 77);
  std::mt19937_64 rng(8);
  const auto [y, cache] = nn::forward(params, random_vector(6, rng));
  const Eigen::VectorXd e1 = random_vector(3, rng);
  const Eigen::VectorXd e2 = random_vector(3, rng);
  const Eigen::VectorXd lhs =
      flatten(nn::backprop(params, cache, e1)) + flatten(nn::backprop(params, cache, e2));
  const Eigen::VectorXd rhs = flatten(nn::backprop(params, cache, e1 + e2));
  EXPECT_LT((lhs - rhs).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(AscentStep, IdentityCases) {
  const nn::NetworkParams params = nn::init_network(small_specs(), 4);
  std::mt19937_64 rng(9);
  const auto [y, cache] = nn::forward(params, random_vector(6, rng));
  const nn::Gradient grad = nn::backprop(params, cache, random_vector(3, rng));

  const nn::NetworkParams frozen = nn::ascent_step(params, grad, 0.0);
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    EXPECT_TRUE(frozen.layers[l].weights == params.layers[l].weights);

  const nn::Gradient zero = nn::backprop(params, cache, Eigen::VectorXd::Zero(3));
  const nn::NetworkParams same = nn::ascent_step(params, zero, 0.5);
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    EXPECT_TRUE(same.layers[l].weights == params.layers[l].weights);
}

TEST(AscentStep, SingleWeightArithmetic) {
  nn::NetworkParams params;
  params.input_dim = 1;
  params.output_dim = 1;
  nn::Layer layer;
  layer.spec = {1, 1, nn::Activation::kTanh};
  layer.weights = Eigen::MatrixXd::Constant(1, 1, 1.0);
  layer.bias = Eigen::VectorXd::Zero(1);
  params.layers.push_back(layer);
  nn::Gradient grad;
  grad.weights.push_back(Eigen::MatrixXd::Constant(1, 1, 2.0));
  grad.bias.push_back(Eigen::VectorXd::Zero(1));
  const nn::NetworkParams next = nn::ascent_step(params, grad, 0.1);
  EXPECT_DOUBLE_EQ(next.layers[0].weights(0, 0), 1.2);
}

TEST(AscentStep, ShapeMismatchRejected) {
  const nn::NetworkParams params = nn::init_network(small_specs(), 4);
  nn::Gradient grad;
  grad.weights.push_back(Eigen::MatrixXd::Zero(2, 2));
  grad.bias.push_back(Eigen::VectorXd::Zero(2));
  EXPECT_THROW(nn::ascent_step(params, grad, 0.1), ShapeError);
}

TEST(PairUpdate, MatchesPureComposition) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    nn::NetworkParams fused = nn::init_network(small_specs(), 900 + trial);
    nn::NetworkParams pure = fused;
    Eigen::VectorXd xa = random_vector(6, rng);
    Eigen::VectorXd xb = random_vector(6, rng);
    xa[1] = 0.0;  // exercise the zero-skip path
    xb[4] = 0.0;
    const Eigen::VectorXd ea = random_vector(3, rng);
    const Eigen::VectorXd eb = random_vector(3, rng);
    const double lr = 0.05;

    const auto [ya, ca] = nn::forward(fused, xa);
    const auto [yb, cb] = nn::forward(fused, xb);
    nn::detail::apply_pair_update(fused, ca, ea, cb, eb, lr);

    const auto [ypa, cpa] = nn::forward(pure, xa);
    const auto [ypb, cpb] = nn::forward(pure, xb);
    nn::Gradient sum = nn::backprop(pure, cpa, ea);
    const nn::Gradient gb = nn::backprop(pure, cpb, eb);
    for (std::size_t l = 0; l < sum.weights.size(); ++l) {
      sum.weights[l] += gb.weights[l];
      sum.bias[l] += gb.bias[l];
    }
    pure = nn::ascent_step(std::move(pure), sum, lr);

    for (std::size_t l = 0; l < pure.layers.size(); ++l) {
      EXPECT_LT((fused.layers[l].weights - pure.layers[l].weights)
                    .lpNorm<Eigen::Infinity>(),
                1e-12);
      EXPECT_LT((fused.layers[l].bias - pure.layers[l].bias).lpNorm<Eigen::Infinity>(),
                1e-12);
    }
  }
}

class PersistenceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / "servoscope_nn_test";
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(PersistenceTest, RoundTripIsBitExact) {
  const nn::NetworkParams params = nn::init_network(small_specs(), 2024);
  const auto path = dir_ / "net.tfn";
  nn::save_network(params, path);
  const nn::NetworkParams loaded = nn::load_network(path);
  ASSERT_EQ(loaded.layers.size(), params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    EXPECT_TRUE(loaded.layers[l].weights == params.layers[l].weights);
    EXPECT_TRUE(loaded.layers[l].bias == params.layers[l].bias);
    EXPECT_EQ(static_cast<int>(loaded.layers[l].spec.activation),
              static_cast<int>(params.layers[l].spec.activation));
  }
}

TEST_F(PersistenceTest, BadMagicRejected) {
  const auto path = dir_ / "bad_magic.tfn";
  nn::save_network(nn::init_network(small_specs(), 1), path);
  std::fstream file(path, std::ios::in | std::ios::out | std::ios::binary);
  file.write("XXXX", 4);
  file.close();
  EXPECT_THROW(nn::load_network(path), FormatError);
}

TEST_F(PersistenceTest, TruncatedFileRejected) {
  const auto path = dir_ / "truncated.tfn";
  nn::save_network(nn::init_network(small_specs(), 1), path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 9);
  EXPECT_THROW(nn::load_network(path), FormatError);
}

TEST_F(PersistenceTest, InconsistentHeaderRejected) {
  const auto path = dir_ / "bad_header.tfn";
  nn::save_network(nn::init_network(small_specs(), 1), path);
  // bump the first layer's in_dim so the declared payload no longer matches
  std::fstream file(path, std::ios::in | std::ios::out | std::ios::binary);
  file.seekp(8);  // magic(4) + layer count(4)
  const std::uint32_t wrong = 7;
  file.write(reinterpret_cast<const char*>(&wrong), sizeof wrong);
  file.close();
  EXPECT_THROW(nn::load_network(path), FormatError);
}

TEST_F(PersistenceTest, MissingFileRaisesIoError) {
  EXPECT_THROW(nn::load_network(dir_ / "nope.tfn"), servoscope::IoError);
}
