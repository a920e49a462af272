#pragma once

// Minimal dense feedforward network with exact backpropagation and plain
// gradient-ascent updates. Double precision throughout; forward/backprop are
// pure functions, training owns a single mutable NetworkParams.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace servoscope::nn {

using RewardVector = Eigen::VectorXd;

enum class Activation : std::uint8_t { kTanh = 0, kIdentity = 1 };

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::kTanh;
};

struct Layer {
  Eigen::MatrixXd weights;  // out_dim x in_dim
  Eigen::VectorXd bias;     // out_dim
  LayerSpec spec;
};

struct NetworkParams {
  std::vector<Layer> layers;
  int input_dim = 0;
  int output_dim = 0;
};

// Shape-congruent with the network it was computed from.
struct Gradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
};

// Per-layer pre-activations and activations of one forward pass.
struct ForwardCache {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> pre_activations;
  std::vector<Eigen::VectorXd> activations;
};

// Throws ConfigError unless the specs chain dimensionally, all dims are
// positive and the final activation is tanh.
void validate_specs(std::span<const LayerSpec> specs);

// Glorot-uniform weights in [-sqrt(6/(in+out)), +sqrt(6/(in+out))], zero
// biases. Deterministic for a given seed.
NetworkParams init_network(std::span<const LayerSpec> specs, std::uint64_t seed);

// Convenience builder for the default stack: input_dim -> hidden... -> out_dim,
// tanh everywhere.
std::vector<LayerSpec> chain_specs(int input_dim, std::span<const int> hidden_dims,
                                   int out_dim);

std::size_t parameter_count(const NetworkParams& params);

// Evaluates the network. Output components are in [-1, 1] (tanh output layer).
std::pair<RewardVector, ForwardCache> forward(const NetworkParams& params,
                                              const Eigen::VectorXd& x);

// Gradient of the scalar functional output_error . y with respect to every
// weight and bias; cache must come from forward() on the same params.
Gradient backprop(const NetworkParams& params, const ForwardCache& cache,
                  const Eigen::VectorXd& output_error);

// theta' = theta + lr * grad (ascent; the training objective is maximized).
NetworkParams ascent_step(NetworkParams params, const Gradient& grad, double lr);

// Binary weights format, magic "TFN1". load(save(p)) is bit-exact.
void save_network(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_network(const std::filesystem::path& path);

namespace detail {

// Single fused update theta += lr * (backprop(cache_a, err_a) +
// backprop(cache_b, err_b)) without materializing the Gradient objects.
// Both gradients are taken at the incoming params, exactly like summing the
// two pure backprop results before one ascent_step.
void apply_pair_update(NetworkParams& params, const ForwardCache& cache_a,
                       const Eigen::VectorXd& err_a, const ForwardCache& cache_b,
                       const Eigen::VectorXd& err_b, double lr);

}  // namespace detail

}  // namespace servoscope::nn
