#include <benchmark/benchmark.h>

#include <random>

#include "servoscope/dataset.hpp"
#include "servoscope/image.hpp"
#include "servoscope/irl.hpp"
#include "servoscope/nn.hpp"
#include "servoscope/sim.hpp"
#include "servoscope/uvs.hpp"

namespace nn = servoscope::nn;
namespace sim = servoscope::sim;
namespace irl = servoscope::irl;
namespace uvs = servoscope::uvs;
namespace vision = servoscope::vision;

namespace {

// the shipped task-function configuration
nn::NetworkParams default_net() {
  const std::vector<int> hidden = {64, 32, 16, 8};
  return nn::init_network(nn::chain_specs(32 * 32, hidden, 3), 7);
}

// a much wider stack, for scaling context
nn::NetworkParams wide_net() {
  const std::vector<int> hidden = {512, 256, 128, 64};
  return nn::init_network(nn::chain_specs(64 * 64, hidden, 3), 7);
}

Eigen::VectorXd sparse_input(int dim, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < x.size(); ++i)
    if (unif(rng) < density) x[i] = unif(rng);
  return x;
}

void BM_ForwardSparse(benchmark::State& state) {
  const nn::NetworkParams net = default_net();
  const Eigen::VectorXd x = sparse_input(net.input_dim, 0.1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(net, x));
}
BENCHMARK(BM_ForwardSparse);

void BM_ForwardDense(benchmark::State& state) {
  const nn::NetworkParams net = default_net();
  const Eigen::VectorXd x = sparse_input(net.input_dim, 1.0, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(net, x));
}
BENCHMARK(BM_ForwardDense);

void BM_ForwardWideNet(benchmark::State& state) {
  const nn::NetworkParams net = wide_net();
  const Eigen::VectorXd x = sparse_input(net.input_dim, 0.1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(net, x));
}
BENCHMARK(BM_ForwardWideNet);

void BM_TrainSampleUpdate(benchmark::State& state) {
  nn::NetworkParams net = default_net();
  const Eigen::VectorXd xp = sparse_input(net.input_dim, 0.1, 3);
  const Eigen::VectorXd xm = sparse_input(net.input_dim, 0.1, 4);
  const Eigen::VectorXd v = irl::make_scalarization(3);
  for (auto _ : state) {
    const auto [yp, cp] = nn::forward(net, xp);
    const auto [ym, cm] = nn::forward(net, xm);
    const auto [gp, gm] = irl::objective_gradients(irl::scalarize(yp, v),
                                                   irl::scalarize(ym, v), 0.4);
    nn::detail::apply_pair_update(net, cp, gp * v, cm, gm * v, 1e-3);
  }
}
BENCHMARK(BM_TrainSampleUpdate);

void BM_Render128(benchmark::State& state) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  for (auto _ : state) benchmark::DoNotOptimize(sim::render(scene, camera));
}
BENCHMARK(BM_Render128);

void BM_ModularSubtractAndPreprocess(benchmark::State& state) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const vision::ImageState a = sim::render(scene, camera);
  scene.object_pos += Eigen::Vector3d(8, 4, 0);
  const vision::ImageState b = sim::render(scene, camera);
  for (auto _ : state) {
    const vision::StateChange ds = vision::modular_subtract(b, a);
    benchmark::DoNotOptimize(vision::preprocess(ds, 32));
  }
}
BENCHMARK(BM_ModularSubtractAndPreprocess);

void BM_BroydenUpdate(benchmark::State& state) {
  uvs::JacobianEstimate estimate;
  estimate.J = Eigen::MatrixXd::Random(3, 3);
  const Eigen::Vector3d dq(4, -2, 1);
  const Eigen::Vector3d r(0.2, 0.4, -0.1);
  for (auto _ : state) benchmark::DoNotOptimize(uvs::broyden_update(estimate, dq, r, 1e-9));
}
BENCHMARK(BM_BroydenUpdate);

}  // namespace

BENCHMARK_MAIN();
