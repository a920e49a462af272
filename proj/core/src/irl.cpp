#include "servoscope/irl.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "servoscope/errors.hpp"
#include "servoscope/image.hpp"

namespace servoscope::irl {

namespace {

void check_unit_interval(double r, const char* name) {
  if (!(r >= -1.0 && r <= 1.0))
    throw ConfigError(std::string(name) + " must lie in [-1, 1]");
}

void append_row(std::string& out, std::initializer_list<double> values) {
  char buf[64];
  bool first = true;
  for (double v : values) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    if (!first) out += ',';
    out += buf;
    first = false;
  }
  out += '\n';
}

}  // namespace

double sigma_from_confidence(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ConfigError("alpha must lie in (0, 1]");
  return std::max(kSigmaFloor, 1.0 - alpha);
}

Eigen::VectorXd make_scalarization(int dof) {
  if (dof < 1) throw ConfigError("dof must be >= 1");
  return Eigen::VectorXd::Constant(dof, 1.0 / dof);
}

double scalarize(const Eigen::VectorXd& r, const Eigen::VectorXd& v) {
  if (r.size() != v.size())
    throw ShapeError("scalarize: reward length " + std::to_string(r.size()) +
                     " != v length " + std::to_string(v.size()));
  return r.dot(v);
}

TransitionReward transition_objective(double r_plus, double r_minus, double sigma0) {
  check_unit_interval(r_plus, "r_plus");
  check_unit_interval(r_minus, "r_minus");
  if (sigma0 <= 0) throw ConfigError("sigma0 must be positive");
  const double gap = r_plus - r_minus;
  TransitionReward tr;
  tr.r_plus = r_plus;
  tr.r_minus = r_minus;
  tr.ll = gap + gap * gap / (2.0 * sigma0 * sigma0);
  tr.beta = std::exp(tr.ll);
  return tr;
}

std::pair<double, double> objective_gradients(double r_plus, double r_minus,
                                              double sigma0) {
  check_unit_interval(r_plus, "r_plus");
  check_unit_interval(r_minus, "r_minus");
  if (sigma0 <= 0) throw ConfigError("sigma0 must be positive");
  const double g_plus = 1.0 + (r_plus - r_minus) / (sigma0 * sigma0);
  return {g_plus, -g_plus};
}

double cost_upper_bound(double sigma0) {
  if (sigma0 <= 0) throw ConfigError("sigma0 must be positive");
  return 2.0 * (1.0 + 1.0 / (sigma0 * sigma0));
}

std::pair<nn::NetworkParams, LearningCurve> train(
    const vision::TransitionDataset& dataset, nn::NetworkParams net,
    const TrainerConfig& config) {
  if (dataset.pairs.empty()) throw ConfigError("train: dataset is empty");
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (config.learning_rate < 0) throw ConfigError("train: negative learning rate");
  if (net.output_dim != config.dof)
    throw ShapeError("train: network output_dim != dof");
  if (dataset.pairs.front().x_plus.size() != net.input_dim)
    throw ShapeError("train: network input_dim != dataset vector length");
  const Eigen::VectorXd v =
      config.v.size() == config.dof ? config.v : make_scalarization(config.dof);
  const double sigma0 = config.sigma0;
  const double bound = cost_upper_bound(sigma0);

  LearningCurve curve;
  curve.mean_ll.reserve(config.epochs);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double ll_sum = 0.0;
    for (const vision::TransitionPair& pair : dataset.pairs) {
      const auto [y_plus, cache_plus] = nn::forward(net, pair.x_plus);
      const auto [y_minus, cache_minus] = nn::forward(net, pair.x_minus);
      const double r_plus = scalarize(y_plus, v);
      const double r_minus = scalarize(y_minus, v);
      ll_sum += transition_objective(r_plus, r_minus, sigma0).ll;
      const auto [g_plus, g_minus] = objective_gradients(r_plus, r_minus, sigma0);
      nn::detail::apply_pair_update(net, cache_plus, g_plus * v, cache_minus,
                                    g_minus * v, config.learning_rate);
    }
    const auto t1 = std::chrono::steady_clock::now();
    curve.mean_ll.push_back(ll_sum / static_cast<double>(dataset.pairs.size()));
    curve.bound_fraction.push_back(curve.mean_ll.back() / bound);
    curve.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return {std::move(net), std::move(curve)};
}

std::vector<RewardProbe> reward_field(const nn::NetworkParams& net,
                                      const sim::Scene& scene,
                                      const sim::CameraModel& camera,
                                      const Eigen::Vector3d& center, int n_dirs,
                                      double step) {
  if (n_dirs < 4) throw ConfigError("reward_field: n_dirs must be >= 4");
  if ((center.array() < 0.0).any() || (center.array() > scene.workspace).any())
    throw ConfigError("reward_field: center outside the workspace");
  const int side = static_cast<int>(std::lround(std::sqrt(double(net.input_dim))));
  if (side * side != net.input_dim)
    throw ShapeError("reward_field: network input is not a square encoding");
  const Eigen::VectorXd v = make_scalarization(net.output_dim);

  sim::Scene base = scene;
  base.object_pos = center;
  const vision::ImageState before = sim::render(base, camera);

  std::vector<RewardProbe> probes;
  probes.reserve(n_dirs);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n_dirs; ++k) {
    const double z = 1.0 - 2.0 * (k + 0.5) / n_dirs;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * k;
    const Eigen::Vector3d dir(r * std::cos(phi), r * std::sin(phi), z);

    sim::Scene moved = base;
    moved.object_pos = center + step * dir;
    const vision::ImageState after = sim::render(moved, camera);
    const vision::StateChange ds = vision::modular_subtract(after, before);
    const auto [y, cache] = nn::forward(net, vision::preprocess(ds, side).values);
    probes.push_back({dir, scalarize(y, v)});
  }
  return probes;
}

void write_learning_curve_csv(const LearningCurve& curve,
                              const std::filesystem::path& path,
                              bool include_timings) {
  std::string out = "epoch,mean_ll,bound_fraction,seconds\n";
  for (std::size_t i = 0; i < curve.mean_ll.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", curve.mean_ll[i],
                  curve.bound_fraction[i], include_timings ? curve.seconds[i] : 0.0);
    out += buf;
  }
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path.string());
  file << out;
}

void write_reward_field_csv(const std::vector<RewardProbe>& probes,
                            const std::filesystem::path& path) {
  std::string out = "dir_x,dir_y,dir_z,reward\n";
  for (const RewardProbe& probe : probes)
    append_row(out, {probe.direction.x(), probe.direction.y(), probe.direction.z(),
                     probe.reward});
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path.string());
  file << out;
}

}  // namespace servoscope::irl
