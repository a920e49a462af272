#include "servoscope/suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>

#include "servoscope/dataset.hpp"
#include "servoscope/errors.hpp"
#include "servoscope/image.hpp"

namespace servoscope::cli {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SuiteRow aggregate_row(const std::string& setting,
                       const std::vector<uvs::ExecutionTrace>& traces,
                       double train_seconds) {
  SuiteRow row;
  row.setting = setting;
  row.trials = static_cast<int>(traces.size());
  row.train_seconds = train_seconds;
  std::vector<double> errors;
  std::vector<double> steps;
  for (const uvs::ExecutionTrace& trace : traces) {
    if (!trace.success) continue;
    ++row.successes;
    errors.push_back(trace.final_error);
    steps.push_back(static_cast<double>(trace.steps_used));
  }
  if (errors.empty()) {
    row.mean_error_px = kNaN;  // settings with zero successes print "-"
    row.std_error_px = kNaN;
    row.mean_steps = kNaN;
    return row;
  }
  double mean = 0;
  for (double e : errors) mean += e;
  mean /= static_cast<double>(errors.size());
  double var = 0;
  for (double e : errors) var += (e - mean) * (e - mean);
  var /= static_cast<double>(errors.size());
  row.mean_error_px = mean;
  row.std_error_px = std::sqrt(var);
  double mean_steps = 0;
  for (double s : steps) mean_steps += s;
  row.mean_steps = mean_steps / static_cast<double>(steps.size());
  return row;
}

}  // namespace

std::vector<sim::Demonstration> generate_demo_set(const ExperimentConfig& config,
                                                  int count) {
  const sim::Scene base = make_scene(config);
  const sim::CameraModel camera = make_camera(config);
  std::vector<sim::Demonstration> demos;
  demos.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = demo_seed(config, i);
    sim::Scene scene = base;
    scene.object_pos = sim::sample_start_position(base, camera, seed);
    sim::ExpertConfig expert = config.expert;
    expert.noise_seed = seed;
    demos.push_back(sim::generate_demonstration(scene, camera, expert));
  }
  return demos;
}

TrainingArtifacts train_task_function(const ExperimentConfig& config,
                                      std::span<const sim::Demonstration> demos) {
  const vision::TransitionDataset dataset =
      vision::build_transition_dataset(demos, config.image.input_side, config.trainer.seed);
  const std::vector<nn::LayerSpec> specs =
      nn::chain_specs(config.image.input_side * config.image.input_side,
                      config.network.hidden_dims, config.trainer.dof);
  nn::NetworkParams net = nn::init_network(specs, config.trainer.seed);
  const auto t0 = std::chrono::steady_clock::now();
  auto [trained, curve] = irl::train(dataset, std::move(net), config.trainer);
  const auto t1 = std::chrono::steady_clock::now();
  TrainingArtifacts artifacts;
  artifacts.net = std::move(trained);
  artifacts.curve = std::move(curve);
  artifacts.seconds = std::chrono::duration<double>(t1 - t0).count();
  return artifacts;
}

TaskFunction make_network_taskfn(const nn::NetworkParams& net, int input_side) {
  return [&net, input_side](const vision::StateChange& ds) {
    const vision::InputVector x = vision::preprocess(ds, input_side);
    return nn::forward(net, x.values).first;
  };
}

uvs::ExecutionTrace run_trial(const ExperimentConfig& config,
                              const nn::NetworkParams& net,
                              const sim::Perturbation* perturbation,
                              std::uint64_t seed) {
  const sim::Scene base = make_scene(config);
  const sim::CameraModel camera = make_camera(config);
  sim::Scene scene = base;
  scene.object_pos = sim::sample_start_position(base, camera, seed);
  if (perturbation) scene = sim::apply_perturbation(scene, *perturbation, camera);
  sim::SimEnvironment env(std::move(scene), camera, sim::default_mount(),
                          sim::make_default_robot(3));
  const TaskFunction taskfn = make_network_taskfn(net, config.image.input_side);
  return uvs::run_execution(env, taskfn, config.controller, env.make_eval_probe());
}

std::filesystem::path weights_path(const std::filesystem::path& out_dir) {
  return out_dir / "weights.tfn";
}

std::filesystem::path demos_dir(const std::filesystem::path& out_dir) {
  return out_dir / "demos";
}

std::vector<sim::Demonstration> load_demo_set(const std::filesystem::path& dir) {
  std::vector<sim::Demonstration> demos;
  for (int i = 0;; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "demo_%03d", i);
    const std::filesystem::path demo_dir = dir / name;
    if (!std::filesystem::exists(demo_dir / "manifest.json")) break;
    demos.push_back(sim::load_demonstration(demo_dir));
  }
  if (demos.empty()) throw IoError("no demonstrations under " + dir.string());
  return demos;
}

std::vector<sim::Demonstration> obtain_demos(const ExperimentConfig& config,
                                             const std::filesystem::path& out_dir,
                                             int count) {
  const std::filesystem::path dir = demos_dir(out_dir);
  if (std::filesystem::exists(dir)) {
    std::vector<sim::Demonstration> demos = load_demo_set(dir);
    if (static_cast<int>(demos.size()) < count)
      throw ConfigError("found " + std::to_string(demos.size()) + " demos under " +
                        dir.string() + " but the config needs " + std::to_string(count));
    demos.resize(count);
    return demos;
  }
  return generate_demo_set(config, count);
}

std::vector<Eigen::Vector3d> default_probe_centers(const sim::Scene& scene) {
  std::vector<Eigen::Vector3d> centers;
  const double radius = 120.0;
  for (int k = 0; k < 5; ++k) {
    const double theta = 0.3 + 2.0 * M_PI * k / 5.0;
    Eigen::Vector3d center =
        scene.target_pos +
        Eigen::Vector3d(radius * std::cos(theta), radius * std::sin(theta), 0.0);
    center = center.cwiseMax(Eigen::Vector3d::Constant(20.0))
                 .cwiseMin(Eigen::Vector3d::Constant(scene.workspace - 20.0));
    centers.push_back(center);
  }
  return centers;
}

SuiteOutcome evaluate_suite(const ExperimentConfig& config,
                            const std::filesystem::path& out_dir) {
  SuiteOutcome outcome;

  if (!config.demo_counts.empty()) {
    // demo-count sweep: one freshly trained model per row
    const int max_count =
        *std::max_element(config.demo_counts.begin(), config.demo_counts.end());
    const std::vector<sim::Demonstration> all_demos =
        obtain_demos(config, out_dir, max_count);
    for (int count : config.demo_counts) {
      const std::span<const sim::Demonstration> subset(all_demos.data(),
                                                       static_cast<std::size_t>(count));
      const TrainingArtifacts artifacts = train_task_function(config, subset);
      std::cerr << "[evaluate] trained on " << count << " demos in " << artifacts.seconds
                << " s, final mean ll " << artifacts.curve.mean_ll.back() << "\n";
      std::vector<uvs::ExecutionTrace> traces;
      traces.reserve(config.trial_count);
      for (int i = 0; i < config.trial_count; ++i)
        traces.push_back(
            run_trial(config, artifacts.net, nullptr, trial_seed(config, i)));
      outcome.result.rows.push_back(aggregate_row(
          "demos_" + std::to_string(count), traces, artifacts.seconds));
      outcome.traces.push_back(std::move(traces));
    }
    return outcome;
  }

  // baseline + perturbation rows share one model
  nn::NetworkParams net;
  double train_seconds = 0;
  const std::filesystem::path weights = weights_path(out_dir);
  if (std::filesystem::exists(weights)) {
    net = nn::load_network(weights);
  } else {
    const std::vector<sim::Demonstration> demos =
        obtain_demos(config, out_dir, config.demo_count);
    TrainingArtifacts artifacts = train_task_function(config, demos);
    net = std::move(artifacts.net);
    train_seconds = artifacts.seconds;
    std::cerr << "[evaluate] trained on " << demos.size() << " demos in "
              << train_seconds << " s, final mean ll "
              << artifacts.curve.mean_ll.back() << "\n";
    std::filesystem::create_directories(out_dir);
    nn::save_network(net, weights);
  }

  auto run_setting = [&](const std::string& label, const sim::Perturbation* p,
                         double seconds) {
    std::vector<uvs::ExecutionTrace> traces;
    traces.reserve(config.trial_count);
    for (int i = 0; i < config.trial_count; ++i)
      traces.push_back(run_trial(config, net, p, trial_seed(config, i)));
    SuiteRow row = aggregate_row(label, traces, seconds);
    std::cerr << "[evaluate] " << label << ": " << row.successes << "/" << row.trials
              << "\n";
    outcome.result.rows.push_back(std::move(row));
    outcome.traces.push_back(std::move(traces));
  };

  run_setting("baseline", nullptr, train_seconds);
  for (const sim::Perturbation& p : config.perturbations)
    run_setting(sim::perturbation_label(p), &p, 0.0);
  return outcome;
}

void write_suite_csv(const SuiteResult& result, const std::filesystem::path& path,
                     bool include_timings) {
  std::string out =
      "setting,trials,successes,mean_error_px,std_error_px,mean_steps,train_seconds\n";
  char buf[64];
  auto append_value = [&out, &buf](double v) {
    if (std::isnan(v)) {
      out += ",-";
      return;
    }
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    out += buf;
  };
  for (const SuiteRow& row : result.rows) {
    out += row.setting;
    out += ',' + std::to_string(row.trials);
    out += ',' + std::to_string(row.successes);
    append_value(row.mean_error_px);
    append_value(row.std_error_px);
    append_value(row.mean_steps);
    append_value(include_timings ? row.train_seconds : 0.0);
    out += '\n';
  }
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path.string());
  file << out;
}

}  // namespace servoscope::cli
