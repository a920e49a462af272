#pragma once

// Experiment pipeline shared by the CLI subcommands: demo generation,
// training, seeded execution trials and suite aggregation.

#include <filesystem>
#include <string>
#include <vector>

#include "servoscope/config.hpp"
#include "servoscope/irl.hpp"
#include "servoscope/nn.hpp"
#include "servoscope/sim.hpp"
#include "servoscope/uvs.hpp"

namespace servoscope::cli {

struct SuiteRow {
  std::string setting;
  int trials = 0;
  int successes = 0;
  double mean_error_px = 0;  // over successful trials; NaN when none succeeded
  double std_error_px = 0;   // population std, so a single success reports +/-0
  double mean_steps = 0;     // over successful trials; NaN when none succeeded
  double train_seconds = 0;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
};

struct SuiteOutcome {
  SuiteResult result;
  std::vector<std::vector<uvs::ExecutionTrace>> traces;  // [row][trial]
};

struct TrainingArtifacts {
  nn::NetworkParams net;
  irl::LearningCurve curve;
  double seconds = 0;  // wall clock of the train() call
};

// Demonstration i starts at a seeded position and replays the scripted
// expert with noise seed demo_seed(config, i).
std::vector<sim::Demonstration> generate_demo_set(const ExperimentConfig& config,
                                                  int count);

// Dataset construction + network init + gradient-ascent training.
TrainingArtifacts train_task_function(const ExperimentConfig& config,
                                      std::span<const sim::Demonstration> demos);

// Wraps a trained network as a TaskFunction (preprocess + forward +
// reward vector). The network must outlive the returned callable.
TaskFunction make_network_taskfn(const nn::NetworkParams& net, int input_side);

// One seeded execution trial: fresh start position, optional perturbation,
// closed-loop run against the simulator.
uvs::ExecutionTrace run_trial(const ExperimentConfig& config,
                              const nn::NetworkParams& net,
                              const sim::Perturbation* perturbation,
                              std::uint64_t seed);

// Baseline + one row per perturbation, or one row per demo count when
// demo_counts is set. Uses weights/demos found under out_dir, training
// in place when they are absent.
SuiteOutcome evaluate_suite(const ExperimentConfig& config,
                            const std::filesystem::path& out_dir);

void write_suite_csv(const SuiteResult& result, const std::filesystem::path& path,
                     bool include_timings = false);

// Artifact locations inside an --out directory.
std::filesystem::path weights_path(const std::filesystem::path& out_dir);
std::filesystem::path demos_dir(const std::filesystem::path& out_dir);

// Loads demo_NNN subdirectories in index order.
std::vector<sim::Demonstration> load_demo_set(const std::filesystem::path& dir);

// Demos from disk when present, generated otherwise.
std::vector<sim::Demonstration> obtain_demos(const ExperimentConfig& config,
                                             const std::filesystem::path& out_dir,
                                             int count);

// Default reward-field probe ring used by the sphere subcommand and the
// evaluation suites: five centers around the target at demo-start radius.
std::vector<Eigen::Vector3d> default_probe_centers(const sim::Scene& scene);

}  // namespace servoscope::cli
