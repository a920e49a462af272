#pragma once

// Experiment configuration: strict-keyed JSON with documented defaults, plus
// the seed derivations that make every run a pure function of the master seed.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "servoscope/irl.hpp"
#include "servoscope/sim.hpp"
#include "servoscope/uvs.hpp"

namespace servoscope::cli {

struct ImageConfig {
  int width = 128;
  int height = 128;
  int input_side = 32;  // network input is input_side^2 box averages
};

struct NetworkConfig {
  std::vector<int> hidden_dims = {64, 32, 16, 8};
};

struct SphereConfig {
  int n_dirs = 128;
  double step = 16.0;
  std::vector<Eigen::Vector3d> centers;  // empty -> default probe ring
};

struct ExperimentConfig {
  std::string task = "stack_blocks";
  ImageConfig image;
  NetworkConfig network;
  irl::TrainerConfig trainer;
  uvs::ControllerConfig controller;
  sim::ExpertConfig expert;
  SphereConfig sphere;
  int demo_count = 11;
  int trial_count = 10;
  std::vector<int> demo_counts;  // non-empty: one suite row per count
  std::vector<sim::Perturbation> perturbations;
  std::string output_dir;
  std::uint64_t master_seed = 1;
};

// Parses and validates a JSON config. Unknown keys fail loudly; missing keys
// take the documented defaults; seed_override replaces master_seed before the
// dependent seeds are derived. An empty path yields the full default config.
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override = {});

// The default config resolved the same way load_config resolves a file.
ExperimentConfig default_config(std::optional<std::uint64_t> seed_override = {});

// Task registry: layout + camera for the configured task name.
sim::Scene make_scene(const ExperimentConfig& config);
sim::CameraModel make_camera(const ExperimentConfig& config);

// Seed streams derived from the config (documented in the README).
std::uint64_t demo_seed(const ExperimentConfig& config, int demo_index);
std::uint64_t trial_seed(const ExperimentConfig& config, int trial_index);

}  // namespace servoscope::cli
