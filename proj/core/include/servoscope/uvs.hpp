#pragma once

// Execution-phase controller: probe an initial reward Jacobian, drive joints
// toward maximum reward through a damped pseudoinverse, Broyden-update the
// estimate online and re-calibrate near singularity.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "servoscope/env.hpp"

namespace servoscope::uvs {

struct JacobianEstimate {
  Eigen::MatrixXd J;  // dof x joints
  int steps_since_calibration = 0;
  int calibration_count = 0;
};

enum class ProbeMode { kAxis, kRandom };

struct ControllerConfig {
  int dof = 3;
  Eigen::VectorXd r_max;    // empty -> ones(dof)
  Eigen::VectorXd r_thres;  // empty -> zeros(dof)
  double step_gain = 5.0;   // lambda in dq = lambda J^T (J J^T + mu I)^-1 r_max
  double damping = 1e-3;    // mu
  int recalib_patience = 1; // K consecutive low rewards trigger re-calibration
  // the scalarized training signal makes all reward components learn one
  // function, so J is rank-one by construction; the singular-value guard is
  // kept but parked where it only catches an actually degenerate estimate
  double min_singular = 1e-9;
  double probe_eps = 16.0;  // joint displacement per probe; matches demo steps
  int max_steps = 100;
  double success_threshold_px = 4.41;
  double dt = 1.0;
  double max_joint_step = 18.0;    // ||dq|| cap per control step; <= 0 disables
  double broyden_min_step = 1e-9;  // smallest accepted ||dq||^2
  ProbeMode probe_mode = ProbeMode::kRandom;
  int probe_count = 24;            // random mode; 0 -> 2 * joint count
  std::uint64_t probe_seed = 0;

  Eigen::VectorXd resolved_r_max() const;
  Eigen::VectorXd resolved_r_thres() const;
};

struct TraceStep {
  int step = 0;
  Eigen::VectorXd q;     // applied displacement integrated from episode start
  Eigen::VectorXd dq;    // displacement applied this step
  Eigen::VectorXd r_obs;
  double scalar_reward = 0;
  double cum_reward = 0;
  double pixel_error = 0;  // NaN when no evaluation probe is attached
  bool recalibrated = false;
};

struct ExecutionTrace {
  std::vector<TraceStep> steps;
  bool success = false;
  int steps_used = 0;
  double initial_error = 0;
  double final_error = 0;
  std::string failure_reason;  // empty unless the trial aborted
};

// Probes each joint with +eps, reads the task-function response, undoes the
// motion; column i = R_i / eps. Random mode fits J from >= joint_count
// random probes by least squares instead.
JacobianEstimate estimate_initial_jacobian(ServoEnvironment& env,
                                           const TaskFunction& taskfn,
                                           const ControllerConfig& config);

// dq = step_gain * J^T (J J^T + damping I)^-1 r_max, with the norm capped at
// max_joint_step (the realized velocity saturation). Finite for damping > 0;
// throws SingularMatrixError when damping == 0 and J J^T is singular.
Eigen::VectorXd compute_action(const JacobianEstimate& estimate,
                               const ControllerConfig& config);

// Rank-one secant correction: J' dq = r_obs exactly, skipped when
// ||dq||^2 < eps_min.
JacobianEstimate broyden_update(const JacobianEstimate& estimate,
                                const Eigen::VectorXd& dq,
                                const Eigen::VectorXd& r_obs, double eps_min);

// True when the last K scalar rewards all sit below the scalarized threshold
// or the estimate lost rank.
bool needs_recalibration(std::span<const double> recent_scalar_rewards,
                         const JacobianEstimate& estimate,
                         const ControllerConfig& config);

// Closed loop: (re-)estimate the Jacobian when needed, act, observe the
// reward of the observed state change, Broyden-update. The eval probe is
// used only for trace records and the success/termination check; pass an
// empty probe to run open-ended.
ExecutionTrace run_execution(ServoEnvironment& env, const TaskFunction& taskfn,
                             const ControllerConfig& config,
                             const EvalProbe& eval = {});

void write_trace_csv(const ExecutionTrace& trace, const std::filesystem::path& path);

}  // namespace servoscope::uvs
