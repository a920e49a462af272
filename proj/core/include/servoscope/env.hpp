#pragma once

// The opaque surface the servoing controller is allowed to touch: apply a
// joint velocity, read back the applied displacement (encoder reading), and
// grab a camera frame. No scene geometry, camera intrinsics or kinematic
// calibration crosses this boundary.

#include <Eigen/Dense>

#include <functional>
#include <optional>

#include "servoscope/image.hpp"

namespace servoscope {

class ServoEnvironment {
 public:
  virtual ~ServoEnvironment() = default;

  // Applies qdot for dt and returns the joint displacement actually realized
  // (limits may clamp the command).
  virtual Eigen::VectorXd step(const Eigen::VectorXd& qdot, double dt) = 0;

  // Current camera frame.
  virtual vision::ImageState render() const = 0;

  virtual int joint_count() const = 0;
};

// Maps an observed state change to a reward vector. The learned network is
// wrapped into one of these; tests substitute analytic oracles.
using TaskFunction = std::function<Eigen::VectorXd(const vision::StateChange&)>;

// Evaluation-only oracle: pixel distance between object and target centers,
// or nullopt when a block left the frame. Used for trace records and
// termination, never for control decisions.
using EvalProbe = std::function<std::optional<double>()>;

}  // namespace servoscope
