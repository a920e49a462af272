#pragma once

// Test-only environments and oracles. The progress oracles read ground truth
// through the simulator's evaluation view; they exist to isolate the
// controller from the learned task function.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "servoscope/env.hpp"
#include "servoscope/sim.hpp"

namespace servoscope::testsupport {

// Wraps a SimEnvironment and records the object->target distance change of
// the most recent step, so an oracle task function can score exactly the
// motion that produced the state change it is shown.
class ProgressTrackedEnv final : public ServoEnvironment {
 public:
  explicit ProgressTrackedEnv(sim::SimEnvironment& inner) : inner_(inner) {}

  Eigen::VectorXd step(const Eigen::VectorXd& qdot, double dt) override {
    const double before = distance();
    const Eigen::VectorXd applied = inner_.step(qdot, dt);
    last_progress_ = before - distance();
    const Eigen::Vector3d off_after = offset();
    last_axis_progress_ = last_offset_.cwiseAbs() - off_after.cwiseAbs();
    last_offset_ = off_after;
    return applied;
  }

  vision::ImageState render() const override { return inner_.render(); }
  int joint_count() const override { return inner_.joint_count(); }

  double distance() const { return offset().norm(); }
  double last_progress() const { return last_progress_; }
  const Eigen::Vector3d& last_axis_progress() const { return last_axis_progress_; }

  void reset_reference() { last_offset_ = offset(); }

 private:
  Eigen::Vector3d offset() const {
    return inner_.scene().object_pos - inner_.scene().target_pos;
  }

  sim::SimEnvironment& inner_;
  double last_progress_ = 0;
  Eigen::Vector3d last_offset_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d last_axis_progress_ = Eigen::Vector3d::Zero();
};

// T*(ds of the last step) = clamp(progress / scale) * [1, 1, 1].
inline TaskFunction make_progress_oracle(const ProgressTrackedEnv& env, double scale) {
  return [&env, scale](const vision::StateChange&) {
    const double r = std::clamp(env.last_progress() / scale, -1.0, 1.0);
    return Eigen::VectorXd::Constant(3, r);
  };
}

// Componentwise progress oracle: r_i scores the |offset_i| reduction of the
// last step. With an aligned mount this makes the probed Jacobian diagonal.
inline TaskFunction make_axis_progress_oracle(const ProgressTrackedEnv& env,
                                              double scale) {
  return [&env, scale](const vision::StateChange&) {
    Eigen::VectorXd r(3);
    for (int i = 0; i < 3; ++i)
      r[i] = std::clamp(env.last_axis_progress()[i] / scale, -1.0, 1.0);
    return r;
  };
}

// Forwards step/render and counts the calls: run_execution must be drivable
// through this surface alone.
class SpyEnv final : public ServoEnvironment {
 public:
  explicit SpyEnv(ServoEnvironment& inner) : inner_(inner) {}

  Eigen::VectorXd step(const Eigen::VectorXd& qdot, double dt) override {
    ++step_calls;
    return inner_.step(qdot, dt);
  }
  vision::ImageState render() const override {
    ++render_calls;
    return inner_.render();
  }
  int joint_count() const override { return inner_.joint_count(); }

  int step_calls = 0;
  mutable int render_calls = 0;

 private:
  ServoEnvironment& inner_;
};

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = std::min(xs.size(), ys.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace servoscope::testsupport
