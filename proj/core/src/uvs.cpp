#include "servoscope/uvs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "servoscope/errors.hpp"
#include "servoscope/irl.hpp"

namespace servoscope::uvs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool all_zero(const vision::StateChange& ds) {
  return std::all_of(ds.pixels.begin(), ds.pixels.end(),
                     [](std::uint8_t p) { return p == 0; });
}

Eigen::VectorXd probe_response(ServoEnvironment& env, const TaskFunction& taskfn,
                               const ControllerConfig& config,
                               const Eigen::VectorXd& dq_cmd) {
  const vision::ImageState before = env.render();
  const Eigen::VectorXd applied = env.step(dq_cmd / config.dt, config.dt);
  // evaluate while the probe motion is still the environment's latest step,
  // then undo it whether or not the evaluation succeeded
  try {
    const vision::ImageState after = env.render();
    const vision::StateChange ds = vision::modular_subtract(after, before);
    if ((applied - dq_cmd).norm() > 1e-9)
      throw ProbeError("probe clamped at a joint limit");
    if (all_zero(ds))
      throw ProbeError("probe produced no observable image change");
    Eigen::VectorXd response = taskfn(ds);
    if (response.size() != config.dof)
      throw ShapeError("task function returned wrong reward dimension");
    env.step(-applied / config.dt, config.dt);
    return response;
  } catch (...) {
    env.step(-applied / config.dt, config.dt);
    throw;
  }
}

}  // namespace

Eigen::VectorXd ControllerConfig::resolved_r_max() const {
  return r_max.size() == dof ? r_max : Eigen::VectorXd::Ones(dof);
}

Eigen::VectorXd ControllerConfig::resolved_r_thres() const {
  return r_thres.size() == dof ? r_thres : Eigen::VectorXd::Zero(dof);
}

JacobianEstimate estimate_initial_jacobian(ServoEnvironment& env,
                                           const TaskFunction& taskfn,
                                           const ControllerConfig& config) {
  if (config.probe_eps <= 0) throw ConfigError("probe_eps must be positive");
  const int m = env.joint_count();
  JacobianEstimate estimate;
  estimate.J.resize(config.dof, m);
  estimate.steps_since_calibration = 0;
  estimate.calibration_count = 1;

  if (config.probe_mode == ProbeMode::kAxis) {
    for (int i = 0; i < m; ++i) {
      Eigen::VectorXd dq = Eigen::VectorXd::Zero(m);
      dq[i] = config.probe_eps;
      const Eigen::VectorXd response = probe_response(env, taskfn, config, dq);
      estimate.J.col(i) = response / config.probe_eps;
    }
    return estimate;
  }

  const int requested = config.probe_count > 0 ? config.probe_count : 2 * m;
  if (requested < m) throw ConfigError("random probe count must be >= joint count");
  // antipodal pairs: probing +u and -u makes any even (direction-independent)
  // component of the task-function response cancel out of the least-squares
  // normal equations, leaving the directional signal
  const int pairs = (requested + 1) / 2;
  const int n = 2 * pairs;
  std::mt19937_64 rng(config.probe_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd displacements(m, n);
  Eigen::MatrixXd responses(config.dof, n);
  for (int k = 0; k < pairs; ++k) {
    Eigen::VectorXd u(m);
    do {
      for (int i = 0; i < m; ++i) u[i] = gauss(rng);
    } while (u.norm() < 1e-9);
    u *= config.probe_eps / u.norm();
    responses.col(2 * k) = probe_response(env, taskfn, config, u);
    displacements.col(2 * k) = u;
    responses.col(2 * k + 1) = probe_response(env, taskfn, config, -u);
    displacements.col(2 * k + 1) = -u;
  }
  // least-squares fit of J * displacements = responses
  estimate.J = displacements.transpose()
                   .colPivHouseholderQr()
                   .solve(responses.transpose())
                   .transpose();
  return estimate;
}

Eigen::VectorXd compute_action(const JacobianEstimate& estimate,
                               const ControllerConfig& config) {
  if (!estimate.J.allFinite()) throw NumericError("compute_action: non-finite Jacobian");
  const Eigen::MatrixXd& J = estimate.J;
  const Eigen::VectorXd r_max = config.resolved_r_max();
  if (r_max.size() != J.rows())
    throw ShapeError("compute_action: r_max length != Jacobian rows");
  Eigen::MatrixXd gram = J * J.transpose();
  Eigen::VectorXd dq;
  if (config.damping > 0) {
    gram.diagonal().array() += config.damping;
    dq = config.step_gain * J.transpose() * gram.ldlt().solve(r_max);
  } else {
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (!lu.isInvertible())
      throw SingularMatrixError("J J^T is singular with zero damping");
    dq = config.step_gain * J.transpose() * lu.solve(r_max);
  }
  const double norm = dq.norm();
  if (config.max_joint_step > 0 && norm > config.max_joint_step)
    dq *= config.max_joint_step / norm;
  return dq;
}

JacobianEstimate broyden_update(const JacobianEstimate& estimate,
                                const Eigen::VectorXd& dq,
                                const Eigen::VectorXd& r_obs, double eps_min) {
  if (dq.size() != estimate.J.cols() || r_obs.size() != estimate.J.rows())
    throw ShapeError("broyden_update: shape mismatch");
  if (!dq.allFinite() || !r_obs.allFinite() || !estimate.J.allFinite())
    throw NumericError("broyden_update: non-finite input");
  JacobianEstimate next = estimate;
  next.steps_since_calibration = estimate.steps_since_calibration + 1;
  const double norm2 = dq.squaredNorm();
  if (norm2 >= eps_min)
    next.J += (r_obs - estimate.J * dq) * dq.transpose() / norm2;
  return next;
}

bool needs_recalibration(std::span<const double> recent_scalar_rewards,
                         const JacobianEstimate& estimate,
                         const ControllerConfig& config) {
  const double threshold =
      irl::scalarize(config.resolved_r_thres(), irl::make_scalarization(config.dof));
  if (static_cast<int>(recent_scalar_rewards.size()) >= config.recalib_patience) {
    const bool all_low = std::all_of(recent_scalar_rewards.begin(),
                                     recent_scalar_rewards.end(),
                                     [threshold](double r) { return r < threshold; });
    if (all_low) return true;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(estimate.J);
  return svd.singularValues().minCoeff() < config.min_singular;
}

ExecutionTrace run_execution(ServoEnvironment& env, const TaskFunction& taskfn,
                             const ControllerConfig& config, const EvalProbe& eval) {
  const int m = env.joint_count();
  const Eigen::VectorXd v = irl::make_scalarization(config.dof);
  ExecutionTrace trace;
  trace.initial_error = kNaN;
  trace.final_error = kNaN;

  if (eval) {
    const auto err0 = eval();
    if (!err0) {
      trace.failure_reason = "out_of_view";
      return trace;
    }
    trace.initial_error = *err0;
    trace.final_error = *err0;
    if (*err0 < config.success_threshold_px) {
      trace.success = true;  // nothing to do
      return trace;
    }
  }

  JacobianEstimate estimate;
  bool have_estimate = false;
  std::vector<double> recent;
  vision::ImageState prev_frame = env.render();
  Eigen::VectorXd q_cum = Eigen::VectorXd::Zero(m);
  double cum_reward = 0.0;

  for (int step = 1; step <= config.max_steps; ++step) {
    bool recalibrated = false;
    const bool stale = have_estimate && estimate.steps_since_calibration > 0 &&
                       needs_recalibration(recent, estimate, config);
    if (!have_estimate || stale) {
      // fresh probe directions on every re-calibration, so a repeated
      // estimate cannot reproduce the exact loop that went stale
      ControllerConfig probe_config = config;
      probe_config.probe_seed =
          config.probe_seed +
          1000003ull * static_cast<std::uint64_t>(have_estimate ? estimate.calibration_count : 0);
      JacobianEstimate fresh;
      try {
        fresh = estimate_initial_jacobian(env, taskfn, probe_config);
      } catch (const ProbeError& e) {
        trace.failure_reason = std::string("probe: ") + e.what();
        break;
      }
      fresh.calibration_count = have_estimate ? estimate.calibration_count + 1 : 1;
      estimate = std::move(fresh);
      have_estimate = true;
      recalibrated = true;
      recent.clear();
      prev_frame = env.render();  // probes end where they started; re-reference anyway
    }

    const Eigen::VectorXd dq_cmd = compute_action(estimate, config);
    const Eigen::VectorXd applied = env.step(dq_cmd / config.dt, config.dt);
    const vision::ImageState frame = env.render();
    const vision::StateChange ds = vision::modular_subtract(frame, prev_frame);
    prev_frame = frame;

    Eigen::VectorXd r_obs = taskfn(ds);
    if (r_obs.size() != config.dof)
      throw ShapeError("task function returned wrong reward dimension");
    const double scalar = irl::scalarize(r_obs, v);
    cum_reward += scalar;

    estimate = broyden_update(estimate, applied, r_obs, config.broyden_min_step);
    recent.push_back(scalar);
    if (static_cast<int>(recent.size()) > config.recalib_patience)
      recent.erase(recent.begin());
    q_cum += applied;

    TraceStep row;
    row.step = step;
    row.q = q_cum;
    row.dq = applied;
    row.r_obs = std::move(r_obs);
    row.scalar_reward = scalar;
    row.cum_reward = cum_reward;
    row.pixel_error = kNaN;
    row.recalibrated = recalibrated;

    if (eval) {
      const auto err = eval();
      if (!err) {
        trace.steps.push_back(std::move(row));
        trace.failure_reason = "out_of_view";
        break;
      }
      row.pixel_error = *err;
      trace.final_error = *err;
      trace.steps.push_back(std::move(row));
      if (*err < config.success_threshold_px) {
        trace.success = true;
        break;
      }
    } else {
      trace.steps.push_back(std::move(row));
    }
  }

  trace.steps_used = static_cast<int>(trace.steps.size());
  return trace;
}

void write_trace_csv(const ExecutionTrace& trace, const std::filesystem::path& path) {
  std::string out = "step";
  const int m = trace.steps.empty() ? 0 : static_cast<int>(trace.steps.front().q.size());
  const int d = trace.steps.empty() ? 0 : static_cast<int>(trace.steps.front().r_obs.size());
  char buf[64];
  for (int i = 0; i < m; ++i) {
    std::snprintf(buf, sizeof buf, ",q%d", i);
    out += buf;
  }
  for (int i = 0; i < m; ++i) {
    std::snprintf(buf, sizeof buf, ",dq%d", i);
    out += buf;
  }
  for (int i = 0; i < d; ++i) {
    std::snprintf(buf, sizeof buf, ",r%d", i);
    out += buf;
  }
  out += ",scalar_reward,cum_reward,pixel_error,recalibrated\n";
  for (const TraceStep& row : trace.steps) {
    out += std::to_string(row.step);
    auto append = [&out, &buf](double v) {
      std::snprintf(buf, 64, ",%.9g", v);
      out += buf;
    };
    for (int i = 0; i < m; ++i) append(row.q[i]);
    for (int i = 0; i < m; ++i) append(row.dq[i]);
    for (int i = 0; i < d; ++i) append(row.r_obs[i]);
    append(row.scalar_reward);
    append(row.cum_reward);
    append(row.pixel_error);
    out += row.recalibrated ? ",1\n" : ",0\n";
  }
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path.string());
  file << out;
}

}  // namespace servoscope::uvs
