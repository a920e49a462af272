#pragma once

// Incremental maximum-entropy reward learning over state-transition pairs:
// Boltzmann-factor objective, its gradients, the confidence-derived variance,
// stochastic gradient-ascent training and reward-field probing.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "servoscope/dataset.hpp"
#include "servoscope/nn.hpp"
#include "servoscope/sim.hpp"

namespace servoscope::irl {

inline constexpr double kSigmaFloor = 0.05;

struct TrainerConfig {
  int dof = 3;
  double alpha = 0.6;          // demonstrator confidence, in (0, 1]
  double sigma0 = 0.4;         // derived: sigma_from_confidence(alpha)
  int epochs = 12;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Eigen::VectorXd v;           // scalarization vector, (1/d)[1,...,1]
};

// Objective value of one transition under the current model.
struct TransitionReward {
  double r_plus = 0;
  double r_minus = 0;
  double ll = 0;    // log Boltzmann factor
  double beta = 1;  // exp(ll)
};

struct LearningCurve {
  std::vector<double> mean_ll;        // per epoch
  std::vector<double> bound_fraction; // mean_ll / upper bound
  std::vector<double> seconds;        // wall clock per epoch
};

struct RewardProbe {
  Eigen::Vector3d direction;  // unit vector
  double reward = 0;
};

// sigma0 = max(0.05, 1 - alpha); monotone non-increasing in alpha.
double sigma_from_confidence(double alpha);

Eigen::VectorXd make_scalarization(int dof);

// r . v, in [-1, 1] for reward vectors with components in [-1, 1].
double scalarize(const Eigen::VectorXd& r, const Eigen::VectorXd& v);

// ll = (r+ - r-) + (r+ - r-)^2 / (2 sigma0^2); beta = exp(ll).
TransitionReward transition_objective(double r_plus, double r_minus, double sigma0);

// d(ll)/dr+ and d(ll)/dr-; the two are exact negatives.
std::pair<double, double> objective_gradients(double r_plus, double r_minus,
                                              double sigma0);

// 2 (1 + 1/sigma0^2): the largest attainable ll for rewards in [-1, 1].
double cost_upper_bound(double sigma0);

// Per-sample stochastic gradient ascent over the shuffled pair list, one
// update per transition: forward both encodings, scalarize, backprop the
// scaled scalarization vector through each, apply the summed gradient.
std::pair<nn::NetworkParams, LearningCurve> train(
    const vision::TransitionDataset& dataset, nn::NetworkParams net,
    const TrainerConfig& config);

// Samples unit directions on a Fibonacci sphere; for each, renders the object
// at `center`, moves it by step*direction, renders again and evaluates the
// scalarized task function on the resulting state change.
std::vector<RewardProbe> reward_field(const nn::NetworkParams& net,
                                      const sim::Scene& scene,
                                      const sim::CameraModel& camera,
                                      const Eigen::Vector3d& center, int n_dirs,
                                      double step);

// CSV emission. Timing columns are zero unless include_timings is set, so
// default artifacts are byte-reproducible.
void write_learning_curve_csv(const LearningCurve& curve,
                              const std::filesystem::path& path,
                              bool include_timings = false);
void write_reward_field_csv(const std::vector<RewardProbe>& probes,
                            const std::filesystem::path& path);

}  // namespace servoscope::irl
