#pragma once

// Training pairs built from demonstration frame sequences: one
// (forward, inverse) state-change encoding per consecutive frame pair.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "servoscope/sim.hpp"

namespace servoscope::vision {

struct TransitionPair {
  Eigen::VectorXd x_plus;   // encoded forward change ds+
  Eigen::VectorXd x_minus;  // encoded inverse change ds-
  int demo_id = 0;
  int frame_index = 0;      // index of the earlier frame in the pair
};

struct TransitionDataset {
  std::vector<TransitionPair> pairs;
  int side = 0;
  std::uint64_t shuffle_seed = 0;
  int skipped_demos = 0;  // demos with < 2 frames
};

// One pair per consecutive frame pair per demo, deterministically shuffled
// by seed. Demos with fewer than two frames are skipped and counted.
TransitionDataset build_transition_dataset(std::span<const sim::Demonstration> demos,
                                           int side, std::uint64_t seed);

}  // namespace servoscope::vision
