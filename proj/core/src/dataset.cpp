#include "servoscope/dataset.hpp"

#include <random>
#include <utility>

#include "servoscope/errors.hpp"
#include "servoscope/image.hpp"

namespace servoscope::vision {

TransitionDataset build_transition_dataset(std::span<const sim::Demonstration> demos,
                                           int side, std::uint64_t seed) {
  if (side <= 0) throw ConfigError("dataset side must be positive");
  TransitionDataset dataset;
  dataset.side = side;
  dataset.shuffle_seed = seed;
  for (std::size_t d = 0; d < demos.size(); ++d) {
    const sim::Demonstration& demo = demos[d];
    if (demo.frames.size() < 2) {
      ++dataset.skipped_demos;
      continue;
    }
    for (std::size_t t = 0; t + 1 < demo.frames.size(); ++t) {
      const StateChange ds = modular_subtract(demo.frames[t + 1], demo.frames[t]);
      const StateChange ds_inv = inverse_change(ds);
      TransitionPair pair;
      pair.x_plus = preprocess(ds, side).values;
      pair.x_minus = preprocess(ds_inv, side).values;
      pair.demo_id = static_cast<int>(d);
      pair.frame_index = static_cast<int>(t);
      dataset.pairs.push_back(std::move(pair));
    }
  }
  // Fisher-Yates with an explicit bound derivation so the permutation is a
  // pure function of the seed.
  std::mt19937_64 rng(seed);
  for (std::size_t i = dataset.pairs.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(dataset.pairs[i - 1], dataset.pairs[j]);
  }
  return dataset;
}

}  // namespace servoscope::vision
