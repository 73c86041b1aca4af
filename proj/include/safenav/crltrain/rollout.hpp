#pragma once

#include <vector>

#include "safenav/tubesim/simulator.hpp"

namespace safenav::train {

struct Transition {
  sim::Observation obs{};
  int action = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  double cost = 0.0;
  double reward_value = 0.0;
  double cost_value = 0.0;
  bool terminal = false;   // episode ended at the goal; no bootstrap
  bool truncated = false;  // horizon cut; bootstrap from the *_bootstrap values
  double reward_bootstrap = 0.0;
  double cost_bootstrap = 0.0;
};

// A contiguous slice of experience. Episodes may continue past the end of the
// batch; `tail_*_value` then bootstraps the final transition.
struct RolloutBatch {
  std::vector<Transition> transitions;
  double tail_reward_value = 0.0;
  double tail_cost_value = 0.0;
  std::vector<double> completed_episode_costs;

  std::vector<double> reward_advantages;
  std::vector<double> cost_advantages;
  std::vector<double> reward_returns;
  std::vector<double> cost_returns;

  std::size_t size() const { return transitions.size(); }
};

// Generalized advantage estimation on both the reward and cost streams.
// With gae_lambda = 1 the returns are discounted Monte-Carlo sums.
void compute_advantages(RolloutBatch& batch, double gamma, double gae_lambda);

// Zero mean, unit variance (population std, +1e-8).
std::vector<double> normalized(const std::vector<double>& values);

}  // namespace safenav::train
