#pragma once

#include <string>
#include <vector>

#include "safenav/common/rng.hpp"
#include "safenav/crltrain/optimizer.hpp"
#include "safenav/crltrain/rollout.hpp"
#include "safenav/netcore/mlp.hpp"

namespace safenav::train {

enum class Method { kPpo, kLppo };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct TrainConfig {
  Method method = Method::kPpo;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  double entropy_coef = 0.01;
  int rollout_steps = 2048;
  int epochs_per_update = 4;
  int minibatch_size = 256;
  int total_episodes = 600;
  double max_grad_norm = 0.5;
  // Lagrangian terms (used by LPPO only).
  double cost_threshold = 500.0;
  double lambda_lr = 0.005;
  double lambda_init = 0.0;
  std::vector<int> hidden = {32, 32};

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct LagrangianState {
  double lambda = 0.0;
  double threshold = 500.0;
  double learning_rate = 0.005;

  // Projected ascent: lambda <- max(0, lambda + lr * (mean_cost - threshold)).
  void update(double mean_episodic_cost);
};

// Policy, critics and their optimizer state.
struct Learner {
  net::PolicyNetwork policy;
  net::ValueHeads heads;
  Adam policy_opt;
  Adam reward_opt;
  Adam cost_opt;

  static Learner initialize(const TrainConfig& config, std::uint64_t seed);
};

struct UpdateDiagnostics {
  double policy_loss = 0.0;
  double entropy = 0.0;
  double reward_value_loss = 0.0;
  double cost_value_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  // max |ratio - 1| over the whole batch before the first parameter step.
  double initial_ratio_deviation = 0.0;
  bool aborted = false;
  std::string message;
};

// Clipped-surrogate update with the batch's reward advantages (normalized).
// On a non-finite loss or parameter the learner is restored to its state at
// entry and `aborted` is set.
UpdateDiagnostics ppo_update(Learner& learner, const RolloutBatch& batch, const TrainConfig& config,
                             Rng& rng);

// Same surrogate on A = (A_r - lambda * A_c) / (1 + lambda), using lambda as
// it was on entry; afterwards lambda takes one projected ascent step on the
// batch's mean completed-episode cost (skipped if no episode completed).
UpdateDiagnostics lppo_update(Learner& learner, const RolloutBatch& batch,
                              LagrangianState& lagrangian, const TrainConfig& config, Rng& rng);

// Shared core: runs the epochs on explicit per-transition policy advantages.
UpdateDiagnostics policy_value_update(Learner& learner, const RolloutBatch& batch,
                                      const std::vector<double>& policy_advantages,
                                      const TrainConfig& config, Rng& rng);

}  // namespace safenav::train
