#include "safenav/crltrain/rollout.hpp"

#include <cmath>

namespace safenav::train {

namespace {

void gae_stream(const RolloutBatch& batch, double gamma, double lambda, bool cost,
                std::vector<double>& advantages, std::vector<double>& returns) {
  const auto& tr = batch.transitions;
  const std::size_t n = tr.size();
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const Transition& t = tr[i];
    const double signal = cost ? t.cost : t.reward;
    const double value = cost ? t.cost_value : t.reward_value;
    double next_value;
    bool chain;  // whether the GAE recursion continues into i + 1
    if (t.terminal) {
      next_value = 0.0;
      chain = false;
    } else if (t.truncated) {
      next_value = cost ? t.cost_bootstrap : t.reward_bootstrap;
      chain = false;
    } else if (i + 1 < n) {
      next_value = cost ? tr[i + 1].cost_value : tr[i + 1].reward_value;
      chain = true;
    } else {
      next_value = cost ? batch.tail_cost_value : batch.tail_reward_value;
      chain = false;
    }
    const double delta = signal + gamma * next_value - value;
    running = delta + (chain ? gamma * lambda * running : 0.0);
    advantages[i] = running;
    returns[i] = running + value;
  }
}

}  // namespace

void compute_advantages(RolloutBatch& batch, double gamma, double gae_lambda) {
  gae_stream(batch, gamma, gae_lambda, false, batch.reward_advantages, batch.reward_returns);
  gae_stream(batch, gamma, gae_lambda, true, batch.cost_advantages, batch.cost_returns);
}

std::vector<double> normalized(const std::vector<double>& values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double scale = 1.0 / (std::sqrt(var) + 1e-8);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) * scale;
  return out;
}

}  // namespace safenav::train
