#include "safenav/netcore/policy_head.hpp"

#include <cmath>

namespace safenav::net {

Eigen::VectorXd policy_distribution(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - top).exp().matrix();
  return p / p.sum();
}

Eigen::VectorXd log_policy_distribution(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double top = logits.maxCoeff();
  const double log_norm = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - log_norm).matrix();
}

int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  int best = 0;
  for (int i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return best;
}

int sample_action(const Eigen::Ref<const Eigen::VectorXd>& logits, Rng& rng) {
  const Eigen::VectorXd p = policy_distribution(logits);
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    cumulative += p(i);
    if (u < cumulative) return i;
  }
  // u landed in the rounding gap above the final cumulative sum.
  for (int i = static_cast<int>(p.size()) - 1; i >= 0; --i)
    if (p(i) > 0.0) return i;
  return 0;
}

int select_action(const Eigen::Ref<const Eigen::VectorXd>& logits, ActionMode mode, Rng& rng) {
  return mode == ActionMode::kGreedy ? greedy_action(logits) : sample_action(logits, rng);
}

}  // namespace safenav::net
