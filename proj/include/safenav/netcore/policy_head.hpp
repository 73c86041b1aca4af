#pragma once

#include <Eigen/Dense>

#include "safenav/common/rng.hpp"

namespace safenav::net {

enum class ActionMode { kGreedy, kSample };

// Softmax with max-subtraction; total on finite input.
Eigen::VectorXd policy_distribution(const Eigen::Ref<const Eigen::VectorXd>& logits);
Eigen::VectorXd log_policy_distribution(const Eigen::Ref<const Eigen::VectorXd>& logits);

// Lowest index among the maximal logits. The verifier's violation test uses
// exactly this rule.
int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& logits);

int sample_action(const Eigen::Ref<const Eigen::VectorXd>& logits, Rng& rng);

int select_action(const Eigen::Ref<const Eigen::VectorXd>& logits, ActionMode mode, Rng& rng);

}  // namespace safenav::net
