#pragma once

#include <Eigen/Dense>

#include <vector>

namespace safenav::net {

// Scalar loss over a batch (columns) together with d(loss)/d(network output),
// ready to hand to Mlp::backward.
struct LossGradient {
  double value = 0.0;
  Eigen::MatrixXd d_output;
};

LossGradient zero_loss(const Eigen::Ref<const Eigen::MatrixXd>& outputs);
LossGradient sum_of_outputs(const Eigen::Ref<const Eigen::MatrixXd>& outputs);

// Mean categorical cross-entropy of softmax(outputs) against `labels`.
LossGradient cross_entropy(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                           const std::vector<int>& labels);

// Mean squared error of a 1-row output against `targets`.
LossGradient mean_squared_error(const Eigen::Ref<const Eigen::MatrixXd>& values,
                                const std::vector<double>& targets);

// -mean(entropy(softmax(logits))); minimizing it raises entropy.
LossGradient negative_entropy(const Eigen::Ref<const Eigen::MatrixXd>& logits);

struct SurrogateStats {
  double mean_ratio = 0.0;
  double max_ratio_deviation = 0.0;  // max |ratio - 1|
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

// -mean(min(r * A, clip(r, 1 - eps, 1 + eps) * A)) with
// r = exp(log pi(a|s) - old_log_prob).
LossGradient clipped_surrogate(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                               const std::vector<int>& actions,
                               const std::vector<double>& old_log_probs,
                               const std::vector<double>& advantages, double clip_epsilon,
                               SurrogateStats* stats = nullptr);

}  // namespace safenav::net
