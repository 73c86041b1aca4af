#include "safenav/netcore/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "safenav/netcore/policy_head.hpp"

namespace safenav::net {

namespace {

void require_batch(const Eigen::Ref<const Eigen::MatrixXd>& outputs, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(outputs.cols()) != n)
    throw std::invalid_argument(std::string(what) + ": batch size mismatch");
}

}  // namespace

LossGradient zero_loss(const Eigen::Ref<const Eigen::MatrixXd>& outputs) {
  return {0.0, Eigen::MatrixXd::Zero(outputs.rows(), outputs.cols())};
}

LossGradient sum_of_outputs(const Eigen::Ref<const Eigen::MatrixXd>& outputs) {
  return {outputs.sum(), Eigen::MatrixXd::Ones(outputs.rows(), outputs.cols())};
}

LossGradient cross_entropy(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                           const std::vector<int>& labels) {
  require_batch(logits, labels.size(), "cross_entropy");
  const double n = static_cast<double>(labels.size());
  LossGradient out{0.0, Eigen::MatrixXd::Zero(logits.rows(), logits.cols())};
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const Eigen::VectorXd logp = log_policy_distribution(logits.col(b));
    out.value -= logp(labels[b]) / n;
    Eigen::VectorXd grad = logp.array().exp().matrix();
    grad(labels[b]) -= 1.0;
    out.d_output.col(b) = grad / n;
  }
  return out;
}

LossGradient mean_squared_error(const Eigen::Ref<const Eigen::MatrixXd>& values,
                                const std::vector<double>& targets) {
  require_batch(values, targets.size(), "mean_squared_error");
  if (values.rows() != 1) throw std::invalid_argument("mean_squared_error: expected one output row");
  const double n = static_cast<double>(targets.size());
  LossGradient out{0.0, Eigen::MatrixXd::Zero(1, values.cols())};
  for (Eigen::Index b = 0; b < values.cols(); ++b) {
    const double diff = values(0, b) - targets[b];
    out.value += diff * diff / n;
    out.d_output(0, b) = 2.0 * diff / n;
  }
  return out;
}

LossGradient negative_entropy(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  const double n = static_cast<double>(logits.cols());
  LossGradient out{0.0, Eigen::MatrixXd::Zero(logits.rows(), logits.cols())};
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const Eigen::VectorXd logp = log_policy_distribution(logits.col(b));
    const Eigen::VectorXd p = logp.array().exp().matrix();
    const double entropy = -p.dot(logp);
    out.value -= entropy / n;
    // dH/dz_k = -p_k (log p_k + H)
    out.d_output.col(b) = (p.array() * (logp.array() + entropy)).matrix() / n;
  }
  return out;
}

LossGradient clipped_surrogate(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                               const std::vector<int>& actions,
                               const std::vector<double>& old_log_probs,
                               const std::vector<double>& advantages, double clip_epsilon,
                               SurrogateStats* stats) {
  require_batch(logits, actions.size(), "clipped_surrogate");
  require_batch(logits, old_log_probs.size(), "clipped_surrogate");
  require_batch(logits, advantages.size(), "clipped_surrogate");
  const double n = static_cast<double>(actions.size());
  LossGradient out{0.0, Eigen::MatrixXd::Zero(logits.rows(), logits.cols())};
  SurrogateStats s;
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const Eigen::VectorXd logp = log_policy_distribution(logits.col(b));
    const int a = actions[b];
    const double log_ratio = logp(a) - old_log_probs[b];
    const double ratio = std::exp(log_ratio);
    const double adv = advantages[b];
    const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    const double unclipped_term = ratio * adv;
    const double clipped_term = clipped * adv;
    out.value -= std::min(unclipped_term, clipped_term) / n;

    // The min selects the clipped branch only when clipping lowers the
    // objective; that branch is constant in the logits.
    const bool clipped_active = clipped_term < unclipped_term;
    if (!clipped_active) {
      Eigen::VectorXd d_logp = -logp.array().exp().matrix();
      d_logp(a) += 1.0;
      out.d_output.col(b) = -(adv * ratio / n) * d_logp;
    }
    s.mean_ratio += ratio / n;
    s.max_ratio_deviation = std::max(s.max_ratio_deviation, std::abs(ratio - 1.0));
    if (std::abs(ratio - 1.0) > clip_epsilon) s.clip_fraction += 1.0 / n;
    s.approx_kl += ((ratio - 1.0) - log_ratio) / n;
  }
  if (stats) *stats = s;
  return out;
}

}  // namespace safenav::net
