#include "safenav/crltrain/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "safenav/netcore/losses.hpp"
#include "safenav/netcore/policy_head.hpp"

namespace safenav::train {

std::string to_string(Method method) { return method == Method::kPpo ? "ppo" : "lppo"; }

Method method_from_string(const std::string& name) {
  if (name == "ppo") return Method::kPpo;
  if (name == "lppo") return Method::kLppo;
  throw std::invalid_argument("unknown method '" + name + "' (expected ppo or lppo)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must lie in (0, 1]");
  if (!(clip_epsilon > 0.0)) fail("clip_epsilon must be positive");
  if (!(policy_lr > 0.0)) fail("policy_lr must be positive");
  if (!(value_lr > 0.0)) fail("value_lr must be positive");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef must be non-negative");
  if (rollout_steps <= 0) fail("rollout_steps must be positive");
  if (epochs_per_update <= 0) fail("epochs_per_update must be positive");
  if (minibatch_size <= 0) fail("minibatch_size must be positive");
  if (total_episodes <= 0) fail("total_episodes must be positive");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be positive");
  if (!(lambda_lr >= 0.0)) fail("lambda_lr must be non-negative");
  if (!(lambda_init >= 0.0)) fail("lambda_init must be non-negative");
  for (int h : hidden)
    if (h <= 0) fail("hidden layer widths must be positive");
}

void LagrangianState::update(double mean_episodic_cost) {
  lambda = std::max(0.0, lambda + learning_rate * (mean_episodic_cost - threshold));
}

Learner Learner::initialize(const TrainConfig& config, std::uint64_t seed) {
  Learner l;
  l.policy = net::PolicyNetwork::initialize(config.hidden, derive_seed(seed, 100));
  l.policy.metadata = {seed, to_string(config.method), 0};
  l.heads = net::ValueHeads::initialize(config.hidden, derive_seed(seed, 101));
  l.policy_opt = Adam(l.policy, config.policy_lr);
  l.reward_opt = Adam(l.heads.reward, config.value_lr);
  l.cost_opt = Adam(l.heads.cost, config.value_lr);
  return l;
}

namespace {

Eigen::MatrixXd gather_observations(const RolloutBatch& batch, const std::vector<std::size_t>& idx,
                                    std::size_t begin, std::size_t end) {
  Eigen::MatrixXd obs(net::kObservationSize, static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) {
    const auto& o = batch.transitions[idx[k]].obs;
    obs.col(static_cast<Eigen::Index>(k - begin)) = Eigen::Map<const Eigen::VectorXd>(o.data(), o.size());
  }
  return obs;
}

// One regression step of a critic towards `targets`.
double fit_value(net::Mlp& critic, Adam& opt, const Eigen::MatrixXd& obs,
                 const std::vector<double>& targets, double max_grad_norm) {
  net::ForwardCache cache;
  const Eigen::MatrixXd v = critic.forward_batch(obs, cache);
  const auto loss = net::mean_squared_error(v, targets);
  if (!std::isfinite(loss.value)) return loss.value;
  net::GradientTape tape(critic);
  critic.backward(cache, loss.d_output, tape);
  clip_gradient_norm(tape, max_grad_norm);
  opt.step(critic, tape);
  return loss.value;
}

bool learner_finite(const Learner& l) {
  return l.policy.all_finite() && l.heads.reward.all_finite() && l.heads.cost.all_finite();
}

}  // namespace

UpdateDiagnostics policy_value_update(Learner& learner, const RolloutBatch& batch,
                                      const std::vector<double>& policy_advantages,
                                      const TrainConfig& config, Rng& rng) {
  UpdateDiagnostics diag;
  const std::size_t n = batch.size();
  if (n == 0) return diag;
  if (policy_advantages.size() != n || batch.reward_returns.size() != n || batch.cost_returns.size() != n)
    throw std::invalid_argument("ppo update: advantages/returns not computed for every transition");

  const Learner snapshot = learner;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  {
    const Eigen::MatrixXd all_obs = gather_observations(batch, order, 0, n);
    const Eigen::MatrixXd logits = learner.policy.forward_batch(all_obs);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd logp = net::log_policy_distribution(logits.col(static_cast<Eigen::Index>(i)));
      const double ratio = std::exp(logp(batch.transitions[i].action) - batch.transitions[i].log_prob);
      diag.initial_ratio_deviation = std::max(diag.initial_ratio_deviation, std::abs(ratio - 1.0));
    }
  }

  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(config.minibatch_size), n);
  double count = 0.0;
  for (int epoch = 0; epoch < config.epochs_per_update; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t begin = 0; begin < n; begin += mb) {
      const std::size_t end = std::min(n, begin + mb);
      const Eigen::MatrixXd obs = gather_observations(batch, order, begin, end);
      std::vector<int> actions;
      std::vector<double> old_logp, adv, ret_r, ret_c;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        actions.push_back(batch.transitions[i].action);
        old_logp.push_back(batch.transitions[i].log_prob);
        adv.push_back(policy_advantages[i]);
        ret_r.push_back(batch.reward_returns[i]);
        ret_c.push_back(batch.cost_returns[i]);
      }

      net::ForwardCache cache;
      const Eigen::MatrixXd logits = learner.policy.forward_batch(obs, cache);
      net::SurrogateStats stats;
      const auto surrogate = net::clipped_surrogate(logits, actions, old_logp, adv, config.clip_epsilon, &stats);
      const auto entropy = net::negative_entropy(logits);
      const double policy_loss = surrogate.value + config.entropy_coef * entropy.value;
      const double vr = fit_value(learner.heads.reward, learner.reward_opt, obs, ret_r, config.max_grad_norm);
      const double vc = fit_value(learner.heads.cost, learner.cost_opt, obs, ret_c, config.max_grad_norm);
      if (!std::isfinite(policy_loss) || !std::isfinite(vr) || !std::isfinite(vc)) {
        learner = snapshot;
        diag.aborted = true;
        diag.message = "non-finite loss (policy " + std::to_string(policy_loss) + ", reward value " +
                       std::to_string(vr) + ", cost value " + std::to_string(vc) + ") at epoch " +
                       std::to_string(epoch);
        return diag;
      }
      net::GradientTape tape(learner.policy);
      learner.policy.backward(cache, surrogate.d_output + config.entropy_coef * entropy.d_output, tape);
      clip_gradient_norm(tape, config.max_grad_norm);
      learner.policy_opt.step(learner.policy, tape);

      diag.policy_loss += surrogate.value;
      diag.entropy -= entropy.value;
      diag.reward_value_loss += vr;
      diag.cost_value_loss += vc;
      diag.approx_kl += stats.approx_kl;
      diag.clip_fraction += stats.clip_fraction;
      count += 1.0;
    }
  }
  if (!learner_finite(learner)) {
    learner = snapshot;
    diag.aborted = true;
    diag.message = "update produced non-finite parameters";
    return diag;
  }
  diag.policy_loss /= count;
  diag.entropy /= count;
  diag.reward_value_loss /= count;
  diag.cost_value_loss /= count;
  diag.approx_kl /= count;
  diag.clip_fraction /= count;
  return diag;
}

UpdateDiagnostics ppo_update(Learner& learner, const RolloutBatch& batch, const TrainConfig& config,
                             Rng& rng) {
  return policy_value_update(learner, batch, normalized(batch.reward_advantages), config, rng);
}

UpdateDiagnostics lppo_update(Learner& learner, const RolloutBatch& batch,
                              LagrangianState& lagrangian, const TrainConfig& config, Rng& rng) {
  const std::vector<double> reward_adv = normalized(batch.reward_advantages);
  const double lambda = lagrangian.lambda;
  std::vector<double> combined(reward_adv.size());
  for (std::size_t i = 0; i < combined.size(); ++i)
    combined[i] = (reward_adv[i] - lambda * batch.cost_advantages[i]) / (1.0 + lambda);
  auto diag = policy_value_update(learner, batch, combined, config, rng);
  if (!diag.aborted && !batch.completed_episode_costs.empty()) {
    const double mean_cost =
        std::accumulate(batch.completed_episode_costs.begin(), batch.completed_episode_costs.end(), 0.0) /
        static_cast<double>(batch.completed_episode_costs.size());
    lagrangian.update(mean_cost);
  }
  return diag;
}

}  // namespace safenav::train
