#include "safenav/crltrain/trainer.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "safenav/common/io.hpp"
#include "safenav/common/rng.hpp"
#include "safenav/netcore/policy_head.hpp"

namespace safenav::train {

namespace {

template <typename F>
double trailing_mean(const std::vector<EpisodeRecord>& eps, std::size_t window, F value) {
  if (eps.empty()) return 0.0;
  const std::size_t n = std::min(window, eps.size());
  double total = 0.0;
  for (std::size_t i = eps.size() - n; i < eps.size(); ++i) total += value(eps[i]);
  return total / static_cast<double>(n);
}

Eigen::Map<const Eigen::VectorXd> as_vector(const sim::Observation& obs) {
  return Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
}

// Critic predictions for every transition plus bootstrap observations.
void fill_values(RolloutBatch& batch, const net::ValueHeads& heads,
                 const std::vector<std::pair<std::size_t, sim::Observation>>& bootstrap_obs,
                 const sim::Observation* tail_obs) {
  const std::size_t n = batch.size();
  const std::size_t extra = bootstrap_obs.size() + (tail_obs ? 1 : 0);
  Eigen::MatrixXd obs(net::kObservationSize, static_cast<Eigen::Index>(n + extra));
  for (std::size_t i = 0; i < n; ++i) obs.col(static_cast<Eigen::Index>(i)) = as_vector(batch.transitions[i].obs);
  for (std::size_t k = 0; k < bootstrap_obs.size(); ++k)
    obs.col(static_cast<Eigen::Index>(n + k)) = as_vector(bootstrap_obs[k].second);
  if (tail_obs) obs.col(static_cast<Eigen::Index>(n + bootstrap_obs.size())) = as_vector(*tail_obs);
  const Eigen::MatrixXd vr = heads.reward.forward_batch(obs);
  const Eigen::MatrixXd vc = heads.cost.forward_batch(obs);
  for (std::size_t i = 0; i < n; ++i) {
    batch.transitions[i].reward_value = vr(0, static_cast<Eigen::Index>(i));
    batch.transitions[i].cost_value = vc(0, static_cast<Eigen::Index>(i));
  }
  for (std::size_t k = 0; k < bootstrap_obs.size(); ++k) {
    auto& t = batch.transitions[bootstrap_obs[k].first];
    t.reward_bootstrap = vr(0, static_cast<Eigen::Index>(n + k));
    t.cost_bootstrap = vc(0, static_cast<Eigen::Index>(n + k));
  }
  if (tail_obs) {
    batch.tail_reward_value = vr(0, static_cast<Eigen::Index>(n + bootstrap_obs.size()));
    batch.tail_cost_value = vc(0, static_cast<Eigen::Index>(n + bootstrap_obs.size()));
  }
}

}  // namespace

double TrainRecord::trailing_success_rate(std::size_t window) const {
  return trailing_mean(episodes, window, [](const EpisodeRecord& e) { return e.reached_end ? 1.0 : 0.0; });
}

double TrainRecord::trailing_mean_cost(std::size_t window) const {
  return trailing_mean(episodes, window, [](const EpisodeRecord& e) { return e.cost; });
}

double TrainRecord::trailing_mean_return(std::size_t window) const {
  return trailing_mean(episodes, window, [](const EpisodeRecord& e) { return e.episode_return; });
}

std::string train_record_csv(const TrainRecord& record) {
  std::ostringstream out;
  out << "episode,return,cost,length,reached_end,lambda\n";
  for (const auto& e : record.episodes)
    out << e.episode << ',' << format_exact(e.episode_return) << ',' << format_exact(e.cost) << ','
        << e.length << ',' << (e.reached_end ? 1 : 0) << ',' << format_exact(e.lambda) << '\n';
  if (record.failed) {
    std::string message = record.failure;
    std::replace(message.begin(), message.end(), '\n', ' ');
    out << kFailureMarker << message << '\n';
  }
  return out.str();
}

TrainRecord train_record_from_csv(const std::string& text, const std::string& source) {
  TrainRecord record;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "episode,return,cost,length,reached_end,lambda")
    throw FormatError(source + ": missing train record header");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind(kFailureMarker, 0) == 0) {
      record.failed = true;
      record.failure = line.substr(std::string(kFailureMarker).size());
      continue;
    }
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw FormatError(source + ": line " + std::to_string(lineno) + " has " +
                        std::to_string(fields.size()) + " fields, expected 6");
    try {
      EpisodeRecord e;
      e.episode = std::stoi(fields[0]);
      e.episode_return = std::stod(fields[1]);
      e.cost = std::stod(fields[2]);
      e.length = std::stoi(fields[3]);
      e.reached_end = fields[4] == "1";
      e.lambda = std::stod(fields[5]);
      record.episodes.push_back(e);
    } catch (const std::exception&) {
      throw FormatError(source + ": line " + std::to_string(lineno) + " is not numeric");
    }
  }
  return record;
}

TrainResult train_policy(const sim::TubeModel& tube, const sim::EnvConfig& env,
                         const TrainConfig& config, std::uint64_t seed,
                         const EpisodeCallback& on_episode) {
  config.validate();
  env.validate();
  Learner learner = Learner::initialize(config, seed);
  Rng reset_rng(derive_seed(seed, 200));
  Rng action_rng(derive_seed(seed, 201));
  Rng shuffle_rng(derive_seed(seed, 202));
  LagrangianState lagrangian{config.method == Method::kLppo ? config.lambda_init : 0.0,
                             config.cost_threshold, config.lambda_lr};

  TrainResult result;
  TrainRecord& record = result.record;
  try {
    sim::CapsuleState state = sim::reset_episode(tube, env, reset_rng);
    sim::Observation obs = sim::observe(tube, state, env);
    EpisodeRecord current;
    int episodes_done = 0;

    while (episodes_done < config.total_episodes) {
      RolloutBatch batch;
      batch.transitions.reserve(static_cast<std::size_t>(config.rollout_steps));
      std::vector<std::pair<std::size_t, sim::Observation>> bootstrap_obs;
      bool tail_open = false;
      for (int t = 0; t < config.rollout_steps; ++t) {
        const Eigen::VectorXd logits = learner.policy.forward(as_vector(obs));
        const int action = net::sample_action(logits, action_rng);
        const Eigen::VectorXd logp = net::log_policy_distribution(logits);
        const auto res = sim::step(tube, state, action, env);

        Transition tr;
        tr.obs = obs;
        tr.action = action;
        tr.log_prob = logp(action);
        tr.reward = res.outcome.reward;
        tr.cost = res.outcome.cost;
        tr.terminal = res.outcome.terminal == sim::Terminal::kReachedEnd;
        tr.truncated = res.outcome.terminal == sim::Terminal::kHorizonExhausted;
        batch.transitions.push_back(tr);
        if (tr.truncated) bootstrap_obs.emplace_back(batch.size() - 1, res.outcome.observation);
        tail_open = !tr.terminal && !tr.truncated;

        current.episode_return += tr.reward;
        current.cost += tr.cost;
        current.length += 1;
        if (res.outcome.terminal != sim::Terminal::kRunning) {
          current.episode = episodes_done;
          current.reached_end = tr.terminal;
          current.lambda = lagrangian.lambda;
          record.episodes.push_back(current);
          batch.completed_episode_costs.push_back(current.cost);
          if (on_episode) on_episode(current);
          ++episodes_done;
          current = EpisodeRecord{};
          state = sim::reset_episode(tube, env, reset_rng);
          obs = sim::observe(tube, state, env);
          if (episodes_done >= config.total_episodes) break;
        } else {
          state = res.state;
          obs = res.outcome.observation;
        }
      }
      fill_values(batch, learner.heads, bootstrap_obs, tail_open ? &obs : nullptr);
      compute_advantages(batch, config.gamma, config.gae_lambda);

      UpdateRecord update;
      update.diagnostics = config.method == Method::kLppo
                               ? lppo_update(learner, batch, lagrangian, config, shuffle_rng)
                               : ppo_update(learner, batch, config, shuffle_rng);
      update.episodes_completed = episodes_done;
      update.lambda = lagrangian.lambda;
      record.updates.push_back(update);
    }
  } catch (const std::exception& e) {
    record.failed = true;
    record.failure = e.what();
  }
  result.policy = learner.policy;
  result.policy.metadata = {seed, to_string(config.method),
                            static_cast<std::int64_t>(record.episodes.size())};
  return result;
}

EpisodeTrace run_greedy_episode(const net::Mlp& policy, const sim::TubeModel& tube,
                                const sim::EnvConfig& env, std::uint64_t reset_seed) {
  Rng rng(reset_seed);
  EpisodeTrace trace;
  sim::CapsuleState state = sim::reset_episode(tube, env, rng);
  sim::Observation obs = sim::observe(tube, state, env);
  trace.states.push_back(state);
  for (;;) {
    const int action = net::greedy_action(policy.forward(as_vector(obs)));
    trace.observations.push_back(obs);
    const auto res = sim::step(tube, state, action, env);
    state = res.state;
    obs = res.outcome.observation;
    trace.states.push_back(state);
    trace.rows.push_back({state.steps, state.position, action, res.outcome.reward, res.outcome.cost,
                          state.in_contact, res.outcome.dist_to_end});
    trace.episode_return += res.outcome.reward;
    trace.cost += res.outcome.cost;
    if (res.outcome.terminal != sim::Terminal::kRunning) {
      trace.reached_end = res.outcome.terminal == sim::Terminal::kReachedEnd;
      break;
    }
  }
  return trace;
}

EvalSummary evaluate_policy(const net::Mlp& policy, const sim::TubeModel& tube, int episodes,
                            const sim::EnvConfig& env, std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("evaluate_policy: episodes must be positive");
  EvalSummary s;
  s.episodes = episodes;
  for (int i = 0; i < episodes; ++i) {
    const auto trace = run_greedy_episode(policy, tube, env, derive_seed(seed, static_cast<std::uint64_t>(i)));
    s.success_rate += trace.reached_end ? 1.0 : 0.0;
    s.mean_return += trace.episode_return;
    s.mean_episodic_cost += trace.cost;
    s.mean_distance_traveled += sim::distance_traveled(trace.states, tube);
  }
  s.success_rate /= episodes;
  s.mean_return /= episodes;
  s.mean_episodic_cost /= episodes;
  s.mean_distance_traveled /= episodes;
  return s;
}

}  // namespace safenav::train
