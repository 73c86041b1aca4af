#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "safenav/crltrain/ppo.hpp"
#include "safenav/netcore/mlp.hpp"
#include "safenav/tubesim/simulator.hpp"

namespace safenav::train {

struct EpisodeRecord {
  int episode = 0;
  double episode_return = 0.0;
  double cost = 0.0;
  int length = 0;
  bool reached_end = false;
  double lambda = 0.0;
};

struct UpdateRecord {
  int episodes_completed = 0;
  double lambda = 0.0;
  UpdateDiagnostics diagnostics;
};

struct TrainRecord {
  std::vector<EpisodeRecord> episodes;
  std::vector<UpdateRecord> updates;
  bool failed = false;
  std::string failure;

  // Fractions over the last `window` episodes (fewer if not yet available).
  double trailing_success_rate(std::size_t window = 100) const;
  double trailing_mean_cost(std::size_t window = 100) const;
  double trailing_mean_return(std::size_t window = 100) const;
};

inline constexpr const char* kFailureMarker = "# failed: ";

// CSV: episode,return,cost,length,reached_end,lambda. A failed run ends with
// a "# failed: <message>" line.
std::string train_record_csv(const TrainRecord& record);
TrainRecord train_record_from_csv(const std::string& text, const std::string& source);

struct TrainResult {
  net::PolicyNetwork policy;
  TrainRecord record;
};

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

// Runs `config.total_episodes` episodes on `tube`, updating every
// `rollout_steps` transitions. Fully determined by (tube, env, config, seed).
// Exceptions inside the loop are caught and reported through record.failed
// with the policy as of the last good update.
TrainResult train_policy(const sim::TubeModel& tube, const sim::EnvConfig& env,
                         const TrainConfig& config, std::uint64_t seed,
                         const EpisodeCallback& on_episode = {});

struct EvalSummary {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double mean_episodic_cost = 0.0;
  double mean_distance_traveled = 0.0;
};

struct EpisodeTrace {
  std::vector<sim::CapsuleState> states;
  std::vector<sim::TrajectoryRow> rows;
  std::vector<sim::Observation> observations;  // observation before each action
  bool reached_end = false;
  double episode_return = 0.0;
  double cost = 0.0;
};

// One greedy episode from a reset drawn with `reset_seed`.
EpisodeTrace run_greedy_episode(const net::Mlp& policy, const sim::TubeModel& tube,
                                const sim::EnvConfig& env, std::uint64_t reset_seed);

// Greedy rollouts; episode i resets with derive_seed(seed, i).
EvalSummary evaluate_policy(const net::Mlp& policy, const sim::TubeModel& tube, int episodes,
                            const sim::EnvConfig& env, std::uint64_t seed = 0);

}  // namespace safenav::train
