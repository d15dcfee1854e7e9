#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lbsim/flow_env.hpp"
#include "lbsim/rl/agent.hpp"
#include "lbsim/safety.hpp"

namespace lbsim::rl {

struct TrainSchedule {
  std::size_t episodes = 300;
  std::size_t steps_per_episode = 64;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool shield = true;
  CbfConfig cbf;
  std::uint64_t first_episode = 0;  // numbering offset, e.g. when resuming
  std::string label;                // metrics "policy" column; empty = algo[-cbf]
};

/// One metrics.csv row.
struct MetricRow {
  std::uint64_t episode = 0;
  std::size_t step = 0;
  std::string policy;
  double mean_delay_ms = 0.0;
  double mlu = 0.0;
  double acceptance_rate = 1.0;
  double reward = 0.0;
  std::vector<double> tunnel_delays_ms;
};

struct TrainStats {
  std::size_t updates = 0;
  std::size_t kl_stops = 0;
  std::size_t env_steps = 0;
  std::size_t shield_interventions = 0;
  double collect_seconds = 0.0;  // wall time until the last episode finished
  double samples_per_second = 0.0;
};

struct TrainResult {
  std::vector<MetricRow> rows;  // ordered by (episode, step)
  TrainStats stats;
  std::string rng_state;  // trainer RNG after the run, for checkpoints
};

/// Builds the environment for worker `w`. Each worker owns its instance.
using EnvFactory = std::function<FlowEnv(std::size_t worker)>;

/// Training loop. PPO collects synchronously (all workers finish
/// an episode before the next update, so every rollout is on-policy); DDPG
/// workers run asynchronously against a shared replay buffer. With one
/// worker everything runs inline and is deterministic in the seeds.
/// When the shield is on, every executed action went through safety::project
/// with threshold min(eta, rho_max).
TrainResult train(Agent& agent, const EnvFactory& make_env, const TrainSchedule& schedule);

/// Seed for the shield at (episode, step); exposed for reproducibility tests.
std::uint64_t shield_seed(std::uint64_t base, std::uint64_t episode, std::size_t step);

}  // namespace lbsim::rl
