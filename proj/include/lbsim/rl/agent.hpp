#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lbsim/flow_env.hpp"
#include "lbsim/rl/mlp.hpp"
#include "lbsim/rl/sparsemax.hpp"

namespace lbsim::rl {

enum class Algo { kPpo, kDdpg };
enum class CriticTarget { kImmediate, kReturn };

std::string to_string(Algo a);
Algo parse_algo(std::string_view name);
std::string to_string(CriticTarget c);
CriticTarget parse_critic_target(std::string_view name);

struct RlConfig {
  Algo algo = Algo::kPpo;
  std::size_t hidden_width = 1024;
  std::size_t hidden_layers = 3;
  double lr = 1e-5;
  double fine_tune_lr = 1e-6;
  double gamma = 0.7;
  double grad_clip = 0.5;
  std::size_t update_period = 128;  // environment steps between updates
  bool anneal_lr = false;           // decay the step size linearly to zero over a run

  // PPO
  double clip_eps = 0.2;
  double target_kl = 0.05;
  std::size_t epochs = 10;
  std::size_t minibatch = 64;
  double init_log_std = -1.0;
  CriticTarget critic_target = CriticTarget::kReturn;
  bool normalize_advantages = true;

  // DDPG
  double polyak_tau = 0.05;
  std::size_t replay_capacity = 100'000;
  std::size_t warmup = 1'000;
  std::size_t batch = 64;
  double noise_start = 0.2;
  double noise_end = 0.05;
  std::size_t grad_steps_per_update = 32;

  void validate() const;
};

/// One transition. `action` is what the environment executed (after the
/// shield, if any). `logits` and `log_prob` describe the policy's own sample
/// before the shield (PPO only): the shield is treated as part of the
/// environment, so the ratio is always taken on what the policy drew.
struct Experience {
  std::vector<double> state;
  std::vector<double> action;
  std::vector<double> logits;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
  double log_prob = 0.0;
  double ret = 0.0;  // discounted return-to-go within the episode
  std::uint64_t policy_version = 0;
};

/// Fills `ret` for one episode's transitions laid out in time order.
void compute_returns(std::span<Experience> episode, double gamma);

/// Ring buffer with uniform sampling; all operations are mutually atomic.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Experience e);
  /// Uniform with replacement. Throws kConfig when empty.
  std::vector<Experience> sample(std::size_t n, std::mt19937_64& rng) const;
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  /// Total pushes since construction (including evicted items).
  std::uint64_t pushed() const;
  std::vector<Experience> snapshot() const;

 private:
  std::size_t capacity_;
  std::vector<Experience> items_;
  std::size_t head_ = 0;
  std::uint64_t pushed_ = 0;
  mutable std::mutex mu_;
};

/// Actor half of an agent; cheap enough to copy into worker threads.
struct Policy {
  Algo algo = Algo::kPpo;
  GroupSizes groups;
  Mlp actor;
  Vector log_std;  // PPO only, one per logit

  struct Sample {
    SplitAction split;
    std::vector<double> logits;
    double log_prob = 0.0;
  };

  std::vector<double> mean_logits(std::span<const double> state) const;
  /// Exploit: sparsemax of the mean logits. Explore: PPO samples logits from
  /// its Gaussian; DDPG adds N(0, noise_std) to them.
  Sample act(std::span<const double> state, bool explore, std::mt19937_64& rng,
             double noise_std = 0.0) const;
  double log_prob(std::span<const double> logits, std::span<const double> mean) const;
  std::vector<double> stddev() const;
};

/// Contribution min(r A, clip(r, 1-eps, 1+eps) A) of one sample.
double clipped_objective(double ratio, double advantage, double eps);

struct PpoStats {
  std::size_t epochs_run = 0;
  bool kl_stopped = false;
  double approx_kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

struct DdpgStats {
  double critic_loss = 0.0;
  double mean_q = 0.0;
};

/// Actor-critic learner. PPO: Gaussian-over-logits actor + value critic.
/// DDPG: deterministic actor + Q(s, x) critic with a Polyak target critic.
class Agent {
 public:
  Agent(const RlConfig& cfg, std::size_t state_dim, GroupSizes groups, std::uint64_t seed);

  const RlConfig& config() const { return cfg_; }
  RlConfig& config() { return cfg_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return policy_.actor.output_dim(); }

  Policy& policy() { return policy_; }
  const Policy& policy() const { return policy_; }
  Mlp& critic() { return critic_; }
  const Mlp& critic() const { return critic_; }
  Mlp& critic_target() { return critic_target_; }
  const Mlp& critic_target() const { return critic_target_; }
  Adam& actor_opt() { return actor_opt_; }
  Adam& critic_opt() { return critic_opt_; }
  Adam& log_std_opt() { return log_std_opt_; }
  const Adam& actor_opt() const { return actor_opt_; }
  const Adam& critic_opt() const { return critic_opt_; }
  const Adam& log_std_opt() const { return log_std_opt_; }

  std::uint64_t policy_version() const { return version_; }
  void set_policy_version(std::uint64_t v) { version_ = v; }
  void set_learning_rate(double lr);

  double value(std::span<const double> state) const;
  double q_value(std::span<const double> state, std::span<const double> action) const;

  /// Throws kValidation if any transition carries another policy version.
  PpoStats ppo_update(const std::vector<Experience>& rollout, std::mt19937_64& rng);

  /// r + gamma (1 - done) Q_target(s', sparsemax(actor(s'))).
  std::vector<double> td_targets(const std::vector<Experience>& batch) const;
  DdpgStats ddpg_update(const std::vector<Experience>& batch);
  void update_target(double tau);

 private:
  Matrix critic_input(const std::vector<Experience>& batch, bool next) const;

  RlConfig cfg_;
  std::size_t state_dim_;
  Policy policy_;
  Mlp critic_;
  Mlp critic_target_;
  Adam actor_opt_, critic_opt_, log_std_opt_;
  std::uint64_t version_ = 0;
};

/// Throws kNumeric naming `what` if any entry is not finite.
void check_finite(const Vector& v, const std::string& what);

}  // namespace lbsim::rl
