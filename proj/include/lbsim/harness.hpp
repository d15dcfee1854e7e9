#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lbsim/baselines.hpp"
#include "lbsim/flow_env.hpp"
#include "lbsim/rl/agent.hpp"
#include "lbsim/rl/checkpoint.hpp"
#include "lbsim/rl/trainer.hpp"
#include "lbsim/safety.hpp"
#include "lbsim/topology.hpp"
#include "lbsim/traffic.hpp"

namespace lbsim::harness {

/// Everything a run needs. JSON schema (all keys optional):
///   topology: path to a topology JSON; empty = built-in Abilene
///   capacities: {high, low}             (built-in Abilene only)
///   traffic: {base_mbps, amplitude_mbps, phase_rad, period_steps, noise_std_mbps}
///   env: {kappa, rho_max, tau_active, sigma, d_ref_ms, obs_scale}
///   rl: {algo, hidden_width, ..., see RlConfig}
///   cbf: {enabled, radius, solutions_per_iter, max_iter, eta}
///   schedule: {episodes, steps_per_episode, workers}
///   seed, eval: {seed, samples}, out_dir
struct ExperimentConfig {
  std::string topology_path;
  AbileneCapacities capacities;
  TrafficConfig traffic;  // empty base = default profile sized to the topology
  EnvParams env;
  rl::RlConfig rl;
  bool shield = true;
  CbfConfig cbf;
  std::size_t episodes = 300;
  std::size_t steps_per_episode = 64;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 1000;
  std::size_t eval_samples = 100;
  std::string out_dir = "out";

  /// Defaults used for desk-scale runs (256-wide networks).
  static ExperimentConfig desk_defaults();

  /// Throws kConfig / kNotFound.
  void validate() const;
};

ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

std::shared_ptr<const Topology> make_topology(const ExperimentConfig& cfg);
/// Traffic profile with the seed of the training stream for `worker`.
TrafficConfig training_traffic(const ExperimentConfig& cfg, const Topology& topo,
                               std::size_t worker);
rl::EnvFactory env_factory(const ExperimentConfig& cfg, std::shared_ptr<const Topology> topo);
rl::GroupSizes tunnel_groups(const Topology& topo);
/// Hash of what a checkpoint depends on: topology, traffic and env settings.
std::string environment_hash(const ExperimentConfig& cfg, const Topology& topo);

// ---------------------------------------------------------------------------
// Evaluation

/// The frozen test trace: `eval_samples` consecutive samples from a stream
/// seeded by `eval_seed`, independent of every training stream.
std::vector<TrafficSample> make_trace(const ExperimentConfig& cfg, const Topology& topo);
void save_trace(const std::string& path, const Topology& topo,
                const std::vector<TrafficSample>& trace);
/// CSV with header t,<tunnel ids...>. Throws kParse / kShape.
std::vector<TrafficSample> load_trace(const std::string& path, const Topology& topo);

/// Decides a split for sample `i` of the trace. Controllers only see the
/// trace, never another policy's actions.
struct Controller {
  std::string name;
  std::function<SplitAction(const Topology& topo, const EnvParams& env,
                            const std::vector<TrafficSample>& trace, std::size_t i)>
      decide;
};

Controller baseline_controller(const BaselineKind& kind, std::uint64_t seed);
/// Per-sample optimum (oracle: solves on the sample it is scored on).
Controller nlp_controller(std::shared_ptr<const std::vector<SplitAction>> solutions);
/// Deployed NLP: applies the solution for the previously observed sample.
Controller nlp_lagged_controller(std::shared_ptr<const std::vector<SplitAction>> solutions);
/// Exploit-mode learned policy, shielded with min(eta, rho_max) when `shield`.
Controller learned_controller(std::string name, std::shared_ptr<const rl::Policy> policy,
                              bool shield, const CbfConfig& cbf);

/// Solves every sample; cached in `cache_path` (keyed by trace + topology
/// content) when non-empty.
std::vector<SplitAction> solve_trace(const Topology& topo, const EnvParams& env,
                                     const std::vector<TrafficSample>& trace,
                                     const std::string& cache_path = {});

struct EvalSummary {
  std::string policy;
  std::size_t samples = 0;
  double mean_delay_ms = 0.0;
  double median_delay_ms = 0.0;
  double p95_delay_ms = 0.0;
  double mean_mlu = 0.0;
  double max_mlu = 0.0;
  double mean_acceptance = 0.0;
  double total_demand_mbps = 0.0;
};

struct PolicyEval {
  EvalSummary summary;
  std::vector<StepReport> reports;
};

/// Each controller is scored on the same frozen trace with its own fresh
/// evaluation state. Throws kValidation on an empty trace.
std::vector<PolicyEval> run_eval(const Topology& topo, const EnvParams& env,
                                 const std::vector<TrafficSample>& trace,
                                 const std::vector<Controller>& controllers);

EvalSummary summarize(const std::string& policy, const std::vector<StepReport>& reports,
                      const std::vector<TrafficSample>& trace);

/// Sorted by mean delay, ties by name. Throws kValidation for < 2 policies.
std::vector<EvalSummary> rank(std::vector<EvalSummary> rows);
std::string summary_csv(const std::vector<EvalSummary>& rows);
std::vector<EvalSummary> parse_summary_csv(std::string_view text);
std::string summary_table(const std::vector<EvalSummary>& rows);

// ---------------------------------------------------------------------------
// Training campaigns

/// Header plus one row per MetricRow; tunnel columns are named delay_<id>.
std::string metrics_csv(const Topology& topo, const std::vector<rl::MetricRow>& rows);
std::vector<rl::MetricRow> parse_metrics_csv(std::string_view text);

struct CampaignResult {
  std::string out_dir;
  std::string metrics_path;
  std::string checkpoint_path;
  std::string manifest_path;
  rl::TrainResult train;
  std::shared_ptr<rl::Checkpoint> checkpoint;
};

/// Trains from scratch, or from `fine_tune` (checkpoint path) at the
/// fine-tune learning rate. Writes metrics.csv, checkpoint.json and
/// manifest.json into cfg.out_dir (created if missing).
CampaignResult run_training_campaign(const ExperimentConfig& cfg,
                                     const std::optional<std::string>& fine_tune = {});

/// Git blob hash (SHA-1 of "blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(std::string_view content);

}  // namespace lbsim::harness
