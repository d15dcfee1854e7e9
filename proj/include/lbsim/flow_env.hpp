#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "lbsim/topology.hpp"
#include "lbsim/traffic.hpp"

namespace lbsim {

/// Split ratios laid out on the topology's flat path numbering; each tunnel's
/// slice lies on the probability simplex.
struct SplitAction {
  std::vector<double> ratios;
};

inline constexpr double kSimplexTolerance = 1e-9;

/// True when every tunnel slice is nonnegative and sums to 1 within `tol`.
bool on_simplex(const Topology& topo, std::span<const double> ratios,
                double tol = kSimplexTolerance);
/// Throws kValidation naming the first offending tunnel.
void check_simplex(const Topology& topo, std::span<const double> ratios,
                   double tol = kSimplexTolerance);

struct EnvParams {
  double kappa = 1.0;        // queueing scale, ms * Mbps
  double rho_max = 0.999;    // admission / delay utilization cap
  double tau_active = 1e-6;  // paths below this ratio are ignored by the max
  double sigma = 0.8;        // reward weight of the delay term
  double d_ref_ms = 0.0;     // <= 0: max over tunnels of the slowest path
  double obs_scale = 0.0;    // <= 0: max + min link capacity

  /// Copy with the automatic fields resolved against `topo`.
  EnvParams resolved(const Topology& topo) const;
};

struct LinkLoadState {
  std::vector<double> offered;
  std::vector<double> admitted;
  std::vector<double> utilization;  // admitted / capacity
};

struct StepReport {
  std::int64_t t = 0;
  std::vector<double> tunnel_delays_ms;
  std::vector<double> path_delays_ms;
  double mean_delay_ms = 0.0;
  double mlu = 0.0;  // offered-load based
  double acceptance_rate = 1.0;
  double reward = 0.0;
  LinkLoadState links;
};

std::vector<double> offered_loads(const Topology& topo,
                                  std::span<const double> demand,
                                  std::span<const double> ratios);

double mlu(const Topology& topo, std::span<const double> loads);

/// Progressive-filling max-min fair allocation. `subflow_demand` is indexed by
/// flat path; each link admits at most rho_max * capacity.
std::vector<double> water_fill(const Topology& topo,
                               std::span<const double> subflow_demand,
                               double rho_max);

/// M/M/1 link delay with the load capped at rho_max * capacity.
double link_delay(const Link& link, double load, double kappa, double rho_max);

struct DelayBreakdown {
  std::vector<double> path_delays_ms;
  std::vector<double> tunnel_delays_ms;
};

DelayBreakdown path_and_tunnel_delays(const Topology& topo,
                                      std::span<const double> link_loads,
                                      std::span<const double> ratios,
                                      const EnvParams& params);

double reward(double mean_delay_ms, double mlu, double sigma, double d_ref_ms);

/// Full per-step pipeline for one (demand, action) pair; no clock involved.
/// `params` must already be resolved.
StepReport evaluate_action(const Topology& topo, const TrafficSample& sample,
                           std::span<const double> ratios,
                           const EnvParams& params);

/// Stateful environment: holds the current traffic sample and advances the
/// traffic clock on every step. Single owner.
class FlowEnv {
 public:
  FlowEnv(std::shared_ptr<const Topology> topo, TrafficGenerator traffic,
          EnvParams params = {});

  /// Draws the next sample and returns its normalized observation.
  std::vector<double> reset();
  StepReport step(const SplitAction& action);

  const TrafficSample& current() const { return current_; }
  std::vector<double> observation() const;
  std::vector<double> normalize(const TrafficSample& s) const;

  const Topology& topology() const { return *topo_; }
  std::shared_ptr<const Topology> topology_ptr() const { return topo_; }
  const EnvParams& params() const { return params_; }
  TrafficGenerator& traffic() { return traffic_; }

 private:
  std::shared_ptr<const Topology> topo_;
  TrafficGenerator traffic_;
  EnvParams params_;
  TrafficSample current_;
  bool has_sample_ = false;
};

}  // namespace lbsim
