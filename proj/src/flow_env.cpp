#include "lbsim/flow_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lbsim/error.hpp"

namespace lbsim {

bool on_simplex(const Topology& topo, std::span<const double> ratios, double tol) {
  if (ratios.size() != topo.num_paths()) return false;
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t off = topo.path_offset(k);
    double sum = 0.0;
    for (std::size_t p = 0; p < topo.path_count(k); ++p) {
      const double x = ratios[off + p];
      if (!(x >= 0.0) || !std::isfinite(x)) return false;
      sum += x;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

void check_simplex(const Topology& topo, std::span<const double> ratios, double tol) {
  if (ratios.size() != topo.num_paths())
    throw Error(ErrorKind::kShape, "action has " + std::to_string(ratios.size()) +
                                       " ratios, topology has " +
                                       std::to_string(topo.num_paths()) + " paths");
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t off = topo.path_offset(k);
    double sum = 0.0;
    for (std::size_t p = 0; p < topo.path_count(k); ++p) {
      const double x = ratios[off + p];
      if (!(x >= 0.0) || !std::isfinite(x))
        throw Error(ErrorKind::kValidation,
                    "negative or non-finite split ratio in tunnel '" +
                        topo.tunnels()[k].id + "'");
      sum += x;
    }
    if (std::abs(sum - 1.0) > tol)
      throw Error(ErrorKind::kValidation, "split ratios of tunnel '" +
                                              topo.tunnels()[k].id +
                                              "' do not sum to 1");
  }
}

EnvParams EnvParams::resolved(const Topology& topo) const {
  EnvParams p = *this;
  if (p.d_ref_ms <= 0.0) {
    double d = 0.0;
    for (std::size_t f = 0; f < topo.num_paths(); ++f)
      d = std::max(d, topo.path_prop_delay(f));
    p.d_ref_ms = d > 0.0 ? d : 1.0;
  }
  if (p.obs_scale <= 0.0) p.obs_scale = topo.max_capacity() + topo.min_capacity();
  return p;
}

std::vector<double> offered_loads(const Topology& topo,
                                  std::span<const double> demand,
                                  std::span<const double> ratios) {
  std::vector<double> loads(topo.num_links(), 0.0);
  for (std::size_t f = 0; f < topo.num_paths(); ++f) {
    const double rate = demand[topo.tunnel_of(f)] * ratios[f];
    if (rate == 0.0) continue;
    for (std::size_t li : topo.flat_path(f).links) loads[li] += rate;
  }
  return loads;
}

double mlu(const Topology& topo, std::span<const double> loads) {
  double m = 0.0;
  for (std::size_t e = 0; e < topo.num_links(); ++e)
    m = std::max(m, loads[e] / topo.links()[e].capacity_mbps);
  return m;
}

std::vector<double> water_fill(const Topology& topo,
                               std::span<const double> subflow_demand,
                               double rho_max) {
  const std::size_t n = topo.num_paths();

  // Uncongested: admit everything. Same summation order and ratio test as
  // offered_loads() + mlu(), so "mlu <= rho_max" implies full admission.
  bool congested = false;
  for (std::size_t e = 0; e < topo.num_links() && !congested; ++e) {
    double load = 0.0;
    for (std::size_t f : topo.paths_on_link(e))
      if (subflow_demand[f] > 0.0) load += subflow_demand[f];
    congested = load / topo.links()[e].capacity_mbps > rho_max;
  }
  if (!congested) {
    std::vector<double> all(subflow_demand.begin(), subflow_demand.end());
    for (double& a : all) a = std::max(a, 0.0);
    return all;
  }

  std::vector<double> rate(n, 0.0);
  std::vector<bool> frozen(n, false);
  std::size_t remaining = 0;
  for (std::size_t f = 0; f < n; ++f) {
    if (subflow_demand[f] <= 0.0)
      frozen[f] = true;
    else
      ++remaining;
  }

  std::vector<double> frozen_sum(topo.num_links(), 0.0);
  std::vector<double> share(topo.num_links());
  std::vector<std::size_t> active(topo.num_links());

  while (remaining > 0) {
    double min_share = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < topo.num_links(); ++e) {
      active[e] = 0;
      for (std::size_t f : topo.paths_on_link(e))
        if (!frozen[f]) ++active[e];
      if (active[e] == 0) continue;
      const double residual =
          std::max(0.0, rho_max * topo.links()[e].capacity_mbps - frozen_sum[e]);
      share[e] = residual / static_cast<double>(active[e]);
      min_share = std::min(min_share, share[e]);
    }
    double min_demand = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < n; ++f)
      if (!frozen[f]) min_demand = std::min(min_demand, subflow_demand[f]);

    const double level = std::min(min_share, min_demand);
    std::vector<std::size_t> to_freeze;
    for (std::size_t f = 0; f < n; ++f)
      if (!frozen[f] && subflow_demand[f] <= level) to_freeze.push_back(f);
    if (to_freeze.empty()) {
      // A link saturates first: every unfrozen flow crossing it stops at `level`.
      for (std::size_t e = 0; e < topo.num_links(); ++e) {
        if (active[e] == 0 || share[e] > level) continue;
        for (std::size_t f : topo.paths_on_link(e))
          if (!frozen[f]) to_freeze.push_back(f);
      }
      std::sort(to_freeze.begin(), to_freeze.end());
      to_freeze.erase(std::unique(to_freeze.begin(), to_freeze.end()),
                      to_freeze.end());
    }
    for (std::size_t f : to_freeze) {
      rate[f] = std::min(level, subflow_demand[f]);
      frozen[f] = true;
      --remaining;
      for (std::size_t li : topo.flat_path(f).links) frozen_sum[li] += rate[f];
    }
  }
  return rate;
}

double link_delay(const Link& link, double load, double kappa, double rho_max) {
  const double capped = std::min(std::max(load, 0.0), rho_max * link.capacity_mbps);
  return link.prop_delay_ms + kappa / (link.capacity_mbps - capped);
}

DelayBreakdown path_and_tunnel_delays(const Topology& topo,
                                      std::span<const double> link_loads,
                                      std::span<const double> ratios,
                                      const EnvParams& params) {
  std::vector<double> link_d(topo.num_links());
  for (std::size_t e = 0; e < topo.num_links(); ++e)
    link_d[e] = link_delay(topo.links()[e], link_loads[e], params.kappa, params.rho_max);

  DelayBreakdown out;
  out.path_delays_ms.resize(topo.num_paths());
  for (std::size_t f = 0; f < topo.num_paths(); ++f) {
    double d = 0.0;
    for (std::size_t li : topo.flat_path(f).links) d += link_d[li];
    out.path_delays_ms[f] = d;
  }
  out.tunnel_delays_ms.assign(topo.num_tunnels(), 0.0);
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t off = topo.path_offset(k);
    double d = 0.0;
    bool any = false;
    for (std::size_t p = 0; p < topo.path_count(k); ++p) {
      if (ratios[off + p] <= params.tau_active) continue;
      d = any ? std::max(d, out.path_delays_ms[off + p]) : out.path_delays_ms[off + p];
      any = true;
    }
    if (!any) {
      // Unreachable for simplex actions; fall back to the largest ratio.
      std::size_t best = off;
      for (std::size_t p = 1; p < topo.path_count(k); ++p)
        if (ratios[off + p] > ratios[best]) best = off + p;
      d = out.path_delays_ms[best];
    }
    out.tunnel_delays_ms[k] = d;
  }
  return out;
}

double reward(double mean_delay_ms, double mlu_value, double sigma, double d_ref_ms) {
  return -sigma * (mean_delay_ms / d_ref_ms) - (1.0 - sigma) * mlu_value;
}

StepReport evaluate_action(const Topology& topo, const TrafficSample& sample,
                           std::span<const double> ratios,
                           const EnvParams& params) {
  StepReport r;
  r.t = sample.t;
  r.links.offered = offered_loads(topo, sample.demand, ratios);
  r.mlu = mlu(topo, r.links.offered);

  std::vector<double> sub(topo.num_paths());
  double offered_total = 0.0;
  for (std::size_t f = 0; f < topo.num_paths(); ++f) {
    sub[f] = sample.demand[topo.tunnel_of(f)] * ratios[f];
    offered_total += sub[f];
  }
  const std::vector<double> admitted = water_fill(topo, sub, params.rho_max);
  double admitted_total = 0.0;
  for (double a : admitted) admitted_total += a;
  r.acceptance_rate = offered_total > 0.0 ? admitted_total / offered_total : 1.0;
  if (r.acceptance_rate > 1.0) r.acceptance_rate = 1.0;

  r.links.admitted.assign(topo.num_links(), 0.0);
  for (std::size_t f = 0; f < topo.num_paths(); ++f)
    for (std::size_t li : topo.flat_path(f).links) r.links.admitted[li] += admitted[f];
  r.links.utilization.resize(topo.num_links());
  for (std::size_t e = 0; e < topo.num_links(); ++e)
    r.links.utilization[e] = r.links.admitted[e] / topo.links()[e].capacity_mbps;

  DelayBreakdown d = path_and_tunnel_delays(topo, r.links.admitted, ratios, params);
  r.path_delays_ms = std::move(d.path_delays_ms);
  r.tunnel_delays_ms = std::move(d.tunnel_delays_ms);
  double sum = 0.0;
  for (double x : r.tunnel_delays_ms) sum += x;
  r.mean_delay_ms = sum / static_cast<double>(topo.num_tunnels());
  r.reward = reward(r.mean_delay_ms, r.mlu, params.sigma, params.d_ref_ms);
  return r;
}

FlowEnv::FlowEnv(std::shared_ptr<const Topology> topo, TrafficGenerator traffic,
                 EnvParams params)
    : topo_(std::move(topo)),
      traffic_(std::move(traffic)),
      params_(params.resolved(*topo_)) {}

std::vector<double> FlowEnv::reset() {
  current_ = traffic_.next();
  has_sample_ = true;
  return observation();
}

StepReport FlowEnv::step(const SplitAction& action) {
  if (!has_sample_) reset();
  check_simplex(*topo_, action.ratios);
  StepReport r = evaluate_action(*topo_, current_, action.ratios, params_);
  current_ = traffic_.next();
  return r;
}

std::vector<double> FlowEnv::normalize(const TrafficSample& s) const {
  std::vector<double> obs(s.demand.size());
  for (std::size_t k = 0; k < obs.size(); ++k) obs[k] = s.demand[k] / params_.obs_scale;
  return obs;
}

std::vector<double> FlowEnv::observation() const { return normalize(current_); }

}  // namespace lbsim
