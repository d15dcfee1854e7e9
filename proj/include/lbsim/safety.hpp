#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lbsim/flow_env.hpp"
#include "lbsim/topology.hpp"

namespace lbsim {

/// Local-search shield parameters. Defaults are the reference settings
/// (radius 0.3, 450 candidates per iteration, 20 iterations).
struct CbfConfig {
  double radius = 0.3;
  std::size_t solutions_per_iter = 450;
  std::size_t max_iter = 20;
  double eta = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ProjectionOutcome {
  SplitAction action;
  bool was_modified = false;
  bool feasible_found = false;
  double mlu_before = 0.0;
  double mlu_after = 0.0;
  double l1_distance = 0.0;
  std::size_t candidates_evaluated = 0;
};

/// Offered-load MLU <= eta (inclusive).
bool is_safe(const Topology& topo, std::span<const double> demand,
             std::span<const double> ratios, double eta);

/// One local-search move: every tunnel whose most utilized path exceeds eta
/// sheds a Uniform(0, radius) share from that path, clamped at zero, spread
/// over its other paths in proportion to their residual headroom.
SplitAction perturb(const Topology& topo, std::span<const double> demand,
                    const SplitAction& action, double radius, double eta,
                    std::mt19937_64& rng);

/// Projects `proto` into {offered MLU <= eta}, minimizing L1 displacement
/// among the candidates found; falls back to the lowest-MLU candidate when
/// none is feasible. Deterministic given cfg.seed.
ProjectionOutcome project(const Topology& topo, std::span<const double> demand,
                          const SplitAction& proto, const CbfConfig& cfg);

double l1_distance(std::span<const double> a, std::span<const double> b);

}  // namespace lbsim
