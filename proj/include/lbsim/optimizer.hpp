#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lbsim/flow_env.hpp"
#include "lbsim/topology.hpp"

namespace lbsim {

/// Delay-minimization benchmark: mean tunnel delay under the M/M/1 closure,
/// per-tunnel simplex constraints and offered MLU <= mlu_bound.
struct NlpProblem {
  const Topology* topo = nullptr;
  std::vector<double> demand;
  double mlu_bound = 0.999;
  EnvParams env;  // kappa, rho_max, tau_active
};

struct NlpSolution {
  SplitAction action;
  double objective_ms = 0.0;  // true (unsmoothed) mean tunnel delay
  double mlu = 0.0;
  bool feasible = false;
  bool budget_exhausted = false;
  std::size_t iterations = 0;
  std::vector<std::string> violating_cut;  // link ids, when infeasible
};

struct SolveBudget {
  std::size_t max_iterations = 2'000'000;  // projected-descent steps, total
  std::size_t max_support_patterns = 20'000;
  std::size_t multistart = 16;  // used when patterns exceed the limit
  std::uint64_t seed = 0;
};

struct MinMluResult {
  double mlu = 0.0;
  SplitAction action;
};

/// Exact minimum offered MLU over the per-tunnel simplices (linear program).
/// `support`, when non-empty, masks which flat paths may carry traffic.
/// Throws kNumeric if the support leaves some tunnel with no path.
MinMluResult min_mlu(const Topology& topo, std::span<const double> demand,
                     std::span<const char> support = {});

/// Mean tunnel delay of `ratios` on the offered loads (no admission control).
double nlp_objective(const Topology& topo, std::span<const double> demand,
                     std::span<const double> ratios, const EnvParams& env);

/// Branch-and-bound over path-activity patterns with annealed smooth-max
/// projected descent inside each (convex) pattern.
NlpSolution solve(const NlpProblem& problem, const SolveBudget& budget = {});

/// Exhaustive grid over the product of simplices; throws kConfig when the
/// grid exceeds 1e7 points.
NlpSolution brute_force(const NlpProblem& problem, double grid_step);

/// Euclidean projection of `v` onto the probability simplex.
void project_simplex(std::span<double> v);

}  // namespace lbsim
