#include "lbsim/safety.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lbsim/error.hpp"

namespace lbsim {

void CbfConfig::validate() const {
  if (!(radius > 0.0 && radius <= 1.0))
    throw Error(ErrorKind::kConfig, "cbf radius must be in (0, 1]");
  if (solutions_per_iter < 1 || max_iter < 1)
    throw Error(ErrorKind::kConfig, "cbf solution and iteration counts must be >= 1");
  if (!(eta > 0.0 && eta <= 1.0))
    throw Error(ErrorKind::kConfig, "cbf eta must be in (0, 1]");
}

bool is_safe(const Topology& topo, std::span<const double> demand,
             std::span<const double> ratios, double eta) {
  return mlu(topo, offered_loads(topo, demand, ratios)) <= eta;
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

namespace {

// Which path each overloaded tunnel sheds from, and where the mass goes.
struct Move {
  std::size_t tunnel;
  std::size_t worst;             // flat index
  std::vector<double> weights;  // per path of the tunnel; 0 at `worst`
};

std::vector<Move> plan_moves(const Topology& topo, std::span<const double> demand,
                             std::span<const double> ratios, double eta) {
  const std::vector<double> loads = offered_loads(topo, demand, ratios);
  std::vector<Move> moves;
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t n = topo.path_count(k);
    if (n < 2) continue;
    const std::size_t off = topo.path_offset(k);
    std::size_t worst = off;
    double worst_u = -1.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (ratios[off + p] <= 0.0) continue;
      double u = 0.0;
      for (std::size_t li : topo.flat_path(off + p).links)
        u = std::max(u, loads[li] / topo.links()[li].capacity_mbps);
      if (u > worst_u) {
        worst_u = u;
        worst = off + p;
      }
    }
    if (!(worst_u > eta)) continue;

    Move m{k, worst, std::vector<double>(n, 0.0)};
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (off + p == worst) continue;
      double head = std::numeric_limits<double>::infinity();
      for (std::size_t li : topo.flat_path(off + p).links)
        head = std::min(head, eta * topo.links()[li].capacity_mbps - loads[li]);
      m.weights[p] = std::max(0.0, head);
      total += m.weights[p];
    }
    if (total > 0.0) {
      for (double& w : m.weights) w /= total;
    } else {
      for (std::size_t p = 0; p < n; ++p)
        m.weights[p] = off + p == worst ? 0.0 : 1.0 / static_cast<double>(n - 1);
    }
    moves.push_back(std::move(m));
  }
  return moves;
}

void apply_moves(const Topology& topo, const std::vector<Move>& moves,
                 double radius, std::mt19937_64& rng, std::vector<double>& x) {
  std::uniform_real_distribution<double> uni(0.0, radius);
  for (const Move& m : moves) {
    const double eps = uni(rng);
    const double take = std::min(eps, x[m.worst]);
    x[m.worst] -= take;
    const std::size_t off = topo.path_offset(m.tunnel);
    for (std::size_t p = 0; p < m.weights.size(); ++p)
      if (off + p != m.worst) x[off + p] += take * m.weights[p];
  }
}

}  // namespace

SplitAction perturb(const Topology& topo, std::span<const double> demand,
                    const SplitAction& action, double radius, double eta,
                    std::mt19937_64& rng) {
  SplitAction out = action;
  apply_moves(topo, plan_moves(topo, demand, action.ratios, eta), radius, rng,
              out.ratios);
  return out;
}

ProjectionOutcome project(const Topology& topo, std::span<const double> demand,
                          const SplitAction& proto, const CbfConfig& cfg) {
  ProjectionOutcome out;
  out.mlu_before = mlu(topo, offered_loads(topo, demand, proto.ratios));
  if (out.mlu_before <= cfg.eta) {
    out.action = proto;
    out.feasible_found = true;
    out.mlu_after = out.mlu_before;
    return out;
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> center = proto.ratios;
  double center_mlu = out.mlu_before;

  bool have_feasible = false;
  std::vector<double> best_feasible;
  double best_l1 = 0.0, best_feasible_mlu = 0.0;

  std::vector<double> lowest = proto.ratios;  // fallback: lowest MLU seen
  double lowest_mlu = out.mlu_before;

  std::vector<double> cand(center.size());
  std::size_t evaluated = 0;
  for (std::size_t m = 0; m < cfg.max_iter && !have_feasible; ++m) {
    const std::vector<Move> moves = plan_moves(topo, demand, center, cfg.eta);
    if (moves.empty()) break;  // no tunnel can shed load from an overloaded path
    std::vector<double> next_center = center;
    double next_center_mlu = center_mlu;
    for (std::size_t n = 0; n < cfg.solutions_per_iter; ++n) {
      cand = center;
      apply_moves(topo, moves, cfg.radius, rng, cand);
      const double mu = mlu(topo, offered_loads(topo, demand, cand));
      ++evaluated;
      if (mu <= cfg.eta) {
        const double d = l1_distance(cand, proto.ratios);
        // Ties: lower L1, then lower MLU, then earlier candidate.
        if (!have_feasible || d < best_l1 || (d == best_l1 && mu < best_feasible_mlu)) {
          best_feasible = cand;
          best_l1 = d;
          best_feasible_mlu = mu;
          have_feasible = true;
        }
      } else {
        if (mu < next_center_mlu) {
          next_center = cand;
          next_center_mlu = mu;
        }
        if (mu < lowest_mlu) {
          lowest = cand;
          lowest_mlu = mu;
        }
      }
    }
    center = std::move(next_center);
    center_mlu = next_center_mlu;
  }

  out.candidates_evaluated = evaluated;
  out.was_modified = true;
  if (have_feasible) {
    out.feasible_found = true;
    out.action.ratios = std::move(best_feasible);
    out.mlu_after = best_feasible_mlu;
    out.l1_distance = best_l1;
  } else {
    out.action.ratios = std::move(lowest);
    out.mlu_after = lowest_mlu;
    out.l1_distance = l1_distance(out.action.ratios, proto.ratios);
    out.was_modified = out.l1_distance > 0.0;
  }
  return out;
}

}  // namespace lbsim
