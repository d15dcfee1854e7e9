// Reference implementations shared by the unit tests and the acceptance
// binary. Written independently of the library code they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lbsim/flow_env.hpp"
#include "lbsim/rl/mlp.hpp"
#include "lbsim/topology.hpp"

namespace oracle {

// Layered multigraph v0 -> v1 -> ... with 1-2 parallel links per layer and
// at most `max_links` links in total. Each tunnel spans a random range of
// layers and picks one parallel link per layer for each of its 1-2 paths, so
// subflows share links in varied patterns. At most `max_subflows` paths.
inline lbsim::Topology random_layered(std::mt19937_64& rng, std::size_t max_links,
                                      std::size_t max_subflows, double cap_lo = 1.0,
                                      double cap_hi = 20.0) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_real_distribution<double> cap(cap_lo, cap_hi), prop(0.5, 10.0);
  std::vector<std::size_t> width;
  std::size_t total = 0;
  while (true) {
    const std::size_t w = 1 + coin(rng);
    if (total + w > max_links) break;
    width.push_back(w);
    total += w;
    if (width.size() >= 3 || coin(rng)) break;
  }
  const std::size_t layers = width.size();
  std::vector<std::string> nodes;
  for (std::size_t i = 0; i <= layers; ++i) nodes.push_back("v" + std::to_string(i));
  std::vector<lbsim::Link> links;
  std::vector<std::vector<std::size_t>> layer_links(layers);
  for (std::size_t i = 0; i < layers; ++i)
    for (std::size_t j = 0; j < width[i]; ++j) {
      layer_links[i].push_back(links.size());
      links.push_back({"l" + std::to_string(i) + (j ? "b" : "a"), nodes[i], nodes[i + 1],
                       cap(rng), prop(rng)});
    }
  std::uniform_int_distribution<std::size_t> nsub(1, max_subflows);
  const std::size_t subflows = nsub(rng);
  std::vector<lbsim::Tunnel> tunnels;
  std::size_t made = 0;
  while (made < subflows) {
    std::uniform_int_distribution<std::size_t> pick(0, layers - 1);
    std::size_t a = pick(rng), b = pick(rng);
    if (a > b) std::swap(a, b);
    lbsim::Tunnel t{"t" + std::to_string(tunnels.size()), nodes[a], nodes[b + 1], {}};
    const std::size_t paths = std::min<std::size_t>(1 + coin(rng), subflows - made);
    for (std::size_t p = 0; p < paths; ++p) {
      lbsim::PathDef def;
      for (std::size_t i = a; i <= b; ++i)
        def.links.push_back(layer_links[i][width[i] == 2 ? coin(rng) : 0]);
      t.paths.push_back(def);
    }
    made += paths;
    tunnels.push_back(std::move(t));
  }
  return lbsim::Topology(nodes, links, tunnels);
}

// Event-driven progressive filling: all unfrozen subflows grow at the same
// rate until one reaches its demand or a link runs out of headroom, then the
// affected subflows freeze. Repeats until nothing can grow.
inline std::vector<double> progressive_fill(const lbsim::Topology& topo,
                                            const std::vector<double>& demand, double rho_max) {
  const std::size_t n = topo.num_paths(), m = topo.num_links();
  std::vector<double> rate(n, 0.0), room(m);
  for (std::size_t l = 0; l < m; ++l) room[l] = rho_max * topo.links()[l].capacity_mbps;
  std::vector<bool> frozen(n);
  for (std::size_t s = 0; s < n; ++s) frozen[s] = !(demand[s] > 0.0);
  auto path_links = [&](std::size_t s) -> const std::vector<std::size_t>& {
    return topo.flat_path(s).links;
  };
  while (true) {
    std::vector<std::size_t> users(m, 0);
    bool any = false;
    for (std::size_t s = 0; s < n; ++s)
      if (!frozen[s]) {
        any = true;
        for (std::size_t l : path_links(s)) ++users[l];
      }
    if (!any) break;
    double inc = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < n; ++s)
      if (!frozen[s]) inc = std::min(inc, demand[s] - rate[s]);
    for (std::size_t l = 0; l < m; ++l)
      if (users[l]) inc = std::min(inc, room[l] / static_cast<double>(users[l]));
    inc = std::max(inc, 0.0);
    for (std::size_t s = 0; s < n; ++s)
      if (!frozen[s]) rate[s] += inc;
    for (std::size_t l = 0; l < m; ++l) room[l] -= inc * static_cast<double>(users[l]);
    for (std::size_t s = 0; s < n; ++s) {
      if (frozen[s]) continue;
      if (demand[s] - rate[s] <= 1e-12 * std::max(1.0, demand[s])) {
        rate[s] = demand[s];
        frozen[s] = true;
        continue;
      }
      for (std::size_t l : path_links(s))
        if (room[l] <= 1e-12 * topo.links()[l].capacity_mbps) frozen[s] = true;
    }
  }
  return rate;
}

// Checks feasibility and the max-min property: every subflow short of its
// demand crosses a saturated link on which no other subflow gets more.
// Returns an empty string when the allocation passes.
inline std::string maxmin_violation(const lbsim::Topology& topo, const std::vector<double>& demand,
                                    const std::vector<double>& rate, double rho_max,
                                    double tol = 1e-9) {
  const std::size_t n = topo.num_paths(), m = topo.num_links();
  std::vector<double> load(m, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    if (rate[s] < -tol || rate[s] > std::max(demand[s], 0.0) + tol)
      return "subflow " + std::to_string(s) + " outside [0, demand]";
    for (std::size_t l : topo.flat_path(s).links) load[l] += rate[s];
  }
  for (std::size_t l = 0; l < m; ++l)
    if (load[l] > rho_max * topo.links()[l].capacity_mbps + tol)
      return "link " + topo.links()[l].id + " over capacity";
  for (std::size_t s = 0; s < n; ++s) {
    if (rate[s] >= demand[s] - tol) continue;
    bool bottleneck = false;
    for (std::size_t l : topo.flat_path(s).links) {
      if (load[l] < rho_max * topo.links()[l].capacity_mbps - tol) continue;
      bool largest = true;
      for (std::size_t o : topo.paths_on_link(l))
        if (rate[o] > rate[s] + tol) largest = false;
      if (largest) bottleneck = true;
    }
    if (!bottleneck) return "subflow " + std::to_string(s) + " has no bottleneck link";
  }
  return {};
}

// Worst relative error between reverse-mode and central-difference gradients
// of L = sum(c .* net(x)) over parameters and inputs. The denominator is
// floored so entries that are zero up to rounding do not dominate.
inline double gradient_check(const lbsim::rl::Mlp& net_in, const lbsim::rl::Matrix& x,
                             const lbsim::rl::Matrix& c, double h = 1e-5) {
  using lbsim::rl::Matrix;
  using lbsim::rl::Vector;
  lbsim::rl::Mlp net = net_in;
  auto loss = [&](const lbsim::rl::Mlp& m, const Matrix& in) { return (m.forward(in).array() * c.array()).sum(); };
  lbsim::rl::Mlp::Cache cache;
  net.forward(x, &cache);
  Vector grad = Vector::Zero(net.params().size());
  const Matrix dx = net.backward(cache, c, grad);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); };
  double worst = 0.0;
  for (Eigen::Index i = 0; i < net.params().size(); ++i) {
    const double keep = net.params()[i];
    net.params()[i] = keep + h;
    const double up = loss(net, x);
    net.params()[i] = keep - h;
    const double down = loss(net, x);
    net.params()[i] = keep;
    worst = std::max(worst, rel(grad[i], (up - down) / (2 * h)));
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    worst = std::max(worst, rel(dx.data()[i], (loss(net, xp) - loss(net, xm)) / (2 * h)));
  }
  return worst;
}

// Random two-tunnel (or one-tunnel) instance with two paths per tunnel over
// up to four links, used to compare the solver with a grid search.
inline lbsim::Topology random_solver_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cap(5.0, 25.0), prop(0.5, 10.0);
  std::uniform_int_distribution<int> coin(0, 1);
  // s -> m via a or b, m -> d via c or d; tunnel 0 = s->d, tunnel 1 = s->m or m->d.
  std::vector<std::string> nodes{"s", "m", "d"};
  std::vector<lbsim::Link> links{{"a", "s", "m", cap(rng), prop(rng)},
                                 {"b", "s", "m", cap(rng), prop(rng)},
                                 {"c", "m", "d", cap(rng), prop(rng)},
                                 {"e", "m", "d", cap(rng), prop(rng)}};
  std::vector<lbsim::Tunnel> tunnels;
  lbsim::Tunnel t0{"sd", "s", "d", {}};
  const int first = coin(rng), second = 2 + coin(rng);
  t0.paths.push_back({0, 0, {static_cast<std::size_t>(first), static_cast<std::size_t>(second)}});
  t0.paths.push_back({0, 1, {static_cast<std::size_t>(1 - first), static_cast<std::size_t>(5 - second)}});
  tunnels.push_back(t0);
  if (coin(rng)) {
    if (coin(rng)) tunnels.push_back({"sm", "s", "m", {{1, 0, {0}}, {1, 1, {1}}}});
    else tunnels.push_back({"md", "m", "d", {{1, 0, {2}}, {1, 1, {3}}}});
  }
  return lbsim::Topology(nodes, links, tunnels);
}

}  // namespace oracle
