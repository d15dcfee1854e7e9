#include "lbsim/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <functional>
#include <random>

#include "lbsim/error.hpp"
#include "lp.hpp"

namespace lbsim {

namespace {

// Feasible-set margin kept inside the MLU bound so projections that land a
// hair outside a half-space still satisfy the bound exactly.
constexpr double kBoundMargin = 1e-9;

struct HalfSpace {
  std::vector<std::pair<std::size_t, double>> coeffs;  // flat path, demand
  double norm2 = 0.0;
  double bound = 0.0;
};

std::vector<HalfSpace> link_halfspaces(const Topology& topo,
                                       std::span<const double> demand,
                                       std::span<const char> support, double mlu_bound) {
  std::vector<HalfSpace> hs;
  for (std::size_t e = 0; e < topo.num_links(); ++e) {
    HalfSpace h;
    for (std::size_t f : topo.paths_on_link(e)) {
      const double t = demand[topo.tunnel_of(f)];
      if (t <= 0.0 || !support[f]) continue;
      h.coeffs.emplace_back(f, t);
      h.norm2 += t * t;
    }
    if (h.coeffs.empty()) continue;
    h.bound = (mlu_bound - kBoundMargin) * topo.links()[e].capacity_mbps;
    hs.push_back(std::move(h));
  }
  return hs;
}

double halfspace_value(const HalfSpace& h, std::span<const double> x) {
  double v = 0.0;
  for (auto [f, t] : h.coeffs) v += t * x[f];
  return v;
}

void project_support_simplices(const Topology& topo, std::span<const char> support,
                               std::vector<double>& x) {
  std::vector<double> buf;
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t off = topo.path_offset(k);
    buf.clear();
    for (std::size_t p = 0; p < topo.path_count(k); ++p)
      if (support[off + p]) buf.push_back(x[off + p]);
    project_simplex(buf);
    std::size_t i = 0;
    for (std::size_t p = 0; p < topo.path_count(k); ++p)
      x[off + p] = support[off + p] ? buf[i++] : 0.0;
  }
}

bool satisfies(const std::vector<HalfSpace>& hs, std::span<const double> x, double slack) {
  for (const HalfSpace& h : hs)
    if (halfspace_value(h, x) > h.bound + slack) return false;
  return true;
}

// Euclidean projection onto (product of support simplices) ∩ (link
// half-spaces), via Dykstra's alternating projections. Returns false if the
// iterate did not settle inside the set.
bool project_feasible(const Topology& topo, std::span<const char> support,
                      const std::vector<HalfSpace>& hs, std::vector<double>& x) {
  project_support_simplices(topo, support, x);
  if (satisfies(hs, x, 0.0)) return true;

  const std::size_t n = x.size();
  std::vector<std::vector<double>> inc(hs.size() + 1, std::vector<double>(n, 0.0));
  std::vector<double> z(n), prev(n);
  for (int sweep = 0; sweep < 20000; ++sweep) {
    prev = x;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) z[j] = x[j] + inc[i][j];
      const double v = halfspace_value(hs[i], z);
      x = z;
      if (v > hs[i].bound) {
        const double s = (v - hs[i].bound) / hs[i].norm2;
        for (auto [f, t] : hs[i].coeffs) x[f] -= s * t;
      }
      for (std::size_t j = 0; j < n; ++j) inc[i][j] = z[j] - x[j];
    }
    auto& last = inc.back();
    for (std::size_t j = 0; j < n; ++j) z[j] = x[j] + last[j];
    x = z;
    project_support_simplices(topo, support, x);
    for (std::size_t j = 0; j < n; ++j) last[j] = z[j] - x[j];

    double moved = 0.0;
    for (std::size_t j = 0; j < n; ++j) moved = std::max(moved, std::abs(x[j] - prev[j]));
    if (moved < 1e-14) break;
  }
  return satisfies(hs, x, kBoundMargin * 0.5 * topo.min_capacity());
}

// Smoothed objective over a fixed activity pattern and its gradient.
class PatternObjective {
 public:
  PatternObjective(const Topology& topo, std::span<const double> demand,
                   std::span<const char> support, const EnvParams& env)
      : topo_(topo), demand_(demand), support_(support), env_(env),
        loads_(topo.num_links()), link_d_(topo.num_links()),
        dlink_(topo.num_links()), path_d_(topo.num_paths()) {}

  double value(std::span<const double> x, double temp, std::vector<double>* grad) {
    std::fill(loads_.begin(), loads_.end(), 0.0);
    for (std::size_t f = 0; f < topo_.num_paths(); ++f) {
      const double r = demand_[topo_.tunnel_of(f)] * x[f];
      if (r == 0.0) continue;
      for (std::size_t li : topo_.flat_path(f).links) loads_[li] += r;
    }
    for (std::size_t e = 0; e < topo_.num_links(); ++e) {
      const Link& l = topo_.links()[e];
      const double cap = env_.rho_max * l.capacity_mbps;
      const double load = std::max(0.0, loads_[e]);
      const double gap = l.capacity_mbps - std::min(load, cap);
      link_d_[e] = l.prop_delay_ms + env_.kappa / gap;
      dlink_[e] = load < cap ? env_.kappa / (gap * gap) : 0.0;
    }
    for (std::size_t f = 0; f < topo_.num_paths(); ++f) {
      double d = 0.0;
      for (std::size_t li : topo_.flat_path(f).links) d += link_d_[li];
      path_d_[f] = d;
    }

    const double inv_k = 1.0 / static_cast<double>(topo_.num_tunnels());
    double total = 0.0;
    if (grad) {
      grad->assign(x.size(), 0.0);
      dl_.assign(topo_.num_links(), 0.0);
    }
    for (std::size_t k = 0; k < topo_.num_tunnels(); ++k) {
      const std::size_t off = topo_.path_offset(k);
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < topo_.path_count(k); ++p)
        if (support_[off + p]) m = std::max(m, path_d_[off + p]);
      double z = 0.0;
      for (std::size_t p = 0; p < topo_.path_count(k); ++p)
        if (support_[off + p]) z += std::exp((path_d_[off + p] - m) / temp);
      total += m + temp * std::log(z);
      if (!grad) continue;
      for (std::size_t p = 0; p < topo_.path_count(k); ++p) {
        if (!support_[off + p]) continue;
        const double w = std::exp((path_d_[off + p] - m) / temp) / z * inv_k;
        for (std::size_t li : topo_.flat_path(off + p).links) dl_[li] += w * dlink_[li];
      }
    }
    if (grad) {
      for (std::size_t f = 0; f < topo_.num_paths(); ++f) {
        if (!support_[f]) continue;
        double g = 0.0;
        for (std::size_t li : topo_.flat_path(f).links) g += dl_[li];
        (*grad)[f] = g * demand_[topo_.tunnel_of(f)];
      }
    }
    return total * inv_k;
  }

 private:
  const Topology& topo_;
  std::span<const double> demand_;
  std::span<const char> support_;
  const EnvParams& env_;
  std::vector<double> loads_, link_d_, dlink_, path_d_, dl_;
};

// Annealed projected descent inside one activity pattern.
std::vector<double> descend(const Topology& topo, std::span<const double> demand,
                            std::span<const char> support,
                            const std::vector<HalfSpace>& hs, const EnvParams& env,
                            std::vector<double> x, std::size_t& iterations,
                            std::size_t max_iterations) {
  PatternObjective obj(topo, demand, support, env);
  std::vector<double> g, trial(x.size()), step(x.size());
  double alpha = 1e-2;
  for (double temp = 1.0; temp >= 1e-5 && iterations < max_iterations; temp *= 0.5) {
    double fx = obj.value(x, temp, &g);
    for (int it = 0; it < 400 && iterations < max_iterations; ++it) {
      ++iterations;
      alpha *= 2.0;
      bool accepted = false;
      double moved = 0.0;
      while (alpha > 1e-14) {
        for (std::size_t j = 0; j < x.size(); ++j) trial[j] = x[j] - alpha * g[j];
        if (!project_feasible(topo, support, hs, trial)) {
          alpha *= 0.5;
          continue;
        }
        double lin = 0.0, sq = 0.0;
        moved = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
          step[j] = trial[j] - x[j];
          lin += g[j] * step[j];
          sq += step[j] * step[j];
          moved = std::max(moved, std::abs(step[j]));
        }
        const double ft = obj.value(trial, temp, nullptr);
        if (ft <= fx + lin + sq / (2.0 * alpha) + 1e-15) {
          accepted = true;
          x = trial;
          fx = obj.value(x, temp, &g);
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted || moved < 1e-10) break;
    }
  }
  return x;
}

std::vector<std::string> tight_links(const Topology& topo, std::span<const double> demand,
                                     std::span<const double> ratios) {
  const std::vector<double> loads = offered_loads(topo, demand, ratios);
  const double top = mlu(topo, loads);
  std::vector<std::string> cut;
  for (std::size_t e = 0; e < topo.num_links(); ++e)
    if (loads[e] / topo.links()[e].capacity_mbps >= top - 1e-9)
      cut.push_back(topo.links()[e].id);
  return cut;
}

void finish(const NlpProblem& pr, NlpSolution& s) {
  s.objective_ms = nlp_objective(*pr.topo, pr.demand, s.action.ratios, pr.env);
  s.mlu = mlu(*pr.topo, offered_loads(*pr.topo, pr.demand, s.action.ratios));
}

}  // namespace

void project_simplex(std::span<double> v) {
  if (v.empty()) return;
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  double sum = 0.0;
  for (double& x : v) {
    x = std::max(0.0, x - theta);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

MinMluResult min_mlu(const Topology& topo, std::span<const double> demand,
                     std::span<const char> support) {
  std::vector<char> sup(topo.num_paths(), 1);
  if (!support.empty()) sup.assign(support.begin(), support.end());

  std::vector<std::size_t> vars;  // flat path per LP column
  for (std::size_t f = 0; f < topo.num_paths(); ++f)
    if (sup[f]) vars.push_back(f);
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    bool any = false;
    for (std::size_t p = 0; p < topo.path_count(k); ++p) any |= sup[topo.path_offset(k) + p] != 0;
    if (!any)
      throw Error(ErrorKind::kNumeric,
                  "support leaves tunnel '" + topo.tunnels()[k].id + "' without paths");
  }

  std::vector<std::size_t> rows_links;
  for (std::size_t e = 0; e < topo.num_links(); ++e)
    for (std::size_t f : topo.paths_on_link(e))
      if (sup[f] && demand[topo.tunnel_of(f)] > 0.0) {
        rows_links.push_back(e);
        break;
      }

  // Columns: x (vars), mu, one slack per link row.
  const std::size_t nx = vars.size();
  const std::size_t ncol = nx + 1 + rows_links.size();
  const std::size_t nrow = rows_links.size() + topo.num_tunnels();
  std::vector<double> a(nrow * ncol, 0.0), b(nrow, 0.0), c(ncol, 0.0);
  c[nx] = 1.0;
  std::vector<std::size_t> col_of(topo.num_paths(), ncol);
  for (std::size_t j = 0; j < nx; ++j) col_of[vars[j]] = j;
  for (std::size_t r = 0; r < rows_links.size(); ++r) {
    const std::size_t e = rows_links[r];
    const double cap = topo.links()[e].capacity_mbps;
    for (std::size_t f : topo.paths_on_link(e))
      if (sup[f]) a[r * ncol + col_of[f]] = demand[topo.tunnel_of(f)] / cap;
    a[r * ncol + nx] = -1.0;
    a[r * ncol + nx + 1 + r] = 1.0;
  }
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t r = rows_links.size() + k;
    for (std::size_t p = 0; p < topo.path_count(k); ++p) {
      const std::size_t f = topo.path_offset(k) + p;
      if (sup[f]) a[r * ncol + col_of[f]] = 1.0;
    }
    b[r] = 1.0;
  }

  const detail::LpResult lp = detail::solve_lp(a, b, c);
  if (!lp.feasible || !lp.bounded)
    throw Error(ErrorKind::kNumeric, "minimum-MLU program failed to solve");

  MinMluResult out;
  out.action.ratios.assign(topo.num_paths(), 0.0);
  for (std::size_t j = 0; j < nx; ++j) out.action.ratios[vars[j]] = lp.y[j];
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t off = topo.path_offset(k);
    double s = 0.0;
    for (std::size_t p = 0; p < topo.path_count(k); ++p) s += out.action.ratios[off + p];
    for (std::size_t p = 0; p < topo.path_count(k); ++p) out.action.ratios[off + p] /= s;
  }
  out.mlu = mlu(topo, offered_loads(topo, demand, out.action.ratios));
  return out;
}

double nlp_objective(const Topology& topo, std::span<const double> demand,
                     std::span<const double> ratios, const EnvParams& env) {
  const std::vector<double> loads = offered_loads(topo, demand, ratios);
  const DelayBreakdown d = path_and_tunnel_delays(topo, loads, ratios, env);
  double sum = 0.0;
  for (double x : d.tunnel_delays_ms) sum += x;
  return sum / static_cast<double>(topo.num_tunnels());
}

NlpSolution solve(const NlpProblem& pr, const SolveBudget& budget) {
  if (!pr.topo) throw Error(ErrorKind::kConfig, "problem has no topology");
  const Topology& topo = *pr.topo;
  if (pr.demand.size() != topo.num_tunnels())
    throw Error(ErrorKind::kShape, "demand size does not match tunnel count");

  NlpSolution best;
  const MinMluResult global = min_mlu(topo, pr.demand);
  if (global.mlu > pr.mlu_bound - kBoundMargin) {
    best.feasible = false;
    best.action = global.action;
    best.violating_cut = tight_links(topo, pr.demand, global.action.ratios);
    finish(pr, best);
    return best;
  }

  // Zero-load path delays give a lower bound for every activity pattern.
  std::vector<double> d0(topo.num_paths());
  for (std::size_t f = 0; f < topo.num_paths(); ++f) {
    double d = 0.0;
    for (std::size_t li : topo.flat_path(f).links) {
      const Link& l = topo.links()[li];
      d += l.prop_delay_ms + pr.env.kappa / l.capacity_mbps;
    }
    d0[f] = d;
  }

  std::size_t patterns = 1;
  bool enumerable = true;
  for (std::size_t k = 0; k < topo.num_tunnels() && enumerable; ++k) {
    const std::size_t n = topo.path_count(k);
    if (n >= 20) {
      enumerable = false;
      break;
    }
    patterns *= (std::size_t{1} << n) - 1;
    if (patterns > budget.max_support_patterns) enumerable = false;
  }

  std::size_t iterations = 0;
  double best_obj = std::numeric_limits<double>::infinity();
  auto consider = [&](std::vector<double> x) {
    const double o = nlp_objective(topo, pr.demand, x, pr.env);
    if (o < best_obj) {
      best_obj = o;
      best.action.ratios = std::move(x);
    }
  };

  if (enumerable) {
    struct Pattern {
      double lb;
      std::vector<std::uint32_t> masks;
    };
    std::vector<Pattern> all;
    all.reserve(patterns);
    std::vector<std::uint32_t> masks(topo.num_tunnels(), 1);
    for (;;) {
      double lb = 0.0;
      for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
        double m = 0.0;
        for (std::size_t p = 0; p < topo.path_count(k); ++p)
          if (masks[k] >> p & 1U) m = std::max(m, d0[topo.path_offset(k) + p]);
        lb += m;
      }
      all.push_back({lb / static_cast<double>(topo.num_tunnels()), masks});
      std::size_t k = 0;
      for (; k < topo.num_tunnels(); ++k) {
        if (++masks[k] < (1U << topo.path_count(k))) break;
        masks[k] = 1;
      }
      if (k == topo.num_tunnels()) break;
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Pattern& a, const Pattern& b) { return a.lb < b.lb; });

    std::vector<char> support(topo.num_paths());
    for (const Pattern& pat : all) {
      if (pat.lb >= best_obj - 1e-12) break;
      if (iterations >= budget.max_iterations) {
        best.budget_exhausted = true;
        break;
      }
      bool split = false;
      for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
        const std::size_t off = topo.path_offset(k);
        std::size_t count = 0;
        for (std::size_t p = 0; p < topo.path_count(k); ++p) {
          support[off + p] = (pat.masks[k] >> p & 1U) ? 1 : 0;
          count += support[off + p];
        }
        split |= count > 1;
      }
      const MinMluResult local = min_mlu(topo, pr.demand, support);
      if (local.mlu > pr.mlu_bound - kBoundMargin) continue;
      if (!split) {
        consider(local.action.ratios);
        continue;
      }
      const auto hs = link_halfspaces(topo, pr.demand, support, pr.mlu_bound);
      std::vector<double> start(topo.num_paths(), 1.0);
      if (!project_feasible(topo, support, hs, start)) start = local.action.ratios;
      consider(descend(topo, pr.demand, support, hs, pr.env, std::move(start),
                       iterations, budget.max_iterations));
    }
  } else {
    std::vector<char> support(topo.num_paths(), 1);
    const auto hs = link_halfspaces(topo, pr.demand, support, pr.mlu_bound);
    std::mt19937_64 rng(budget.seed);
    std::exponential_distribution<double> ex(1.0);
    for (std::size_t s = 0; s < budget.multistart; ++s) {
      std::vector<double> start(topo.num_paths(), 0.0);
      for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
        const std::size_t off = topo.path_offset(k);
        const std::size_t n = topo.path_count(k);
        for (std::size_t p = 0; p < n; ++p) {
          double v = 1.0;  // s == 0: ECMP
          if (s == 1) v = topo.path_bottleneck(off + p);
          else if (s >= 2 && s < 2 + n) v = p == s - 2 ? 1.0 : 0.0;
          else if (s >= 2) v = ex(rng);
          start[off + p] = v;
        }
      }
      if (!project_feasible(topo, support, hs, start)) start = global.action.ratios;
      std::vector<double> x = descend(topo, pr.demand, support, hs, pr.env,
                                      std::move(start), iterations, budget.max_iterations);
      consider(x);
      // Drop negligible paths: the true objective ignores inactive paths.
      for (double& v : x)
        if (v < 1e-4) v = 0.0;
      project_support_simplices(topo, support, x);
      if (satisfies(hs, x, 0.0)) consider(x);
    }
    best.budget_exhausted = iterations >= budget.max_iterations;
  }

  best.iterations = iterations;
  best.feasible = std::isfinite(best_obj);
  if (!best.feasible) best.action = global.action;
  finish(pr, best);
  return best;
}

NlpSolution brute_force(const NlpProblem& pr, double grid_step) {
  if (!pr.topo) throw Error(ErrorKind::kConfig, "problem has no topology");
  const Topology& topo = *pr.topo;
  if (!(grid_step > 0.0 && grid_step <= 1.0))
    throw Error(ErrorKind::kConfig, "grid step must be in (0, 1]");
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / grid_step));

  // Per-tunnel grid points: compositions of `steps` into path_count parts.
  std::vector<std::vector<std::vector<double>>> grids(topo.num_tunnels());
  double total = 1.0;
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t n = topo.path_count(k);
    double count = 1.0;  // C(steps + n - 1, n - 1)
    for (std::size_t i = 1; i < n; ++i)
      count = count * static_cast<double>(steps + i) / static_cast<double>(i);
    total *= count;
    if (total > 1e7) throw Error(ErrorKind::kConfig, "brute-force grid exceeds 1e7 points");

    std::vector<std::size_t> parts(n, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t p, std::size_t left) {
      if (p + 1 == n) {
        parts[p] = left;
        std::vector<double> pt(n);
        for (std::size_t i = 0; i < n; ++i)
          pt[i] = static_cast<double>(parts[i]) / static_cast<double>(steps);
        grids[k].push_back(std::move(pt));
        return;
      }
      for (std::size_t v = 0; v <= left; ++v) {
        parts[p] = v;
        rec(p + 1, left - v);
      }
    };
    rec(0, steps);
  }

  NlpSolution best;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> idx(topo.num_tunnels(), 0);
  std::vector<double> x(topo.num_paths());
  for (;;) {
    for (std::size_t k = 0; k < topo.num_tunnels(); ++k)
      std::copy(grids[k][idx[k]].begin(), grids[k][idx[k]].end(),
                x.begin() + static_cast<std::ptrdiff_t>(topo.path_offset(k)));
    const std::vector<double> loads = offered_loads(topo, pr.demand, x);
    if (mlu(topo, loads) <= pr.mlu_bound) {
      const DelayBreakdown d = path_and_tunnel_delays(topo, loads, x, pr.env);
      double o = 0.0;
      for (double v : d.tunnel_delays_ms) o += v;
      o /= static_cast<double>(topo.num_tunnels());
      if (o < best_obj) {
        best_obj = o;
        best.action.ratios = x;
      }
    }
    ++best.iterations;
    std::size_t k = 0;
    for (; k < topo.num_tunnels(); ++k) {
      if (++idx[k] < grids[k].size()) break;
      idx[k] = 0;
    }
    if (k == topo.num_tunnels()) break;
  }

  best.feasible = std::isfinite(best_obj);
  if (!best.feasible) {
    const MinMluResult g = min_mlu(topo, pr.demand);
    best.action = g.action;
    best.violating_cut = tight_links(topo, pr.demand, g.action.ratios);
  }
  finish(pr, best);
  return best;
}

}  // namespace lbsim
