#include "lbsim.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "lbsim/baselines.hpp"
#include "lbsim/error.hpp"
#include "lbsim/flow_env.hpp"
#include "lbsim/harness.hpp"
#include "lbsim/optimizer.hpp"
#include "lbsim/safety.hpp"
#include "lbsim/topology.hpp"

struct lbsim_string {
  std::string text;
};

struct lbsim_topology {
  std::shared_ptr<const lbsim::Topology> topo;
};

struct lbsim_env {
  std::unique_ptr<lbsim::FlowEnv> env;
};

struct lbsim_experiment {
  lbsim::harness::ExperimentConfig cfg;
  std::string trace_path;
};

namespace {

thread_local std::string g_last_error;

class ArgError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

lbsim_status fail(lbsim_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

lbsim_status to_status(lbsim::ErrorKind k) {
  switch (k) {
    case lbsim::ErrorKind::kParse: return LBSIM_E_PARSE;
    case lbsim::ErrorKind::kValidation: return LBSIM_E_VALIDATION;
    case lbsim::ErrorKind::kNotFound: return LBSIM_E_NOT_FOUND;
    case lbsim::ErrorKind::kShape: return LBSIM_E_SHAPE;
    case lbsim::ErrorKind::kNumeric: return LBSIM_E_NUMERIC;
    case lbsim::ErrorKind::kIo: return LBSIM_E_IO;
    case lbsim::ErrorKind::kConfig: return LBSIM_E_CONFIG;
  }
  return LBSIM_E_INTERNAL;
}

// Runs `fn` and converts any exception into a status; nothing escapes.
template <typename Fn>
lbsim_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return LBSIM_OK;
  } catch (const lbsim::Error& e) {
    return fail(to_status(e.kind()), e.what());
  } catch (const ArgError& e) {
    return fail(LBSIM_E_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(LBSIM_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(LBSIM_E_INTERNAL, e.what());
  } catch (...) {
    return fail(LBSIM_E_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (!p) throw ArgError(std::string(what) + " is null");
}

void need_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ArgError(std::string(what) + " has length " + std::to_string(got) + ", expected " +
                   std::to_string(want));
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ArgError("value '" + v + "' for " + key + " is not a nonnegative integer");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ArgError("value '" + v + "' for " + key + " is not a number");
  }
}

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ArgError("value '" + v + "' for " + key + " must be on or off");
}

std::vector<lbsim::TrafficSample> experiment_trace(const lbsim_experiment& e,
                                                   const lbsim::Topology& topo) {
  if (!e.trace_path.empty()) return lbsim::harness::load_trace(e.trace_path, topo);
  return lbsim::harness::make_trace(e.cfg, topo);
}

}  // namespace

extern "C" {

const char* lbsim_version(void) { return "1.0.0"; }

const char* lbsim_status_string(lbsim_status s) {
  switch (s) {
    case LBSIM_OK: return "ok";
    case LBSIM_E_PARSE: return "parse error";
    case LBSIM_E_VALIDATION: return "validation error";
    case LBSIM_E_NOT_FOUND: return "not found";
    case LBSIM_E_SHAPE: return "shape mismatch";
    case LBSIM_E_NUMERIC: return "numeric error";
    case LBSIM_E_IO: return "i/o error";
    case LBSIM_E_CONFIG: return "configuration error";
    case LBSIM_E_ARGUMENT: return "invalid argument";
    case LBSIM_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* lbsim_last_error(void) { return g_last_error.c_str(); }

const char* lbsim_string_data(const lbsim_string* s) { return s ? s->text.c_str() : ""; }
void lbsim_string_free(lbsim_string* s) { delete s; }

// ---- topology --------------------------------------------------------------

lbsim_status lbsim_topology_abilene(double high_mbps, double low_mbps, lbsim_topology** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    lbsim::AbileneCapacities caps{high_mbps, low_mbps};
    *out = new lbsim_topology{std::make_shared<const lbsim::Topology>(lbsim::build_abilene(caps))};
  });
}

lbsim_status lbsim_topology_load(const char* path, lbsim_topology** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new lbsim_topology{std::make_shared<const lbsim::Topology>(lbsim::load_topology_file(path))};
  });
}

void lbsim_topology_free(lbsim_topology* topo) { delete topo; }

lbsim_status lbsim_topology_info(const lbsim_topology* t, size_t* links, size_t* tunnels,
                                 size_t* paths) {
  return guarded([&] {
    need(t, "topology");
    if (links) *links = t->topo->num_links();
    if (tunnels) *tunnels = t->topo->num_tunnels();
    if (paths) *paths = t->topo->num_paths();
  });
}

lbsim_status lbsim_topology_path_count(const lbsim_topology* t, size_t tunnel, size_t* out) {
  return guarded([&] {
    need(t, "topology");
    need(out, "out");
    if (tunnel >= t->topo->num_tunnels())
      throw ArgError("tunnel " + std::to_string(tunnel) + " out of range");
    *out = t->topo->path_count(tunnel);
  });
}

// ---- environment -----------------------------------------------------------

lbsim_status lbsim_env_create(const lbsim_topology* t, uint64_t seed, lbsim_env** out) {
  return guarded([&] {
    need(t, "topology");
    need(out, "out");
    *out = nullptr;
    const std::size_t n = t->topo->num_tunnels();
    lbsim::TrafficGenerator gen(lbsim::TrafficConfig::default_profile(n, seed), n);
    *out = new lbsim_env{std::make_unique<lbsim::FlowEnv>(t->topo, std::move(gen))};
  });
}

void lbsim_env_free(lbsim_env* env) { delete env; }

lbsim_status lbsim_env_reset(lbsim_env* env, double* obs, size_t n) {
  return guarded([&] {
    need(env, "env");
    need(obs, "obs");
    need_size(n, env->env->topology().num_tunnels(), "obs");
    const auto o = env->env->reset();
    std::copy(o.begin(), o.end(), obs);
  });
}

lbsim_status lbsim_env_demand(const lbsim_env* env, double* demand, size_t n) {
  return guarded([&] {
    need(env, "env");
    need(demand, "demand");
    need_size(n, env->env->topology().num_tunnels(), "demand");
    const auto& d = env->env->current().demand;
    if (d.size() != n) throw ArgError("environment has no sample yet; call lbsim_env_reset");
    std::copy(d.begin(), d.end(), demand);
  });
}

lbsim_status lbsim_env_step(lbsim_env* env, const double* ratios, size_t n,
                            lbsim_step_result* out, double* tunnel_delays, size_t nt) {
  return guarded([&] {
    need(env, "env");
    need(ratios, "ratios");
    need(out, "out");
    const lbsim::Topology& topo = env->env->topology();
    need_size(n, topo.num_paths(), "ratios");
    if (tunnel_delays) need_size(nt, topo.num_tunnels(), "tunnel_delays");
    const lbsim::StepReport r = env->env->step({std::vector<double>(ratios, ratios + n)});
    *out = {r.t, r.mean_delay_ms, r.mlu, r.acceptance_rate, r.reward};
    if (tunnel_delays) std::copy(r.tunnel_delays_ms.begin(), r.tunnel_delays_ms.end(), tunnel_delays);
  });
}

// ---- shield and solver -----------------------------------------------------

void lbsim_cbf_defaults(lbsim_cbf_params* p) {
  if (!p) return;
  const lbsim::CbfConfig c;
  *p = {c.radius, c.solutions_per_iter, c.max_iter, c.eta, c.seed};
}

lbsim_status lbsim_cbf_project(const lbsim_topology* t, const double* demand, size_t nd,
                               const double* ratios, size_t np, const lbsim_cbf_params* params,
                               double* out, int* modified, double* mlu_after) {
  return guarded([&] {
    need(t, "topology");
    need(demand, "demand");
    need(ratios, "ratios");
    need(params, "params");
    need(out, "out");
    need_size(nd, t->topo->num_tunnels(), "demand");
    need_size(np, t->topo->num_paths(), "ratios");
    lbsim::CbfConfig c{params->radius, params->solutions_per_iter, params->max_iter, params->eta,
                       params->seed};
    c.validate();
    const std::vector<double> d(demand, demand + nd);
    const lbsim::SplitAction proto{std::vector<double>(ratios, ratios + np)};
    lbsim::check_simplex(*t->topo, proto.ratios);
    const lbsim::ProjectionOutcome r = lbsim::project(*t->topo, d, proto, c);
    std::copy(r.action.ratios.begin(), r.action.ratios.end(), out);
    if (modified) *modified = r.was_modified ? 1 : 0;
    if (mlu_after) *mlu_after = r.mlu_after;
  });
}

lbsim_status lbsim_solve(const lbsim_topology* t, const double* demand, size_t nd,
                         double* out_ratios, size_t np, double* objective_ms, double* mlu) {
  return guarded([&] {
    need(t, "topology");
    need(demand, "demand");
    need(out_ratios, "out_ratios");
    need_size(nd, t->topo->num_tunnels(), "demand");
    need_size(np, t->topo->num_paths(), "out_ratios");
    lbsim::EnvParams env = lbsim::EnvParams{}.resolved(*t->topo);
    lbsim::NlpProblem pr{t->topo.get(), std::vector<double>(demand, demand + nd), env.rho_max, env};
    const lbsim::NlpSolution s = lbsim::solve(pr);
    std::copy(s.action.ratios.begin(), s.action.ratios.end(), out_ratios);
    if (objective_ms) *objective_ms = s.objective_ms;
    if (mlu) *mlu = s.mlu;
    if (!s.feasible) {
      std::string cut;
      for (const auto& id : s.violating_cut) cut += (cut.empty() ? "" : ", ") + id;
      throw lbsim::Error(lbsim::ErrorKind::kNumeric,
                         "demand cannot be carried within the utilization bound; tight links: " + cut);
    }
  });
}

// ---- experiments -----------------------------------------------------------

lbsim_status lbsim_experiment_create(const char* config_path, lbsim_experiment** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto e = std::make_unique<lbsim_experiment>();
    e->cfg = config_path ? lbsim::harness::load_config(config_path)
                         : lbsim::harness::ExperimentConfig::desk_defaults();
    *out = e.release();
  });
}

void lbsim_experiment_free(lbsim_experiment* exp) { delete exp; }

lbsim_status lbsim_experiment_set(lbsim_experiment* exp, const char* key_c, const char* value_c) {
  return guarded([&] {
    need(exp, "experiment");
    need(key_c, "key");
    need(value_c, "value");
    const std::string key = key_c, v = value_c;
    auto& c = exp->cfg;
    if (key == "algo") c.rl.algo = lbsim::rl::parse_algo(v);
    else if (key == "cbf") c.shield = parse_switch(key, v);
    else if (key == "cbf.radius") c.cbf.radius = parse_real(key, v);
    else if (key == "cbf.n") c.cbf.solutions_per_iter = parse_size(key, v);
    else if (key == "cbf.m") c.cbf.max_iter = parse_size(key, v);
    else if (key == "cbf.eta") c.cbf.eta = parse_real(key, v);
    else if (key == "episodes") c.episodes = parse_size(key, v);
    else if (key == "workers") c.workers = parse_size(key, v);
    else if (key == "seed") c.seed = parse_size(key, v);
    else if (key == "out") c.out_dir = v;
    else if (key == "topology") c.topology_path = v;
    else if (key == "capacity.high") c.capacities.high_mbps = parse_real(key, v);
    else if (key == "capacity.low") c.capacities.low_mbps = parse_real(key, v);
    else if (key == "lr") c.rl.lr = parse_real(key, v);
    else if (key == "fine_tune_lr") c.rl.fine_tune_lr = parse_real(key, v);
    else if (key == "hidden_width") c.rl.hidden_width = parse_size(key, v);
    else if (key == "hidden_layers") c.rl.hidden_layers = parse_size(key, v);
    else if (key == "critic_target") c.rl.critic_target = lbsim::rl::parse_critic_target(v);
    else if (key == "eval.seed") c.eval_seed = parse_size(key, v);
    else if (key == "eval.samples") c.eval_samples = parse_size(key, v);
    else if (key == "trace") exp->trace_path = v;
    else throw ArgError("unknown experiment key '" + key + "'");
  });
}

lbsim_status lbsim_experiment_config(const lbsim_experiment* exp, lbsim_string** json) {
  return guarded([&] {
    need(exp, "experiment");
    need(json, "json");
    *json = new lbsim_string{lbsim::harness::config_to_json(exp->cfg)};
  });
}

lbsim_status lbsim_experiment_train(lbsim_experiment* exp, const char* fine_tune,
                                    lbsim_train_summary* out) {
  return guarded([&] {
    need(exp, "experiment");
    std::optional<std::string> ft;
    if (fine_tune) ft = fine_tune;
    const auto res = lbsim::harness::run_training_campaign(exp->cfg, ft);
    if (!out) return;
    lbsim_train_summary s{};
    s.episodes = exp->cfg.episodes;
    s.env_steps = res.train.stats.env_steps;
    s.updates = res.train.stats.updates;
    s.shield_interventions = res.train.stats.shield_interventions;
    s.samples_per_second = res.train.stats.samples_per_second;
    s.min_acceptance = 1.0;
    for (const auto& r : res.train.rows) s.min_acceptance = std::min(s.min_acceptance, r.acceptance_rate);
    if (!res.train.rows.empty()) {
      const auto last = res.train.rows.back().episode;
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : res.train.rows)
        if (r.episode == last) {
          sum += r.mean_delay_ms;
          ++n;
        }
      s.last_episode_mean_delay_ms = sum / static_cast<double>(n);
    }
    *out = s;
  });
}

lbsim_status lbsim_experiment_evaluate(lbsim_experiment* exp, const char* const* policies,
                                       size_t n, int ranked, const char* stem,
                                       lbsim_string** table) {
  return guarded([&] {
    namespace h = lbsim::harness;
    need(exp, "experiment");
    need(policies, "policies");
    if (n == 0) throw ArgError("no policies given");
    const auto& cfg = exp->cfg;
    cfg.validate();
    const auto topo = h::make_topology(cfg);
    const auto trace = experiment_trace(*exp, *topo);
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    h::save_trace((dir / "trace.csv").string(), *topo, trace);

    std::shared_ptr<const std::vector<lbsim::SplitAction>> nlp;
    auto solutions = [&] {
      if (!nlp)
        nlp = std::make_shared<const std::vector<lbsim::SplitAction>>(
            h::solve_trace(*topo, cfg.env, trace, (dir / "nlp_cache.json").string()));
      return nlp;
    };
    std::vector<h::Controller> ctrls;
    for (std::size_t i = 0; i < n; ++i) {
      need(policies[i], "policy name");
      const std::string p = policies[i];
      if (p == "nlp") {
        ctrls.push_back(h::nlp_controller(solutions()));
      } else if (p == "nlp-lagged") {
        ctrls.push_back(h::nlp_lagged_controller(solutions()));
      } else if (p.rfind("ckpt:", 0) == 0) {
        std::string path = p.substr(5), label;
        if (const auto eq = path.find('='); eq != std::string::npos) {
          label = path.substr(eq + 1);
          path = path.substr(0, eq);
        }
        lbsim::rl::Checkpoint ck = lbsim::rl::load_checkpoint(path);
        lbsim::rl::check_compatible(ck.agent, topo->num_tunnels(), h::tunnel_groups(*topo));
        if (label.empty())
          label = lbsim::rl::to_string(ck.agent.config().algo) + (cfg.shield ? "-cbf" : "");
        auto pol = std::make_shared<const lbsim::rl::Policy>(ck.agent.policy());
        ctrls.push_back(h::learned_controller(label, pol, cfg.shield, cfg.cbf));
      } else {
        ctrls.push_back(h::baseline_controller(lbsim::BaselineKind::parse(p), cfg.seed));
      }
    }
    std::vector<h::EvalSummary> rows;
    for (auto& ev : h::run_eval(*topo, cfg.env, trace, ctrls)) rows.push_back(ev.summary);
    if (ranked) rows = h::rank(std::move(rows));
    const std::string file = (dir / (std::string(stem ? stem : "eval") + ".csv")).string();
    std::ofstream csv(file, std::ios::binary);
    if (!csv) throw lbsim::Error(lbsim::ErrorKind::kIo, "cannot write " + file);
    csv << h::summary_csv(rows);
    if (table) *table = new lbsim_string{h::summary_table(rows)};
  });
}

lbsim_status lbsim_experiment_solve(lbsim_experiment* exp, const char* samples_csv,
                                    const char* out_csv, lbsim_string** table) {
  return guarded([&] {
    namespace h = lbsim::harness;
    need(exp, "experiment");
    need(samples_csv, "samples_csv");
    const auto topo = h::make_topology(exp->cfg);
    const auto trace = h::load_trace(samples_csv, *topo);
    const lbsim::EnvParams env = exp->cfg.env.resolved(*topo);
    std::string csv = "t,objective_ms,mlu,feasible";
    for (std::size_t f = 0; f < topo->num_paths(); ++f) {
      const std::size_t k = topo->tunnel_of(f);
      csv += ",x_" + topo->tunnels()[k].id + "_" + std::to_string(f - topo->path_offset(k));
    }
    csv += '\n';
    std::string text;
    char buf[128];
    for (const auto& s : trace) {
      lbsim::NlpProblem pr{topo.get(), s.demand, env.rho_max, env};
      const lbsim::NlpSolution sol = lbsim::solve(pr);
      std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%d", static_cast<long long>(s.t),
                    sol.objective_ms, sol.mlu, sol.feasible ? 1 : 0);
      csv += buf;
      for (double x : sol.action.ratios) {
        std::snprintf(buf, sizeof buf, ",%.17g", x);
        csv += buf;
      }
      csv += '\n';
      std::snprintf(buf, sizeof buf, "t=%-6lld objective %9.4f ms  mlu %.4f%s\n",
                    static_cast<long long>(s.t), sol.objective_ms, sol.mlu,
                    sol.feasible ? "" : "  INFEASIBLE");
      text += buf;
    }
    std::filesystem::path out = out_csv ? std::filesystem::path(out_csv)
                                        : std::filesystem::path(exp->cfg.out_dir) / "solutions.csv";
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    std::ofstream f(out, std::ios::binary);
    if (!f) throw lbsim::Error(lbsim::ErrorKind::kIo, "cannot write " + out.string());
    f << csv;
    if (table) *table = new lbsim_string{text};
  });
}

}  // extern "C"
