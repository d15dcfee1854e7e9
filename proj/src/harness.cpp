#include "lbsim/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lbsim/error.hpp"
#include "lbsim/optimizer.hpp"

namespace lbsim::harness {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kNotFound, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path);
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string line(text.substr(start, pos - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(std::move(line));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kParse, "bad number '" + s + "' in " + what);
  }
}

std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kParse, "bad integer '" + s + "' in " + what);
  }
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Scalars broadcast; arrays are taken as-is.
std::vector<double> per_tunnel(const json& j) {
  if (j.is_number()) return {j.get<double>()};
  return j.get<std::vector<double>>();
}

TrafficConfig resolve_traffic(const TrafficConfig& t, std::size_t tunnels) {
  TrafficConfig out = TrafficConfig::default_profile(tunnels, t.seed);
  auto fill = [&](const std::vector<double>& src, std::vector<double>& dst) {
    if (src.size() == 1) dst.assign(tunnels, src[0]);
    else if (!src.empty()) dst = src;
  };
  fill(t.base_mbps, out.base_mbps);
  fill(t.amplitude_mbps, out.amplitude_mbps);
  fill(t.phase_rad, out.phase_rad);
  out.period_steps = t.period_steps;
  out.noise_std_mbps = t.noise_std_mbps;
  out.validate(tunnels);
  return out;
}

json rl_to_json(const rl::RlConfig& c) {
  return {{"algo", rl::to_string(c.algo)},
          {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers},
          {"lr", c.lr},
          {"fine_tune_lr", c.fine_tune_lr},
          {"gamma", c.gamma},
          {"grad_clip", c.grad_clip},
          {"update_period", c.update_period},
          {"clip_eps", c.clip_eps},
          {"target_kl", c.target_kl},
          {"epochs", c.epochs},
          {"minibatch", c.minibatch},
          {"init_log_std", c.init_log_std},
          {"critic_target", rl::to_string(c.critic_target)},
          {"normalize_advantages", c.normalize_advantages},
          {"anneal_lr", c.anneal_lr},
          {"polyak_tau", c.polyak_tau},
          {"replay_capacity", c.replay_capacity},
          {"warmup", c.warmup},
          {"batch", c.batch},
          {"noise_start", c.noise_start},
          {"noise_end", c.noise_end},
          {"grad_steps_per_update", c.grad_steps_per_update}};
}

template <typename T>
void get_opt(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void rl_from_json(const json& j, rl::RlConfig& c) {
  if (j.contains("algo")) c.algo = rl::parse_algo(j.at("algo").get<std::string>());
  get_opt(j, "hidden_width", c.hidden_width);
  get_opt(j, "hidden_layers", c.hidden_layers);
  get_opt(j, "lr", c.lr);
  get_opt(j, "fine_tune_lr", c.fine_tune_lr);
  get_opt(j, "gamma", c.gamma);
  get_opt(j, "grad_clip", c.grad_clip);
  get_opt(j, "update_period", c.update_period);
  get_opt(j, "clip_eps", c.clip_eps);
  get_opt(j, "target_kl", c.target_kl);
  get_opt(j, "epochs", c.epochs);
  get_opt(j, "minibatch", c.minibatch);
  get_opt(j, "init_log_std", c.init_log_std);
  if (j.contains("critic_target"))
    c.critic_target = rl::parse_critic_target(j.at("critic_target").get<std::string>());
  get_opt(j, "normalize_advantages", c.normalize_advantages);
  get_opt(j, "anneal_lr", c.anneal_lr);
  get_opt(j, "polyak_tau", c.polyak_tau);
  get_opt(j, "replay_capacity", c.replay_capacity);
  get_opt(j, "warmup", c.warmup);
  get_opt(j, "batch", c.batch);
  get_opt(j, "noise_start", c.noise_start);
  get_opt(j, "noise_end", c.noise_end);
  get_opt(j, "grad_steps_per_update", c.grad_steps_per_update);
}

json config_json(const ExperimentConfig& c) {
  json traffic = {{"period_steps", c.traffic.period_steps},
                  {"noise_std_mbps", c.traffic.noise_std_mbps}};
  if (!c.traffic.base_mbps.empty()) traffic["base_mbps"] = c.traffic.base_mbps;
  if (!c.traffic.amplitude_mbps.empty()) traffic["amplitude_mbps"] = c.traffic.amplitude_mbps;
  if (!c.traffic.phase_rad.empty()) traffic["phase_rad"] = c.traffic.phase_rad;
  return {{"topology", c.topology_path},
          {"capacities", {{"high", c.capacities.high_mbps}, {"low", c.capacities.low_mbps}}},
          {"traffic", traffic},
          {"env",
           {{"kappa", c.env.kappa},
            {"rho_max", c.env.rho_max},
            {"tau_active", c.env.tau_active},
            {"sigma", c.env.sigma},
            {"d_ref_ms", c.env.d_ref_ms},
            {"obs_scale", c.env.obs_scale}}},
          {"rl", rl_to_json(c.rl)},
          {"cbf",
           {{"enabled", c.shield},
            {"radius", c.cbf.radius},
            {"solutions_per_iter", c.cbf.solutions_per_iter},
            {"max_iter", c.cbf.max_iter},
            {"eta", c.cbf.eta}}},
          {"schedule",
           {{"episodes", c.episodes},
            {"steps_per_episode", c.steps_per_episode},
            {"workers", c.workers}}},
          {"seed", c.seed},
          {"eval", {{"seed", c.eval_seed}, {"samples", c.eval_samples}}},
          {"out_dir", c.out_dir}};
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::desk_defaults() {
  ExperimentConfig c;
  c.rl.hidden_width = 256;
  // The narrower network at 300 episodes needs a larger, decaying step and
  // wider initial exploration than the full-scale settings to converge.
  c.rl.lr = 3e-4;
  c.rl.init_log_std = -0.5;
  c.rl.anneal_lr = true;
  return c;
}

void ExperimentConfig::validate() const {
  if (!topology_path.empty() && !fs::exists(topology_path))
    throw Error(ErrorKind::kNotFound, "topology file not found: " + topology_path);
  rl.validate();
  cbf.validate();
  if (!(env.kappa > 0.0)) throw Error(ErrorKind::kConfig, "env.kappa must be positive");
  if (!(env.rho_max > 0.0 && env.rho_max < 1.0))
    throw Error(ErrorKind::kConfig, "env.rho_max must lie in (0, 1)");
  if (!(env.sigma >= 0.0 && env.sigma <= 1.0))
    throw Error(ErrorKind::kConfig, "env.sigma must lie in [0, 1]");
  if (steps_per_episode == 0) throw Error(ErrorKind::kConfig, "steps_per_episode must be positive");
  if (workers == 0) throw Error(ErrorKind::kConfig, "workers must be at least 1");
  if (eval_samples == 0) throw Error(ErrorKind::kConfig, "eval.samples must be positive");
  if (out_dir.empty()) throw Error(ErrorKind::kConfig, "out_dir must be set");
}

ExperimentConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  try {
    get_opt(j, "topology", c.topology_path);
    if (j.contains("capacities")) {
      get_opt(j["capacities"], "high", c.capacities.high_mbps);
      get_opt(j["capacities"], "low", c.capacities.low_mbps);
    }
    if (j.contains("traffic")) {
      const json& t = j["traffic"];
      if (t.contains("base_mbps")) c.traffic.base_mbps = per_tunnel(t["base_mbps"]);
      if (t.contains("amplitude_mbps")) c.traffic.amplitude_mbps = per_tunnel(t["amplitude_mbps"]);
      if (t.contains("phase_rad")) c.traffic.phase_rad = per_tunnel(t["phase_rad"]);
      get_opt(t, "period_steps", c.traffic.period_steps);
      get_opt(t, "noise_std_mbps", c.traffic.noise_std_mbps);
    }
    if (j.contains("env")) {
      const json& e = j["env"];
      get_opt(e, "kappa", c.env.kappa);
      get_opt(e, "rho_max", c.env.rho_max);
      get_opt(e, "tau_active", c.env.tau_active);
      get_opt(e, "sigma", c.env.sigma);
      get_opt(e, "d_ref_ms", c.env.d_ref_ms);
      get_opt(e, "obs_scale", c.env.obs_scale);
    }
    if (j.contains("rl")) rl_from_json(j["rl"], c.rl);
    if (j.contains("cbf")) {
      const json& s = j["cbf"];
      get_opt(s, "enabled", c.shield);
      get_opt(s, "radius", c.cbf.radius);
      get_opt(s, "solutions_per_iter", c.cbf.solutions_per_iter);
      get_opt(s, "max_iter", c.cbf.max_iter);
      get_opt(s, "eta", c.cbf.eta);
    }
    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      get_opt(s, "episodes", c.episodes);
      get_opt(s, "steps_per_episode", c.steps_per_episode);
      get_opt(s, "workers", c.workers);
    }
    get_opt(j, "seed", c.seed);
    if (j.contains("eval")) {
      get_opt(j["eval"], "seed", c.eval_seed);
      get_opt(j["eval"], "samples", c.eval_samples);
    }
    get_opt(j, "out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad config field: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2); }

std::shared_ptr<const Topology> make_topology(const ExperimentConfig& cfg) {
  if (cfg.topology_path.empty()) return std::make_shared<const Topology>(build_abilene(cfg.capacities));
  return std::make_shared<const Topology>(load_topology_file(cfg.topology_path));
}

TrafficConfig training_traffic(const ExperimentConfig& cfg, const Topology& topo,
                               std::size_t worker) {
  TrafficConfig t = resolve_traffic(cfg.traffic, topo.num_tunnels());
  t.seed = cfg.seed * 1009 + worker + 1;
  return t;
}

rl::EnvFactory env_factory(const ExperimentConfig& cfg, std::shared_ptr<const Topology> topo) {
  return [cfg, topo](std::size_t w) {
    const auto start = static_cast<std::int64_t>(w * 16);
    return FlowEnv(topo, TrafficGenerator(training_traffic(cfg, *topo, w), topo->num_tunnels(), start),
                   cfg.env);
  };
}

rl::GroupSizes tunnel_groups(const Topology& topo) {
  rl::GroupSizes g;
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) g.push_back(topo.path_count(k));
  return g;
}

std::string environment_hash(const ExperimentConfig& cfg, const Topology& topo) {
  json j = config_json(cfg);
  json key = {{"topology", serialize_topology(topo)}, {"traffic", j["traffic"]}, {"env", j["env"]}};
  return git_blob_hash(key.dump());
}

// ---------------------------------------------------------------------------

std::vector<TrafficSample> make_trace(const ExperimentConfig& cfg, const Topology& topo) {
  TrafficConfig t = resolve_traffic(cfg.traffic, topo.num_tunnels());
  t.seed = cfg.eval_seed;
  TrafficGenerator gen(t, topo.num_tunnels());
  return gen.sample_episode(cfg.eval_samples);
}

void save_trace(const std::string& path, const Topology& topo,
                const std::vector<TrafficSample>& trace) {
  std::string out = "t";
  for (const auto& tun : topo.tunnels()) out += "," + tun.id;
  out += '\n';
  for (const auto& s : trace) {
    if (s.demand.size() != topo.num_tunnels())
      throw Error(ErrorKind::kShape, "trace sample does not match the topology's tunnels");
    out += std::to_string(s.t);
    for (double d : s.demand) out += "," + fmt_double(d);
    out += '\n';
  }
  write_file(path, out);
}

std::vector<TrafficSample> load_trace(const std::string& path, const Topology& topo) {
  const auto lines = lines_of(read_file(path));
  if (lines.empty()) throw Error(ErrorKind::kParse, path + " is empty");
  const auto header = split(lines[0], ',');
  if (header.size() != topo.num_tunnels() + 1)
    throw Error(ErrorKind::kShape, path + " has " + std::to_string(header.size() - 1) +
                                       " demand columns, topology has " +
                                       std::to_string(topo.num_tunnels()) + " tunnels");
  std::vector<TrafficSample> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != header.size())
      throw Error(ErrorKind::kParse, path + " line " + std::to_string(i + 1) + " has " +
                                         std::to_string(cells.size()) + " fields");
    TrafficSample s;
    s.t = static_cast<std::int64_t>(parse_double(cells[0], path));
    for (std::size_t k = 1; k < cells.size(); ++k) {
      const double d = parse_double(cells[k], path);
      if (!(d >= 0.0) || !std::isfinite(d))
        throw Error(ErrorKind::kValidation, path + " line " + std::to_string(i + 1) +
                                                " has a negative or non-finite demand");
      s.demand.push_back(d);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Controller baseline_controller(const BaselineKind& kind, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return {kind.name(), [kind, rng](const Topology& topo, const EnvParams&,
                                   const std::vector<TrafficSample>& trace, std::size_t i) {
            return baseline_action(kind, topo, trace[i].demand, *rng);
          }};
}

Controller nlp_controller(std::shared_ptr<const std::vector<SplitAction>> solutions) {
  return {"nlp", [solutions](const Topology&, const EnvParams&,
                             const std::vector<TrafficSample>&, std::size_t i) {
            return solutions->at(i);
          }};
}

Controller nlp_lagged_controller(std::shared_ptr<const std::vector<SplitAction>> solutions) {
  return {"nlp-lagged", [solutions](const Topology& topo, const EnvParams&,
                                    const std::vector<TrafficSample>&, std::size_t i) {
            if (i == 0) {  // nothing observed yet: equal split
              std::mt19937_64 unused;
              return baseline_action(BaselineKind::parse("ecmp"), topo, {}, unused);
            }
            return solutions->at(i - 1);
          }};
}

Controller learned_controller(std::string name, std::shared_ptr<const rl::Policy> policy,
                              bool shield, const CbfConfig& cbf) {
  return {std::move(name), [policy, shield, cbf](const Topology& topo, const EnvParams& env,
                                                 const std::vector<TrafficSample>& trace,
                                                 std::size_t i) {
            std::vector<double> obs(trace[i].demand.size());
            for (std::size_t k = 0; k < obs.size(); ++k) obs[k] = trace[i].demand[k] / env.obs_scale;
            std::mt19937_64 unused;
            SplitAction a = policy->act(obs, false, unused).split;
            if (!shield) return a;
            CbfConfig c = cbf;
            c.eta = std::min(c.eta, env.rho_max);
            c.seed = rl::shield_seed(cbf.seed, 0, i);
            return project(topo, trace[i].demand, a, c).action;
          }};
}

std::vector<SplitAction> solve_trace(const Topology& topo, const EnvParams& env,
                                     const std::vector<TrafficSample>& trace,
                                     const std::string& cache_path) {
  const EnvParams p = env.resolved(topo);
  json key_src = {{"topology", serialize_topology(topo)},
                  {"kappa", p.kappa},
                  {"rho_max", p.rho_max},
                  {"tau_active", p.tau_active}};
  json demands = json::array();
  for (const auto& s : trace) demands.push_back(s.demand);
  key_src["trace"] = std::move(demands);
  const std::string key = git_blob_hash(key_src.dump());

  if (!cache_path.empty() && fs::exists(cache_path)) {
    try {
      const json c = json::parse(read_file(cache_path));
      if (c.at("key") == key) {
        std::vector<SplitAction> out;
        for (const auto& a : c.at("actions")) out.push_back({a.get<std::vector<double>>()});
        if (out.size() == trace.size()) return out;
      }
    } catch (const json::exception&) {
      // stale or corrupt cache: recompute
    }
  }
  std::vector<SplitAction> out;
  out.reserve(trace.size());
  for (const auto& s : trace) {
    NlpProblem pr{&topo, s.demand, p.rho_max, p};
    out.push_back(solve(pr).action);
  }
  if (!cache_path.empty()) {
    json actions = json::array();
    for (const auto& a : out) actions.push_back(a.ratios);
    write_file(cache_path, json{{"key", key}, {"actions", std::move(actions)}}.dump());
  }
  return out;
}

EvalSummary summarize(const std::string& policy, const std::vector<StepReport>& reports,
                      const std::vector<TrafficSample>& trace) {
  if (reports.empty()) throw Error(ErrorKind::kValidation, "no samples to summarize");
  EvalSummary s;
  s.policy = policy;
  s.samples = reports.size();
  std::vector<double> delays;
  for (const auto& r : reports) {
    delays.push_back(r.mean_delay_ms);
    s.mean_delay_ms += r.mean_delay_ms;
    s.mean_mlu += r.mlu;
    s.max_mlu = std::max(s.max_mlu, r.mlu);
    s.mean_acceptance += r.acceptance_rate;
  }
  const auto n = static_cast<double>(reports.size());
  s.mean_delay_ms /= n;
  s.mean_mlu /= n;
  s.mean_acceptance /= n;
  std::sort(delays.begin(), delays.end());
  const std::size_t m = delays.size();
  s.median_delay_ms = m % 2 ? delays[m / 2] : 0.5 * (delays[m / 2 - 1] + delays[m / 2]);
  const auto rank95 = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(m)));
  s.p95_delay_ms = delays[std::max<std::size_t>(rank95, 1) - 1];
  for (const auto& t : trace)
    for (double d : t.demand) s.total_demand_mbps += d;
  return s;
}

std::vector<PolicyEval> run_eval(const Topology& topo, const EnvParams& env,
                                 const std::vector<TrafficSample>& trace,
                                 const std::vector<Controller>& controllers) {
  if (trace.empty()) throw Error(ErrorKind::kValidation, "evaluation trace is empty");
  const EnvParams p = env.resolved(topo);
  std::vector<PolicyEval> out;
  for (const auto& c : controllers) {
    PolicyEval ev;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (trace[i].demand.size() != topo.num_tunnels())
        throw Error(ErrorKind::kShape, "trace sample does not match the topology's tunnels");
      const SplitAction a = c.decide(topo, p, trace, i);
      check_simplex(topo, a.ratios);
      ev.reports.push_back(evaluate_action(topo, trace[i], a.ratios, p));
    }
    ev.summary = summarize(c.name, ev.reports, trace);
    out.push_back(std::move(ev));
  }
  return out;
}

std::vector<EvalSummary> rank(std::vector<EvalSummary> rows) {
  if (rows.size() < 2) throw Error(ErrorKind::kValidation, "compare needs at least two policies");
  std::stable_sort(rows.begin(), rows.end(), [](const EvalSummary& a, const EvalSummary& b) {
    if (a.mean_delay_ms != b.mean_delay_ms) return a.mean_delay_ms < b.mean_delay_ms;
    return a.policy < b.policy;
  });
  return rows;
}

namespace {
constexpr const char* kSummaryHeader =
    "policy,samples,mean_delay_ms,median_delay_ms,p95_delay_ms,mean_mlu,max_mlu,"
    "mean_acceptance,total_demand_mbps";
}

std::string summary_csv(const std::vector<EvalSummary>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& r : rows) {
    if (r.policy.find_first_of(",\n") != std::string::npos)
      throw Error(ErrorKind::kValidation, "policy name '" + r.policy + "' cannot go in a CSV cell");
    out += r.policy + "," + std::to_string(r.samples);
    for (double v : {r.mean_delay_ms, r.median_delay_ms, r.p95_delay_ms, r.mean_mlu, r.max_mlu,
                     r.mean_acceptance, r.total_demand_mbps})
      out += "," + fmt_double(v);
    out += '\n';
  }
  return out;
}

std::vector<EvalSummary> parse_summary_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kSummaryHeader)
    throw Error(ErrorKind::kParse, "summary CSV header does not match");
  std::vector<EvalSummary> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = split(lines[i], ',');
    if (c.size() != 9) throw Error(ErrorKind::kParse, "summary CSV row " + std::to_string(i) + " has " + std::to_string(c.size()) + " fields");
    EvalSummary s;
    s.policy = c[0];
    s.samples = parse_uint(c[1], "summary CSV");
    s.mean_delay_ms = parse_double(c[2], "summary CSV");
    s.median_delay_ms = parse_double(c[3], "summary CSV");
    s.p95_delay_ms = parse_double(c[4], "summary CSV");
    s.mean_mlu = parse_double(c[5], "summary CSV");
    s.max_mlu = parse_double(c[6], "summary CSV");
    s.mean_acceptance = parse_double(c[7], "summary CSV");
    s.total_demand_mbps = parse_double(c[8], "summary CSV");
    out.push_back(std::move(s));
  }
  return out;
}

std::string summary_table(const std::vector<EvalSummary>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.policy.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-4s %-*s %10s %10s %10s %8s %8s %8s\n", "rank",
                static_cast<int>(w), "policy", "mean_ms", "median_ms", "p95_ms", "mean_mlu",
                "max_mlu", "accept");
  out += buf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::snprintf(buf, sizeof buf, "%-4zu %-*s %10.4f %10.4f %10.4f %8.4f %8.4f %8.5f\n", i + 1,
                  static_cast<int>(w), r.policy.c_str(), r.mean_delay_ms, r.median_delay_ms,
                  r.p95_delay_ms, r.mean_mlu, r.max_mlu, r.mean_acceptance);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string metrics_csv(const Topology& topo, const std::vector<rl::MetricRow>& rows) {
  std::string out = "episode,step,policy,mean_delay_ms,mlu,acceptance_rate,reward";
  for (const auto& t : topo.tunnels()) out += ",delay_" + t.id;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.episode) + "," + std::to_string(r.step) + "," + r.policy;
    for (double v : {r.mean_delay_ms, r.mlu, r.acceptance_rate, r.reward}) out += "," + fmt_double(v);
    for (double v : r.tunnel_delays_ms) out += "," + fmt_double(v);
    out += '\n';
  }
  return out;
}

std::vector<rl::MetricRow> parse_metrics_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw Error(ErrorKind::kParse, "metrics CSV is empty");
  const auto header = split(lines[0], ',');
  const std::vector<std::string> fixed{"episode", "step", "policy", "mean_delay_ms",
                                       "mlu", "acceptance_rate", "reward"};
  if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin()))
    throw Error(ErrorKind::kParse, "metrics CSV header does not match");
  for (std::size_t i = fixed.size(); i < header.size(); ++i)
    if (header[i].rfind("delay_", 0) != 0)
      throw Error(ErrorKind::kParse, "unexpected metrics column '" + header[i] + "'");
  std::vector<rl::MetricRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = split(lines[i], ',');
    if (c.size() != header.size())
      throw Error(ErrorKind::kParse, "metrics CSV row " + std::to_string(i) + " has " +
                                         std::to_string(c.size()) + " fields");
    rl::MetricRow r;
    r.episode = parse_uint(c[0], "metrics CSV");
    r.step = parse_uint(c[1], "metrics CSV");
    r.policy = c[2];
    r.mean_delay_ms = parse_double(c[3], "metrics CSV");
    r.mlu = parse_double(c[4], "metrics CSV");
    r.acceptance_rate = parse_double(c[5], "metrics CSV");
    r.reward = parse_double(c[6], "metrics CSV");
    for (std::size_t k = fixed.size(); k < c.size(); ++k)
      r.tunnel_delays_ms.push_back(parse_double(c[k], "metrics CSV"));
    out.push_back(std::move(r));
  }
  return out;
}

CampaignResult run_training_campaign(const ExperimentConfig& cfg,
                                     const std::optional<std::string>& fine_tune) {
  cfg.validate();
  auto topo = make_topology(cfg);
  const rl::GroupSizes groups = tunnel_groups(*topo);

  std::uint64_t first_episode = 0;
  std::optional<rl::Agent> agent;
  if (fine_tune) {
    rl::Checkpoint ck = rl::load_checkpoint(*fine_tune);
    rl::check_compatible(ck.agent, topo->num_tunnels(), groups);
    agent.emplace(std::move(ck.agent));
    agent->config().fine_tune_lr = cfg.rl.fine_tune_lr;
    agent->config().anneal_lr = cfg.rl.anneal_lr;
    agent->set_learning_rate(cfg.rl.fine_tune_lr);
    first_episode = ck.episode;
  } else {
    agent.emplace(cfg.rl, topo->num_tunnels(), groups, splitmix(cfg.seed ^ 0xa9e7ULL));
  }

  rl::TrainSchedule sch;
  sch.episodes = cfg.episodes;
  sch.steps_per_episode = cfg.steps_per_episode;
  sch.workers = cfg.workers;
  sch.seed = cfg.seed;
  sch.shield = cfg.shield;
  sch.cbf = cfg.cbf;
  sch.first_episode = first_episode;

  CampaignResult res;
  res.out_dir = cfg.out_dir;
  fs::create_directories(cfg.out_dir);
  res.train = rl::train(*agent, env_factory(cfg, topo), sch);

  res.checkpoint = std::make_shared<rl::Checkpoint>(rl::Checkpoint{
      *agent, first_episode + cfg.episodes, environment_hash(cfg, *topo), res.train.rng_state});
  const fs::path dir(cfg.out_dir);
  res.metrics_path = (dir / "metrics.csv").string();
  res.checkpoint_path = (dir / "checkpoint.json").string();
  res.manifest_path = (dir / "manifest.json").string();

  const std::string metrics = metrics_csv(*topo, res.train.rows);
  write_file(res.metrics_path, metrics);
  rl::save_checkpoint(res.checkpoint_path, *res.checkpoint);

  json seeds = json::object();
  seeds["train"] = cfg.seed;
  seeds["eval"] = cfg.eval_seed;
  json traffic_seeds = json::array();
  for (std::size_t w = 0; w < cfg.workers; ++w) traffic_seeds.push_back(training_traffic(cfg, *topo, w).seed);
  seeds["traffic"] = std::move(traffic_seeds);
  const json config = config_json(cfg);
  json manifest = {{"config", config},
                   {"seeds", seeds},
                   {"content_hash", git_blob_hash(json{{"config", config}, {"seeds", seeds}}.dump())},
                   {"metrics_hash", git_blob_hash(metrics)},
                   {"environment_hash", res.checkpoint->config_hash},
                   {"fine_tune_from", fine_tune ? json(*fine_tune) : json(nullptr)},
                   {"episodes_total", res.checkpoint->episode},
                   {"updates", res.train.stats.updates},
                   {"shield_interventions", res.train.stats.shield_interventions}};
  write_file(res.manifest_path, manifest.dump(2) + "\n");
  return res;
}

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error(ErrorKind::kNumeric, "cannot allocate a digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error(ErrorKind::kNumeric, "SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

}  // namespace lbsim::harness
