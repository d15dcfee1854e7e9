// Command-line front end; talks to the library only through lbsim.h.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lbsim.h"

namespace {

struct ExperimentDeleter {
  void operator()(lbsim_experiment* e) const { lbsim_experiment_free(e); }
};
struct StringDeleter {
  void operator()(lbsim_string* s) const { lbsim_string_free(s); }
};
using ExperimentPtr = std::unique_ptr<lbsim_experiment, ExperimentDeleter>;
using StringPtr = std::unique_ptr<lbsim_string, StringDeleter>;

struct CallFailed {
  int code;
};

void check(lbsim_status s) {
  if (s == LBSIM_OK) return;
  std::fprintf(stderr, "lbsim: %s: %s\n", lbsim_status_string(s), lbsim_last_error());
  throw CallFailed{static_cast<int>(s) + 1};
}

// Options shared by every subcommand; unset ones keep the config value.
struct Common {
  std::string config;
  std::string out;
  std::string topology;
  std::string trace;
  std::string cbf;
  std::string algo;
  std::vector<std::pair<std::string, std::string>> extra;
  long long seed = -1;
  long long episodes = -1;
  long long workers = -1;
  double cbf_radius = -1, cbf_eta = -1;
  long long cbf_n = -1, cbf_m = -1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--topology", c.topology, "topology JSON (default: built-in Abilene)");
  app->add_option("--seed", c.seed, "experiment seed");
  app->add_option("--cbf", c.cbf, "safety shield on|off")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--cbf-radius", c.cbf_radius, "shield perturbation radius");
  app->add_option("--cbf-n", c.cbf_n, "shield candidates per iteration");
  app->add_option("--cbf-m", c.cbf_m, "shield iterations");
  app->add_option("--cbf-eta", c.cbf_eta, "shield MLU threshold");
}

void add_trace(CLI::App* app, Common& c) {
  app->add_option("--trace", c.trace, "test trace CSV (default: generated from eval seed)")
      ->check(CLI::ExistingFile);
}

ExperimentPtr make_experiment(const Common& c) {
  lbsim_experiment* raw = nullptr;
  check(lbsim_experiment_create(c.config.empty() ? nullptr : c.config.c_str(), &raw));
  ExperimentPtr e(raw);
  auto set = [&](const char* key, const std::string& v) {
    check(lbsim_experiment_set(e.get(), key, v.c_str()));
  };
  if (!c.out.empty()) set("out", c.out);
  if (!c.topology.empty()) set("topology", c.topology);
  if (!c.trace.empty()) set("trace", c.trace);
  if (!c.cbf.empty()) set("cbf", c.cbf);
  if (!c.algo.empty()) set("algo", c.algo);
  if (c.seed >= 0) set("seed", std::to_string(c.seed));
  if (c.episodes >= 0) set("episodes", std::to_string(c.episodes));
  if (c.workers >= 0) set("workers", std::to_string(c.workers));
  if (c.cbf_radius >= 0) set("cbf.radius", std::to_string(c.cbf_radius));
  if (c.cbf_n >= 0) set("cbf.n", std::to_string(c.cbf_n));
  if (c.cbf_m >= 0) set("cbf.m", std::to_string(c.cbf_m));
  if (c.cbf_eta >= 0) set("cbf.eta", std::to_string(c.cbf_eta));
  for (const auto& [k, v] : c.extra) set(k.c_str(), v);
  return e;
}

void print_string(lbsim_string* raw) {
  StringPtr s(raw);
  std::fputs(lbsim_string_data(s.get()), stdout);
}

void evaluate(const Common& c, const std::vector<std::string>& policies, bool ranked,
              const char* stem) {
  ExperimentPtr e = make_experiment(c);
  std::vector<const char*> names;
  for (const auto& p : policies) names.push_back(p.c_str());
  lbsim_string* table = nullptr;
  check(lbsim_experiment_evaluate(e.get(), names.data(), names.size(), ranked ? 1 : 0, stem, &table));
  print_string(table);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-level load-balancing simulator: safe RL training, baselines and the delay-optimal benchmark"};
  app.require_subcommand(1);

  Common train_opts;
  std::string fine_tune;
  double lr = -1;
  auto* train = app.add_subcommand("train", "train a PPO or DDPG agent");
  add_common(train, train_opts);
  train->add_option("--algo", train_opts.algo, "ppo|ddpg")->check(CLI::IsMember({"ppo", "ddpg"}));
  train->add_option("--episodes", train_opts.episodes, "training episodes");
  train->add_option("--workers", train_opts.workers, "environment workers");
  train->add_option("--fine-tune", fine_tune, "resume from this checkpoint at the fine-tune learning rate")
      ->check(CLI::ExistingFile);
  train->add_option("--lr", lr, "learning rate override");

  Common eval_opts;
  std::vector<std::string> checkpoints;
  auto* eval = app.add_subcommand("eval", "score checkpoints on the frozen test trace");
  add_common(eval, eval_opts);
  add_trace(eval, eval_opts);
  eval->add_option("--checkpoint", checkpoints, "checkpoint JSON, optionally PATH=LABEL (repeatable)")
      ->required();

  Common base_opts;
  std::string policy;
  auto* baseline = app.add_subcommand("baseline", "score a non-learning split policy");
  add_common(baseline, base_opts);
  add_trace(baseline, base_opts);
  baseline->add_option("--policy", policy, "static|random|ecmp|ucmp")
      ->required()
      ->check(CLI::IsMember({"static", "random", "ecmp", "ucmp"}));

  Common solve_opts;
  std::string samples, solve_out;
  auto* solve = app.add_subcommand("solve", "solve the delay-optimal split for each sample");
  add_common(solve, solve_opts);
  solve->add_option("--samples", samples, "trace CSV: t,<tunnel ids>")->required()->check(CLI::ExistingFile);
  solve->add_option("--output", solve_out, "solution CSV (default: <out>/solutions.csv)");

  Common cmp_opts;
  std::vector<std::string> cmp_ckpts;
  std::vector<std::string> cmp_policies{"static", "random", "ecmp", "ucmp", "nlp", "nlp-lagged"};
  auto* compare = app.add_subcommand("compare", "ranked comparison of baselines, the NLP benchmark and checkpoints");
  add_common(compare, cmp_opts);
  add_trace(compare, cmp_opts);
  compare->add_option("--checkpoint", cmp_ckpts, "checkpoint JSON, optionally PATH=LABEL (repeatable)");
  compare->add_option("--policies", cmp_policies, "non-learning policies to include")
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      if (lr > 0) train_opts.extra.emplace_back("lr", std::to_string(lr));
      ExperimentPtr e = make_experiment(train_opts);
      lbsim_train_summary s{};
      check(lbsim_experiment_train(e.get(), fine_tune.empty() ? nullptr : fine_tune.c_str(), &s));
      std::printf("episodes %zu  steps %zu  updates %zu  shield interventions %zu\n", s.episodes,
                  s.env_steps, s.updates, s.shield_interventions);
      std::printf("min acceptance %.6f  last-episode mean delay %.4f ms  %.1f samples/s\n",
                  s.min_acceptance, s.last_episode_mean_delay_ms, s.samples_per_second);
    } else if (*eval) {
      std::vector<std::string> p;
      for (const auto& c : checkpoints) p.push_back("ckpt:" + c);
      evaluate(eval_opts, p, false, "eval");
    } else if (*baseline) {
      evaluate(base_opts, {policy}, false, ("baseline_" + policy).c_str());
    } else if (*solve) {
      ExperimentPtr e = make_experiment(solve_opts);
      lbsim_string* table = nullptr;
      check(lbsim_experiment_solve(e.get(), samples.c_str(),
                                   solve_out.empty() ? nullptr : solve_out.c_str(), &table));
      print_string(table);
    } else if (*compare) {
      std::vector<std::string> p = cmp_policies;
      for (const auto& c : cmp_ckpts) p.push_back("ckpt:" + c);
      evaluate(cmp_opts, p, true, "compare");
    }
  } catch (const CallFailed& f) {
    return f.code;
  }
  return 0;
}
