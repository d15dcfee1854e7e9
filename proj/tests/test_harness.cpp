#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lbsim/error.hpp"
#include "lbsim/harness.hpp"
#include "json.hpp"

using namespace lbsim;
using namespace lbsim::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lbsim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  c.rl.hidden_width = 16;
  c.rl.hidden_layers = 2;
  c.episodes = 2;
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("git blob hash matches git") {
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("config json round trip and validation") {
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  c.rl.algo = rl::Algo::kDdpg;
  c.cbf.radius = 0.2;
  c.shield = false;
  c.episodes = 17;
  c.seed = 5;
  c.capacities = {25.0, 7.5};
  const ExperimentConfig back = parse_config(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.rl.algo == rl::Algo::kDdpg);
  CHECK(back.cbf.radius == 0.2);
  CHECK_FALSE(back.shield);
  CHECK(back.capacities.low_mbps == 7.5);
  CHECK_THROWS_AS(parse_config("{"), Error);
  CHECK_THROWS_AS(parse_config(R"({"rl": {"algo": "sac"}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"cbf": {"eta": 2.0}})").validate(), Error);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("trace csv round trip and errors") {
  const fs::path dir = scratch("trace");
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  const auto topo = make_topology(c);
  const auto trace = make_trace(c, *topo);
  REQUIRE(trace.size() == 100);
  save_trace((dir / "t.csv").string(), *topo, trace);
  const auto back = load_trace((dir / "t.csv").string(), *topo);
  REQUIRE(back.size() == trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(back[i].t == trace[i].t);
    CHECK(back[i].demand == trace[i].demand);
  }
  CHECK(slurp(dir / "t.csv").rfind("t,1-5,5-1,4-9,9-4,4-10,10-4\n", 0) == 0);
  std::ofstream(dir / "short.csv") << "t,a,b\n0,1,2\n";
  CHECK_THROWS_AS(load_trace((dir / "short.csv").string(), *topo), Error);
  std::ofstream(dir / "neg.csv") << "t,1-5,5-1,4-9,9-4,4-10,10-4\n0,1,2,3,-4,5,6\n";
  CHECK_THROWS_AS(load_trace((dir / "neg.csv").string(), *topo), Error);
}

TEST_CASE("evaluation trace is independent of training streams") {
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  const auto topo = make_topology(c);
  const auto trace = make_trace(c, *topo);
  for (std::size_t w = 0; w < 4; ++w) CHECK(training_traffic(c, *topo, w).seed != c.eval_seed);
  c.eval_seed = 1001;
  CHECK(make_trace(c, *topo)[0].demand != trace[0].demand);
}

TEST_CASE("ranking sorts by mean delay with name tie-break") {
  std::vector<EvalSummary> rows(3);
  rows[0].policy = "ucmp";
  rows[0].mean_delay_ms = 7.0;
  rows[1].policy = "ecmp";
  rows[1].mean_delay_ms = 7.0;
  rows[2].policy = "nlp";
  rows[2].mean_delay_ms = 5.0;
  const auto r = rank(rows);
  CHECK(r[0].policy == "nlp");
  CHECK(r[1].policy == "ecmp");
  CHECK(r[2].policy == "ucmp");
  CHECK_THROWS_AS(rank({rows[0]}), Error);

  const auto back = parse_summary_csv(summary_csv(r));
  REQUIRE(back.size() == 3);
  CHECK(back[2].policy == "ucmp");
  CHECK(back[0].mean_delay_ms == 5.0);
}

TEST_CASE("baselines scored on the frozen trace") {
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  c.eval_samples = 30;
  const auto topo = make_topology(c);
  const auto trace = make_trace(c, *topo);
  const EnvParams env = c.env.resolved(*topo);
  std::vector<Controller> ctrls;
  for (const char* n : {"static", "ecmp", "ucmp"}) ctrls.push_back(baseline_controller(BaselineKind::parse(n), 0));
  const auto evals = run_eval(*topo, env, trace, ctrls);
  REQUIRE(evals.size() == 3);
  CHECK(evals[0].summary.policy == "static");
  CHECK(evals[0].summary.samples == 30);
  CHECK(evals[0].summary.mean_acceptance < evals[1].summary.mean_acceptance);
  CHECK(evals[0].summary.mean_acceptance < evals[2].summary.mean_acceptance);
  CHECK_THROWS_AS(run_eval(*topo, env, {}, ctrls), Error);
}

TEST_CASE("lagged NLP applies the previous sample's optimum") {
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  c.eval_samples = 4;
  const fs::path dir = scratch("nlp");
  const auto topo = make_topology(c);
  const auto trace = make_trace(c, *topo);
  const EnvParams env = c.env.resolved(*topo);
  const auto sol = std::make_shared<const std::vector<SplitAction>>(
      solve_trace(*topo, env, trace, (dir / "cache.json").string()));
  CHECK(fs::exists(dir / "cache.json"));
  // A second solve hits the cache and returns the same splits.
  const auto cached = solve_trace(*topo, env, trace, (dir / "cache.json").string());
  for (std::size_t i = 0; i < trace.size(); ++i) CHECK(cached[i].ratios == (*sol)[i].ratios);
  const Controller lag = nlp_lagged_controller(sol), now = nlp_controller(sol);
  CHECK(lag.decide(*topo, env, trace, 0).ratios == std::vector<double>(12, 0.5));
  CHECK(lag.decide(*topo, env, trace, 2).ratios == (*sol)[1].ratios);
  CHECK(now.decide(*topo, env, trace, 2).ratios == (*sol)[2].ratios);
}

TEST_CASE("training campaign writes metrics, checkpoint and manifest") {
  const fs::path dir = scratch("campaign");
  const CampaignResult r = run_training_campaign(tiny(dir));
  const std::string metrics = slurp(r.metrics_path);
  CHECK(metrics.rfind(
            "episode,step,policy,mean_delay_ms,mlu,acceptance_rate,reward,"
            "delay_1-5,delay_5-1,delay_4-9,delay_9-4,delay_4-10,delay_10-4\n",
            0) == 0);
  const auto rows = parse_metrics_csv(metrics);
  CHECK(rows.size() == 128);
  CHECK(metrics_csv(*make_topology(tiny(dir)), rows) == metrics);

  const auto manifest = nlohmann::json::parse(slurp(r.manifest_path));
  CHECK(manifest.contains("config"));
  CHECK(manifest["seeds"]["train"] == 0);
  CHECK(manifest["metrics_hash"] == git_blob_hash(metrics));
  CHECK(manifest["content_hash"].get<std::string>().size() == 40);

  const rl::Checkpoint ck = rl::load_checkpoint(r.checkpoint_path);
  CHECK(ck.episode == 2);

  // Fine-tuning continues the episode numbering at the reduced rate.
  ExperimentConfig ft = tiny(scratch("finetune"));
  ft.capacities = {25.0, 7.5};
  const CampaignResult f = run_training_campaign(ft, r.checkpoint_path);
  CHECK(f.train.rows.front().episode == 2);
  CHECK(f.checkpoint->episode == 4);
  CHECK(f.checkpoint->agent.actor_opt().lr == ft.rl.fine_tune_lr);
}

TEST_CASE("fine-tuning onto a different tunnel set is a shape error") {
  const fs::path dir = scratch("shape");
  const CampaignResult r = run_training_campaign(tiny(dir / "a"));
  const Topology small({"a", "b"}, {{"x", "a", "b", 10.0, 1.0}, {"y", "a", "b", 20.0, 3.0}},
                       {{"t", "a", "b", {{0, 0, {0}}, {0, 1, {1}}}}});
  std::ofstream(dir / "small.json") << serialize_topology(small);
  ExperimentConfig c = tiny(dir / "b");
  c.topology_path = (dir / "small.json").string();
  try {
    run_training_campaign(c, r.checkpoint_path);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
    CHECK(std::string(e.what()).find("actor.0") != std::string::npos);
  }
}
