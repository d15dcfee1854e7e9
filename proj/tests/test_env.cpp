#include "doctest.h"

#include <random>

#include "lbsim/error.hpp"
#include "lbsim/flow_env.hpp"
#include "support/oracles.hpp"

using namespace lbsim;

TEST_CASE("water filling matches progressive filling on random instances") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Topology topo = oracle::random_layered(rng, 4, 6);
    std::uniform_real_distribution<double> dem(0.0, 15.0);
    std::vector<double> d(topo.num_paths());
    for (double& x : d) x = dem(rng);
    if (trial % 10 == 0) d[0] = 0.0;
    const double rho = trial % 2 ? 0.999 : 1.0;
    const auto got = water_fill(topo, d, rho);
    const auto want = oracle::progressive_fill(topo, d, rho);
    REQUIRE(got.size() == want.size());
    for (std::size_t s = 0; s < got.size(); ++s) CHECK(got[s] == doctest::Approx(want[s]).epsilon(1e-9).scale(1));
    CHECK(oracle::maxmin_violation(topo, d, got, rho) == "");
  }
}

TEST_CASE("max-min check rejects a non-fair allocation") {
  // Two subflows on one 10 Mbps link: (7, 3) is feasible and saturating but not fair.
  const Topology topo({"a", "b"}, {{"x", "a", "b", 10.0, 1.0}},
                      {{"t", "a", "b", {{0, 0, {0}}, {0, 1, {0}}}}});
  CHECK(oracle::maxmin_violation(topo, {8, 8}, {7, 3}, 1.0) != "");
  CHECK(oracle::maxmin_violation(topo, {8, 8}, {5, 5}, 1.0) == "");
  CHECK(water_fill(topo, std::vector<double>{8, 2}, 1.0) == std::vector<double>{8, 2});
  const auto w = water_fill(topo, std::vector<double>{8, 3}, 1.0);
  CHECK(w[0] == doctest::Approx(7.0));
  CHECK(w[1] == doctest::Approx(3.0));
}

TEST_CASE("link delay is M/M/1 plus propagation, capped near saturation") {
  const Link l{"x", "a", "b", 10.0, 2.0};
  CHECK(link_delay(l, 0.0, 1.0, 0.999) == doctest::Approx(2.0 + 1.0 / 10.0));
  CHECK(link_delay(l, 6.0, 1.0, 0.999) == doctest::Approx(2.0 + 1.0 / 4.0));
  const double cap = link_delay(l, 9.99, 1.0, 0.999);
  CHECK(link_delay(l, 50.0, 1.0, 0.999) == cap);
  CHECK(std::isfinite(cap));
}

TEST_CASE("reward combines normalized delay and MLU") {
  CHECK(reward(9.0, 0.5, 0.8, 9.0) == doctest::Approx(-0.8 - 0.1));
  CHECK(reward(4.5, 1.0, 0.8, 9.0) == doctest::Approx(-0.4 - 0.2));
}

TEST_CASE("abilene env resolves its reference delay and observation scale") {
  const auto topo = std::make_shared<const Topology>(build_abilene());
  const EnvParams p = EnvParams{}.resolved(*topo);
  CHECK(p.d_ref_ms == doctest::Approx(9.0));
  CHECK(p.obs_scale == doctest::Approx(30.0));
  FlowEnv env(topo, TrafficGenerator(TrafficConfig::default_profile(6, 2), 6));
  const auto obs = env.reset();
  for (std::size_t k = 0; k < 6; ++k) CHECK(obs[k] == doctest::Approx(env.current().demand[k] / 30.0));
}

TEST_CASE("step scores the current sample then advances the clock") {
  const auto topo = std::make_shared<const Topology>(build_abilene());
  const TrafficConfig cfg = TrafficConfig::default_profile(6, 5);
  FlowEnv env(topo, TrafficGenerator(cfg, 6));
  env.reset();
  const TrafficSample first = env.current();
  SplitAction ecmp{std::vector<double>(12, 0.5)};
  const StepReport r = env.step(ecmp);
  CHECK(r.t == first.t);
  CHECK(env.current().t == first.t + 1);
  const StepReport again = evaluate_action(*topo, first, ecmp.ratios, env.params());
  CHECK(again.mean_delay_ms == r.mean_delay_ms);
  CHECK(again.reward == r.reward);

  SplitAction bad{std::vector<double>(12, 0.4)};
  CHECK_THROWS_AS(env.step(bad), Error);
  SplitAction neg{std::vector<double>(12, 0.5)};
  neg.ratios[0] = -0.1;
  neg.ratios[1] = 1.1;
  CHECK_THROWS_AS(env.step(neg), Error);
}

TEST_CASE("overload lowers acceptance and MLU is offered-load based") {
  const Topology topo = build_abilene();
  TrafficSample s{0, std::vector<double>(6, 15.0)};
  std::vector<double> fast(12, 0.0);
  for (std::size_t k = 0; k < 6; ++k) fast[2 * k + 1] = 1.0;
  const StepReport r = evaluate_action(topo, s, fast, EnvParams{}.resolved(topo));
  CHECK(r.mlu > 1.0);
  CHECK(r.acceptance_rate < 1.0);
  for (double u : r.links.utilization) CHECK(u <= 0.999 + 1e-12);

  TrafficSample light{0, std::vector<double>(6, 1.0)};
  const StepReport q = evaluate_action(topo, light, fast, EnvParams{}.resolved(topo));
  CHECK(q.acceptance_rate == 1.0);
  // Tunnel delay is the slowest active path; here only the fast path is active.
  CHECK(q.tunnel_delays_ms[0] == doctest::Approx(q.path_delays_ms[1]));
  double mean = 0;
  for (double d : q.tunnel_delays_ms) mean += d / 6;
  CHECK(q.mean_delay_ms == doctest::Approx(mean));
}

TEST_CASE("split on both paths reports the slower path") {
  const Topology topo = build_abilene();
  TrafficSample s{0, std::vector<double>(6, 2.0)};
  const StepReport r = evaluate_action(topo, s, std::vector<double>(12, 0.5), EnvParams{}.resolved(topo));
  for (std::size_t k = 0; k < 6; ++k)
    CHECK(r.tunnel_delays_ms[k] == std::max(r.path_delays_ms[2 * k], r.path_delays_ms[2 * k + 1]));
}
