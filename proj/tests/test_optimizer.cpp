#include "doctest.h"

#include <numeric>
#include <random>

#include "lbsim/baselines.hpp"
#include "lbsim/error.hpp"
#include "lbsim/optimizer.hpp"
#include "support/oracles.hpp"

using namespace lbsim;

TEST_CASE("simplex projection") {
  std::vector<double> v{0.2, 0.3};
  project_simplex(v);
  CHECK(v[0] == doctest::Approx(0.45));
  CHECK(v[1] == doctest::Approx(0.55));
  std::vector<double> w{3.0, -1.0, 0.5};
  project_simplex(w);
  CHECK(w == std::vector<double>{1.0, 0.0, 0.0});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 2);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(5);
    for (double& e : x) e = n(rng);
    project_simplex(x);
    CHECK(std::accumulate(x.begin(), x.end(), 0.0) == doctest::Approx(1.0));
    for (double e : x) CHECK(e >= 0.0);
  }
}

TEST_CASE("solver matches grid search on small instances") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> dem(0.5, 18.0);
  for (int i = 0; i < 15; ++i) {
    const Topology topo = oracle::random_solver_instance(rng);
    NlpProblem p{&topo, {}, 0.999, EnvParams{}.resolved(topo)};
    for (std::size_t k = 0; k < topo.num_tunnels(); ++k) p.demand.push_back(dem(rng));
    const NlpSolution s = solve(p);
    const NlpSolution b = brute_force(p, topo.num_tunnels() == 1 ? 1e-4 : 2e-3);
    CHECK(s.feasible == b.feasible);
    if (!b.feasible) continue;
    CHECK(on_simplex(topo, s.action.ratios));
    CHECK(s.mlu <= 0.999 + 1e-9);
    CHECK((s.objective_ms - b.objective_ms) / b.objective_ms <= 1e-3);
  }
}

TEST_CASE("light load sends everything down the fast path") {
  const Topology topo = build_abilene();
  NlpProblem p{&topo, std::vector<double>(6, 1e-6), 0.999, EnvParams{}.resolved(topo)};
  const NlpSolution s = solve(p);
  REQUIRE(s.feasible);
  CHECK(topo.path_prop_delay(1) == doctest::Approx(1.67));
  for (std::size_t k = 0; k < 6; ++k) CHECK(s.action.ratios[2 * k + 1] >= 0.99);
}

TEST_CASE("min MLU is the LP optimum") {
  const Topology topo = build_abilene();
  // One tunnel at 30 Mbps fills its two paths exactly (20 + 10).
  std::vector<double> d{30, 0, 0, 0, 0, 0};
  const MinMluResult r = min_mlu(topo, d);
  CHECK(r.mlu == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.action.ratios[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  std::vector<char> only_fast(12, 0);
  for (std::size_t k = 0; k < 6; ++k) only_fast[2 * k + 1] = 1;
  CHECK(min_mlu(topo, d, only_fast).mlu == doctest::Approx(3.0));
  std::vector<char> none(12, 0);
  CHECK_THROWS_AS(min_mlu(topo, d, none), Error);
}

TEST_CASE("infeasible demand reports a violating cut") {
  const Topology topo = build_abilene();
  NlpProblem p{&topo, std::vector<double>(6, 40.0), 0.999, EnvParams{}.resolved(topo)};
  const NlpSolution s = solve(p);
  CHECK_FALSE(s.feasible);
  CHECK_FALSE(s.violating_cut.empty());
}

TEST_CASE("grid search refuses oversized grids") {
  const Topology topo = build_abilene();
  NlpProblem p{&topo, std::vector<double>(6, 5.0), 0.999, EnvParams{}.resolved(topo)};
  CHECK_THROWS_AS(brute_force(p, 1e-3), Error);
}

TEST_CASE("baselines") {
  const Topology topo = build_abilene();
  std::mt19937_64 rng(3);
  const std::vector<double> d(6, 5.0);
  const auto st = baseline_action(BaselineKind::parse("static"), topo, d, rng);
  const auto ec = baseline_action(BaselineKind::parse("ecmp"), topo, d, rng);
  const auto uc = baseline_action(BaselineKind::parse("ucmp"), topo, d, rng);
  const auto rn = baseline_action(BaselineKind::parse("random"), topo, d, rng);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(st.ratios[2 * k] == 0.0);
    CHECK(st.ratios[2 * k + 1] == 1.0);
    CHECK(ec.ratios[2 * k] == 0.5);
    CHECK(uc.ratios[2 * k] == doctest::Approx(2.0 / 3.0));
  }
  CHECK(on_simplex(topo, rn.ratios));
  CHECK(BaselineKind::parse("ucmp").name() == "ucmp");
  CHECK_THROWS_AS(BaselineKind::parse("bogus"), Error);
}
