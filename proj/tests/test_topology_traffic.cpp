#include "doctest.h"

#include <cmath>
#include <numbers>

#include "lbsim/error.hpp"
#include "lbsim/topology.hpp"
#include "lbsim/traffic.hpp"

using namespace lbsim;

TEST_CASE("abilene fixture has the expected shape") {
  const Topology t = build_abilene();
  CHECK(t.nodes().size() == 11);
  CHECK(t.num_links() == 28);
  CHECK(t.num_tunnels() == 6);
  CHECK(t.num_paths() == 12);
  const char* ids[] = {"1-5", "5-1", "4-9", "9-4", "4-10", "10-4"};
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(t.tunnels()[k].id == ids[k]);
    CHECK(t.path_count(k) == 2);
    CHECK(t.path_offset(k) == 2 * k);
  }
}

TEST_CASE("abilene path delays and bottlenecks") {
  const Topology t = build_abilene();
  const double slow[] = {9.0, 9.0, 4.19, 4.19, 7.31, 7.31};
  const double fast[] = {1.67, 1.67, 1.28, 1.28, 1.65, 1.65};
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(t.path_prop_delay(2 * k) == doctest::Approx(slow[k]).epsilon(1e-12));
    CHECK(t.path_prop_delay(2 * k + 1) == doctest::Approx(fast[k]).epsilon(1e-12));
    CHECK(t.path_bottleneck(2 * k) == 20.0);
    CHECK(t.path_bottleneck(2 * k + 1) == 10.0);
  }
  const Topology b = build_abilene({25.0, 7.5});
  CHECK(b.path_bottleneck(0) == 25.0);
  CHECK(b.path_bottleneck(1) == 7.5);
  CHECK(b.max_capacity() == 25.0);
  CHECK(b.min_capacity() == 7.5);
}

TEST_CASE("topology json round trip") {
  const Topology t = build_abilene();
  const Topology u = load_topology(serialize_topology(t));
  CHECK(t == u);
  CHECK(serialize_topology(u) == serialize_topology(t));
}

namespace {

ErrorKind kind_of(const std::string& text) {
  try {
    load_topology(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kIo;  // sentinel: nothing thrown
}

const std::string kNodesLinks =
    R"({"nodes":["a","b","c"],"links":[{"id":"x","src":"a","dst":"b","capacity_mbps":10,"prop_delay_ms":1},)"
    R"({"id":"y","src":"b","dst":"c","capacity_mbps":10,"prop_delay_ms":1}],)";

}  // namespace

TEST_CASE("topology validation errors carry their kind") {
  CHECK_NOTHROW(load_topology(kNodesLinks + R"("tunnels":[{"id":"t","src":"a","dst":"c","paths":[["x","y"]]}]})"));
  CHECK(kind_of("{not json") == ErrorKind::kParse);
  CHECK(kind_of(R"({"nodes":[]})") == ErrorKind::kParse);
  CHECK(kind_of(kNodesLinks + R"("tunnels":[{"id":"t","src":"a","dst":"c","paths":[["y","x"]]}]})") ==
        ErrorKind::kValidation);
  CHECK(kind_of(kNodesLinks + R"("tunnels":[{"id":"t","src":"a","dst":"c","paths":[["x"]]}]})") ==
        ErrorKind::kValidation);
  CHECK(kind_of(kNodesLinks + R"("tunnels":[{"id":"t","src":"a","dst":"c","paths":[["x","z"]]}]})") ==
        ErrorKind::kValidation);
  CHECK(kind_of(kNodesLinks + R"("tunnels":[]})") == ErrorKind::kValidation);
  CHECK_THROWS_AS(load_topology_file("/nonexistent/topology.json"), Error);
  CHECK_THROWS_AS(path_links(build_abilene(), 6, 0), Error);
  CHECK_THROWS_AS(path_links(build_abilene(), 0, 2), Error);
}

TEST_CASE("negative capacity is rejected") {
  std::vector<Link> links{{"x", "a", "b", -1.0, 1.0}};
  CHECK_THROWS_AS(Topology({"a", "b"}, links, {{"t", "a", "b", {{0, 0, {0}}}}}), Error);
}

TEST_CASE("default traffic profile follows the sinusoid") {
  const TrafficConfig cfg = TrafficConfig::default_profile(6, 7);
  CHECK(cfg.base_mbps == std::vector<double>(6, 6.0));
  CHECK(cfg.amplitude_mbps == std::vector<double>(6, 4.0));
  CHECK(cfg.period_steps == 64.0);
  CHECK(cfg.noise_std_mbps == 0.5);
  for (std::size_t k = 0; k < 6; ++k)
    CHECK(cfg.phase_rad[k] == doctest::Approx(k * std::numbers::pi / 3).epsilon(1e-15));

  // The residual around the clean sinusoid is zero-mean with the configured spread.
  const int n = 20000;
  double sum = 0, sq = 0;
  for (int t = 0; t < n; ++t) {
    const double clean = 6.0 + 4.0 * std::sin(2 * std::numbers::pi * t / 64.0 + std::numbers::pi / 3);
    const double d = demand_at(cfg, 1, t);
    CHECK(d >= 0.0);
    sum += d - clean;
    sq += (d - clean) * (d - clean);
  }
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.02);
  CHECK(sd == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("traffic is deterministic and clamped at zero") {
  TrafficConfig cfg = TrafficConfig::default_profile(2, 3);
  CHECK(demand_at(cfg, 0, 41) == demand_at(cfg, 0, 41));
  CHECK(demand_at(cfg, 0, 41) != demand_at(TrafficConfig::default_profile(2, 4), 0, 41));
  cfg.base_mbps = {0.0, 0.0};
  for (int t = 0; t < 200; ++t) CHECK(demand_at(cfg, 0, t) >= 0.0);
  CHECK_THROWS_AS(demand_at(cfg, 2, 0), Error);
}

TEST_CASE("generator continues its clock across episodes") {
  const TrafficConfig cfg = TrafficConfig::default_profile(6, 1);
  TrafficGenerator a(cfg, 6), b(cfg, 6);
  const auto first = a.sample_episode(64);
  const auto second = a.sample_episode(64);
  CHECK(first.front().t == 0);
  CHECK(second.front().t == 64);
  CHECK(a.clock() == 128);
  for (int i = 0; i < 128; ++i) {
    const TrafficSample s = b.next();
    const TrafficSample& ref = i < 64 ? first[i] : second[i - 64];
    CHECK(s.t == ref.t);
    CHECK(s.demand == ref.demand);
  }
  TrafficGenerator c(cfg, 6, 16);
  CHECK(c.next().demand == b.sample(16).demand);
}

TEST_CASE("traffic config validation") {
  TrafficConfig cfg = TrafficConfig::default_profile(6);
  CHECK_NOTHROW(cfg.validate(6));
  CHECK_THROWS_AS(cfg.validate(5), Error);
  cfg.period_steps = 0;
  CHECK_THROWS_AS(cfg.validate(6), Error);
  cfg = TrafficConfig::default_profile(6);
  cfg.noise_std_mbps = -1;
  CHECK_THROWS_AS(cfg.validate(6), Error);
}
