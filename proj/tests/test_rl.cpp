#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "lbsim/error.hpp"
#include "lbsim/rl/agent.hpp"
#include "lbsim/rl/checkpoint.hpp"
#include "lbsim/rl/mlp.hpp"
#include "lbsim/rl/sparsemax.hpp"
#include "lbsim/rl/trainer.hpp"
#include "support/oracles.hpp"

using namespace lbsim;
using namespace lbsim::rl;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

RlConfig small(Algo algo) {
  RlConfig c;
  c.algo = algo;
  c.hidden_width = 16;
  c.hidden_layers = 2;
  c.lr = 1e-3;
  c.warmup = 8;
  c.batch = 8;
  return c;
}

const GroupSizes kGroups{2, 2, 2, 2, 2, 2};

Experience transition(std::mt19937_64& rng, const Agent& a) {
  std::uniform_real_distribution<double> u(0.0, 0.6);
  Experience e;
  for (int i = 0; i < 6; ++i) e.state.push_back(u(rng));
  for (int i = 0; i < 6; ++i) e.next_state.push_back(u(rng));
  const auto s = a.policy().act(e.state, true, rng, 0.2);
  e.action = s.split.ratios;
  e.logits = s.logits;
  e.log_prob = s.log_prob;
  e.reward = -u(rng);
  e.policy_version = a.policy_version();
  return e;
}

}  // namespace

TEST_CASE("mlp gradients match central differences") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> width(1, 6);
  for (int net_i = 0; net_i < 10; ++net_i) {
    std::vector<std::size_t> dims{width(rng)};
    const std::size_t hidden = 1 + net_i % 3;
    for (std::size_t h = 0; h < hidden; ++h) dims.push_back(width(rng));
    dims.push_back(width(rng));
    Mlp net(dims);
    net.init(rng, 1.0, 1.0);
    for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()[i] += 0.1 * random_matrix(rng, 1, 1)(0, 0);
    for (int x_i = 0; x_i < 10; ++x_i) {
      const Matrix x = random_matrix(rng, dims.front(), 1);
      const Matrix c = random_matrix(rng, dims.back(), 1);
      CHECK(oracle::gradient_check(net, x, c) <= 1e-4);
    }
  }
  Mlp tiny({2, 8, 2});
  tiny.init(rng, std::sqrt(2.0), 1.0);
  CHECK(oracle::gradient_check(tiny, random_matrix(rng, 2, 3), random_matrix(rng, 2, 3)) <= 1e-4);
}

TEST_CASE("mlp rejects mismatched input") {
  Mlp net({3, 4, 2});
  CHECK_THROWS_AS(net.forward(Matrix::Zero(2, 1)), Error);
}

TEST_CASE("orthogonal init gives orthonormal rows or columns") {
  std::mt19937_64 rng(1);
  Mlp net({6, 16, 4});
  net.init(rng, 1.0, 1.0);
  const Matrix w = net.weight(0);  // 16 x 6: orthonormal columns
  CHECK((w.transpose() * w - Matrix::Identity(6, 6)).norm() < 1e-10);
  CHECK(net.bias(0).norm() == 0.0);
}

TEST_CASE("adam first step moves each parameter by about lr") {
  Adam opt;
  opt.lr = 0.01;
  Vector p = Vector::Zero(3), g(3);
  g << 2.0, -0.5, 0.0;
  opt.step(p, g);
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p[2] == 0.0);
}

TEST_CASE("gradient clipping") {
  Vector g(2);
  g << 3.0, 4.0;
  CHECK(clip_grad_norm(g, 0.5) == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(0.5));
  Vector h(2);
  h << 0.1, 0.1;
  clip_grad_norm(h, 0.5);
  CHECK(h[0] == 0.1);
}

TEST_CASE("polyak averaging") {
  Vector t = Vector::Zero(4), m = Vector::Constant(4, 2.0);
  double last = (t - m).norm();
  for (int i = 0; i < 50; ++i) {
    polyak_update(t, m, 0.05);
    const double d = (t - m).norm();
    CHECK(d < last);
    last = d;
  }
  polyak_update(t, m, 1.0);
  CHECK(t == m);
  Vector u = Vector::Ones(4);
  polyak_update(u, m, 0.0);
  CHECK(u == Vector::Ones(4));
}

TEST_CASE("sparsemax yields simplex points with exact zeros") {
  const GroupSizes g{2, 3};
  const auto x = sparsemax(g, std::vector<double>{5.0, 0.0, 0.1, 0.2, 0.15});
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 0.0);
  CHECK(x[2] + x[3] + x[4] == doctest::Approx(1.0));
  CHECK(x[3] > x[4]);
  CHECK(x[4] > x[2]);
  const auto y = sparsemax(g, std::vector<double>{0.0, 0.0, 1.0, 1.0, 1.0});
  CHECK(y[0] == 0.5);
  CHECK(y[2] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("sparsemax vjp matches central differences") {
  std::mt19937_64 rng(9);
  const GroupSizes g{3, 2, 4};
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix zm = random_matrix(rng, 9, 1), cm = random_matrix(rng, 9, 1);
    std::vector<double> z(zm.data(), zm.data() + 9), c(cm.data(), cm.data() + 9);
    const auto x = sparsemax(g, z);
    const auto grad = sparsemax_vjp(g, x, c);
    auto loss = [&](const std::vector<double>& zz) {
      const auto xx = sparsemax(g, zz);
      return std::inner_product(xx.begin(), xx.end(), c.begin(), 0.0);
    };
    for (std::size_t i = 0; i < 9; ++i) {
      auto up = z, down = z;
      up[i] += 1e-7;
      down[i] -= 1e-7;
      CHECK(grad[i] == doctest::Approx((loss(up) - loss(down)) / 2e-7).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("clipped surrogate arithmetic") {
  CHECK(clipped_objective(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_objective(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_objective(1.0, 0.7, 0.2) == doctest::Approx(0.7));
  CHECK(clipped_objective(1.0, -0.3, 0.2) == doctest::Approx(-0.3));
  // Pessimistic side is not clipped.
  CHECK(clipped_objective(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  CHECK(clipped_objective(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
}

TEST_CASE("discounted returns") {
  std::vector<Experience> ep(3);
  ep[0].reward = 1;
  ep[1].reward = 2;
  ep[2].reward = 4;
  compute_returns(ep, 0.5);
  CHECK(ep[2].ret == 4);
  CHECK(ep[1].ret == 4);
  CHECK(ep[0].ret == 3);
}

TEST_CASE("replay buffer is a FIFO ring with uniform sampling") {
  ReplayBuffer buf(3);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(buf.sample(1, rng), Error);
  for (int i = 0; i < 5; ++i) {
    Experience e;
    e.reward = i;
    buf.push(e);
  }
  CHECK(buf.size() == 3);
  CHECK(buf.pushed() == 5);
  std::vector<double> seen;
  for (const auto& e : buf.snapshot()) seen.push_back(e.reward);
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<double>{2, 3, 4});
  std::array<int, 5> counts{};
  for (const auto& e : buf.sample(3000, rng)) ++counts[static_cast<int>(e.reward)];
  CHECK(counts[0] == 0);
  CHECK(counts[1] == 0);
  for (int i = 2; i < 5; ++i) CHECK(std::abs(counts[i] - 1000) < 120);
}

TEST_CASE("exploration is centred on the exploit action") {
  Agent a(small(Algo::kPpo), 6, kGroups, 3);
  std::mt19937_64 rng(4);
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const auto mean = a.policy().mean_logits(s);
  std::vector<double> acc(mean.size(), 0.0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto smp = a.policy().act(s, true, rng);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += smp.logits[j] / n;
  }
  for (std::size_t j = 0; j < acc.size(); ++j) CHECK(std::abs(acc[j] - mean[j]) <= 0.05);
  const auto exploit = a.policy().act(s, false, rng);
  CHECK(exploit.split.ratios == sparsemax(kGroups, mean));
}

TEST_CASE("ppo rejects stale rollouts and bumps the policy version") {
  Agent a(small(Algo::kPpo), 6, kGroups, 5);
  std::mt19937_64 rng(6);
  std::vector<Experience> roll;
  for (int i = 0; i < 64; ++i) roll.push_back(transition(rng, a));
  compute_returns(roll, 0.7);
  const Vector before = a.policy().actor.params();
  a.ppo_update(roll, rng);
  CHECK(a.policy_version() == 1);
  CHECK(a.policy().actor.params() != before);
  CHECK_THROWS_AS(a.ppo_update(roll, rng), Error);
}

TEST_CASE("ddpg target network and td targets") {
  RlConfig cfg = small(Algo::kDdpg);
  cfg.gamma = 0.0;
  Agent a(cfg, 6, kGroups, 8);
  std::mt19937_64 rng(9);
  std::vector<Experience> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(transition(rng, a));
  const auto y = a.td_targets(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(y[i] == batch[i].reward);

  a.ddpg_update(batch);
  CHECK(a.critic_target().params() != a.critic().params());
  a.update_target(1.0);
  CHECK(a.critic_target().params() == a.critic().params());
}

TEST_CASE("ddpg critic fits a single transition") {
  RlConfig cfg = small(Algo::kDdpg);
  cfg.gamma = 0.0;
  Agent a(cfg, 6, kGroups, 10);
  std::mt19937_64 rng(11);
  std::vector<Experience> batch{transition(rng, a)};
  batch[0].reward = -0.7;
  auto err = [&] { return std::abs(a.q_value(batch[0].state, batch[0].action) - batch[0].reward); };
  const double before = err();
  for (int i = 0; i < 50; ++i) a.ddpg_update(batch);
  CHECK(err() < before);
  CHECK(err() < 0.5 * before);
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (Algo algo : {Algo::kPpo, Algo::kDdpg}) {
    Agent a(small(algo), 6, kGroups, 12);
    std::mt19937_64 rng(13);
    std::vector<Experience> batch;
    for (int i = 0; i < 64; ++i) batch.push_back(transition(rng, a));
    compute_returns(batch, 0.7);
    if (algo == Algo::kPpo) a.ppo_update(batch, rng);
    else a.ddpg_update(batch);
    Checkpoint ck{a, 7, "abc", ""};
    const std::string text = checkpoint_to_json(ck);
    const Checkpoint back = checkpoint_from_json(text);
    CHECK(checkpoint_to_json(back) == text);
    CHECK(back.agent.policy().actor.params() == a.policy().actor.params());
    CHECK(back.agent.critic().params() == a.critic().params());
    CHECK(back.agent.actor_opt().m == a.actor_opt().m);
    CHECK(back.agent.critic_opt().v == a.critic_opt().v);
    CHECK(back.agent.policy_version() == a.policy_version());
    CHECK(back.episode == 7);
    CHECK(back.config_hash == "abc");
    if (algo == Algo::kPpo) CHECK(back.agent.policy().log_std == a.policy().log_std);
    else CHECK(back.agent.critic_target().params() == a.critic_target().params());
  }
}

TEST_CASE("checkpoint shape errors name the layer") {
  Agent a(small(Algo::kPpo), 5, {2, 2, 1}, 1);
  try {
    check_compatible(a, 6, kGroups);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
    CHECK(std::string(e.what()).find("actor.0") != std::string::npos);
  }
  CHECK_THROWS_AS(checkpoint_from_json("{"), Error);
  CHECK_THROWS_AS(checkpoint_from_json(R"({"schema_version": 99})"), Error);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ck.json"), Error);
}

TEST_CASE("single-worker training is reproducible") {
  const auto topo = std::make_shared<const Topology>(build_abilene());
  auto factory = [&](std::size_t w) {
    return FlowEnv(topo, TrafficGenerator(TrafficConfig::default_profile(6, 100 + w), 6));
  };
  for (Algo algo : {Algo::kPpo, Algo::kDdpg}) {
    TrainSchedule sch;
    sch.episodes = 3;
    sch.steps_per_episode = 64;
    sch.seed = 4;
    Agent a(small(algo), 6, kGroups, 2), b(small(algo), 6, kGroups, 2);
    const TrainResult ra = train(a, factory, sch), rb = train(b, factory, sch);
    REQUIRE(ra.rows.size() == 192);
    CHECK(ra.stats.updates > 0);
    for (std::size_t i = 0; i < ra.rows.size(); ++i) {
      CHECK(ra.rows[i].reward == rb.rows[i].reward);
      CHECK(ra.rows[i].acceptance_rate == 1.0);
    }
    CHECK(a.policy().actor.params() == b.policy().actor.params());
    CHECK(ra.rows.front().policy == (algo == Algo::kPpo ? "ppo-cbf" : "ddpg-cbf"));
  }
}

TEST_CASE("rl config validation") {
  RlConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_algo("ddpg") == Algo::kDdpg);
  CHECK_THROWS_AS(parse_algo("sac"), Error);
  CHECK(parse_critic_target("immediate") == CriticTarget::kImmediate);
}
