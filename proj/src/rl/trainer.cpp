#include "lbsim/rl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "lbsim/error.hpp"

namespace lbsim::rl {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Clock = std::chrono::steady_clock;

struct EpisodeOutput {
  std::vector<Experience> experience;
  std::vector<MetricRow> rows;
  std::size_t interventions = 0;
};

struct EpisodeContext {
  const TrainSchedule* schedule;
  const std::string* label;
  double gamma;
  double noise_std;
  std::uint64_t policy_version;
};

EpisodeOutput run_episode(const Policy& policy, FlowEnv& env, std::uint64_t episode,
                          const EpisodeContext& ctx) {
  const TrainSchedule& sch = *ctx.schedule;
  std::mt19937_64 rng(splitmix(sch.seed ^ splitmix(episode + 1)));
  CbfConfig cbf = sch.cbf;
  cbf.eta = std::min(cbf.eta, env.params().rho_max);

  EpisodeOutput out;
  out.experience.reserve(sch.steps_per_episode);
  std::vector<double> obs = env.reset();
  for (std::size_t step = 0; step < sch.steps_per_episode; ++step) {
    Policy::Sample proto = policy.act(obs, true, rng, ctx.noise_std);
    const std::vector<double> demand = env.current().demand;
    SplitAction executed = proto.split;
    bool modified = false;
    if (sch.shield) {
      cbf.seed = shield_seed(sch.seed, episode, step);
      ProjectionOutcome p = project(env.topology(), demand, proto.split, cbf);
      modified = p.was_modified;
      executed = std::move(p.action);
    }
    const StepReport rep = env.step(executed);
    std::vector<double> next = env.observation();

    Experience e;
    e.state = std::move(obs);
    e.action = executed.ratios;
    e.logits = std::move(proto.logits);
    e.log_prob = proto.log_prob;
    e.reward = rep.reward;
    e.next_state = next;
    e.done = step + 1 == sch.steps_per_episode;
    e.policy_version = ctx.policy_version;
    if (modified) ++out.interventions;
    out.experience.push_back(std::move(e));

    MetricRow row;
    row.episode = sch.first_episode + episode;
    row.step = step;
    row.policy = *ctx.label;
    row.mean_delay_ms = rep.mean_delay_ms;
    row.mlu = rep.mlu;
    row.acceptance_rate = rep.acceptance_rate;
    row.reward = rep.reward;
    row.tunnel_delays_ms = rep.tunnel_delays_ms;
    out.rows.push_back(std::move(row));
    obs = std::move(next);
  }
  compute_returns(out.experience, ctx.gamma);
  return out;
}

// Step size for an update made after `done` of `total` units of work.
void anneal(Agent& agent, double base_lr, double done, double total) {
  if (!agent.config().anneal_lr || total <= 0.0) return;
  agent.set_learning_rate(base_lr * std::max(0.0, 1.0 - done / total));
}

double noise_at(const RlConfig& cfg, std::uint64_t episode, std::size_t episodes) {
  if (episodes <= 1) return cfg.noise_start;
  const double f = std::min(1.0, static_cast<double>(episode) / static_cast<double>(episodes - 1));
  return cfg.noise_start + (cfg.noise_end - cfg.noise_start) * f;
}

void append_rows(TrainResult& res, EpisodeOutput& out) {
  res.stats.env_steps += out.rows.size();
  res.stats.shield_interventions += out.interventions;
  for (auto& r : out.rows) res.rows.push_back(std::move(r));
}

void train_ppo(Agent& agent, std::vector<FlowEnv>& envs, const TrainSchedule& sch,
               const std::string& label, TrainResult& res, std::mt19937_64& rng) {
  const std::size_t workers = envs.size();
  const double base_lr = agent.actor_opt().lr;
  std::vector<Experience> rollout;
  std::uint64_t ep = 0;
  const auto t0 = Clock::now();
  while (ep < sch.episodes) {
    const std::size_t n = std::min<std::size_t>(workers, sch.episodes - ep);
    const EpisodeContext ctx{&sch, &label, agent.config().gamma, 0.0, agent.policy_version()};
    std::vector<EpisodeOutput> outs(n);
    if (n == 1) {
      outs[0] = run_episode(agent.policy(), envs[0], ep, ctx);
    } else {
      std::vector<std::exception_ptr> errors(n);
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < n; ++w)
        threads.emplace_back([&, w] {
          try {
            outs[w] = run_episode(agent.policy(), envs[w], ep + w, ctx);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      for (auto& t : threads) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    for (auto& o : outs) {
      for (auto& e : o.experience) rollout.push_back(std::move(e));
      append_rows(res, o);
    }
    ep += n;
    if (rollout.size() >= agent.config().update_period) {
      anneal(agent, base_lr, static_cast<double>(ep - n), static_cast<double>(sch.episodes));
      const PpoStats st = agent.ppo_update(rollout, rng);
      ++res.stats.updates;
      if (st.kl_stopped) ++res.stats.kl_stops;
      rollout.clear();
    }
  }
  res.stats.collect_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
}

void ddpg_steps(Agent& agent, ReplayBuffer& buffer, std::mt19937_64& rng, TrainResult& res,
                double base_lr, double total_steps) {
  anneal(agent, base_lr, static_cast<double>(buffer.pushed()), total_steps);
  for (std::size_t i = 0; i < agent.config().grad_steps_per_update; ++i) {
    agent.ddpg_update(buffer.sample(agent.config().batch, rng));
  }
  ++res.stats.updates;
}

void train_ddpg(Agent& agent, std::vector<FlowEnv>& envs, const TrainSchedule& sch,
                const std::string& label, TrainResult& res, std::mt19937_64& rng) {
  const RlConfig& cfg = agent.config();
  ReplayBuffer buffer(cfg.replay_capacity);
  const double base_lr = agent.actor_opt().lr;
  const double total_steps = static_cast<double>(sch.episodes * sch.steps_per_episode);
  std::uint64_t consumed = 0;  // pushes already paid for by updates
  auto ready = [&] {
    return buffer.size() >= std::max(cfg.warmup, cfg.batch) &&
           buffer.pushed() - consumed >= cfg.update_period;
  };
  const auto t0 = Clock::now();

  if (envs.size() == 1) {
    for (std::uint64_t ep = 0; ep < sch.episodes; ++ep) {
      const EpisodeContext ctx{&sch, &label, cfg.gamma, noise_at(cfg, ep, sch.episodes),
                               agent.policy_version()};
      EpisodeOutput out = run_episode(agent.policy(), envs[0], ep, ctx);
      for (auto& e : out.experience) buffer.push(std::move(e));
      append_rows(res, out);
      while (ready()) {
        ddpg_steps(agent, buffer, rng, res, base_lr, total_steps);
        consumed += cfg.update_period;
      }
    }
    res.stats.collect_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return;
  }

  // Async: workers pull episode ids and the latest published policy; the
  // trainer thread (this one) updates whenever enough new data arrived.
  std::mutex mu;
  std::condition_variable cv;
  auto published = std::make_shared<const Policy>(agent.policy());
  std::uint64_t published_version = agent.policy_version();
  std::atomic<std::uint64_t> next_episode{0};
  std::size_t finished_workers = 0;
  std::vector<EpisodeOutput> per_episode(sch.episodes);
  std::vector<std::exception_ptr> errors(envs.size());
  Clock::time_point collect_end = t0;

  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < envs.size(); ++w) {
    threads.emplace_back([&, w] {
      try {
        for (;;) {
          const std::uint64_t ep = next_episode.fetch_add(1);
          if (ep >= sch.episodes) break;
          std::shared_ptr<const Policy> pol;
          std::uint64_t version;
          {
            std::lock_guard lock(mu);
            pol = published;
            version = published_version;
          }
          const EpisodeContext ctx{&sch, &label, cfg.gamma, noise_at(cfg, ep, sch.episodes),
                                   version};
          EpisodeOutput out = run_episode(*pol, envs[w], ep, ctx);
          for (const auto& e : out.experience) buffer.push(e);
          out.experience.clear();
          std::lock_guard lock(mu);
          per_episode[ep] = std::move(out);
          cv.notify_all();
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
      std::lock_guard lock(mu);
      ++finished_workers;
      collect_end = Clock::now();
      cv.notify_all();
    });
  }

  std::exception_ptr trainer_error;
  try {
    for (;;) {
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return finished_workers == envs.size() || ready(); });
        if (!ready()) break;
      }
      ddpg_steps(agent, buffer, rng, res, base_lr, total_steps);
      consumed += cfg.update_period;
      auto fresh = std::make_shared<const Policy>(agent.policy());
      std::lock_guard lock(mu);
      published = std::move(fresh);
      published_version = agent.policy_version();
    }
  } catch (...) {
    trainer_error = std::current_exception();
    next_episode = sch.episodes;  // drain workers
  }
  for (auto& t : threads) t.join();
  if (trainer_error) std::rethrow_exception(trainer_error);
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (auto& out : per_episode) append_rows(res, out);
  res.stats.collect_seconds = std::chrono::duration<double>(collect_end - t0).count();
}

}  // namespace

std::uint64_t shield_seed(std::uint64_t base, std::uint64_t episode, std::size_t step) {
  return splitmix(splitmix(base ^ 0x5eedULL) ^ splitmix((episode << 20) ^ step));
}

TrainResult train(Agent& agent, const EnvFactory& make_env, const TrainSchedule& sch) {
  if (sch.workers == 0) throw Error(ErrorKind::kConfig, "workers must be at least 1");
  if (sch.steps_per_episode == 0) throw Error(ErrorKind::kConfig, "steps_per_episode must be positive");
  if (sch.shield) sch.cbf.validate();
  TrainResult res;
  if (sch.episodes == 0) return res;

  std::vector<FlowEnv> envs;
  for (std::size_t w = 0; w < sch.workers; ++w) {
    envs.push_back(make_env(w));
    const Topology& topo = envs.back().topology();
    if (topo.num_tunnels() != agent.state_dim() || topo.num_paths() != agent.action_dim())
      throw Error(ErrorKind::kShape,
                  "environment has " + std::to_string(topo.num_tunnels()) + " tunnels and " +
                      std::to_string(topo.num_paths()) + " paths; agent expects " +
                      std::to_string(agent.state_dim()) + " and " +
                      std::to_string(agent.action_dim()));
  }
  const std::string label =
      sch.label.empty() ? to_string(agent.config().algo) + (sch.shield ? "-cbf" : "") : sch.label;
  std::mt19937_64 rng(splitmix(sch.seed ^ 0x7a11ULL));
  const double base_lr = agent.actor_opt().lr;
  if (agent.config().algo == Algo::kPpo)
    train_ppo(agent, envs, sch, label, res, rng);
  else
    train_ddpg(agent, envs, sch, label, res, rng);
  agent.set_learning_rate(base_lr);
  std::ostringstream state;
  state << rng;
  res.rng_state = state.str();
  if (res.stats.collect_seconds > 0.0)
    res.stats.samples_per_second =
        static_cast<double>(res.stats.env_steps) / res.stats.collect_seconds;
  return res;
}

}  // namespace lbsim::rl
