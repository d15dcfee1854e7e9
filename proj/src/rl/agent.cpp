#include "lbsim/rl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lbsim/error.hpp"

namespace lbsim::rl {

namespace {

constexpr double kHiddenGain = 1.4142135623730951;
constexpr double kPolicyOutputGain = 0.01;
constexpr double kCriticOutputGain = 1.0;

std::vector<std::size_t> layer_dims(std::size_t in, const RlConfig& cfg, std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i < cfg.hidden_layers; ++i) dims.push_back(cfg.hidden_width);
  dims.push_back(out);
  return dims;
}

Vector column(std::span<const double> v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void adam_step(Adam& opt, Vector& params, Vector& grad, double clip, const std::string& what) {
  check_finite(grad, what + " gradient");
  clip_grad_norm(grad, clip);
  opt.step(params, grad);
  check_finite(params, what + " parameters");
}

}  // namespace

std::string to_string(Algo a) { return a == Algo::kPpo ? "ppo" : "ddpg"; }

Algo parse_algo(std::string_view name) {
  if (name == "ppo") return Algo::kPpo;
  if (name == "ddpg") return Algo::kDdpg;
  throw Error(ErrorKind::kConfig, "unknown algorithm '" + std::string(name) + "'");
}

std::string to_string(CriticTarget c) {
  return c == CriticTarget::kReturn ? "return" : "immediate";
}

CriticTarget parse_critic_target(std::string_view name) {
  if (name == "return") return CriticTarget::kReturn;
  if (name == "immediate") return CriticTarget::kImmediate;
  throw Error(ErrorKind::kConfig, "unknown critic target '" + std::string(name) + "'");
}

void RlConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::kConfig, m); };
  if (hidden_width == 0 || hidden_layers == 0) fail("hidden layers must be nonempty");
  if (!(lr > 0.0) || !(fine_tune_lr > 0.0)) fail("learning rates must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (!(grad_clip > 0.0)) fail("grad_clip must be positive");
  if (update_period == 0) fail("update_period must be positive");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail("clip_eps must lie in (0, 1)");
  if (!(target_kl > 0.0)) fail("target_kl must be positive");
  if (epochs == 0 || minibatch == 0 || batch == 0) fail("epochs and batch sizes must be positive");
  if (!(polyak_tau > 0.0 && polyak_tau <= 1.0)) fail("polyak_tau must lie in (0, 1]");
  if (replay_capacity < batch) fail("replay_capacity must hold at least one batch");
  if (!(noise_start >= 0.0 && noise_end >= 0.0)) fail("exploration noise must be nonnegative");
}

void compute_returns(std::span<Experience> episode, double gamma) {
  double g = 0.0;
  for (std::size_t i = episode.size(); i-- > 0;) {
    if (episode[i].done) g = 0.0;
    g = episode[i].reward + gamma * g;
    episode[i].ret = g;
  }
}

void check_finite(const Vector& v, const std::string& what) {
  if (!v.allFinite()) throw Error(ErrorKind::kNumeric, "non-finite values in " + what);
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorKind::kConfig, "replay capacity must be positive");
}

void ReplayBuffer::push(Experience e) {
  std::lock_guard lock(mu_);
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
  } else {
    items_[head_] = std::move(e);
    head_ = (head_ + 1) % capacity_;
  }
  ++pushed_;
}

std::vector<Experience> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  std::lock_guard lock(mu_);
  if (items_.empty()) throw Error(ErrorKind::kConfig, "cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<Experience> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(items_[pick(rng)]);
  return out;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::uint64_t ReplayBuffer::pushed() const {
  std::lock_guard lock(mu_);
  return pushed_;
}

std::vector<Experience> ReplayBuffer::snapshot() const {
  std::lock_guard lock(mu_);
  std::vector<Experience> out;
  out.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i)
    out.push_back(items_[(head_ + i) % items_.size()]);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> Policy::mean_logits(std::span<const double> state) const {
  const Matrix out = actor.forward(column(state));
  return {out.data(), out.data() + out.size()};
}

std::vector<double> Policy::stddev() const {
  std::vector<double> s(static_cast<std::size_t>(log_std.size()));
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(log_std[static_cast<Eigen::Index>(i)]);
  return s;
}

double Policy::log_prob(std::span<const double> logits, std::span<const double> mean) const {
  static const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double ls = log_std[static_cast<Eigen::Index>(i)];
    const double u = (logits[i] - mean[i]) / std::exp(ls);
    lp += -0.5 * u * u - ls - kHalfLog2Pi;
  }
  return lp;
}

Policy::Sample Policy::act(std::span<const double> state, bool explore, std::mt19937_64& rng,
                           double noise_std) const {
  Sample s;
  const std::vector<double> mean = mean_logits(state);
  s.logits = mean;
  if (explore) {
    std::normal_distribution<double> n01(0.0, 1.0);
    if (algo == Algo::kPpo) {
      for (std::size_t i = 0; i < mean.size(); ++i)
        s.logits[i] += std::exp(log_std[static_cast<Eigen::Index>(i)]) * n01(rng);
    } else {
      for (double& z : s.logits) z += noise_std * n01(rng);
    }
  }
  if (algo == Algo::kPpo) s.log_prob = log_prob(s.logits, mean);
  s.split.ratios = sparsemax(groups, s.logits);
  return s;
}

double clipped_objective(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

// ---------------------------------------------------------------------------

Agent::Agent(const RlConfig& cfg, std::size_t state_dim, GroupSizes groups, std::uint64_t seed)
    : cfg_(cfg), state_dim_(state_dim) {
  cfg_.validate();
  if (state_dim == 0 || groups.empty())
    throw Error(ErrorKind::kShape, "agent needs a nonempty state and action");
  const std::size_t action_dim = std::accumulate(groups.begin(), groups.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  policy_.algo = cfg.algo;
  policy_.groups = std::move(groups);
  policy_.actor = Mlp(layer_dims(state_dim, cfg_, action_dim));
  policy_.actor.init(rng, kHiddenGain, kPolicyOutputGain);
  const std::size_t critic_in = cfg.algo == Algo::kPpo ? state_dim : state_dim + action_dim;
  critic_ = Mlp(layer_dims(critic_in, cfg_, 1));
  critic_.init(rng, kHiddenGain, kCriticOutputGain);
  if (cfg.algo == Algo::kPpo) {
    policy_.log_std = Vector::Constant(static_cast<Eigen::Index>(action_dim), cfg.init_log_std);
  } else {
    critic_target_ = critic_;
  }
  set_learning_rate(cfg.lr);
}

void Agent::set_learning_rate(double lr) {
  actor_opt_.lr = lr;
  critic_opt_.lr = lr;
  log_std_opt_.lr = lr;
}


double Agent::value(std::span<const double> state) const {
  return critic_.forward(column(state))(0, 0);
}

double Agent::q_value(std::span<const double> state, std::span<const double> action) const {
  Vector in(static_cast<Eigen::Index>(state.size() + action.size()));
  in << column(state), column(action);
  return critic_.forward(in)(0, 0);
}

PpoStats Agent::ppo_update(const std::vector<Experience>& rollout, std::mt19937_64& rng) {
  if (cfg_.algo != Algo::kPpo) throw Error(ErrorKind::kConfig, "ppo_update on a DDPG agent");
  PpoStats stats;
  const std::size_t n = rollout.size();
  if (n == 0) return stats;
  const auto sd = static_cast<Eigen::Index>(state_dim_);
  const auto ad = static_cast<Eigen::Index>(action_dim());

  Matrix states(sd, static_cast<Eigen::Index>(n));
  Matrix logits(ad, static_cast<Eigen::Index>(n));
  Vector old_logp(static_cast<Eigen::Index>(n));
  Vector targets(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Experience& e = rollout[i];
    if (e.policy_version != version_)
      throw Error(ErrorKind::kValidation,
                  "rollout contains experience from policy version " +
                      std::to_string(e.policy_version) + ", current is " +
                      std::to_string(version_));
    if (static_cast<Eigen::Index>(e.state.size()) != sd ||
        static_cast<Eigen::Index>(e.logits.size()) != ad)
      throw Error(ErrorKind::kShape, "experience shape does not match the agent");
    const auto c = static_cast<Eigen::Index>(i);
    states.col(c) = column(e.state);
    logits.col(c) = column(e.logits);
    old_logp[c] = e.log_prob;
    targets[c] = cfg_.critic_target == CriticTarget::kReturn ? e.ret : e.reward;
  }

  Vector adv = targets - critic_.forward(states).row(0).transpose();
  if (cfg_.normalize_advantages && n > 1) {
    const double mean = adv.mean();
    const double var = (adv.array() - mean).square().sum() / static_cast<double>(n);
    adv = (adv.array() - mean) / (std::sqrt(var) + 1e-8);
  }

  auto batch_logp = [&](const Matrix& mean, const Matrix& z, const Vector& ls) {
    const Eigen::ArrayXd inv = (-ls.array()).exp();
    const Matrix u = ((z - mean).array().colwise() * inv).matrix();
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Vector lp = -0.5 * u.colwise().squaredNorm().transpose();
    lp.array() -= ls.sum() + half_log_2pi * static_cast<double>(ls.size());
    return lp;
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    if (epoch > 0) {
      const Vector lp = batch_logp(policy_.actor.forward(states), logits, policy_.log_std);
      const Eigen::ArrayXd log_r = (lp - old_logp).array();
      stats.approx_kl = ((log_r.exp() - 1.0) - log_r).mean();
      if (stats.approx_kl > cfg_.target_kl) {
        stats.kl_stopped = true;
        break;
      }
    }
    std::shuffle(order.begin(), order.end(), rng);
    stats.policy_loss = stats.value_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg_.minibatch) {
      const std::size_t b = std::min(cfg_.minibatch, n - start);
      const auto bb = static_cast<Eigen::Index>(b);
      Matrix sb(sd, bb), zb(ad, bb);
      Vector ob(bb), ab(bb), tb(bb);
      for (std::size_t j = 0; j < b; ++j) {
        const auto src = static_cast<Eigen::Index>(order[start + j]);
        const auto dst = static_cast<Eigen::Index>(j);
        sb.col(dst) = states.col(src);
        zb.col(dst) = logits.col(src);
        ob[dst] = old_logp[src];
        ab[dst] = adv[src];
        tb[dst] = targets[src];
      }

      Mlp::Cache cache;
      const Matrix mean = policy_.actor.forward(sb, &cache);
      const Vector lp = batch_logp(mean, zb, policy_.log_std);
      Vector coef(bb);  // dLoss/dlogp per sample
      for (Eigen::Index j = 0; j < bb; ++j) {
        const double ratio = std::exp(lp[j] - ob[j]);
        const double obj = clipped_objective(ratio, ab[j], cfg_.clip_eps);
        stats.policy_loss -= obj / static_cast<double>(n);
        coef[j] = ratio * ab[j] <= obj ? -ab[j] * ratio / static_cast<double>(b) : 0.0;
      }
      const Eigen::ArrayXd inv_var = (-2.0 * policy_.log_std.array()).exp();
      const Matrix diff = zb - mean;
      const Matrix dlogp_dmean = (diff.array().colwise() * inv_var).matrix();
      const Matrix grad_mean = dlogp_dmean * coef.asDiagonal();
      Vector g_actor = Vector::Zero(policy_.actor.params().size());
      policy_.actor.backward(cache, grad_mean, g_actor);
      adam_step(actor_opt_, policy_.actor.params(), g_actor, cfg_.grad_clip, "actor");

      const Matrix sq = (diff.array().square().colwise() * inv_var).matrix();
      Vector g_ls = (sq.array() - 1.0).matrix() * coef;
      adam_step(log_std_opt_, policy_.log_std, g_ls, cfg_.grad_clip, "log_std");

      Mlp::Cache vcache;
      const Matrix v = critic_.forward(sb, &vcache);
      const Matrix err = v - tb.transpose();
      stats.value_loss += 0.5 * err.squaredNorm() / static_cast<double>(n);
      Vector g_critic = Vector::Zero(critic_.params().size());
      critic_.backward(vcache, err / static_cast<double>(b), g_critic);
      adam_step(critic_opt_, critic_.params(), g_critic, cfg_.grad_clip, "critic");
    }
    ++stats.epochs_run;
  }
  ++version_;
  return stats;
}

Matrix Agent::critic_input(const std::vector<Experience>& batch, bool next) const {
  const auto sd = static_cast<Eigen::Index>(state_dim_);
  const auto ad = static_cast<Eigen::Index>(action_dim());
  Matrix in(sd + ad, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Experience& e = batch[i];
    const auto& s = next ? e.next_state : e.state;
    if (static_cast<Eigen::Index>(s.size()) != sd ||
        static_cast<Eigen::Index>(e.action.size()) != ad)
      throw Error(ErrorKind::kShape, "experience shape does not match the agent");
    const auto c = static_cast<Eigen::Index>(i);
    in.col(c).head(sd) = column(s);
    if (next) {
      const std::vector<double> x = sparsemax(policy_.groups, policy_.mean_logits(s));
      in.col(c).tail(ad) = column(x);
    } else {
      in.col(c).tail(ad) = column(e.action);
    }
  }
  return in;
}

std::vector<double> Agent::td_targets(const std::vector<Experience>& batch) const {
  if (cfg_.algo != Algo::kDdpg) throw Error(ErrorKind::kConfig, "td_targets on a PPO agent");
  std::vector<double> y(batch.size());
  Matrix q;
  if (cfg_.gamma != 0.0) q = critic_target_.forward(critic_input(batch, true));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    y[i] = batch[i].reward;
    if (cfg_.gamma != 0.0 && !batch[i].done)
      y[i] += cfg_.gamma * q(0, static_cast<Eigen::Index>(i));
  }
  return y;
}

DdpgStats Agent::ddpg_update(const std::vector<Experience>& batch) {
  if (cfg_.algo != Algo::kDdpg) throw Error(ErrorKind::kConfig, "ddpg_update on a PPO agent");
  DdpgStats stats;
  if (batch.empty()) return stats;
  const auto b = static_cast<Eigen::Index>(batch.size());
  const double inv_b = 1.0 / static_cast<double>(b);
  const auto sd = static_cast<Eigen::Index>(state_dim_);
  const auto ad = static_cast<Eigen::Index>(action_dim());

  const std::vector<double> y = td_targets(batch);
  Mlp::Cache qcache;
  const Matrix q = critic_.forward(critic_input(batch, false), &qcache);
  Matrix err(1, b);
  for (Eigen::Index i = 0; i < b; ++i) err(0, i) = q(0, i) - y[static_cast<std::size_t>(i)];
  stats.critic_loss = 0.5 * err.squaredNorm() * inv_b;
  Vector g_critic = Vector::Zero(critic_.params().size());
  critic_.backward(qcache, err * inv_b, g_critic);
  adam_step(critic_opt_, critic_.params(), g_critic, cfg_.grad_clip, "critic");

  // Actor: ascend Q(s, sparsemax(actor(s))) through the updated critic.
  Matrix states(sd, b);
  for (Eigen::Index i = 0; i < b; ++i) states.col(i) = column(batch[static_cast<std::size_t>(i)].state);
  Mlp::Cache acache;
  const Matrix logits = policy_.actor.forward(states, &acache);
  Matrix xin(sd + ad, b);
  std::vector<std::vector<double>> xs(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i) {
    xs[static_cast<std::size_t>(i)] =
        sparsemax(policy_.groups, std::span<const double>(logits.col(i).data(), ad));
    xin.col(i).head(sd) = states.col(i);
    xin.col(i).tail(ad) = column(xs[static_cast<std::size_t>(i)]);
  }
  Mlp::Cache ccache;
  const Matrix qa = critic_.forward(xin, &ccache);
  stats.mean_q = qa.mean();
  Vector scratch = Vector::Zero(critic_.params().size());
  const Matrix din = critic_.backward(ccache, Matrix::Constant(1, b, -inv_b), scratch);
  Matrix g_logits(ad, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Vector gx = din.col(i).tail(ad);
    const std::vector<double> gz = sparsemax_vjp(
        policy_.groups, xs[static_cast<std::size_t>(i)], std::span<const double>(gx.data(), ad));
    g_logits.col(i) = column(gz);
  }
  Vector g_actor = Vector::Zero(policy_.actor.params().size());
  policy_.actor.backward(acache, g_logits, g_actor);
  adam_step(actor_opt_, policy_.actor.params(), g_actor, cfg_.grad_clip, "actor");

  update_target(cfg_.polyak_tau);
  ++version_;
  return stats;
}

void Agent::update_target(double tau) {
  polyak_update(critic_target_.params(), critic_.params(), tau);
}

}  // namespace lbsim::rl
