#include "lbsim/rl/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lbsim/error.hpp"

namespace lbsim::rl {

namespace {

using nlohmann::json;

json config_to_json(const RlConfig& c) {
  return {{"algo", to_string(c.algo)},
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
          {"critic_target", to_string(c.critic_target)},
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

RlConfig config_from_json(const json& j) {
  RlConfig c;
  c.algo = parse_algo(j.at("algo").get<std::string>());
  c.hidden_width = j.at("hidden_width");
  c.hidden_layers = j.at("hidden_layers");
  c.lr = j.at("lr");
  c.fine_tune_lr = j.at("fine_tune_lr");
  c.gamma = j.at("gamma");
  c.grad_clip = j.at("grad_clip");
  c.update_period = j.at("update_period");
  c.clip_eps = j.at("clip_eps");
  c.target_kl = j.at("target_kl");
  c.epochs = j.at("epochs");
  c.minibatch = j.at("minibatch");
  c.init_log_std = j.at("init_log_std");
  c.critic_target = parse_critic_target(j.at("critic_target").get<std::string>());
  c.normalize_advantages = j.at("normalize_advantages");
  c.anneal_lr = j.value("anneal_lr", false);
  c.polyak_tau = j.at("polyak_tau");
  c.replay_capacity = j.at("replay_capacity");
  c.warmup = j.at("warmup");
  c.batch = j.at("batch");
  c.noise_start = j.at("noise_start");
  c.noise_end = j.at("noise_end");
  c.grad_steps_per_update = j.at("grad_steps_per_update");
  return c;
}

json vec_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from_json(const json& j, Eigen::Index expected, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != expected)
    throw Error(ErrorKind::kShape, what + " has " + std::to_string(v.size()) +
                                       " entries, expected " + std::to_string(expected));
  return Eigen::Map<const Vector>(v.data(), expected);
}

json net_to_json(const Mlp& net, const std::string& name) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weight(l);
    json rows = json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(w.cols()));
      for (Eigen::Index c = 0; c < w.cols(); ++c) row[static_cast<std::size_t>(c)] = w(r, c);
      rows.push_back(std::move(row));
    }
    layers.push_back({{"name", name + "." + std::to_string(l)},
                      {"rows", w.rows()},
                      {"cols", w.cols()},
                      {"activation", l + 1 < net.num_layers() ? "tanh" : "linear"},
                      {"weights", std::move(rows)},
                      {"bias", vec_to_json(net.bias(l))}});
  }
  return layers;
}

void net_from_json(Mlp& net, const json& layers, const std::string& name) {
  if (!layers.is_array() || layers.size() != net.num_layers())
    throw Error(ErrorKind::kShape, name + " has " + std::to_string(layers.size()) +
                                       " layers, expected " + std::to_string(net.num_layers()));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const json& L = layers[l];
    const std::string lname = name + "." + std::to_string(l);
    auto w = net.weight(l);
    const json& rows = L.at("weights");
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != w.rows())
      throw Error(ErrorKind::kShape, "layer " + lname + " has " + std::to_string(rows.size()) +
                                         " rows, expected " + std::to_string(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != w.cols())
        throw Error(ErrorKind::kShape, "layer " + lname + " row " + std::to_string(r) + " has " +
                                           std::to_string(row.size()) + " columns, expected " +
                                           std::to_string(w.cols()));
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = row[static_cast<std::size_t>(c)];
    }
    net.bias(l) = vec_from_json(L.at("bias"), net.bias(l).size(), "layer " + lname + " bias");
  }
}

json adam_to_json(const Adam& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps},
          {"t", a.t},   {"m", vec_to_json(a.m)}, {"v", vec_to_json(a.v)}};
}

void adam_from_json(Adam& a, const json& j, const std::string& name) {
  a.lr = j.at("lr");
  a.beta1 = j.at("beta1");
  a.beta2 = j.at("beta2");
  a.eps = j.at("eps");
  a.t = j.at("t");
  const auto m = j.at("m").get<std::vector<double>>();
  const auto v = j.at("v").get<std::vector<double>>();
  if (m.size() != v.size())
    throw Error(ErrorKind::kShape, name + " optimizer moments differ in length");
  a.m = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  a.v = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ck) {
  const Agent& a = ck.agent;
  json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["metadata"] = {{"algo", to_string(a.config().algo)},
                   {"episode", ck.episode},
                   {"policy_version", a.policy_version()},
                   {"config_hash", ck.config_hash},
                   {"rng_state", ck.rng_state},
                   {"state_dim", a.state_dim()},
                   {"groups", a.policy().groups},
                   {"config", config_to_json(a.config())}};
  json nets;
  nets["actor"] = net_to_json(a.policy().actor, "actor");
  nets["critic"] = net_to_json(a.critic(), "critic");
  if (a.config().algo == Algo::kDdpg) nets["critic_target"] = net_to_json(a.critic_target(), "critic_target");
  j["networks"] = std::move(nets);
  if (a.config().algo == Algo::kPpo) j["log_std"] = vec_to_json(a.policy().log_std);
  j["optimizers"] = {{"actor", adam_to_json(a.actor_opt())},
                     {"critic", adam_to_json(a.critic_opt())},
                     {"log_std", adam_to_json(a.log_std_opt())}};
  return j.dump();
}

Checkpoint checkpoint_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    const int version = j.at("schema_version");
    if (version != kCheckpointSchemaVersion)
      throw Error(ErrorKind::kConfig, "unsupported checkpoint schema version " +
                                          std::to_string(version));
    const json& meta = j.at("metadata");
    RlConfig cfg = config_from_json(meta.at("config"));
    const std::size_t state_dim = meta.at("state_dim");
    GroupSizes groups = meta.at("groups").get<GroupSizes>();
    Checkpoint ck{Agent(cfg, state_dim, groups, 0), meta.at("episode"),
                  meta.at("config_hash"), meta.at("rng_state")};
    Agent& a = ck.agent;
    a.set_policy_version(meta.at("policy_version"));
    const json& nets = j.at("networks");
    net_from_json(a.policy().actor, nets.at("actor"), "actor");
    net_from_json(a.critic(), nets.at("critic"), "critic");
    if (cfg.algo == Algo::kDdpg) net_from_json(a.critic_target(), nets.at("critic_target"), "critic_target");
    if (cfg.algo == Algo::kPpo)
      a.policy().log_std = vec_from_json(j.at("log_std"), a.policy().log_std.size(), "log_std");
    const json& opt = j.at("optimizers");
    adam_from_json(a.actor_opt(), opt.at("actor"), "actor");
    adam_from_json(a.critic_opt(), opt.at("critic"), "critic");
    adam_from_json(a.log_std_opt(), opt.at("log_std"), "log_std");
    return ck;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path);
  out << checkpoint_to_json(ckpt) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kNotFound, "cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

void check_compatible(const Agent& agent, std::size_t state_dim, const GroupSizes& groups) {
  const Mlp& actor = agent.policy().actor;
  if (actor.input_dim() != state_dim)
    throw Error(ErrorKind::kShape, "layer actor.0 expects input width " +
                                       std::to_string(actor.input_dim()) +
                                       " but the environment has " + std::to_string(state_dim) +
                                       " tunnels");
  const std::size_t paths = std::accumulate(groups.begin(), groups.end(), std::size_t{0});
  if (actor.output_dim() != paths)
    throw Error(ErrorKind::kShape, "layer actor." + std::to_string(actor.num_layers() - 1) +
                                       " emits " + std::to_string(actor.output_dim()) +
                                       " logits but the environment has " +
                                       std::to_string(paths) + " paths");
  if (agent.policy().groups != groups)
    throw Error(ErrorKind::kShape, "layer actor." + std::to_string(actor.num_layers() - 1) +
                                       " groups logits differently from the environment's tunnels");
}

}  // namespace lbsim::rl
