#include "lbsim/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lbsim/error.hpp"

namespace lbsim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// One independent noise stream per (seed, tunnel, t).
double noise(std::uint64_t seed, std::size_t tunnel, std::int64_t t, double std) {
  if (std <= 0.0) return 0.0;
  std::uint64_t key = splitmix64(seed);
  key = splitmix64(key ^ static_cast<std::uint64_t>(tunnel));
  key = splitmix64(key ^ static_cast<std::uint64_t>(t));
  std::mt19937_64 gen(key);
  std::normal_distribution<double> dist(0.0, std);
  return dist(gen);
}

}  // namespace

TrafficConfig TrafficConfig::default_profile(std::size_t num_tunnels,
                                             std::uint64_t seed) {
  TrafficConfig cfg;
  cfg.base_mbps.assign(num_tunnels, 6.0);
  cfg.amplitude_mbps.assign(num_tunnels, 4.0);
  for (std::size_t k = 0; k < num_tunnels; ++k)
    cfg.phase_rad.push_back(static_cast<double>(k) * std::numbers::pi / 3.0);
  cfg.period_steps = 64.0;
  cfg.noise_std_mbps = 0.5;
  cfg.seed = seed;
  return cfg;
}

void TrafficConfig::validate(std::size_t num_tunnels) const {
  if (base_mbps.size() != num_tunnels || amplitude_mbps.size() != num_tunnels ||
      phase_rad.size() != num_tunnels)
    throw Error(ErrorKind::kConfig, "traffic profile size does not match tunnel count");
  for (std::size_t k = 0; k < num_tunnels; ++k)
    if (!(amplitude_mbps[k] >= 0.0) || !(base_mbps[k] >= amplitude_mbps[k]))
      throw Error(ErrorKind::kConfig,
                  "traffic profile needs base >= amplitude >= 0 (tunnel " +
                      std::to_string(k) + ")");
  if (!(period_steps >= 2.0))
    throw Error(ErrorKind::kConfig, "traffic period must be >= 2 steps");
  if (!(noise_std_mbps >= 0.0))
    throw Error(ErrorKind::kConfig, "traffic noise std must be >= 0");
}

double demand_at(const TrafficConfig& cfg, std::size_t tunnel, std::int64_t t) {
  if (tunnel >= cfg.base_mbps.size())
    throw Error(ErrorKind::kNotFound, "unknown tunnel index " + std::to_string(tunnel));
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) /
                           cfg.period_steps +
                       cfg.phase_rad[tunnel];
  const double v = cfg.base_mbps[tunnel] +
                   cfg.amplitude_mbps[tunnel] * std::sin(angle) +
                   noise(cfg.seed, tunnel, t, cfg.noise_std_mbps);
  return std::max(0.0, v);
}

TrafficGenerator::TrafficGenerator(TrafficConfig cfg, std::size_t num_tunnels,
                                   std::int64_t start_t)
    : cfg_(std::move(cfg)), num_tunnels_(num_tunnels), clock_(start_t) {
  cfg_.validate(num_tunnels_);
}

TrafficSample TrafficGenerator::sample(std::int64_t t) const {
  TrafficSample s;
  s.t = t;
  s.demand.resize(num_tunnels_);
  for (std::size_t k = 0; k < num_tunnels_; ++k) s.demand[k] = demand_at(cfg_, k, t);
  return s;
}

TrafficSample TrafficGenerator::next() { return sample(clock_++); }

std::vector<TrafficSample> TrafficGenerator::sample_episode(std::size_t length) {
  std::vector<TrafficSample> out;
  out.reserve(length);
  for (std::size_t i = 0; i < length; ++i) out.push_back(next());
  return out;
}

}  // namespace lbsim
