#pragma once

#include <cstdint>
#include <vector>

#include "lbsim/topology.hpp"

namespace lbsim {

/// Offered demand per tunnel (Mbps), indexed by tunnel position.
struct TrafficSample {
  std::int64_t t = 0;
  std::vector<double> demand;
};

/// Noisy sinusoid per tunnel: max(0, B + A sin(2 pi t / P + phi) + noise).
struct TrafficConfig {
  std::vector<double> base_mbps;
  std::vector<double> amplitude_mbps;
  std::vector<double> phase_rad;
  double period_steps = 64.0;
  double noise_std_mbps = 0.5;
  std::uint64_t seed = 0;

  /// B=6, A=4, s=0.5, P=64, phi_k = k pi / 3.
  static TrafficConfig default_profile(std::size_t num_tunnels,
                                       std::uint64_t seed = 0);

  /// Throws kConfig if the invariants do not hold for `num_tunnels`.
  void validate(std::size_t num_tunnels) const;
};

/// Deterministic in (cfg, tunnel, t). Throws kNotFound for an unknown tunnel.
double demand_at(const TrafficConfig& cfg, std::size_t tunnel, std::int64_t t);

/// Owns the episode clock; consecutive episodes continue the sinusoid.
class TrafficGenerator {
 public:
  TrafficGenerator(TrafficConfig cfg, std::size_t num_tunnels,
                   std::int64_t start_t = 0);

  TrafficSample sample(std::int64_t t) const;
  std::vector<TrafficSample> sample_episode(std::size_t length);
  TrafficSample next();

  std::int64_t clock() const { return clock_; }
  void set_clock(std::int64_t t) { clock_ = t; }
  const TrafficConfig& config() const { return cfg_; }

 private:
  TrafficConfig cfg_;
  std::size_t num_tunnels_;
  std::int64_t clock_;
};

}  // namespace lbsim
