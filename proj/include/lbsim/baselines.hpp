#pragma once

#include <random>
#include <span>
#include <string>
#include <string_view>

#include "lbsim/flow_env.hpp"
#include "lbsim/topology.hpp"

namespace lbsim {

struct BaselineKind {
  enum class Type { kStatic, kRandom, kEcmp, kUcmp };
  Type type = Type::kEcmp;
  std::size_t static_path = 1;  // only for kStatic

  static BaselineKind parse(std::string_view name, std::size_t static_path = 1);
  std::string name() const;
};

/// Non-learning split policy. Random draws a Dirichlet(1,...,1) split per
/// tunnel from `rng`; the others ignore it.
SplitAction baseline_action(const BaselineKind& kind, const Topology& topo,
                            std::span<const double> demand, std::mt19937_64& rng);

}  // namespace lbsim
