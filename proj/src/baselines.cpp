#include "lbsim/baselines.hpp"

#include "lbsim/error.hpp"

namespace lbsim {

BaselineKind BaselineKind::parse(std::string_view name, std::size_t static_path) {
  BaselineKind k;
  k.static_path = static_path;
  if (name == "static")
    k.type = Type::kStatic;
  else if (name == "random")
    k.type = Type::kRandom;
  else if (name == "ecmp")
    k.type = Type::kEcmp;
  else if (name == "ucmp")
    k.type = Type::kUcmp;
  else
    throw Error(ErrorKind::kConfig, "unknown baseline policy '" + std::string(name) + "'");
  return k;
}

std::string BaselineKind::name() const {
  switch (type) {
    case Type::kStatic:
      return "static";
    case Type::kRandom:
      return "random";
    case Type::kEcmp:
      return "ecmp";
    case Type::kUcmp:
      return "ucmp";
  }
  return "?";
}

SplitAction baseline_action(const BaselineKind& kind, const Topology& topo,
                            std::span<const double> /*demand*/,
                            std::mt19937_64& rng) {
  SplitAction a;
  a.ratios.assign(topo.num_paths(), 0.0);
  for (std::size_t k = 0; k < topo.num_tunnels(); ++k) {
    const std::size_t off = topo.path_offset(k);
    const std::size_t n = topo.path_count(k);
    switch (kind.type) {
      case BaselineKind::Type::kStatic:
        if (kind.static_path >= n)
          throw Error(ErrorKind::kConfig, "static path index " +
                                              std::to_string(kind.static_path) +
                                              " invalid for tunnel '" +
                                              topo.tunnels()[k].id + "'");
        a.ratios[off + kind.static_path] = 1.0;
        break;
      case BaselineKind::Type::kEcmp:
        for (std::size_t p = 0; p < n; ++p) a.ratios[off + p] = 1.0 / static_cast<double>(n);
        break;
      case BaselineKind::Type::kUcmp: {
        double total = 0.0;
        for (std::size_t p = 0; p < n; ++p) total += topo.path_bottleneck(off + p);
        for (std::size_t p = 0; p < n; ++p)
          a.ratios[off + p] = topo.path_bottleneck(off + p) / total;
        break;
      }
      case BaselineKind::Type::kRandom: {
        // Dirichlet(1,...,1) via normalized unit exponentials.
        std::exponential_distribution<double> ex(1.0);
        double total = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
          a.ratios[off + p] = ex(rng);
          total += a.ratios[off + p];
        }
        for (std::size_t p = 0; p < n; ++p) a.ratios[off + p] /= total;
        break;
      }
    }
  }
  return a;
}

}  // namespace lbsim
