#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lbsim {

enum class LinkTier { kUnspecified, kHigh, kLow };

struct Link {
  std::string id;
  std::string src;
  std::string dst;
  double capacity_mbps = 0.0;
  double prop_delay_ms = 0.0;
  LinkTier tier = LinkTier::kUnspecified;
};

struct PathDef {
  std::size_t tunnel = 0;
  std::size_t index = 0;           // position within the tunnel
  std::vector<std::size_t> links;  // indices into Topology::links(), in order
};

struct Tunnel {
  std::string id;
  std::string src;
  std::string dst;
  std::vector<PathDef> paths;
};

/// Immutable network description: directed links plus tunnels with ordered
/// candidate paths. Split actions and demand vectors are laid out against the
/// flat path numbering exposed here (tunnel-major, path-minor).
class Topology {
 public:
  Topology(std::vector<std::string> nodes, std::vector<Link> links,
           std::vector<Tunnel> tunnels);

  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Tunnel>& tunnels() const { return tunnels_; }

  std::size_t num_links() const { return links_.size(); }
  std::size_t num_tunnels() const { return tunnels_.size(); }
  std::size_t num_paths() const { return tunnel_of_.size(); }

  std::size_t path_offset(std::size_t tunnel) const { return offsets_[tunnel]; }
  std::size_t path_count(std::size_t tunnel) const {
    return tunnels_[tunnel].paths.size();
  }
  const PathDef& flat_path(std::size_t flat) const {
    return tunnels_[tunnel_of_[flat]].paths[flat - offsets_[tunnel_of_[flat]]];
  }
  std::size_t tunnel_of(std::size_t flat) const { return tunnel_of_[flat]; }

  /// Flat path indices crossing each link.
  const std::vector<std::size_t>& paths_on_link(std::size_t link) const {
    return paths_on_link_[link];
  }

  std::size_t link_index(std::string_view id) const;
  std::size_t tunnel_index(std::string_view id) const;

  /// Sum of link propagation delays along a path.
  double path_prop_delay(std::size_t flat) const;
  /// Minimum link capacity along a path.
  double path_bottleneck(std::size_t flat) const;

  double max_capacity() const;
  double min_capacity() const;

 private:
  std::vector<std::string> nodes_;
  std::vector<Link> links_;
  std::vector<Tunnel> tunnels_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> tunnel_of_;
  std::vector<std::vector<std::size_t>> paths_on_link_;
  std::unordered_map<std::string, std::size_t> link_by_id_;
  std::unordered_map<std::string, std::size_t> tunnel_by_id_;
};

/// Resolved links of path `path` in tunnel `tunnel`. Throws kNotFound.
std::vector<Link> path_links(const Topology& topo, std::size_t tunnel,
                             std::size_t path);

Topology load_topology(std::string_view json_text);
Topology load_topology_file(const std::string& path);
std::string serialize_topology(const Topology& topo);

struct AbileneCapacities {
  double high_mbps = 20.0;  // slow (green) paths
  double low_mbps = 10.0;   // fast (red) paths
};

/// Abilene with the six tunnels (1,5),(5,1),(4,9),(9,4),(4,10),(10,4), each
/// with a high-capacity slow path (index 0) and a low-capacity fast path
/// (index 1).
Topology build_abilene(AbileneCapacities caps = {});

bool operator==(const Link& a, const Link& b);
bool operator==(const Topology& a, const Topology& b);

}  // namespace lbsim
