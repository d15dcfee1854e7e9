#include "lbsim/topology.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lbsim/error.hpp"

namespace lbsim {

using nlohmann::json;

namespace {

std::string tier_name(LinkTier tier) {
  switch (tier) {
    case LinkTier::kHigh:
      return "high";
    case LinkTier::kLow:
      return "low";
    default:
      return "";
  }
}

LinkTier parse_tier(const std::string& s) {
  if (s == "high") return LinkTier::kHigh;
  if (s == "low") return LinkTier::kLow;
  if (s.empty()) return LinkTier::kUnspecified;
  throw Error(ErrorKind::kParse, "unknown link tier '" + s + "'");
}

std::string node_string(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw Error(ErrorKind::kParse, "node identifier must be a string or integer");
}

}  // namespace

Topology::Topology(std::vector<std::string> nodes, std::vector<Link> links,
                   std::vector<Tunnel> tunnels)
    : nodes_(std::move(nodes)),
      links_(std::move(links)),
      tunnels_(std::move(tunnels)) {
  std::set<std::string> node_set(nodes_.begin(), nodes_.end());
  if (node_set.size() != nodes_.size())
    throw Error(ErrorKind::kValidation, "duplicate node identifier");

  for (std::size_t i = 0; i < links_.size(); ++i) {
    const Link& l = links_[i];
    if (!link_by_id_.emplace(l.id, i).second)
      throw Error(ErrorKind::kValidation, "duplicate link id '" + l.id + "'");
    if (!(l.capacity_mbps > 0.0))
      throw Error(ErrorKind::kValidation,
                  "link '" + l.id + "' capacity must be positive");
    if (!(l.prop_delay_ms >= 0.0))
      throw Error(ErrorKind::kValidation,
                  "link '" + l.id + "' propagation delay must be >= 0");
    if (!node_set.count(l.src) || !node_set.count(l.dst))
      throw Error(ErrorKind::kValidation,
                  "link '" + l.id + "' references an unknown node");
  }

  if (tunnels_.empty())
    throw Error(ErrorKind::kValidation, "topology has no tunnels");

  for (std::size_t k = 0; k < tunnels_.size(); ++k) {
    Tunnel& t = tunnels_[k];
    if (!tunnel_by_id_.emplace(t.id, k).second)
      throw Error(ErrorKind::kValidation, "duplicate tunnel id '" + t.id + "'");
    if (t.paths.empty())
      throw Error(ErrorKind::kValidation, "tunnel '" + t.id + "' has no paths");
    for (std::size_t p = 0; p < t.paths.size(); ++p) {
      PathDef& path = t.paths[p];
      path.tunnel = k;
      path.index = p;
      const std::string where =
          "tunnel '" + t.id + "' path " + std::to_string(p);
      if (path.links.empty())
        throw Error(ErrorKind::kValidation, where + " is empty");
      std::set<std::size_t> seen;
      std::string at = t.src;
      for (std::size_t li : path.links) {
        if (li >= links_.size())
          throw Error(ErrorKind::kValidation, where + " has a dangling link");
        const Link& l = links_[li];
        if (!seen.insert(li).second)
          throw Error(ErrorKind::kValidation,
                      where + " repeats link '" + l.id + "'");
        if (l.src != at)
          throw Error(ErrorKind::kValidation,
                      where + " is disconnected at link '" + l.id + "'");
        at = l.dst;
      }
      if (at != t.dst)
        throw Error(ErrorKind::kValidation,
                    where + " does not end at tunnel destination");
    }
  }

  std::size_t offset = 0;
  for (const Tunnel& t : tunnels_) {
    offsets_.push_back(offset);
    for (const PathDef& p : t.paths) tunnel_of_.push_back(p.tunnel);
    offset += t.paths.size();
  }
  paths_on_link_.resize(links_.size());
  for (std::size_t f = 0; f < num_paths(); ++f)
    for (std::size_t li : flat_path(f).links) paths_on_link_[li].push_back(f);
}

std::size_t Topology::link_index(std::string_view id) const {
  auto it = link_by_id_.find(std::string(id));
  if (it == link_by_id_.end())
    throw Error(ErrorKind::kNotFound, "unknown link '" + std::string(id) + "'");
  return it->second;
}

std::size_t Topology::tunnel_index(std::string_view id) const {
  auto it = tunnel_by_id_.find(std::string(id));
  if (it == tunnel_by_id_.end())
    throw Error(ErrorKind::kNotFound, "unknown tunnel '" + std::string(id) + "'");
  return it->second;
}

double Topology::path_prop_delay(std::size_t flat) const {
  double sum = 0.0;
  for (std::size_t li : flat_path(flat).links) sum += links_[li].prop_delay_ms;
  return sum;
}

double Topology::path_bottleneck(std::size_t flat) const {
  double cap = links_[flat_path(flat).links.front()].capacity_mbps;
  for (std::size_t li : flat_path(flat).links)
    cap = std::min(cap, links_[li].capacity_mbps);
  return cap;
}

double Topology::max_capacity() const {
  double c = 0.0;
  for (const Link& l : links_) c = std::max(c, l.capacity_mbps);
  return c;
}

double Topology::min_capacity() const {
  double c = links_.empty() ? 0.0 : links_.front().capacity_mbps;
  for (const Link& l : links_) c = std::min(c, l.capacity_mbps);
  return c;
}

std::vector<Link> path_links(const Topology& topo, std::size_t tunnel,
                             std::size_t path) {
  if (tunnel >= topo.num_tunnels())
    throw Error(ErrorKind::kNotFound,
                "unknown tunnel index " + std::to_string(tunnel));
  if (path >= topo.path_count(tunnel))
    throw Error(ErrorKind::kNotFound,
                "unknown path index " + std::to_string(path) + " in tunnel '" +
                    topo.tunnels()[tunnel].id + "'");
  std::vector<Link> out;
  for (std::size_t li : topo.tunnels()[tunnel].paths[path].links)
    out.push_back(topo.links()[li]);
  return out;
}

Topology load_topology(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("topology parse error: ") + e.what());
  }
  try {
    std::vector<std::string> nodes;
    for (const auto& n : doc.at("nodes")) nodes.push_back(node_string(n));

    std::vector<Link> links;
    std::unordered_map<std::string, std::size_t> by_id;
    for (const auto& jl : doc.at("links")) {
      Link l;
      l.id = jl.at("id").get<std::string>();
      l.src = node_string(jl.at("src"));
      l.dst = node_string(jl.at("dst"));
      l.capacity_mbps = jl.at("capacity_mbps").get<double>();
      l.prop_delay_ms = jl.at("prop_delay_ms").get<double>();
      l.tier = parse_tier(jl.value("tier", std::string()));
      by_id.emplace(l.id, links.size());
      links.push_back(std::move(l));
    }

    std::vector<Tunnel> tunnels;
    for (const auto& jt : doc.at("tunnels")) {
      Tunnel t;
      t.id = jt.at("id").get<std::string>();
      t.src = node_string(jt.at("src"));
      t.dst = node_string(jt.at("dst"));
      for (const auto& jp : jt.at("paths")) {
        PathDef p;
        for (const auto& jid : jp) {
          const auto id = jid.get<std::string>();
          auto it = by_id.find(id);
          if (it == by_id.end())
            throw Error(ErrorKind::kValidation,
                        "tunnel '" + t.id + "' references unknown link '" + id + "'");
          p.links.push_back(it->second);
        }
        t.paths.push_back(std::move(p));
      }
      tunnels.push_back(std::move(t));
    }
    return Topology(std::move(nodes), std::move(links), std::move(tunnels));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("topology schema error: ") + e.what());
  }
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open topology file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_topology(ss.str());
}

std::string serialize_topology(const Topology& topo) {
  json doc;
  doc["nodes"] = topo.nodes();
  doc["links"] = json::array();
  for (const Link& l : topo.links()) {
    json jl = {{"id", l.id},
               {"src", l.src},
               {"dst", l.dst},
               {"capacity_mbps", l.capacity_mbps},
               {"prop_delay_ms", l.prop_delay_ms}};
    if (l.tier != LinkTier::kUnspecified) jl["tier"] = tier_name(l.tier);
    doc["links"].push_back(std::move(jl));
  }
  doc["tunnels"] = json::array();
  for (const Tunnel& t : topo.tunnels()) {
    json jt = {{"id", t.id}, {"src", t.src}, {"dst", t.dst}};
    jt["paths"] = json::array();
    for (const PathDef& p : t.paths) {
      json ids = json::array();
      for (std::size_t li : p.links) ids.push_back(topo.links()[li].id);
      jt["paths"].push_back(std::move(ids));
    }
    doc["tunnels"].push_back(std::move(jt));
  }
  return doc.dump(2);
}

namespace {

// Per-link propagation delays (ms), symmetric per node pair. Chosen so that
// every path total matches the reference Abilene path delays:
//   1-5 slow 9.0, fast 1.67; 4-9 slow 4.19, fast 1.28; 4-10 slow 7.31, fast 1.65.
struct EdgeDelay {
  int a, b;
  double ms;
  LinkTier tier;
};

constexpr EdgeDelay kAbileneEdges[] = {
    // fast, capacity-limited links
    {1, 3, 0.20, LinkTier::kLow},
    {3, 10, 0.25, LinkTier::kLow},
    {10, 9, 0.37, LinkTier::kLow},
    {9, 6, 0.40, LinkTier::kLow},
    {6, 5, 0.45, LinkTier::kLow},
    {4, 5, 0.43, LinkTier::kLow},
    // slow, high-capacity links
    {1, 2, 2.00, LinkTier::kHigh},
    {2, 11, 2.00, LinkTier::kHigh},
    {11, 8, 2.30, LinkTier::kHigh},
    {8, 7, 1.20, LinkTier::kHigh},
    {7, 5, 1.50, LinkTier::kHigh},
    {4, 7, 1.50, LinkTier::kHigh},
    {8, 9, 1.49, LinkTier::kHigh},
    {11, 10, 2.31, LinkTier::kHigh},
};

struct TunnelNodes {
  int src, dst;
  std::vector<int> slow;
  std::vector<int> fast;
};

const std::vector<TunnelNodes>& abilene_tunnels() {
  static const std::vector<TunnelNodes> t = {
      {1, 5, {1, 2, 11, 8, 7, 5}, {1, 3, 10, 9, 6, 5}},
      {5, 1, {5, 7, 8, 11, 2, 1}, {5, 6, 9, 10, 3, 1}},
      {4, 9, {4, 7, 8, 9}, {4, 5, 6, 9}},
      {9, 4, {9, 8, 7, 4}, {9, 6, 5, 4}},
      {4, 10, {4, 7, 8, 11, 10}, {4, 5, 6, 9, 10}},
      {10, 4, {10, 11, 8, 7, 4}, {10, 9, 6, 5, 4}},
  };
  return t;
}

std::string link_name(int a, int b) {
  return "L" + std::to_string(a) + "-" + std::to_string(b);
}

}  // namespace

Topology build_abilene(AbileneCapacities caps) {
  std::vector<std::string> nodes;
  for (int n = 1; n <= 11; ++n) nodes.push_back(std::to_string(n));

  std::vector<Link> links;
  std::unordered_map<std::string, std::size_t> by_name;
  for (const EdgeDelay& e : kAbileneEdges) {
    for (auto [s, d] : {std::pair{e.a, e.b}, std::pair{e.b, e.a}}) {
      Link l;
      l.id = link_name(s, d);
      l.src = std::to_string(s);
      l.dst = std::to_string(d);
      l.prop_delay_ms = e.ms;
      l.tier = e.tier;
      l.capacity_mbps = e.tier == LinkTier::kHigh ? caps.high_mbps : caps.low_mbps;
      by_name.emplace(l.id, links.size());
      links.push_back(std::move(l));
    }
  }

  std::vector<Tunnel> tunnels;
  for (const TunnelNodes& tn : abilene_tunnels()) {
    Tunnel t;
    t.id = std::to_string(tn.src) + "-" + std::to_string(tn.dst);
    t.src = std::to_string(tn.src);
    t.dst = std::to_string(tn.dst);
    for (const auto* seq : {&tn.slow, &tn.fast}) {
      PathDef p;
      for (std::size_t i = 0; i + 1 < seq->size(); ++i)
        p.links.push_back(by_name.at(link_name((*seq)[i], (*seq)[i + 1])));
      t.paths.push_back(std::move(p));
    }
    tunnels.push_back(std::move(t));
  }
  return Topology(std::move(nodes), std::move(links), std::move(tunnels));
}

bool operator==(const Link& a, const Link& b) {
  return a.id == b.id && a.src == b.src && a.dst == b.dst &&
         a.capacity_mbps == b.capacity_mbps &&
         a.prop_delay_ms == b.prop_delay_ms && a.tier == b.tier;
}

bool operator==(const Topology& a, const Topology& b) {
  if (a.nodes() != b.nodes() || a.links() != b.links() ||
      a.num_tunnels() != b.num_tunnels())
    return false;
  for (std::size_t k = 0; k < a.num_tunnels(); ++k) {
    const Tunnel& x = a.tunnels()[k];
    const Tunnel& y = b.tunnels()[k];
    if (x.id != y.id || x.src != y.src || x.dst != y.dst ||
        x.paths.size() != y.paths.size())
      return false;
    for (std::size_t p = 0; p < x.paths.size(); ++p)
      if (x.paths[p].links != y.paths[p].links) return false;
  }
  return true;
}

}  // namespace lbsim
