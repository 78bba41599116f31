#include "odcal/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <queue>
#include <sstream>

#include "odcal/microsim.hpp"

namespace odcal {

namespace {

std::string no_path_message(NodeId origin, NodeId dest) {
  std::ostringstream os;
  os << "no path from node " << origin << " to node " << dest;
  return os.str();
}

}  // namespace

NoPath::NoPath(NodeId origin, NodeId dest) : std::runtime_error(no_path_message(origin, dest)) {}

NetworkSpec::NetworkSpec(std::vector<NodeId> nodes, std::vector<LinkSpec> links,
                         std::vector<OdPair> od_pairs, std::vector<LinkId> detectors)
    : nodes_(std::move(nodes)),
      links_(std::move(links)),
      od_pairs_(std::move(od_pairs)),
      detectors_(std::move(detectors)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) slot_of_.emplace_back(nodes_[i], static_cast<int>(i));
  std::sort(slot_of_.begin(), slot_of_.end());
  for (std::size_t i = 1; i < slot_of_.size(); ++i) {
    if (slot_of_[i].first == slot_of_[i - 1].first) {
      throw NetworkError("duplicate node id " + std::to_string(slot_of_[i].first));
    }
  }

  out_.assign(nodes_.size(), {});
  in_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < links_.size(); ++i) {
    LinkSpec& l = links_[i];
    l.id = static_cast<LinkId>(i);
    const std::string tag = "link " + std::to_string(i) + ": ";
    if (!(l.length > 0.0) || !std::isfinite(l.length)) throw NetworkError(tag + "length must be > 0");
    if (!(l.free_flow_speed > 0.0) || !std::isfinite(l.free_flow_speed)) {
      throw NetworkError(tag + "free-flow speed must be > 0");
    }
    if (l.lane_count != 1) throw NetworkError(tag + "only single-lane links are supported");
    if (l.from_node == l.to_node) throw NetworkError(tag + "self loop");
    if (!has_node(l.from_node) || !has_node(l.to_node)) throw NetworkError(tag + "unknown endpoint");
    l.has_detector = false;
    out_[static_cast<std::size_t>(node_slot(l.from_node))].push_back(l.id);
    in_[static_cast<std::size_t>(node_slot(l.to_node))].push_back(l.id);
  }

  detector_slot_.assign(links_.size(), -1);
  for (std::size_t d = 0; d < detectors_.size(); ++d) {
    const LinkId id = detectors_[d];
    if (id < 0 || id >= link_count()) throw NetworkError("detector on unknown link " + std::to_string(id));
    if (detector_slot_[static_cast<std::size_t>(id)] >= 0) {
      throw NetworkError("duplicate detector on link " + std::to_string(id));
    }
    detector_slot_[static_cast<std::size_t>(id)] = static_cast<int>(d);
    links_[static_cast<std::size_t>(id)].has_detector = true;
  }

  const EdgeCosts unit(links_.size(), 1.0);
  for (const OdPair& od : od_pairs_) {
    if (!has_node(od.origin) || !has_node(od.destination)) throw NetworkError("OD pair on unknown node");
    if (od.origin == od.destination) throw NetworkError("OD pair with origin == destination");
    if (outgoing(od.origin).empty()) throw NetworkError("OD origin without outgoing links");
    if (incoming(od.destination).empty()) throw NetworkError("OD destination without incoming links");
    if (!ShortestPathTree(*this, unit, od.destination).reachable_from(od.origin)) {
      throw NetworkError(no_path_message(od.origin, od.destination));
    }
  }

  // Kahn's algorithm over the link successor relation.
  std::vector<int> indegree(links_.size(), 0);
  for (const LinkSpec& l : links_) indegree[static_cast<std::size_t>(l.id)] =
      static_cast<int>(incoming(l.from_node).size());
  std::vector<LinkId> ready;
  for (const LinkSpec& l : links_) {
    if (indegree[static_cast<std::size_t>(l.id)] == 0) ready.push_back(l.id);
  }
  std::vector<LinkId> topo;
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end(), std::greater<>());
    const LinkId l = ready.back();
    ready.pop_back();
    topo.push_back(l);
    for (LinkId m : outgoing(links_[static_cast<std::size_t>(l)].to_node)) {
      if (--indegree[static_cast<std::size_t>(m)] == 0) ready.push_back(m);
    }
  }
  if (topo.size() == links_.size()) {
    update_order_.assign(topo.rbegin(), topo.rend());
  } else {
    update_order_.resize(links_.size());
    for (std::size_t i = 0; i < links_.size(); ++i) update_order_[i] = static_cast<LinkId>(i);
  }
}

int NetworkSpec::node_slot(NodeId node) const {
  auto it = std::lower_bound(slot_of_.begin(), slot_of_.end(), std::pair<NodeId, int>{node, -1});
  if (it == slot_of_.end() || it->first != node) throw NetworkError("unknown node " + std::to_string(node));
  return it->second;
}

bool NetworkSpec::has_node(NodeId node) const noexcept {
  auto it = std::lower_bound(slot_of_.begin(), slot_of_.end(), std::pair<NodeId, int>{node, -1});
  return it != slot_of_.end() && it->first == node;
}

const std::vector<LinkId>& NetworkSpec::outgoing(NodeId node) const {
  return out_[static_cast<std::size_t>(node_slot(node))];
}

const std::vector<LinkId>& NetworkSpec::incoming(NodeId node) const {
  return in_[static_cast<std::size_t>(node_slot(node))];
}

void NetworkSpec::write(std::ostream& os) const {
  os << "# odcal network v1\n";
  os << std::setprecision(17);
  for (NodeId n : nodes_) os << "node " << n << '\n';
  for (const LinkSpec& l : links_) {
    os << "link " << l.id << ' ' << l.from_node << ' ' << l.to_node << ' ' << l.length << ' '
       << l.free_flow_speed << ' ' << l.lane_count << '\n';
  }
  for (const OdPair& od : od_pairs_) os << "od " << od.origin << ' ' << od.destination << '\n';
  for (LinkId d : detectors_) os << "detector " << d << '\n';
}

NetworkSpec read_network(std::istream& is) {
  std::vector<NodeId> nodes;
  std::vector<LinkSpec> links;
  std::vector<OdPair> ods;
  std::vector<LinkId> detectors;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    const auto fail = [&](const std::string& what) {
      return NetworkError("network line " + std::to_string(line_no) + ": " + what);
    };
    if (kind == "node") {
      NodeId n{};
      if (!(ls >> n)) throw fail("expected node id");
      nodes.push_back(n);
    } else if (kind == "link") {
      LinkSpec l;
      if (!(ls >> l.id >> l.from_node >> l.to_node >> l.length >> l.free_flow_speed >> l.lane_count)) {
        throw fail("expected: link <id> <from> <to> <length> <speed> <lanes>");
      }
      if (l.id != static_cast<LinkId>(links.size())) throw fail("link ids must be 0..L-1 in order");
      links.push_back(l);
    } else if (kind == "od") {
      OdPair od;
      if (!(ls >> od.origin >> od.destination)) throw fail("expected: od <origin> <destination>");
      ods.push_back(od);
    } else if (kind == "detector") {
      LinkId d{};
      if (!(ls >> d)) throw fail("expected: detector <link id>");
      detectors.push_back(d);
    } else {
      throw fail("unknown record '" + kind + "'");
    }
    std::string extra;
    if (ls >> extra) throw fail("trailing token '" + extra + "'");
  }
  return NetworkSpec(std::move(nodes), std::move(links), std::move(ods), std::move(detectors));
}

NetworkSpec load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open network file " + path.string());
  return read_network(in);
}

void save_network(const NetworkSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw NetworkError("cannot write network file " + path.string());
  spec.write(out);
}

NetworkSpec build_nguyen_dupuis(double length_scale) {
  struct Base {
    NodeId from, to;
    double cost;
  };
  // Classic Nguyen-Dupuis free-flow link costs.
  static constexpr std::array<Base, 19> kLinks{{{1, 5, 7},   {1, 12, 9},  {4, 5, 9},  {4, 9, 12},
                                                {5, 6, 3},   {5, 9, 9},   {6, 7, 5},  {6, 10, 13},
                                                {7, 8, 5},   {7, 11, 9},  {8, 2, 9},  {9, 10, 10},
                                                {9, 13, 9},  {10, 11, 6}, {11, 2, 9}, {11, 3, 8},
                                                {12, 6, 7},  {12, 8, 14}, {13, 3, 11}}};
  std::vector<NodeId> nodes(13);
  for (int i = 0; i < 13; ++i) nodes[static_cast<std::size_t>(i)] = i + 1;
  std::vector<LinkSpec> links;
  links.reserve(kLinks.size());
  for (const Base& b : kLinks) {
    LinkSpec l;
    l.from_node = b.from;
    l.to_node = b.to;
    l.length = b.cost * kNguyenDupuisMetersPerUnit * length_scale;
    l.free_flow_speed = kDefaultFreeFlowSpeed;
    links.push_back(l);
  }
  const auto find = [&](NodeId from, NodeId to) {
    for (const LinkSpec& l : links) {
      if (l.from_node == from && l.to_node == to) return static_cast<LinkId>(&l - links.data());
    }
    throw NetworkError("missing canonical link");
  };
  std::vector<LinkId> detectors{find(5, 6),  find(6, 7),   find(7, 8),   find(8, 2), find(9, 10),
                                find(10, 11), find(11, 2), find(11, 3), find(13, 3)};
  std::vector<OdPair> ods{{1, 2}, {1, 3}, {4, 2}, {4, 3}};
  return NetworkSpec(std::move(nodes), std::move(links), std::move(ods), std::move(detectors));
}

EdgeCosts free_flow_costs(const NetworkSpec& spec) {
  EdgeCosts costs;
  costs.reserve(spec.links().size());
  for (const LinkSpec& l : spec.links()) costs.push_back(l.length / l.free_flow_speed);
  return costs;
}

ShortestPathTree::ShortestPathTree(const NetworkSpec& spec, const EdgeCosts& costs, NodeId destination)
    : spec_(&spec), costs_(costs), destination_(destination) {
  if (costs_.size() != spec.links().size()) throw NetworkError("edge cost vector size mismatch");
  constexpr double inf = std::numeric_limits<double>::infinity();
  dist_.assign(spec.nodes().size(), inf);
  // Reverse Dijkstra: distance from every node to the destination.
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  const int dst_slot = spec.node_slot(destination);
  dist_[static_cast<std::size_t>(dst_slot)] = 0.0;
  heap.emplace(0.0, dst_slot);
  while (!heap.empty()) {
    auto [d, slot] = heap.top();
    heap.pop();
    if (d > dist_[static_cast<std::size_t>(slot)]) continue;
    for (LinkId l : spec.in_[static_cast<std::size_t>(slot)]) {
      const int from = spec.node_slot(spec.link(l).from_node);
      const double nd = d + costs_[static_cast<std::size_t>(l)];
      if (nd < dist_[static_cast<std::size_t>(from)]) {
        dist_[static_cast<std::size_t>(from)] = nd;
        heap.emplace(nd, from);
      }
    }
  }
}

double ShortestPathTree::distance_from(NodeId node) const {
  return dist_[static_cast<std::size_t>(spec_->node_slot(node))];
}

bool ShortestPathTree::reachable_from(NodeId node) const { return std::isfinite(distance_from(node)); }

Route ShortestPathTree::route_from(NodeId origin) const {
  if (!reachable_from(origin)) throw NoPath(origin, destination_);
  Route route;
  NodeId at = origin;
  // Greedy descent along tight links, smallest link id first, yields the
  // lexicographically smallest optimal link sequence.
  while (at != destination_) {
    const double here = distance_from(at);
    const double tol = 1e-12 * std::max(1.0, here);
    LinkId chosen = -1;
    for (LinkId l : spec_->outgoing(at)) {
      const double via = costs_[static_cast<std::size_t>(l)] + distance_from(spec_->link(l).to_node);
      if (via <= here + tol) {
        chosen = l;
        break;
      }
    }
    if (chosen < 0 || route.size() > spec_->links().size()) throw NoPath(origin, destination_);
    route.push_back(chosen);
    at = spec_->link(chosen).to_node;
  }
  return route;
}

Route shortest_path(const NetworkSpec& spec, const EdgeCosts& costs, NodeId origin, NodeId dest) {
  return ShortestPathTree(spec, costs, dest).route_from(origin);
}

double route_cost(const EdgeCosts& costs, const Route& route) {
  double total = 0.0;
  for (LinkId l : route) total += costs[static_cast<std::size_t>(l)];
  return total;
}

bool is_contiguous_route(const NetworkSpec& spec, const Route& route, NodeId origin, NodeId dest) {
  if (route.empty()) return origin == dest;
  if (spec.link(route.front()).from_node != origin) return false;
  if (spec.link(route.back()).to_node != dest) return false;
  for (std::size_t i = 1; i < route.size(); ++i) {
    if (spec.link(route[i - 1]).to_node != spec.link(route[i]).from_node) return false;
  }
  return true;
}

EdgeCosts edge_costs_from_snapshot(const NetworkSpec& spec, const SimSnapshot& snapshot,
                                   double min_speed) {
  if (snapshot.mean_speed.size() != spec.links().size()) {
    throw NetworkError("snapshot link count does not match network");
  }
  EdgeCosts costs(spec.links().size());
  for (const LinkSpec& l : spec.links()) {
    const auto i = static_cast<std::size_t>(l.id);
    const double v = snapshot.vehicle_count[i] == 0 ? l.free_flow_speed : snapshot.mean_speed[i];
    costs[i] = l.length / std::max(v, min_speed);
  }
  return costs;
}

}  // namespace odcal
