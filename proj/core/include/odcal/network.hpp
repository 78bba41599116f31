#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace odcal {

using NodeId = int;
using LinkId = int;
using Route = std::vector<LinkId>;

struct LinkSpec {
  LinkId id = 0;
  NodeId from_node = 0;
  NodeId to_node = 0;
  double length = 0.0;           // m
  double free_flow_speed = 0.0;  // m/s
  int lane_count = 1;
  bool has_detector = false;
};

struct OdPair {
  NodeId origin = 0;
  NodeId destination = 0;
  friend bool operator==(const OdPair&, const OdPair&) = default;
};

class NoPath : public std::runtime_error {
 public:
  NoPath(NodeId origin, NodeId dest);
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable directed road graph with OD pairs and detector placement.
///
/// Links are indexed 0..L-1 in insertion order; `links()[i].id == i`. Node ids
/// are arbitrary positive integers. Construction validates every invariant and
/// throws NetworkError otherwise, so a constructed NetworkSpec is always usable.
class NetworkSpec {
 public:
  NetworkSpec(std::vector<NodeId> nodes, std::vector<LinkSpec> links, std::vector<OdPair> od_pairs,
              std::vector<LinkId> detectors);

  const std::vector<NodeId>& nodes() const noexcept { return nodes_; }
  const std::vector<LinkSpec>& links() const noexcept { return links_; }
  const std::vector<OdPair>& od_pairs() const noexcept { return od_pairs_; }
  const std::vector<LinkId>& detectors() const noexcept { return detectors_; }

  const LinkSpec& link(LinkId id) const { return links_.at(static_cast<std::size_t>(id)); }
  int link_count() const noexcept { return static_cast<int>(links_.size()); }
  int detector_count() const noexcept { return static_cast<int>(detectors_.size()); }
  int od_count() const noexcept { return static_cast<int>(od_pairs_.size()); }

  /// Outgoing link ids of a node, ascending.
  const std::vector<LinkId>& outgoing(NodeId node) const;
  /// Incoming link ids of a node, ascending.
  const std::vector<LinkId>& incoming(NodeId node) const;
  bool has_node(NodeId node) const noexcept;

  /// Index of `link` in detectors(), or -1.
  int detector_index(LinkId link) const noexcept { return detector_slot_[static_cast<std::size_t>(link)]; }

  /// Links ordered downstream-first when the graph is acyclic (reverse
  /// topological order); link-id order otherwise.
  const std::vector<LinkId>& downstream_first_order() const noexcept { return update_order_; }

  /// Serialize to the line-based text format read by load_network().
  void write(std::ostream& os) const;

 private:
  friend class ShortestPathTree;
  int node_slot(NodeId node) const;

  std::vector<NodeId> nodes_;
  std::vector<std::pair<NodeId, int>> slot_of_;  // sorted by node id
  std::vector<LinkSpec> links_;
  std::vector<OdPair> od_pairs_;
  std::vector<LinkId> detectors_;
  std::vector<int> detector_slot_;
  std::vector<std::vector<LinkId>> out_;
  std::vector<std::vector<LinkId>> in_;
  std::vector<LinkId> update_order_;
};

NetworkSpec read_network(std::istream& is);
NetworkSpec load_network(const std::filesystem::path& path);
void save_network(const NetworkSpec& spec, const std::filesystem::path& path);

inline constexpr double kDefaultFreeFlowSpeed = 13.89;  // 50 km/h
inline constexpr double kNguyenDupuisMetersPerUnit = 100.0;

/// Canonical 13-node / 19-link Nguyen-Dupuis network. Base lengths are
/// 100 m per unit of the classic link cost, multiplied by `length_scale`.
/// OD pairs (1,2), (1,3), (4,2), (4,3); 9 default detectors.
NetworkSpec build_nguyen_dupuis(double length_scale = 3.0);

/// Per-link travel time estimate in seconds.
using EdgeCosts = std::vector<double>;

/// Free-flow travel time on every link.
EdgeCosts free_flow_costs(const NetworkSpec& spec);

/// Minimum cost from every node to a fixed destination, computed once and
/// queried for many origins (rerouting all vehicles with one Dijkstra per
/// destination).
class ShortestPathTree {
 public:
  ShortestPathTree(const NetworkSpec& spec, const EdgeCosts& costs, NodeId destination);

  NodeId destination() const noexcept { return destination_; }
  double distance_from(NodeId node) const;
  bool reachable_from(NodeId node) const;

  /// Minimum-cost route from `origin`; among equal-cost routes the
  /// lexicographically smallest link-id sequence. Empty when origin == destination.
  Route route_from(NodeId origin) const;

 private:
  const NetworkSpec* spec_;
  EdgeCosts costs_;
  NodeId destination_;
  std::vector<double> dist_;  // indexed by node slot
};

/// Route from origin to dest under `costs`. Throws NoPath if unreachable.
Route shortest_path(const NetworkSpec& spec, const EdgeCosts& costs, NodeId origin, NodeId dest);

double route_cost(const EdgeCosts& costs, const Route& route);

/// True when consecutive links share their intermediate node and the route
/// leaves `origin` and enters `dest`.
bool is_contiguous_route(const NetworkSpec& spec, const Route& route, NodeId origin, NodeId dest);

inline constexpr double kMinCostSpeed = 0.5;  // m/s

struct SimSnapshot;

/// cost_l = length_l / max(mean speed_l, v_min); empty links carry free-flow speed.
EdgeCosts edge_costs_from_snapshot(const NetworkSpec& spec, const SimSnapshot& snapshot,
                                   double min_speed = kMinCostSpeed);

}  // namespace odcal
