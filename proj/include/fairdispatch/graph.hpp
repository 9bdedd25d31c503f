#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairdispatch/types.hpp"

namespace fairdispatch {

struct Edge {
  NodeId from = 0;
  NodeId to = 0;
  double distance = 0.0;
};

/// Directed road graph over merged locations. Node ids are dense integers
/// 0..N-1 and distances are abstract units (mean travel time at ingestion).
/// Edge distances may be asymmetric. The graph is immutable once built and
/// all-pairs shortest distances are precomputed, so lookups are O(1).
class CityGraph {
 public:
  CityGraph() = default;
  CityGraph(int num_nodes, std::vector<Edge> edges);

  int num_nodes() const { return num_nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Length of the minimum-distance directed path, or nullopt when no path
  /// exists. Throws std::out_of_range on an unknown node id.
  std::optional<double> shortest_distance(NodeId from, NodeId to) const;

  bool reachable(NodeId from, NodeId to) const {
    return shortest_distance(from, to).has_value();
  }

  /// Trip utility of serving `r` from `driver_node`: the trip leg from the
  /// request origin to its destination minus the deadhead leg from the
  /// driver to the origin. May be negative. nullopt when either leg is
  /// unreachable; such pairs are excluded from candidate assignments.
  std::optional<double> trip_utility(NodeId driver_node, const Request& r) const;

  /// Plain-text edge list: header line `nodes=<N>`, then one
  /// `from_id to_id distance` triple per line.
  void save(const std::string& path) const;
  static CityGraph load(const std::string& path);

 private:
  void check_node(NodeId node) const;
  void compute_all_pairs();

  int num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<double>> dist_;  // infinity = unreachable
};

}  // namespace fairdispatch
