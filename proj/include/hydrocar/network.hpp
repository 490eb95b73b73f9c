#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace hydrocar {

using NodeId = std::string;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Node {
  NodeId id;
  std::optional<Point> location;
};

// A directed pipe; water flows from `from` to `to`. Length in meters.
struct PipeSegment {
  NodeId from;
  NodeId to;
  double length = 0.0;
};

// Directed graph of junctions and pipes. Immutable once constructed: every
// constructor path validates, so a WaterNetwork value always satisfies
//   - unique node ids,
//   - segment endpoints exist, from != to, length > 0,
//   - no duplicate (from, to) pair (opposite-direction pairs are fine),
//   - anchored ids exist.
class WaterNetwork {
 public:
  WaterNetwork() = default;
  WaterNetwork(std::vector<Node> nodes, std::vector<PipeSegment> segments,
               std::set<NodeId> anchored = {});

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<PipeSegment>& segments() const { return segments_; }
  const std::set<NodeId>& anchored() const { return anchored_; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t segment_count() const { return segments_.size(); }

  bool contains(const NodeId& id) const { return index_.count(id) != 0; }
  // Position of `id` in nodes(); throws InputError for unknown ids.
  std::size_t index_of(const NodeId& id) const;
  bool is_anchored(const NodeId& id) const { return anchored_.count(id) != 0; }

  // Copy of this network with additional anchors.
  WaterNetwork with_anchors(const std::set<NodeId>& extra) const;

  // Outgoing neighbor indices per node, following segment direction.
  std::vector<std::vector<std::size_t>> out_adjacency() const;
  // Distinct neighbor indices per node, ignoring direction.
  std::vector<std::vector<std::size_t>> undirected_adjacency() const;

 private:
  std::vector<Node> nodes_;
  std::vector<PipeSegment> segments_;
  std::set<NodeId> anchored_;
  std::unordered_map<NodeId, std::size_t> index_;
};

// Reads the nodes.csv (node_id,x,y) and segments.csv (from_node,to_node,
// length_m) schemas. Errors carry the offending line number or node id.
WaterNetwork parse_network(std::istream& nodes_csv, std::istream& segments_csv);

// Contracts every non-anchored pass-through junction (exactly two distinct
// neighbors, either one inflow plus one outflow, or bidirectional pipes of
// equal length on both sides) into a single pipe whose length is the sum of
// the two. Repeats until nothing changes. A contraction is skipped when it
// would duplicate an existing (from, to) pipe, and components consisting
// only of contractible nodes (pure cycles) are left as they are.
WaterNetwork simplify(const WaterNetwork& net);

// Origin plus every node reachable along the flow direction.
std::set<NodeId> downstream(const WaterNetwork& net, const NodeId& origin);

// Weakly connected components, each sorted by node order, ordered by their
// first node. Empty network gives an empty partition.
std::vector<std::vector<NodeId>> connected_components(const WaterNetwork& net);

// Component label per node index (same ordering as connected_components).
std::vector<int> component_labels(const WaterNetwork& net);

}  // namespace hydrocar
