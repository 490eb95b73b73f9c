#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hydrocar/model.hpp"
#include "hydrocar/network.hpp"

namespace hydrocar {

// Random recursive out-tree: node k attaches below a uniformly chosen
// earlier node that still has fewer than max_children children.
struct Branching {
  std::size_t max_children = 3;
};

// Pipe lengths uniform on [min, max]. The default keeps τ_graph = 1 on the
// inverse-distance precision at a per-pipe log-odds variance below one.
struct LengthDistribution {
  double min = 0.2;
  double max = 1.0;
};

struct NetworkLayout {
  double spacing = 250.0;  // meters between a node and its parent on the map
};

// Source is "N0"; nodes are "N0".."N{n-1}", segments flow away from the source.
WaterNetwork simulate_network(std::size_t n_nodes, const Branching& branching,
                              const LengthDistribution& lengths, std::uint64_t seed,
                              const NetworkLayout& layout = {});

struct ContaminationEvent {
  NodeId origin;
  double effect_size = 0.0;  // log-odds at the origin
  double decay = 0.0;        // per meter of downstream pipe
};

struct SimulationConfig {
  std::size_t n_participants = 1;
  double beta0 = 0.0;
  double beta_age = 0.0;     // per year, centered at 50
  double beta_gender = 0.0;
  double tau_house = 0.0;    // 0 disables the effect
  double tau_spatial = 0.0;
  double tau_graph = 0.0;
  std::vector<ContaminationEvent> events;
  double cell_size = 1000.0;
  double location_jitter = 50.0;  // meters around the node position
  std::uint64_t seed = 1;
};

struct SimulationTruth {
  SimulationConfig config;
  std::map<NodeId, double> graph_effect;          // CAR draw per node
  std::map<NodeId, double> contamination;         // event contribution per node
  std::map<std::string, double> household_effect;
  std::map<std::string, double> spatial_effect;   // per lattice cell
  std::vector<double> eta;                        // true log-odds per participant
};

struct SimulatedData {
  Dataset dataset;
  SimulationTruth truth;
};

SimulatedData simulate_dataset(const WaterNetwork& net, const SimulationConfig& config);

// Downstream pipe distance from origin to every node it reaches.
std::map<NodeId, double> downstream_distances(const WaterNetwork& net, const NodeId& origin);

// Node whose downstream set size is closest to `fraction` of the network;
// ties go to the earlier node.
NodeId pick_event_origin(const WaterNetwork& net, double fraction);

std::string truth_json(const SimulationTruth& truth);

}  // namespace hydrocar
