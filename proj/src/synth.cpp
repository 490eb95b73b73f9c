#include "hydrocar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <queue>
#include <random>

#include "hydrocar/error.hpp"
#include "hydrocar/gmrf.hpp"
#include "hydrocar/precision.hpp"
#include "hydrocar/rng.hpp"
#include "json.hpp"

namespace hydrocar {

namespace {

// Independent streams of one simulation.
enum Stream : std::uint64_t { kPeople = 0, kGraph = 1, kSpatial = 2, kHouse = 3, kOutcome = 4 };

// Intrinsic CAR draw at precision tau, sum-to-zero per component.
Vector draw_intrinsic(const PrecisionMatrix& structure, double tau, std::uint64_t seed) {
  if (structure.dim() == 0) return {};
  const double mean_diag = structure.mean_diagonal();
  const double jitter = kIntrinsicJitter * (mean_diag > 0.0 ? mean_diag : 1.0);
  SparseMatrix eye(structure.matrix().rows(), structure.matrix().cols());
  eye.setIdentity();
  const SparseMatrix q = tau * (structure.matrix() + jitter * eye);
  const auto factor = CholeskyFactor::factorize(q);
  Vector x = sample(factor, sum_to_zero_constraints(structure), seed);
  // Exact recentering per component removes rounding left by the conditioning.
  const int k = structure.component_count();
  std::vector<double> sum(k, 0.0);
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < structure.dim(); ++i) {
    sum[structure.components()[i]] += x[static_cast<Eigen::Index>(i)];
    ++count[structure.components()[i]];
  }
  for (std::size_t i = 0; i < structure.dim(); ++i) {
    const int c = structure.components()[i];
    x[static_cast<Eigen::Index>(i)] -= sum[c] / count[c];
  }
  return x;
}

}  // namespace

WaterNetwork simulate_network(std::size_t n_nodes, const Branching& branching,
                              const LengthDistribution& lengths, std::uint64_t seed,
                              const NetworkLayout& layout) {
  if (n_nodes == 0) throw InputError("simulate_network: need at least one node");
  if (!(lengths.min > 0.0) || lengths.max < lengths.min) throw InputError("simulate_network: bad length range");
  Rng rng(seed);
  std::uniform_real_distribution<double> length(lengths.min, lengths.max);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);

  std::vector<Node> nodes{{"N0", Point{0.0, 0.0}}};
  std::vector<PipeSegment> segments;
  std::vector<std::size_t> children(n_nodes, 0);
  std::vector<std::size_t> open{0};  // nodes that can take another child
  for (std::size_t k = 1; k < n_nodes; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
    const auto slot = pick(rng);
    const auto parent = open[slot];
    const double phi = angle(rng);
    const Point p = *nodes[parent].location;
    nodes.push_back({"N" + std::to_string(k),
                     Point{p.x + layout.spacing * std::cos(phi), p.y + layout.spacing * std::sin(phi)}});
    segments.push_back({nodes[parent].id, nodes[k].id, length(rng)});
    if (branching.max_children > 0 && ++children[parent] >= branching.max_children) {
      open.erase(open.begin() + static_cast<std::ptrdiff_t>(slot));
    }
    open.push_back(k);
  }
  return WaterNetwork(std::move(nodes), std::move(segments));
}

std::map<NodeId, double> downstream_distances(const WaterNetwork& net, const NodeId& origin) {
  const auto start = net.index_of(origin);
  std::vector<std::vector<std::pair<std::size_t, double>>> out(net.node_count());
  for (const auto& s : net.segments()) out[net.index_of(s.from)].push_back({net.index_of(s.to), s.length});
  std::vector<double> dist(net.node_count(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[start] = 0.0;
  queue.push({0.0, start});
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (const auto& [w, len] : out[v]) {
      if (d + len < dist[w]) {
        dist[w] = d + len;
        queue.push({dist[w], w});
      }
    }
  }
  std::map<NodeId, double> result;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (std::isfinite(dist[i])) result[net.nodes()[i].id] = dist[i];
  }
  return result;
}

NodeId pick_event_origin(const WaterNetwork& net, double fraction) {
  if (net.node_count() == 0) throw InputError("pick_event_origin: empty network");
  const double target = fraction * static_cast<double>(net.node_count());
  NodeId best = net.nodes().front().id;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& node : net.nodes()) {
    const double gap = std::abs(static_cast<double>(downstream(net, node.id).size()) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = node.id;
    }
  }
  return best;
}

SimulatedData simulate_dataset(const WaterNetwork& net, const SimulationConfig& config) {
  if (config.n_participants == 0) throw InputError("simulate_dataset: need at least one participant");
  if (net.node_count() == 0) throw InputError("simulate_dataset: empty network");
  for (double tau : {config.tau_house, config.tau_spatial, config.tau_graph}) {
    if (tau < 0.0) throw InputError("simulate_dataset: precisions must be >= 0");
  }
  SimulationTruth truth;
  truth.config = config;

  // Households share a node and a location.
  Rng people_rng(derive_seed(config.seed, kPeople));
  std::poisson_distribution<int> extra_members(1.5);
  std::uniform_int_distribution<std::size_t> pick_node(0, net.node_count() - 1);
  std::uniform_real_distribution<double> age(20.0, 80.0);
  std::uniform_real_distribution<double> jitter(-config.location_jitter, config.location_jitter);
  std::bernoulli_distribution male(0.5);
  std::vector<Participant> people;
  std::size_t house = 0;
  while (people.size() < config.n_participants) {
    const auto size = static_cast<std::size_t>(extra_members(people_rng)) + 1;
    const auto& node = net.nodes()[pick_node(people_rng)];
    std::optional<Point> where;
    if (node.location) where = Point{node.location->x + jitter(people_rng), node.location->y + jitter(people_rng)};
    const std::string house_id = "H" + std::to_string(house++);
    for (std::size_t m = 0; m < size && people.size() < config.n_participants; ++m) {
      Participant p;
      p.id = "P" + std::to_string(people.size());
      p.age = std::round(age(people_rng) * 10.0) / 10.0;
      p.gender = male(people_rng) ? 1 : 0;
      p.house_id = house_id;
      p.node_id = node.id;
      p.location = where;
      people.push_back(std::move(p));
    }
  }

  std::vector<double> node_effect(net.node_count(), 0.0);
  if (config.tau_graph > 0.0) {
    const auto draw = draw_intrinsic(build_distance_precision(net), config.tau_graph, derive_seed(config.seed, kGraph));
    for (std::size_t i = 0; i < net.node_count(); ++i) {
      node_effect[i] = draw[static_cast<Eigen::Index>(i)];
      truth.graph_effect[net.nodes()[i].id] = node_effect[i];
    }
  }
  std::vector<double> contamination(net.node_count(), 0.0);
  for (const auto& event : config.events) {
    if (event.decay < 0.0) throw InputError("contamination decay must be >= 0");
    for (const auto& [id, dist] : downstream_distances(net, event.origin)) {
      contamination[net.index_of(id)] += event.effect_size * std::exp(-event.decay * dist);
    }
  }
  if (!config.events.empty()) {
    for (std::size_t i = 0; i < net.node_count(); ++i) truth.contamination[net.nodes()[i].id] = contamination[i];
  }

  std::vector<double> cell_effect;
  std::vector<std::size_t> cell_of;
  if (config.tau_spatial > 0.0) {
    const auto lattice = build_spatial_lattice(people, config.cell_size);
    const auto draw = draw_intrinsic(build_border_precision(lattice.adjacency), config.tau_spatial,
                                     derive_seed(config.seed, kSpatial));
    cell_of = lattice.cell;
    for (std::size_t c = 0; c < lattice.adjacency.labels.size(); ++c) {
      cell_effect.push_back(draw[static_cast<Eigen::Index>(c)]);
      truth.spatial_effect[lattice.adjacency.labels[c]] = cell_effect.back();
    }
  }

  if (config.tau_house > 0.0) {
    Rng house_rng(derive_seed(config.seed, kHouse));
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(config.tau_house));
    for (const auto& p : people) {
      if (!truth.household_effect.count(p.house_id)) truth.household_effect[p.house_id] = normal(house_rng);
    }
  }

  Rng outcome_rng(derive_seed(config.seed, kOutcome));
  for (std::size_t i = 0; i < people.size(); ++i) {
    auto& p = people[i];
    const auto node = net.index_of(p.node_id);
    double eta = config.beta0 + config.beta_age * (*p.age - 50.0) + config.beta_gender * *p.gender +
                 node_effect[node] + contamination[node];
    if (config.tau_house > 0.0) eta += truth.household_effect.at(p.house_id);
    if (config.tau_spatial > 0.0) eta += cell_effect[cell_of[i]];
    truth.eta.push_back(eta);
    p.outcome = outcome_rng.uniform() < logistic(eta) ? 1 : 0;
  }
  return SimulatedData{Dataset(std::move(people), net), std::move(truth)};
}

std::string truth_json(const SimulationTruth& truth) {
  const auto& c = truth.config;
  nlohmann::ordered_json doc;
  doc["seed"] = c.seed;
  doc["n_participants"] = c.n_participants;
  doc["beta0"] = c.beta0;
  doc["beta_age"] = c.beta_age;
  doc["beta_gender"] = c.beta_gender;
  doc["tau_house"] = c.tau_house;
  doc["tau_spatial"] = c.tau_spatial;
  doc["tau_graph"] = c.tau_graph;
  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const auto& e : c.events) {
    events.push_back({{"origin", e.origin}, {"effect_size", e.effect_size}, {"decay", e.decay}});
  }
  doc["events"] = events;
  // Total true network contribution (CAR draw plus contamination) per node.
  nlohmann::ordered_json graph = nlohmann::ordered_json::object();
  std::map<NodeId, double> total = truth.graph_effect;
  for (const auto& [id, v] : truth.contamination) total[id] += v;
  for (const auto& [id, v] : total) graph[id] = v;
  doc["graph_effect"] = graph;
  doc["graph_effect_max_abs"] = std::accumulate(total.begin(), total.end(), 0.0, [](double m, const auto& kv) {
    return std::max(m, std::abs(kv.second));
  });
  nlohmann::ordered_json houses = nlohmann::ordered_json::object();
  for (const auto& [id, v] : truth.household_effect) houses[id] = v;
  doc["household_effect"] = houses;
  nlohmann::ordered_json cells = nlohmann::ordered_json::object();
  for (const auto& [id, v] : truth.spatial_effect) cells[id] = v;
  doc["spatial_effect"] = cells;
  return doc.dump(2) + "\n";
}

}  // namespace hydrocar
