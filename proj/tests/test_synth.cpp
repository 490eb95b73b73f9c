#include <cmath>
#include <set>

#include "doctest.h"
#include "hydrocar/error.hpp"
#include "hydrocar/synth.hpp"
#include "test_util.hpp"

using namespace hydrocar;

namespace {

// Depth-first reachability plus path length over the out-tree.
std::map<NodeId, double> dfs_downstream(const WaterNetwork& net, const NodeId& origin) {
  std::map<NodeId, double> seen{{origin, 0.0}};
  std::vector<NodeId> stack{origin};
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (const auto& s : net.segments()) {
      if (s.from == v && !seen.count(s.to)) {
        seen[s.to] = seen[v] + s.length;
        stack.push_back(s.to);
      }
    }
  }
  return seen;
}

}  // namespace

TEST_CASE("simulated networks") {
  const auto one = simulate_network(1, {}, {}, 1);
  CHECK(one.node_count() == 1);
  CHECK(one.segments().empty());
  CHECK_THROWS_AS(simulate_network(0, {}, {}, 1), InputError);

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto net = simulate_network(100, {}, {}, seed);
    CHECK(net.node_count() == 100);
    CHECK(net.segments().size() == 99);
    std::map<NodeId, int> indegree, outdegree;
    for (const auto& s : net.segments()) {
      ++indegree[s.to];
      ++outdegree[s.from];
      CHECK(s.length >= 0.2);
      CHECK(s.length <= 1.0);
    }
    int roots = 0;
    for (const auto& n : net.nodes()) {
      roots += indegree[n.id] == 0;
      CHECK(indegree[n.id] <= 1);
      CHECK(outdegree[n.id] <= 3);
      CHECK(n.location.has_value());
    }
    CHECK(roots == 1);
    CHECK(downstream(net, "N0").size() == 100);
  }
  const auto a = simulate_network(50, {}, {}, 9), b = simulate_network(50, {}, {}, 9);
  for (std::size_t i = 0; i < a.segments().size(); ++i) {
    CHECK(a.segments()[i].from == b.segments()[i].from);
    CHECK(a.segments()[i].length == b.segments()[i].length);
  }
}

TEST_CASE("null simulation rate") {
  const auto net = simulate_network(50, {}, {}, 2);
  SimulationConfig cfg;
  cfg.n_participants = 10000;
  cfg.seed = 4;
  const auto sim = simulate_dataset(net, cfg);
  CHECK(sim.dataset.size() == 10000);
  double ones = 0;
  for (const auto& p : sim.dataset.participants()) ones += *p.outcome;
  CHECK(std::abs(ones / 10000 - 0.5) < 0.02);
  CHECK(sim.truth.graph_effect.empty());
  CHECK(sim.truth.contamination.empty());
  for (double eta : sim.truth.eta) CHECK(eta == 0.0);
}

TEST_CASE("contamination events") {
  const auto net = simulate_network(80, {}, {}, 6);
  SUBCASE("source event without decay") {
    SimulationConfig cfg;
    cfg.n_participants = 200;
    cfg.events.push_back({"N0", 2.0, 0.0});
    const auto sim = simulate_dataset(net, cfg);
    for (const auto& [id, v] : sim.truth.contamination) CHECK(v == 2.0);
    for (double eta : sim.truth.eta) CHECK(eta == 2.0);
  }
  SUBCASE("internal event with decay") {
    const NodeId origin = pick_event_origin(net, 0.25);
    const auto oracle = dfs_downstream(net, origin);
    CHECK(std::abs(static_cast<double>(oracle.size()) - 20.0) <= 10.0);
    SimulationConfig cfg;
    cfg.n_participants = 300;
    cfg.events.push_back({origin, 1.5, 0.7});
    const auto sim = simulate_dataset(net, cfg);
    for (const auto& n : net.nodes()) {
      const auto it = oracle.find(n.id);
      const double expected = it == oracle.end() ? 0.0 : 1.5 * std::exp(-0.7 * it->second);
      CHECK(sim.truth.contamination.at(n.id) == doctest::Approx(expected).epsilon(1e-12));
    }
    const auto dist = downstream_distances(net, origin);
    CHECK(dist.size() == oracle.size());
  }
}

TEST_CASE("latent draws") {
  const auto net = simulate_network(40, {}, {}, 3);
  SimulationConfig cfg;
  cfg.n_participants = 500;
  cfg.tau_graph = 1.0;
  cfg.tau_spatial = 2.0;
  cfg.tau_house = 4.0;
  cfg.seed = 12;
  const auto sim = simulate_dataset(net, cfg);
  double graph_sum = 0;
  for (const auto& [id, v] : sim.truth.graph_effect) graph_sum += v;
  CHECK(sim.truth.graph_effect.size() == 40);
  CHECK(std::abs(graph_sum) < 1e-10);
  CHECK(!sim.truth.spatial_effect.empty());
  // Sum to zero within each connected piece of the lattice.
  const auto lattice = build_spatial_lattice(sim.dataset, cfg.cell_size);
  const auto structure = build_border_precision(lattice.adjacency);
  std::vector<double> piece(static_cast<std::size_t>(structure.component_count()), 0.0);
  for (std::size_t c = 0; c < lattice.adjacency.labels.size(); ++c) {
    piece[static_cast<std::size_t>(structure.components()[c])] += sim.truth.spatial_effect.at(lattice.adjacency.labels[c]);
  }
  for (double s : piece) CHECK(std::abs(s) < 1e-10);

  // Households share node and location.
  std::map<std::string, std::pair<NodeId, double>> house;
  for (const auto& p : sim.dataset.participants()) {
    const auto [it, fresh] = house.try_emplace(p.house_id, p.node_id, p.location->x);
    if (!fresh) {
      CHECK(it->second.first == p.node_id);
      CHECK(it->second.second == p.location->x);
    }
    CHECK(*p.age >= 20.0);
    CHECK(*p.age <= 80.0);
  }

  const auto again = simulate_dataset(net, cfg);
  CHECK(again.truth.eta == sim.truth.eta);
  CHECK(truth_json(again.truth) == truth_json(sim.truth));
  cfg.seed = 13;
  CHECK(simulate_dataset(net, cfg).truth.eta != sim.truth.eta);
}
