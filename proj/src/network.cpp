#include "hydrocar/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <utility>

#include "hydrocar/error.hpp"

namespace hydrocar {

WaterNetwork::WaterNetwork(std::vector<Node> nodes, std::vector<PipeSegment> segments,
                           std::set<NodeId> anchored)
    : nodes_(std::move(nodes)), segments_(std::move(segments)), anchored_(std::move(anchored)) {
  index_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i].id, i).second) {
      throw InputError("duplicate node id '" + nodes_[i].id + "'");
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    const auto& s = segments_[k];
    for (const auto* end : {&s.from, &s.to}) {
      if (!contains(*end)) {
        throw InputError("segment " + std::to_string(k) + " references unknown node '" + *end + "'");
      }
    }
    if (s.from == s.to) {
      throw InputError("segment " + std::to_string(k) + " is a self-loop at '" + s.from + "'");
    }
    if (!(s.length > 0.0) || !std::isfinite(s.length)) {
      throw InputError("segment " + std::to_string(k) + " (" + s.from + " -> " + s.to +
                       ") has non-positive length");
    }
    if (!seen.emplace(index_.at(s.from), index_.at(s.to)).second) {
      throw InputError("duplicate segment " + s.from + " -> " + s.to);
    }
  }
  for (const auto& a : anchored_) {
    if (!contains(a)) throw InputError("anchored node '" + a + "' is not in the network");
  }
}

std::size_t WaterNetwork::index_of(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InputError("unknown node '" + id + "'");
  return it->second;
}

WaterNetwork WaterNetwork::with_anchors(const std::set<NodeId>& extra) const {
  std::set<NodeId> merged = anchored_;
  merged.insert(extra.begin(), extra.end());
  return WaterNetwork(nodes_, segments_, std::move(merged));
}

std::vector<std::vector<std::size_t>> WaterNetwork::out_adjacency() const {
  std::vector<std::vector<std::size_t>> out(nodes_.size());
  for (const auto& s : segments_) out[index_.at(s.from)].push_back(index_.at(s.to));
  return out;
}

std::vector<std::vector<std::size_t>> WaterNetwork::undirected_adjacency() const {
  std::vector<std::vector<std::size_t>> adj(nodes_.size());
  for (const auto& s : segments_) {
    const auto a = index_.at(s.from);
    const auto b = index_.at(s.to);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return adj;
}

namespace {

// Mutable working copy used by simplify().
class Contractor {
 public:
  explicit Contractor(const WaterNetwork& net) : net_(net), alive_(net.node_count(), true) {
    incident_.resize(net.node_count());
    for (const auto& s : net.segments()) {
      add_segment(net.index_of(s.from), net.index_of(s.to), s.length);
    }
  }

  // Runs passes until a full pass makes no contraction.
  void run() {
    bool changed = true;
    while (changed) {
      changed = false;
      const auto protect = protected_components();
      for (std::size_t v = 0; v < alive_.size(); ++v) {
        if (!alive_[v] || protect[component_[v]]) continue;
        const auto result = try_contract(v);
        if (result == Outcome::kContracted) changed = true;
        if (result == Outcome::kContractedDegreeDrop) {
          changed = true;
          break;  // components may have lost their last non-candidate; recompute
        }
      }
    }
  }

  WaterNetwork result() const {
    std::vector<Node> nodes;
    for (std::size_t v = 0; v < alive_.size(); ++v) {
      if (alive_[v]) nodes.push_back(net_.nodes()[v]);
    }
    std::vector<PipeSegment> segments;
    for (const auto& slot : slots_) {
      if (slot) {
        segments.push_back({net_.nodes()[slot->from].id, net_.nodes()[slot->to].id, slot->length});
      }
    }
    return WaterNetwork(std::move(nodes), std::move(segments), net_.anchored());
  }

 private:
  struct Seg {
    std::size_t from;
    std::size_t to;
    double length;
  };
  enum class Outcome { kNone, kContracted, kContractedDegreeDrop };

  std::size_t add_segment(std::size_t from, std::size_t to, double length) {
    slots_.push_back(Seg{from, to, length});
    const auto slot = slots_.size() - 1;
    by_pair_[{from, to}] = slot;
    incident_[from].insert(slot);
    incident_[to].insert(slot);
    return slot;
  }

  void remove_segment(std::size_t slot) {
    const Seg s = *slots_[slot];
    by_pair_.erase({s.from, s.to});
    incident_[s.from].erase(slot);
    incident_[s.to].erase(slot);
    slots_[slot].reset();
  }

  std::optional<std::size_t> find(std::size_t from, std::size_t to) const {
    auto it = by_pair_.find({from, to});
    if (it == by_pair_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::size_t> neighbors(std::size_t v) const {
    std::vector<std::size_t> out;
    for (auto slot : incident_[v]) {
      const auto& s = *slots_[slot];
      out.push_back(s.from == v ? s.to : s.from);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // Pass-through shape of v, if any: the two neighbors and whether the pipes
  // are bidirectional. For the one-way case `first` feeds v and v feeds `second`.
  struct PassThrough {
    std::size_t first;
    std::size_t second;
    bool bidirectional;
  };

  std::optional<PassThrough> pass_through(std::size_t v) const {
    if (net_.is_anchored(net_.nodes()[v].id)) return std::nullopt;
    const auto nb = neighbors(v);
    if (nb.size() != 2) return std::nullopt;
    const auto u = nb[0];
    const auto w = nb[1];
    const auto uv = find(u, v), vu = find(v, u), wv = find(w, v), vw = find(v, w);
    if (incident_[v].size() == 2) {
      if (uv && vw) return PassThrough{u, w, false};
      if (wv && vu) return PassThrough{w, u, false};
      return std::nullopt;
    }
    if (incident_[v].size() == 4 && slots_[*uv]->length == slots_[*vu]->length &&
        slots_[*wv]->length == slots_[*vw]->length) {
      return PassThrough{u, w, true};
    }
    return std::nullopt;
  }

  Outcome try_contract(std::size_t v) {
    const auto shape = pass_through(v);
    if (!shape) return Outcome::kNone;
    const auto a = shape->first;
    const auto b = shape->second;
    if (find(a, b) || (shape->bidirectional && find(b, a))) return Outcome::kNone;

    const auto degree_a = neighbors(a).size();
    const auto degree_b = neighbors(b).size();
    const double length = slots_[*find(a, v)]->length + slots_[*find(v, b)]->length;
    for (auto slot : std::vector<std::size_t>(incident_[v].begin(), incident_[v].end())) {
      remove_segment(slot);
    }
    add_segment(a, b, length);
    if (shape->bidirectional) add_segment(b, a, length);
    alive_[v] = false;

    if (neighbors(a).size() < degree_a || neighbors(b).size() < degree_b) {
      return Outcome::kContractedDegreeDrop;
    }
    return Outcome::kContracted;
  }

  // Marks components where every live node is a pass-through candidate;
  // contracting inside those would collapse a pure cycle.
  std::vector<bool> protected_components() {
    component_.assign(alive_.size(), -1);
    std::vector<bool> all_candidates;
    int next = 0;
    for (std::size_t start = 0; start < alive_.size(); ++start) {
      if (!alive_[start] || component_[start] >= 0) continue;
      bool every = true;
      std::vector<std::size_t> stack{start};
      component_[start] = next;
      while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        if (!pass_through(v)) every = false;
        for (auto n : neighbors(v)) {
          if (component_[n] < 0) {
            component_[n] = next;
            stack.push_back(n);
          }
        }
      }
      all_candidates.push_back(every);
      ++next;
    }
    return all_candidates;
  }

  const WaterNetwork& net_;
  std::vector<bool> alive_;
  std::vector<int> component_;
  std::vector<std::optional<Seg>> slots_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> by_pair_;
  std::vector<std::set<std::size_t>> incident_;
};

}  // namespace

WaterNetwork simplify(const WaterNetwork& net) {
  Contractor c(net);
  c.run();
  return c.result();
}

std::set<NodeId> downstream(const WaterNetwork& net, const NodeId& origin) {
  const auto start = net.index_of(origin);
  const auto out = net.out_adjacency();
  std::vector<bool> seen(net.node_count(), false);
  std::vector<std::size_t> frontier{start};
  seen[start] = true;
  std::set<NodeId> result;
  while (!frontier.empty()) {
    const auto v = frontier.back();
    frontier.pop_back();
    result.insert(net.nodes()[v].id);
    for (auto w : out[v]) {
      if (!seen[w]) {
        seen[w] = true;
        frontier.push_back(w);
      }
    }
  }
  return result;
}

std::vector<int> component_labels(const WaterNetwork& net) {
  const auto adj = net.undirected_adjacency();
  std::vector<int> label(net.node_count(), -1);
  int next = 0;
  for (std::size_t start = 0; start < label.size(); ++start) {
    if (label[start] >= 0) continue;
    std::vector<std::size_t> stack{start};
    label[start] = next;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (auto w : adj[v]) {
        if (label[w] < 0) {
          label[w] = next;
          stack.push_back(w);
        }
      }
    }
    ++next;
  }
  return label;
}

std::vector<std::vector<NodeId>> connected_components(const WaterNetwork& net) {
  const auto label = component_labels(net);
  const int count = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  std::vector<std::vector<NodeId>> parts(count);
  for (std::size_t i = 0; i < label.size(); ++i) parts[label[i]].push_back(net.nodes()[i].id);
  return parts;
}

}  // namespace hydrocar
