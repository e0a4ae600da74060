#pragma once

// Resort graph model: nodes, lifts, slopes, elementary-cycle strategy sets
// and the lift/cycle incidence matrix.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cyclequil/errors.hpp"
#include "cyclequil/linalg.hpp"

namespace cyclequil {

struct Node {
  std::string id;
};

struct Lift {
  std::string id;
  std::string tail;
  std::string head;
  double capacity = 0.0;   // persons per unit time, normalized by total mass
  double ride_time = 0.0;
};

struct Slope {
  std::string id;
  std::string tail;
  std::string head;
  double traverse_time = 0.0;
  double value = 0.0;
};

enum class EdgeKind { Lift, Slope };

struct EdgeRef {
  EdgeKind kind = EdgeKind::Lift;
  std::size_t index = 0;

  friend bool operator==(const EdgeRef& a, const EdgeRef& b) {
    return a.kind == b.kind && a.index == b.index;
  }
};

struct ResortNetwork {
  std::vector<Node> nodes;
  std::vector<Lift> lifts;
  std::vector<Slope> slopes;
  // Optional strategy-set override from the input file; empty means
  // "enumerate all elementary cycles".
  std::vector<std::vector<std::string>> explicit_cycles;

  std::optional<std::size_t> node_index(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id == id) return i;
    return std::nullopt;
  }

  std::optional<EdgeRef> edge_by_id(const std::string& id) const {
    for (std::size_t i = 0; i < lifts.size(); ++i)
      if (lifts[i].id == id) return EdgeRef{EdgeKind::Lift, i};
    for (std::size_t i = 0; i < slopes.size(); ++i)
      if (slopes[i].id == id) return EdgeRef{EdgeKind::Slope, i};
    return std::nullopt;
  }

  const std::string& edge_id(EdgeRef e) const {
    return e.kind == EdgeKind::Lift ? lifts[e.index].id : slopes[e.index].id;
  }
  const std::string& edge_tail(EdgeRef e) const {
    return e.kind == EdgeKind::Lift ? lifts[e.index].tail : slopes[e.index].tail;
  }
  const std::string& edge_head(EdgeRef e) const {
    return e.kind == EdgeKind::Lift ? lifts[e.index].head : slopes[e.index].head;
  }
  // Queue-free time to pass the edge.
  double edge_time(EdgeRef e) const {
    return e.kind == EdgeKind::Lift ? lifts[e.index].ride_time : slopes[e.index].traverse_time;
  }
  double edge_value(EdgeRef e) const {
    return e.kind == EdgeKind::Lift ? 0.0 : slopes[e.index].value;
  }

  Vec capacities() const {
    Vec b(lifts.size());
    for (std::size_t i = 0; i < lifts.size(); ++i) b[i] = lifts[i].capacity;
    return b;
  }
};

// A closed directed walk visiting no node twice, with cached slope-value and
// free-time sums.
struct Cycle {
  std::vector<EdgeRef> edges;
  double value = 0.0;      // v_c, sum of member slope values
  double free_time = 0.0;  // t̂_c, sum of member ride/traverse times

  std::vector<std::string> node_ids(const ResortNetwork& net) const {
    std::vector<std::string> ids;
    ids.reserve(edges.size());
    for (const EdgeRef& e : edges) ids.push_back(net.edge_tail(e));
    return ids;
  }
  std::vector<std::string> edge_ids(const ResortNetwork& net) const {
    std::vector<std::string> ids;
    ids.reserve(edges.size());
    for (const EdgeRef& e : edges) ids.push_back(net.edge_id(e));
    return ids;
  }
};

struct CycleSet {
  std::vector<Cycle> cycles;
  Matrix theta;  // |C| x |U|, theta(c,u) = 1 iff lift u lies on cycle c

  Vec values() const {
    Vec v(cycles.size());
    for (std::size_t c = 0; c < cycles.size(); ++c) v[c] = cycles[c].value;
    return v;
  }
  Vec free_times() const {
    Vec t(cycles.size());
    for (std::size_t c = 0; c < cycles.size(); ++c) t[c] = cycles[c].free_time;
    return t;
  }
};

namespace detail {

inline double require_number(const nlohmann::json& obj, const std::string& key,
                             const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_number())
    throw ParseError(where + ": missing or non-numeric key '" + key + "'");
  return obj[key].get<double>();
}

inline std::string require_string(const nlohmann::json& obj, const std::string& key,
                                  const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string())
    throw ParseError(where + ": missing or non-string key '" + key + "'");
  return obj[key].get<std::string>();
}

inline void finish_cycle(Cycle& c, const ResortNetwork& net) {
  c.value = 0.0;
  c.free_time = 0.0;
  for (const EdgeRef& e : c.edges) {
    c.value += net.edge_value(e);
    c.free_time += net.edge_time(e);
  }
}

// Rotate so the cycle starts at its lexicographically smallest node id.
// Tails are pairwise distinct on an elementary cycle, so this is unique.
inline void canonical_rotation(Cycle& c, const ResortNetwork& net) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.edges.size(); ++i)
    if (net.edge_tail(c.edges[i]) < net.edge_tail(c.edges[best])) best = i;
  std::rotate(c.edges.begin(), c.edges.begin() + static_cast<std::ptrdiff_t>(best),
              c.edges.end());
}

}  // namespace detail

inline void validate(const ResortNetwork& net);

inline ResortNetwork network_from_json(const nlohmann::json& j) {
  ResortNetwork net;
  if (!j.is_object()) throw ParseError("network file: top level must be an object");
  if (!j.contains("nodes") || !j["nodes"].is_array())
    throw ParseError("network file: missing 'nodes' array");
  for (const auto& n : j["nodes"]) {
    if (!n.is_string()) throw ParseError("network file: node ids must be strings");
    net.nodes.push_back({n.get<std::string>()});
  }
  if (j.contains("lifts")) {
    if (!j["lifts"].is_array()) throw ParseError("network file: 'lifts' must be an array");
    for (const auto& e : j["lifts"]) {
      Lift l;
      const std::string where = "lift #" + std::to_string(net.lifts.size());
      l.id = detail::require_string(e, "id", where);
      l.tail = detail::require_string(e, "tail", where);
      l.head = detail::require_string(e, "head", where);
      l.capacity = detail::require_number(e, "capacity", "lift '" + l.id + "'");
      l.ride_time = detail::require_number(e, "ride_time", "lift '" + l.id + "'");
      net.lifts.push_back(std::move(l));
    }
  }
  if (j.contains("slopes")) {
    if (!j["slopes"].is_array()) throw ParseError("network file: 'slopes' must be an array");
    for (const auto& e : j["slopes"]) {
      Slope s;
      const std::string where = "slope #" + std::to_string(net.slopes.size());
      s.id = detail::require_string(e, "id", where);
      s.tail = detail::require_string(e, "tail", where);
      s.head = detail::require_string(e, "head", where);
      s.traverse_time = detail::require_number(e, "traverse_time", "slope '" + s.id + "'");
      s.value = detail::require_number(e, "value", "slope '" + s.id + "'");
      net.slopes.push_back(std::move(s));
    }
  }
  if (j.contains("cycles")) {
    if (!j["cycles"].is_array()) throw ParseError("network file: 'cycles' must be an array");
    for (const auto& cyc : j["cycles"]) {
      if (!cyc.is_array()) throw ParseError("network file: each cycle must be an array of edge ids");
      std::vector<std::string> ids;
      for (const auto& id : cyc) {
        if (!id.is_string()) throw ParseError("network file: cycle edge ids must be strings");
        ids.push_back(id.get<std::string>());
      }
      net.explicit_cycles.push_back(std::move(ids));
    }
  }
  validate(net);
  return net;
}

/// Load and validate a network file (see README for the schema).
inline ResortNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("network file '" + path + "': " + e.what());
  }
  return network_from_json(j);
}

namespace detail {

// Kahn peeling; true iff at least one directed cycle remains.
inline bool has_directed_cycle(const ResortNetwork& net) {
  const std::size_t n = net.nodes.size();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<std::size_t>> out(n);
  auto add = [&](const std::string& tail, const std::string& head) {
    const std::size_t t = *net.node_index(tail), h = *net.node_index(head);
    out[t].push_back(h);
    ++indeg[h];
  };
  for (const Lift& l : net.lifts) add(l.tail, l.head);
  for (const Slope& s : net.slopes) add(s.tail, s.head);
  std::vector<std::size_t> stack;
  for (std::size_t v = 0; v < n; ++v)
    if (indeg[v] == 0) stack.push_back(v);
  std::size_t removed = 0;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    ++removed;
    for (std::size_t w : out[v])
      if (--indeg[w] == 0) stack.push_back(w);
  }
  return removed < n;
}

}  // namespace detail

inline void validate(const ResortNetwork& net) {
  std::unordered_map<std::string, int> seen_nodes;
  for (const Node& n : net.nodes) {
    if (n.id.empty()) throw ValidationError("node with empty id");
    if (++seen_nodes[n.id] > 1) throw ValidationError("duplicate node id '" + n.id + "'");
  }
  std::unordered_map<std::string, int> seen_edges;
  auto check_endpoints = [&](const std::string& id, const std::string& tail,
                             const std::string& head, const char* kind) {
    if (id.empty()) throw ValidationError(std::string(kind) + " with empty id");
    if (++seen_edges[id] > 1) throw ValidationError("duplicate edge id '" + id + "'");
    if (!net.node_index(tail))
      throw ValidationError(std::string(kind) + " '" + id + "': unknown tail node '" + tail + "'");
    if (!net.node_index(head))
      throw ValidationError(std::string(kind) + " '" + id + "': unknown head node '" + head + "'");
  };
  for (const Lift& l : net.lifts) {
    check_endpoints(l.id, l.tail, l.head, "lift");
    if (!(l.capacity > 0.0) || !std::isfinite(l.capacity))
      throw ValidationError("lift '" + l.id + "': capacity must be > 0");
    if (l.ride_time < 0.0 || !std::isfinite(l.ride_time))
      throw ValidationError("lift '" + l.id + "': ride_time must be finite and >= 0");
  }
  for (const Slope& s : net.slopes) {
    check_endpoints(s.id, s.tail, s.head, "slope");
    if (!(s.traverse_time > 0.0) || !std::isfinite(s.traverse_time))
      throw ValidationError("slope '" + s.id + "': traverse_time must be > 0");
    if (s.value < 0.0 || !std::isfinite(s.value))
      throw ValidationError("slope '" + s.id + "': value must be finite and >= 0");
  }
  for (std::size_t k = 0; k < net.explicit_cycles.size(); ++k) {
    const auto& ids = net.explicit_cycles[k];
    const std::string where = "cycle #" + std::to_string(k);
    if (ids.empty()) throw ValidationError(where + ": empty edge list");
    std::vector<EdgeRef> edges;
    for (const std::string& id : ids) {
      auto e = net.edge_by_id(id);
      if (!e) throw ValidationError(where + ": unknown edge id '" + id + "'");
      edges.push_back(*e);
    }
    std::vector<std::string> tails;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const std::string& head = net.edge_head(edges[i]);
      const std::string& next_tail = net.edge_tail(edges[(i + 1) % edges.size()]);
      if (head != next_tail)
        throw ValidationError(where + ": edge '" + net.edge_id(edges[i]) +
                              "' head '" + head + "' does not match next tail '" + next_tail + "'");
      tails.push_back(net.edge_tail(edges[i]));
    }
    std::sort(tails.begin(), tails.end());
    if (std::adjacent_find(tails.begin(), tails.end()) != tails.end())
      throw ValidationError(where + ": not elementary (repeated node)");
  }
  if (net.explicit_cycles.empty() && !detail::has_directed_cycle(net))
    throw ValidationError("network has no directed cycles: no skier strategy exists");
}

/// Θ_{cu} = 1 iff lift u appears on cycle c. Elementary cycles traverse a
/// lift at most once, so the matrix is binary.
inline Matrix build_theta(const std::vector<Cycle>& cycles, const ResortNetwork& net) {
  Matrix theta(cycles.size(), net.lifts.size(), 0.0);
  for (std::size_t c = 0; c < cycles.size(); ++c)
    for (const EdgeRef& e : cycles[c].edges)
      if (e.kind == EdgeKind::Lift) theta(c, e.index) = 1.0;
  return theta;
}

namespace detail {

// Johnson-style elementary circuit search. For each start vertex s the DFS is
// restricted to vertices >= s, so every cycle is found exactly once, rooted at
// its smallest vertex. Parallel edges are walked individually, which turns
// vertex circuits into edge circuits.
struct CircuitSearch {
  const ResortNetwork& net;
  std::size_t limit;
  // adjacency: node -> (head node, edge)
  std::vector<std::vector<std::pair<std::size_t, EdgeRef>>> adj;
  std::vector<bool> blocked;
  std::vector<std::vector<std::size_t>> blist;
  std::vector<EdgeRef> edge_stack;
  std::size_t start = 0;
  std::vector<Cycle> out;

  CircuitSearch(const ResortNetwork& n, std::size_t lim) : net(n), limit(lim) {
    adj.resize(net.nodes.size());
    auto add = [&](EdgeRef e) {
      adj[*net.node_index(net.edge_tail(e))].emplace_back(*net.node_index(net.edge_head(e)), e);
    };
    for (std::size_t i = 0; i < net.lifts.size(); ++i) add(EdgeRef{EdgeKind::Lift, i});
    for (std::size_t i = 0; i < net.slopes.size(); ++i) add(EdgeRef{EdgeKind::Slope, i});
  }

  void unblock(std::size_t v) {
    blocked[v] = false;
    std::vector<std::size_t> pending;
    pending.swap(blist[v]);
    for (std::size_t w : pending)
      if (blocked[w]) unblock(w);
  }

  bool circuit(std::size_t v) {
    bool found = false;
    blocked[v] = true;
    for (const auto& [w, e] : adj[v]) {
      if (w < start) continue;
      if (w == start) {
        Cycle c;
        c.edges = edge_stack;
        c.edges.push_back(e);
        out.push_back(std::move(c));
        if (out.size() > limit)
          throw CycleLimitError("cycle enumeration exceeded limit of " + std::to_string(limit) +
                                    "; pass an explicit cycle list to restrict the strategy set",
                                limit);
        found = true;
      } else if (!blocked[w]) {
        edge_stack.push_back(e);
        if (circuit(w)) found = true;
        edge_stack.pop_back();
      }
    }
    if (found) {
      unblock(v);
    } else {
      for (const auto& [w, e] : adj[v]) {
        if (w < start || w == start) continue;
        auto& bl = blist[w];
        if (std::find(bl.begin(), bl.end(), v) == bl.end()) bl.push_back(v);
      }
    }
    return found;
  }

  std::vector<Cycle> run() {
    const std::size_t n = net.nodes.size();
    for (start = 0; start < n; ++start) {
      blocked.assign(n, false);
      blist.assign(n, {});
      edge_stack.clear();
      circuit(start);
    }
    return std::move(out);
  }
};

}  // namespace detail

/// Enumerate every elementary directed cycle of the network in canonical
/// order: each cycle rotated to start at its lexicographically smallest node
/// id, cycles sorted lexicographically by (node ids, edge ids). Throws
/// CycleLimitError past `limit` cycles. A non-empty `cycles` key in the input
/// file overrides enumeration and is kept in file order.
inline CycleSet enumerate_cycles(const ResortNetwork& net, std::size_t limit = 10000) {
  CycleSet cs;
  if (!net.explicit_cycles.empty()) {
    for (const auto& ids : net.explicit_cycles) {
      Cycle c;
      for (const std::string& id : ids) c.edges.push_back(*net.edge_by_id(id));
      detail::finish_cycle(c, net);
      cs.cycles.push_back(std::move(c));
    }
    cs.theta = build_theta(cs.cycles, net);
    return cs;
  }

  detail::CircuitSearch search(net, limit);
  cs.cycles = search.run();
  using Key = std::pair<std::vector<std::string>, std::vector<std::string>>;
  std::vector<std::pair<Key, Cycle>> keyed;
  keyed.reserve(cs.cycles.size());
  for (Cycle& c : cs.cycles) {
    detail::canonical_rotation(c, net);
    detail::finish_cycle(c, net);
    Key k{c.node_ids(net), c.edge_ids(net)};
    keyed.emplace_back(std::move(k), std::move(c));
  }
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  cs.cycles.clear();
  for (auto& [k, c] : keyed) cs.cycles.push_back(std::move(c));
  cs.theta = build_theta(cs.cycles, net);
  return cs;
}

}  // namespace cyclequil
