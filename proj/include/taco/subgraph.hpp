#pragma once
// Subgraph extraction around a target triple (u, r_t, v). Three modes:
//
//   enclosing  - k-hop neighborhood intersection of u and v, with isolated
//                nodes pruned to a fixpoint (isolated = degree zero in the
//                subgraph induced on {u, v} plus the intersection).
//   ccn        - enclosing plus every isolated common neighbor i, re-attached
//                through two augmented edges (u, r', i) and (i, r'', v) whose
//                relations carry (d(i,u), d(i,v)) distance coordinates.
//   ccn+       - the intersection plus "distilled" neighbors of each target:
//                a node at hop i survives only if it touches the (i+1)-hop
//                boundary, so chains leading toward common neighbors are kept
//                and dead-end branches are dropped. Edges are induced.
//
// All neighborhoods and distances are undirected and never use the target
// triple's own edge. d(i,u) is computed with v deleted from the graph and
// vice versa, so a label never leaks a path through the opposite target.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "taco/kg.hpp"
#include "taco/linalg.hpp"

namespace taco {

enum class ExtractionMode { kEnclosing, kCcn, kCcnPlus };

inline const char* extraction_mode_name(ExtractionMode m) {
  switch (m) {
    case ExtractionMode::kEnclosing: return "enclosing";
    case ExtractionMode::kCcn: return "ccn";
    case ExtractionMode::kCcnPlus: return "ccn+";
  }
  return "?";
}

inline std::optional<ExtractionMode> parse_extraction_mode(const std::string& s) {
  if (s == "enclosing") return ExtractionMode::kEnclosing;
  if (s == "ccn") return ExtractionMode::kCcn;
  if (s == "ccn+" || s == "ccnplus") return ExtractionMode::kCcnPlus;
  return std::nullopt;
}

struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// (dist to u, dist to v), each computed with the opposite target deleted.
// The targets themselves carry the fixed labels u=(0,1), v=(1,0).
struct NodeLabel {
  std::uint32_t dist_u = 0;
  std::uint32_t dist_v = 0;
  friend bool operator==(const NodeLabel&, const NodeLabel&) = default;
};

// Relation attached to a subgraph edge. Augmented relations exist only in ccn
// mode on the two edges re-attaching an isolated common neighbor; they pair
// the base relation with that neighbor's (d(i,u), d(i,v)).
struct AugRelation {
  RelationId base = 0;
  std::uint32_t dist_u = 0;
  std::uint32_t dist_v = 0;
  bool augmented = false;
  friend bool operator==(const AugRelation&, const AugRelation&) = default;
  friend auto operator<=>(const AugRelation&, const AugRelation&) = default;
};

struct SubgraphEdge {
  std::uint32_t head = 0;  // local node index
  AugRelation rel;
  std::uint32_t tail = 0;  // local node index
  friend bool operator==(const SubgraphEdge&, const SubgraphEdge&) = default;
};

struct ExtractedSubgraph {
  Triple target;
  ExtractionMode mode = ExtractionMode::kEnclosing;
  std::uint32_t k = 0;

  // Local index 0 is always u (= target.head), local index 1 is always v.
  std::vector<EntityId> node_entities;
  std::vector<SubgraphEdge> edges;

  // Filled by label_nodes.
  std::vector<NodeLabel> labels;
  Matrix node_features;  // n x 2*feature_width one-hot pairs
  std::uint32_t feature_width = 0;

  std::size_t num_nodes() const { return node_entities.size(); }
  std::uint32_t local_u() const { return 0; }
  std::uint32_t local_v() const { return 1; }

  std::optional<std::uint32_t> local_of(EntityId e) const {
    for (std::uint32_t i = 0; i < node_entities.size(); ++i)
      if (node_entities[i] == e) return i;
    return std::nullopt;
  }
};

namespace detail {

struct ExtractionContext {
  const KnowledgeGraph& g;
  Triple target;
  std::uint32_t k;
  DistanceMap du;  // hop counts from u, target edge omitted
  DistanceMap dv;  // hop counts from v, target edge omitted
};

inline ExtractionContext make_context(const KnowledgeGraph& g, const Triple& target,
                                      std::uint32_t k) {
  g.check_entity(target.head);
  g.check_entity(target.tail);
  g.check_relation(target.rel);
  if (target.head == target.tail) throw ArgumentError("target triple is a self-loop");
  if (k == 0) throw ArgumentError("extraction requires k >= 1");
  ExtractionContext ctx{g, target, k,
                        bfs_distances(g, target.head, k, std::nullopt, &target),
                        bfs_distances(g, target.tail, k, std::nullopt, &target)};
  return ctx;
}

// N_k(u) intersected with N_k(v); never contains u or v.
inline std::vector<EntityId> common_neighbors(const ExtractionContext& ctx) {
  std::vector<EntityId> s;
  for (EntityId e = 0; e < ctx.g.num_entities(); ++e) {
    const std::uint32_t a = ctx.du.dist[e];
    const std::uint32_t b = ctx.dv.dist[e];
    if (a != kUnreachable && a > 0 && b != kUnreachable && b > 0) s.push_back(e);
  }
  return s;
}

// Degree of e inside `members`, target edge excluded.
inline std::size_t induced_degree(const ExtractionContext& ctx, EntityId e,
                                  const std::set<EntityId>& members) {
  std::size_t deg = 0;
  for (const auto& nb : ctx.g.out(e)) {
    if (e == ctx.target.head && nb.rel == ctx.target.rel && nb.node == ctx.target.tail) continue;
    if (members.count(nb.node)) ++deg;
  }
  for (const auto& nb : ctx.g.in(e)) {
    if (nb.node == ctx.target.head && nb.rel == ctx.target.rel && e == ctx.target.tail) continue;
    if (members.count(nb.node)) ++deg;
  }
  return deg;
}

// Prunes isolated members of `candidates` against {u, v} + candidates until
// nothing changes. Degree-zero removal cannot cascade, but the loop keeps the
// fixpoint semantics explicit. Returns (kept, pruned).
inline std::pair<std::set<EntityId>, std::vector<EntityId>> prune_isolated(
    const ExtractionContext& ctx, const std::vector<EntityId>& candidates) {
  std::set<EntityId> members(candidates.begin(), candidates.end());
  members.insert(ctx.target.head);
  members.insert(ctx.target.tail);
  std::vector<EntityId> pruned;
  bool changed = true;
  while (changed) {
    changed = false;
    for (EntityId e : std::vector<EntityId>(members.begin(), members.end())) {
      if (e == ctx.target.head || e == ctx.target.tail) continue;
      if (induced_degree(ctx, e, members) == 0) {
        members.erase(e);
        pruned.push_back(e);
        changed = true;
      }
    }
  }
  std::sort(pruned.begin(), pruned.end());
  return {members, pruned};
}

// Node ordering: u, v, then remaining member entities ascending.
inline std::vector<EntityId> order_nodes(const ExtractionContext& ctx,
                                         const std::set<EntityId>& members) {
  std::vector<EntityId> nodes{ctx.target.head, ctx.target.tail};
  for (EntityId e : members)
    if (e != ctx.target.head && e != ctx.target.tail) nodes.push_back(e);
  return nodes;
}

// Every graph triple with both endpoints in the node set, minus the target.
inline std::vector<SubgraphEdge> induced_edges(const ExtractionContext& ctx,
                                               const std::vector<EntityId>& nodes) {
  std::unordered_map<EntityId, std::uint32_t> local;
  for (std::uint32_t i = 0; i < nodes.size(); ++i) local.emplace(nodes[i], i);
  std::vector<SubgraphEdge> edges;
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    const EntityId h = nodes[i];
    for (const auto& nb : ctx.g.out(h)) {
      const Triple t{h, nb.rel, nb.node};
      if (t == ctx.target) continue;
      auto it = local.find(nb.node);
      if (it == local.end()) continue;
      edges.push_back({i, AugRelation{nb.rel, 0, 0, false}, it->second});
    }
  }
  return edges;
}

// Base relation of i's first edge along a shortest path toward the side whose
// exclusion distances are given. Ties: smallest relation id, then smallest
// neighbor entity id.
inline RelationId first_edge_toward(const ExtractionContext& ctx, EntityId i,
                                    const DistanceMap& side) {
  const std::uint32_t di = side.dist[i];
  if (di == kUnreachable || di == 0)
    throw StructuralError("no shortest path from isolated common neighbor");
  std::optional<std::pair<RelationId, EntityId>> best;
  auto consider = [&](RelationId r, EntityId n) {
    if (side.dist[n] != di - 1) return;
    const std::pair<RelationId, EntityId> cand{r, n};
    if (!best || cand < *best) best = cand;
  };
  for (const auto& nb : ctx.g.out(i)) {
    if (i == ctx.target.head && nb.rel == ctx.target.rel && nb.node == ctx.target.tail) continue;
    consider(nb.rel, nb.node);
  }
  for (const auto& nb : ctx.g.in(i)) {
    if (nb.node == ctx.target.head && nb.rel == ctx.target.rel && i == ctx.target.tail) continue;
    consider(nb.rel, nb.node);
  }
  if (!best) throw StructuralError("no predecessor on shortest path");
  return best->first;
}

}  // namespace detail

inline ExtractedSubgraph extract_enclosing(const KnowledgeGraph& g, const Triple& target,
                                           std::uint32_t k) {
  const auto ctx = detail::make_context(g, target, k);
  const auto [members, pruned] = detail::prune_isolated(ctx, detail::common_neighbors(ctx));
  (void)pruned;
  ExtractedSubgraph sub;
  sub.target = target;
  sub.mode = ExtractionMode::kEnclosing;
  sub.k = k;
  sub.node_entities = detail::order_nodes(ctx, members);
  sub.edges = detail::induced_edges(ctx, sub.node_entities);
  return sub;
}

inline ExtractedSubgraph extract_ccn(const KnowledgeGraph& g, const Triple& target,
                                     std::uint32_t k) {
  const auto ctx = detail::make_context(g, target, k);
  const auto [members, isolated] = detail::prune_isolated(ctx, detail::common_neighbors(ctx));

  ExtractedSubgraph sub;
  sub.target = target;
  sub.mode = ExtractionMode::kCcn;
  sub.k = k;
  sub.node_entities = detail::order_nodes(ctx, members);
  sub.edges = detail::induced_edges(ctx, sub.node_entities);
  if (isolated.empty()) return sub;

  // Exclusion distances for the augmented coordinates: d(i,u) never passes
  // through v and d(i,v) never passes through u.
  const DistanceMap du_ex = bfs_distances(g, target.head, k, target.tail, &target);
  const DistanceMap dv_ex = bfs_distances(g, target.tail, k, target.head, &target);
  for (EntityId i : isolated) {
    const std::uint32_t di_u = du_ex.dist[i];
    const std::uint32_t di_v = dv_ex.dist[i];
    if (di_u == kUnreachable || di_v == kUnreachable)
      throw StructuralError("isolated common neighbor lost both exclusion paths");
    const RelationId base_u = detail::first_edge_toward(ctx, i, du_ex);
    const RelationId base_v = detail::first_edge_toward(ctx, i, dv_ex);
    const auto local_i = static_cast<std::uint32_t>(sub.node_entities.size());
    sub.node_entities.push_back(i);
    sub.edges.push_back({sub.local_u(), AugRelation{base_u, di_u, di_v, true}, local_i});
    sub.edges.push_back({local_i, AugRelation{base_v, di_u, di_v, true}, sub.local_v()});
  }
  return sub;
}

inline ExtractedSubgraph extract_ccn_plus(const KnowledgeGraph& g, const Triple& target,
                                          std::uint32_t k) {
  const auto ctx = detail::make_context(g, target, k);

  // Distilled neighbors of one target: hop-i nodes that touch the (i+1)-hop
  // boundary, unioned over i = 1..k-1, plus the target itself.
  auto distilled = [&](const DistanceMap& d) {
    std::set<EntityId> keep;
    keep.insert(d.source);
    for (std::uint32_t i = 1; i + 1 <= ctx.k; ++i) {
      for (EntityId e = 0; e < ctx.g.num_entities(); ++e) {
        if (d.dist[e] == kUnreachable || d.dist[e] == 0 || d.dist[e] > i) continue;
        bool touches_boundary = false;
        auto check = [&](EntityId n) {
          if (d.dist[n] == i + 1) touches_boundary = true;
        };
        for (const auto& nb : ctx.g.out(e)) {
          if (e == ctx.target.head && nb.rel == ctx.target.rel && nb.node == ctx.target.tail)
            continue;
          check(nb.node);
        }
        for (const auto& nb : ctx.g.in(e)) {
          if (nb.node == ctx.target.head && nb.rel == ctx.target.rel && e == ctx.target.tail)
            continue;
          check(nb.node);
        }
        if (touches_boundary) keep.insert(e);
      }
    }
    return keep;
  };

  std::set<EntityId> members;
  for (EntityId c : detail::common_neighbors(ctx)) members.insert(c);
  for (EntityId e : distilled(ctx.du)) members.insert(e);
  for (EntityId e : distilled(ctx.dv)) members.insert(e);
  members.insert(target.head);
  members.insert(target.tail);

  ExtractedSubgraph sub;
  sub.target = target;
  sub.mode = ExtractionMode::kCcnPlus;
  sub.k = k;
  sub.node_entities = detail::order_nodes(ctx, members);
  sub.edges = detail::induced_edges(ctx, sub.node_entities);
  return sub;
}

inline ExtractedSubgraph extract(const KnowledgeGraph& g, const Triple& target,
                                 ExtractionMode mode, std::uint32_t k) {
  switch (mode) {
    case ExtractionMode::kEnclosing: return extract_enclosing(g, target, k);
    case ExtractionMode::kCcn: return extract_ccn(g, target, k);
    case ExtractionMode::kCcnPlus: return extract_ccn_plus(g, target, k);
  }
  throw ArgumentError("unknown extraction mode");
}

// Double-radius labels plus one-hot node features of width 2*feature_width.
// Distances at or beyond feature_width clamp to feature_width-1; a node
// unreachable from one side (possible for distilled dead-side chains) clamps
// the same way. Unreachable from both sides means the subgraph is malformed.
inline ExtractedSubgraph label_nodes(const KnowledgeGraph& g, ExtractedSubgraph sub,
                                     std::uint32_t feature_width) {
  if (feature_width < 2) throw ArgumentError("feature width must be at least 2");
  const std::uint32_t cap = feature_width - 1;
  // Exact distances (a hop count can never reach the entity count), clamped
  // below; a bounded BFS could not tell "beyond the clamp" from "no path".
  const auto horizon = static_cast<std::uint32_t>(g.num_entities());
  const DistanceMap du = bfs_distances(g, sub.target.head, horizon, sub.target.tail, &sub.target);
  const DistanceMap dv = bfs_distances(g, sub.target.tail, horizon, sub.target.head, &sub.target);

  sub.feature_width = feature_width;
  sub.labels.assign(sub.num_nodes(), {});
  sub.node_features = Matrix(sub.num_nodes(), 2 * std::size_t(feature_width));
  for (std::uint32_t i = 0; i < sub.num_nodes(); ++i) {
    NodeLabel lab;
    if (i == sub.local_u()) {
      lab = {0, 1};
    } else if (i == sub.local_v()) {
      lab = {1, 0};
    } else {
      const EntityId e = sub.node_entities[i];
      const std::uint32_t a = du.dist[e];
      const std::uint32_t b = dv.dist[e];
      if (a == kUnreachable && b == kUnreachable)
        throw StructuralError("subgraph node unreachable from both targets: " +
                              g.entity_name(e));
      lab = {std::min(a, cap), std::min(b, cap)};
    }
    sub.labels[i] = lab;
    sub.node_features.at(i, lab.dist_u) = 1.0;
    sub.node_features.at(i, feature_width + lab.dist_v) = 1.0;
  }
  return sub;
}

// Canonical JSON dump: nodes ascending by entity id, edges sorted by
// (head, base relation, tail, distance pair). Requires labels.
inline nlohmann::json subgraph_to_json(const ExtractedSubgraph& sub) {
  if (sub.labels.size() != sub.num_nodes())
    throw ArgumentError("subgraph dump requires labels; call label_nodes first");
  nlohmann::json j;
  j["target"] = {{"h", sub.target.head}, {"r", sub.target.rel}, {"t", sub.target.tail}};
  j["mode"] = extraction_mode_name(sub.mode);
  j["k"] = sub.k;

  std::vector<std::uint32_t> order(sub.num_nodes());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return sub.node_entities[a] < sub.node_entities[b];
  });
  j["nodes"] = nlohmann::json::array();
  for (std::uint32_t i : order)
    j["nodes"].push_back({{"entity", sub.node_entities[i]},
                          {"d_u", sub.labels[i].dist_u},
                          {"d_v", sub.labels[i].dist_v}});

  struct Row {
    EntityId h, t;
    AugRelation rel;
  };
  std::vector<Row> rows;
  for (const auto& e : sub.edges)
    rows.push_back({sub.node_entities[e.head], sub.node_entities[e.tail], e.rel});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.h, a.rel, a.t) < std::tie(b.h, b.rel, b.t);
  });
  j["edges"] = nlohmann::json::array();
  for (const Row& r : rows) {
    nlohmann::json e{{"h", r.h}, {"r", r.rel.base}, {"t", r.t}};
    if (r.rel.augmented)
      e["aug"] = {{"d_u", r.rel.dist_u}, {"d_v", r.rel.dist_v}};
    else
      e["aug"] = nullptr;
    j["edges"].push_back(e);
  }
  return j;
}

}  // namespace taco
