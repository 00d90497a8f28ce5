#pragma once
// Topological patterns between directed edges and the relational correlation
// graph (RCG) built from a subgraph. Two irreflexive directed edges share 0,
// 1, or 2 endpoints; that yields exactly seven cases:
//
//   shared 0: NC (not connected)
//   shared 2: PARA (h1=h2 and t1=t2) or LOOP (h1=t2 and t1=h2)
//   shared 1: H-H (h1=h2), H-T (h1=t2), T-H (t1=h2), T-T (t1=t2)
//
// Pattern names read the first edge's endpoint first: (e1, H-T, e2) means
// e1's head coincides with e2's tail. Swapping the arguments maps H-T to T-H
// and fixes the symmetric patterns.
//
// Relation slots: base relations keep their graph ids; each augmented
// relation (base, d_u, d_v) gets its own slot, with distances clamped to the
// model's feature width so the key space stays bounded. The slot table grows
// per dataset and is persisted alongside model parameters.

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "taco/kg.hpp"
#include "taco/subgraph.hpp"

namespace taco {

enum class Pattern : std::uint8_t {
  kHeadTail = 0,
  kTailTail = 1,
  kHeadHead = 2,
  kTailHead = 3,
  kParallel = 4,
  kLoop = 5,
  kNotConnected = 6,
};

inline constexpr std::size_t kNumConnectedPatterns = 6;

inline const char* pattern_name(Pattern p) {
  switch (p) {
    case Pattern::kHeadTail: return "H-T";
    case Pattern::kTailTail: return "T-T";
    case Pattern::kHeadHead: return "H-H";
    case Pattern::kTailHead: return "T-H";
    case Pattern::kParallel: return "PARA";
    case Pattern::kLoop: return "LOOP";
    case Pattern::kNotConnected: return "NC";
  }
  return "?";
}

// Endpoint pair of a directed edge; entity identity is all that matters here.
struct EdgeEnds {
  EntityId head = 0;
  EntityId tail = 0;
};

inline Pattern classify_pattern(const EdgeEnds& e1, const EdgeEnds& e2) {
  if (e1.head == e1.tail || e2.head == e2.tail)
    throw ArgumentError("pattern classification requires irreflexive edges");
  const bool hh = e1.head == e2.head;
  const bool ht = e1.head == e2.tail;
  const bool th = e1.tail == e2.head;
  const bool tt = e1.tail == e2.tail;
  if (hh && tt) return Pattern::kParallel;
  if (ht && th) return Pattern::kLoop;
  if (hh) return Pattern::kHeadHead;
  if (ht) return Pattern::kHeadTail;
  if (th) return Pattern::kTailHead;
  if (tt) return Pattern::kTailTail;
  return Pattern::kNotConnected;
}

// Slot table mapping base and augmented relations to dense indices. Base
// relation r occupies slot r; augmented keys are appended as first seen.
// get-or-add is serialized so concurrent scoring threads can mint slots.
class RelationSlots {
 public:
  using AugKey = std::tuple<RelationId, std::uint32_t, std::uint32_t>;

  RelationSlots() = default;
  RelationSlots(std::uint32_t num_base, std::uint32_t clamp_width)
      : num_base_(num_base), clamp_width_(clamp_width) {}

  RelationSlots(const RelationSlots& o) { copy_from(o); }
  RelationSlots& operator=(const RelationSlots& o) {
    if (this != &o) copy_from(o);
    return *this;
  }

  std::uint32_t num_base() const { return num_base_; }
  std::uint32_t clamp_width() const { return clamp_width_; }

  std::uint32_t slot_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return num_base_ + static_cast<std::uint32_t>(aug_keys_.size());
  }

  std::uint32_t base_slot(RelationId r) const {
    if (r >= num_base_) throw ArgumentError("relation id outside slot table");
    return r;
  }

  AugKey clamp(const AugRelation& rel) const {
    const std::uint32_t cap = clamp_width_ - 1;
    return {rel.base, std::min(rel.dist_u, cap), std::min(rel.dist_v, cap)};
  }

  std::uint32_t slot_for(const AugRelation& rel) {
    if (rel.base >= num_base_) throw ArgumentError("relation id outside slot table");
    if (!rel.augmented) return rel.base;
    const AugKey key = clamp(rel);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = aug_index_.find(key);
    if (it != aug_index_.end()) return it->second;
    const auto slot = num_base_ + static_cast<std::uint32_t>(aug_keys_.size());
    aug_keys_.push_back(key);
    aug_index_.emplace(key, slot);
    return slot;
  }

  bool is_augmented_slot(std::uint32_t slot) const { return slot >= num_base_; }

  // Augmented key of a slot; only valid for augmented slots.
  AugKey aug_key(std::uint32_t slot) const {
    std::lock_guard<std::mutex> lock(mu_);
    return aug_keys_.at(slot - num_base_);
  }

  // Ordering independent of minting order: base slots by id, then augmented
  // keys lexicographically. Keeps reduction order stable across runs that
  // discover augmented relations in different sequences.
  bool canonical_less(std::uint32_t a, std::uint32_t b) const {
    const bool aa = is_augmented_slot(a);
    const bool ab = is_augmented_slot(b);
    if (aa != ab) return !aa;
    if (!aa) return a < b;
    return aug_key(a) < aug_key(b);
  }

  nlohmann::json to_json() const {
    std::lock_guard<std::mutex> lock(mu_);
    nlohmann::json j;
    j["num_base"] = num_base_;
    j["clamp_width"] = clamp_width_;
    j["augmented"] = nlohmann::json::array();
    for (const auto& [base, du, dv] : aug_keys_)
      j["augmented"].push_back({{"base", base}, {"d_u", du}, {"d_v", dv}});
    return j;
  }

  static RelationSlots from_json(const nlohmann::json& j) {
    RelationSlots s(j.at("num_base").get<std::uint32_t>(),
                    j.at("clamp_width").get<std::uint32_t>());
    for (const auto& e : j.at("augmented")) {
      AugKey key{e.at("base").get<RelationId>(), e.at("d_u").get<std::uint32_t>(),
                 e.at("d_v").get<std::uint32_t>()};
      const auto slot = s.num_base_ + static_cast<std::uint32_t>(s.aug_keys_.size());
      s.aug_keys_.push_back(key);
      s.aug_index_.emplace(key, slot);
    }
    return s;
  }

 private:
  void copy_from(const RelationSlots& o) {
    std::lock_guard<std::mutex> lock(o.mu_);
    num_base_ = o.num_base_;
    clamp_width_ = o.clamp_width_;
    aug_keys_ = o.aug_keys_;
    aug_index_ = o.aug_index_;
  }

  std::uint32_t num_base_ = 0;
  std::uint32_t clamp_width_ = 2;
  std::vector<AugKey> aug_keys_;
  std::map<AugKey, std::uint32_t> aug_index_;
  mutable std::mutex mu_;
};

struct RcgEdge {
  std::uint32_t ri = 0;
  Pattern pattern = Pattern::kNotConnected;
  std::uint32_t rj = 0;
  friend bool operator==(const RcgEdge&, const RcgEdge&) = default;
  friend auto operator<=>(const RcgEdge&, const RcgEdge&) = default;
};

struct RelationalCorrelationGraph {
  std::uint32_t num_slots = 0;

  // One entry per unordered pair of connected subgraph edges, classified with
  // the lower-indexed edge first. Sorted, duplicates collapsed.
  std::vector<RcgEdge> edges;

  // support[p] lists the slots whose edges connect to the target edge in
  // pattern p, in the slot table's canonical order. Binary semantics: a slot
  // appears once however many parallel edges realize the pattern.
  std::array<std::vector<std::uint32_t>, kNumConnectedPatterns> support;

  bool indicator(Pattern p, std::uint32_t slot) const {
    const auto& s = support[static_cast<std::size_t>(p)];
    for (std::uint32_t x : s)
      if (x == slot) return true;
    return false;
  }
};

// Builds the RCG of a subgraph: pairwise patterns between subgraph edges plus
// the per-pattern target indicator supports. The target edge (u, r_t, v)
// participates as an endpoint pair even though the subgraph's edge list never
// contains it. Augmented relations are interned into `slots` on sight.
inline RelationalCorrelationGraph build_rcg(const ExtractedSubgraph& sub, RelationSlots& slots) {
  RelationalCorrelationGraph rcg;

  std::vector<std::uint32_t> edge_slot(sub.edges.size());
  std::vector<EdgeEnds> ends(sub.edges.size());
  for (std::size_t i = 0; i < sub.edges.size(); ++i) {
    edge_slot[i] = slots.slot_for(sub.edges[i].rel);
    ends[i] = {sub.node_entities[sub.edges[i].head], sub.node_entities[sub.edges[i].tail]};
  }
  rcg.num_slots = slots.slot_count();

  for (std::size_t i = 0; i < sub.edges.size(); ++i) {
    for (std::size_t j = i + 1; j < sub.edges.size(); ++j) {
      const Pattern p = classify_pattern(ends[i], ends[j]);
      if (p == Pattern::kNotConnected) continue;
      rcg.edges.push_back({edge_slot[i], p, edge_slot[j]});
    }
  }
  std::sort(rcg.edges.begin(), rcg.edges.end());
  rcg.edges.erase(std::unique(rcg.edges.begin(), rcg.edges.end()), rcg.edges.end());

  const EdgeEnds target_ends{sub.target.head, sub.target.tail};
  for (std::size_t i = 0; i < sub.edges.size(); ++i) {
    const Pattern p = classify_pattern(ends[i], target_ends);
    if (p == Pattern::kNotConnected) continue;
    auto& sup = rcg.support[static_cast<std::size_t>(p)];
    if (std::find(sup.begin(), sup.end(), edge_slot[i]) == sup.end())
      sup.push_back(edge_slot[i]);
  }
  for (auto& sup : rcg.support)
    std::sort(sup.begin(), sup.end(),
              [&](std::uint32_t a, std::uint32_t b) { return slots.canonical_less(a, b); });
  return rcg;
}

// Debug dump: explicit edge list plus full indicator bit vectors per pattern.
inline nlohmann::json rcg_to_json(const RelationalCorrelationGraph& rcg) {
  nlohmann::json j;
  j["num_slots"] = rcg.num_slots;
  j["edges"] = nlohmann::json::array();
  for (const auto& e : rcg.edges)
    j["edges"].push_back({{"ri", e.ri}, {"pattern", pattern_name(e.pattern)}, {"rj", e.rj}});
  j["indicators"] = nlohmann::json::object();
  for (std::size_t p = 0; p < kNumConnectedPatterns; ++p) {
    std::vector<int> bits(rcg.num_slots, 0);
    for (std::uint32_t s : rcg.support[p]) bits[s] = 1;
    j["indicators"][pattern_name(static_cast<Pattern>(p))] = bits;
  }
  return j;
}

}  // namespace taco
