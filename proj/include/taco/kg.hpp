#pragma once
// Knowledge graph storage: interned entity/relation vocabularies, an immutable
// triple list with per-entity adjacency indices, tab-separated ingestion, and
// the undirected BFS primitives every extraction mode is built on.
//
// Triple files are UTF-8 text, one `head<TAB>relation<TAB>tail` per line.
// Lines starting with '#' and blank lines are ignored. Self-loops and
// duplicate triples are rejected at build time, so downstream code can assume
// an irreflexive simple multigraph (parallel edges allowed across relations).

#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace taco {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Hop-count sentinel for "no path"; never a valid distance.
inline constexpr std::uint32_t kUnreachable = std::numeric_limits<std::uint32_t>::max();

struct Triple {
  EntityId head = 0;
  RelationId rel = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t x = (std::uint64_t(t.head) << 32) ^ (std::uint64_t(t.rel) << 16) ^ t.tail;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return static_cast<std::size_t>(x ^ (x >> 31));
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

struct ParseError : std::runtime_error {
  std::size_t line;
  ParseError(std::size_t line_no, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};

struct SelfLoopError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DuplicateTripleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VocabularyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Interning table: names to dense ids in first-appearance order.
class Vocab {
 public:
  std::uint32_t get_or_add(const std::string& name) {
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.push_back(name);
    index_.emplace(name, id);
    return id;
  }

  std::optional<std::uint32_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::uint32_t id) const { return names_[id]; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

class KnowledgeGraph {
 public:
  struct Neighbor {
    RelationId rel;
    EntityId node;  // the other endpoint
  };

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  std::size_t num_triples() const { return triples_.size(); }

  const std::vector<Triple>& triples() const { return triples_; }
  const Triple& triple(std::size_t i) const { return triples_[i]; }

  const std::string& entity_name(EntityId e) const { return entities_.name(e); }
  const std::string& relation_name(RelationId r) const { return relations_.name(r); }
  const std::vector<std::string>& entity_names() const { return entities_.names(); }
  const std::vector<std::string>& relation_names() const { return relations_.names(); }
  std::optional<EntityId> find_entity(const std::string& name) const { return entities_.find(name); }
  std::optional<RelationId> find_relation(const std::string& name) const { return relations_.find(name); }

  // Outgoing edges (rel, tail) of e and incoming edges (rel, head) of e,
  // in triple-insertion order.
  const std::vector<Neighbor>& out(EntityId e) const { return out_[e]; }
  const std::vector<Neighbor>& in(EntityId e) const { return in_[e]; }

  bool contains(const Triple& t) const { return triple_set_.count(t) != 0; }

  void check_entity(EntityId e) const {
    if (e >= num_entities()) throw ArgumentError("entity id out of range: " + std::to_string(e));
  }
  void check_relation(RelationId r) const {
    if (r >= num_relations()) throw ArgumentError("relation id out of range: " + std::to_string(r));
  }

 private:
  friend class KnowledgeGraphBuilder;
  Vocab entities_;
  Vocab relations_;
  std::vector<Triple> triples_;
  TripleSet triple_set_;
  std::vector<std::vector<Neighbor>> out_;
  std::vector<std::vector<Neighbor>> in_;
};

class KnowledgeGraphBuilder {
 public:
  EntityId add_entity(const std::string& name) { return g_.entities_.get_or_add(name); }

  RelationId add_relation(const std::string& name) {
    if (frozen_relations_ && !g_.relations_.find(name))
      throw VocabularyError("unknown relation: " + name);
    return g_.relations_.get_or_add(name);
  }

  // Preloads a fixed relation vocabulary; later lookups of names outside it fail.
  void preload_relations(const std::vector<std::string>& names) {
    for (const auto& n : names) {
      if (g_.relations_.find(n)) throw VocabularyError("duplicate relation name in vocabulary: " + n);
      g_.relations_.get_or_add(n);
    }
    frozen_relations_ = true;
  }

  void preload_entities(const std::vector<std::string>& names) {
    for (const auto& n : names) {
      if (g_.entities_.find(n)) throw VocabularyError("duplicate entity name in vocabulary: " + n);
      g_.entities_.get_or_add(n);
    }
  }

  void add_triple(EntityId h, RelationId r, EntityId t) {
    if (h >= g_.entities_.size() || t >= g_.entities_.size())
      throw ArgumentError("triple references unknown entity id");
    if (r >= g_.relations_.size())
      throw ArgumentError("triple references unknown relation id");
    if (h == t)
      throw SelfLoopError("self-loop rejected: " + g_.entities_.name(h) + " -" +
                          g_.relations_.name(r) + "-> " + g_.entities_.name(t));
    const Triple tr{h, r, t};
    if (!g_.triple_set_.insert(tr).second)
      throw DuplicateTripleError("duplicate triple rejected: " + g_.entities_.name(h) + " -" +
                                 g_.relations_.name(r) + "-> " + g_.entities_.name(t));
    g_.triples_.push_back(tr);
  }

  void add_triple(const std::string& h, const std::string& r, const std::string& t) {
    const EntityId hid = add_entity(h);
    const RelationId rid = add_relation(r);
    const EntityId tid = add_entity(t);
    add_triple(hid, rid, tid);
  }

  KnowledgeGraph build() {
    g_.out_.assign(g_.entities_.size(), {});
    g_.in_.assign(g_.entities_.size(), {});
    for (const Triple& t : g_.triples_) {
      g_.out_[t.head].push_back({t.rel, t.tail});
      g_.in_[t.tail].push_back({t.rel, t.head});
    }
    return std::move(g_);
  }

 private:
  KnowledgeGraph g_;
  bool frozen_relations_ = false;
};

// Optional fixed vocabularies for ingestion. Relations are closed (unknown
// names fail); entities are open (unseen names get fresh ids), which is what
// an inductive test split needs when it shares the training relation set.
struct KnownVocab {
  std::vector<std::string> entities;
  std::vector<std::string> relations;
};

namespace detail {
inline bool split_tsv_line(const std::string& line, std::string out[3]) {
  std::size_t first = line.find('\t');
  if (first == std::string::npos) return false;
  std::size_t second = line.find('\t', first + 1);
  if (second == std::string::npos) return false;
  if (line.find('\t', second + 1) != std::string::npos) return false;
  out[0] = line.substr(0, first);
  out[1] = line.substr(first + 1, second - first - 1);
  out[2] = line.substr(second + 1);
  return !out[0].empty() && !out[1].empty() && !out[2].empty();
}
}  // namespace detail

inline KnowledgeGraph ingest_tsv(const std::string& path,
                                 const std::optional<KnownVocab>& known = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triple file: " + path);
  KnowledgeGraphBuilder b;
  if (known) {
    b.preload_entities(known->entities);
    b.preload_relations(known->relations);
  }
  std::string line;
  std::size_t line_no = 0;
  std::string field[3];
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!detail::split_tsv_line(line, field))
      throw ParseError(line_no, "expected head<TAB>relation<TAB>tail");
    const std::string at = "line " + std::to_string(line_no) + ": ";
    try {
      b.add_triple(field[0], field[1], field[2]);
    } catch (const VocabularyError& e) {
      throw VocabularyError(at + e.what());
    } catch (const SelfLoopError& e) {
      throw SelfLoopError(at + e.what());
    } catch (const DuplicateTripleError& e) {
      throw DuplicateTripleError(at + e.what());
    }
  }
  return b.build();
}

inline void write_tsv(const KnowledgeGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path);
  for (const Triple& t : g.triples())
    out << g.entity_name(t.head) << '\t' << g.relation_name(t.rel) << '\t'
        << g.entity_name(t.tail) << '\n';
  if (!out) throw IoError("failed writing: " + path);
}

inline std::string graph_summary_json(const KnowledgeGraph& g) {
  std::ostringstream os;
  os << "{\"num_entities\":" << g.num_entities() << ",\"num_relations\":" << g.num_relations()
     << ",\"num_triples\":" << g.num_triples() << "}";
  return os.str();
}

struct DistanceMap {
  EntityId source = 0;
  std::uint32_t cutoff = 0;
  std::vector<std::uint32_t> dist;  // kUnreachable where no path within cutoff

  bool reachable(EntityId e) const { return dist[e] != kUnreachable; }
};

// Undirected breadth-first hop counts from `source`, stopping at `cutoff`
// hops. `exclude` removes one node from the graph entirely (used for the
// "distance to u not counting paths through v" labeling rule). `omit` removes
// one specific edge (used to keep a target triple out of its own extraction).
inline DistanceMap bfs_distances(const KnowledgeGraph& g, EntityId source, std::uint32_t cutoff,
                                 std::optional<EntityId> exclude = std::nullopt,
                                 const Triple* omit = nullptr) {
  g.check_entity(source);
  if (exclude) {
    g.check_entity(*exclude);
    if (*exclude == source) throw ArgumentError("bfs exclude node equals source");
  }
  DistanceMap m{source, cutoff, std::vector<std::uint32_t>(g.num_entities(), kUnreachable)};
  m.dist[source] = 0;
  std::queue<EntityId> q;
  q.push(source);
  while (!q.empty()) {
    const EntityId x = q.front();
    q.pop();
    const std::uint32_t dx = m.dist[x];
    if (dx >= cutoff) continue;
    auto visit = [&](EntityId y) {
      if (exclude && y == *exclude) return;
      if (m.dist[y] != kUnreachable) return;
      m.dist[y] = dx + 1;
      q.push(y);
    };
    for (const auto& nb : g.out(x)) {
      if (omit && x == omit->head && nb.rel == omit->rel && nb.node == omit->tail) continue;
      visit(nb.node);
    }
    for (const auto& nb : g.in(x)) {
      if (omit && nb.node == omit->head && nb.rel == omit->rel && x == omit->tail) continue;
      visit(nb.node);
    }
  }
  if (exclude) m.dist[*exclude] = kUnreachable;
  return m;
}

// Entities within k undirected hops of `source`, source excluded, ascending id.
inline std::vector<EntityId> khop_neighbors(const KnowledgeGraph& g, EntityId source,
                                            std::uint32_t k, const Triple* omit = nullptr) {
  const DistanceMap m = bfs_distances(g, source, k, std::nullopt, omit);
  std::vector<EntityId> out;
  for (EntityId e = 0; e < g.num_entities(); ++e)
    if (e != source && m.dist[e] != kUnreachable) out.push_back(e);
  return out;
}

}  // namespace taco
