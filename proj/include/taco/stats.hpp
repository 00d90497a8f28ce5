#pragma once
// Subgraph statistics over a triple list: how often the k-hop enclosing
// subgraph degenerates to the two target entities (Num=2) or to a single
// u-x-v bridge (Num=3), how much of the CCN+ node set it covers
// (Incomplete_Ratio, per-triple ratio averaged), and, at k=3, how often it
// contains nodes lying on no short u-v path (irrelevant-rule flag).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <sstream>
#include <string>
#include <vector>

#include "taco/kg.hpp"
#include "taco/parallel.hpp"
#include "taco/subgraph.hpp"

namespace taco {

struct SubgraphStats {
  double num2_frac = 0.0;
  double num3_frac = 0.0;
  double others_frac = 0.0;
  double incomplete_ratio = 0.0;         // mean |enclosing| / |ccn+| over triples
  double irrelevant3_frac = std::nan("");  // only defined for k == 3
  std::size_t triple_count = 0;
  std::string split;
  std::uint32_t k = 0;
};

namespace detail {

// Per-triple classification of the enclosing subgraph.
struct TripleStats {
  enum class Shape { kTwo, kThree, kOther } shape = Shape::kOther;
  double ratio = 0.0;
  bool irrelevant = false;
};

inline bool has_undirected_edge(const ExtractedSubgraph& sub, std::uint32_t a, std::uint32_t b) {
  for (const SubgraphEdge& e : sub.edges)
    if ((e.head == a && e.tail == b) || (e.head == b && e.tail == a)) return true;
  return false;
}

// BFS over the subgraph's own edges, ignoring direction.
inline std::vector<std::uint32_t> local_distances(const ExtractedSubgraph& sub,
                                                  std::uint32_t source) {
  std::vector<std::vector<std::uint32_t>> adj(sub.num_nodes());
  for (const SubgraphEdge& e : sub.edges) {
    adj[e.head].push_back(e.tail);
    adj[e.tail].push_back(e.head);
  }
  std::vector<std::uint32_t> dist(sub.num_nodes(), kUnreachable);
  dist[source] = 0;
  std::deque<std::uint32_t> frontier{source};
  while (!frontier.empty()) {
    const std::uint32_t x = frontier.front();
    frontier.pop_front();
    for (std::uint32_t y : adj[x]) {
      if (dist[y] != kUnreachable) continue;
      dist[y] = dist[x] + 1;
      frontier.push_back(y);
    }
  }
  return dist;
}

inline TripleStats one_triple_stats(const KnowledgeGraph& g, const Triple& t, std::uint32_t k) {
  TripleStats s;
  const ExtractedSubgraph enc = extract_enclosing(g, t, k);
  const ExtractedSubgraph plus = extract_ccn_plus(g, t, k);
  s.ratio = static_cast<double>(enc.num_nodes()) / static_cast<double>(plus.num_nodes());
  if (enc.num_nodes() == 2) {
    s.shape = TripleStats::Shape::kTwo;
  } else if (enc.num_nodes() == 3 && has_undirected_edge(enc, 2, enc.local_u()) &&
             has_undirected_edge(enc, 2, enc.local_v())) {
    s.shape = TripleStats::Shape::kThree;
  }
  if (k == 3) {
    const auto du = local_distances(enc, enc.local_u());
    const auto dv = local_distances(enc, enc.local_v());
    for (std::size_t i = 0; i < enc.num_nodes(); ++i) {
      if (du[i] == kUnreachable || dv[i] == kUnreachable || du[i] + dv[i] > 4) {
        s.irrelevant = true;
        break;
      }
    }
  }
  return s;
}

}  // namespace detail

inline SubgraphStats compute_stats(const KnowledgeGraph& g, const std::vector<Triple>& triples,
                                   std::uint32_t k, const std::string& split = "",
                                   unsigned threads = 1) {
  if (triples.empty()) throw ArgumentError("statistics need at least one triple");
  if (k < 1) throw ArgumentError("hop count must be at least 1");
  std::vector<detail::TripleStats> per(triples.size());
  parallel_for(triples.size(), threads,
               [&](std::size_t i) { per[i] = detail::one_triple_stats(g, triples[i], k); });

  SubgraphStats out;
  out.triple_count = triples.size();
  out.split = split;
  out.k = k;
  const auto n = static_cast<double>(triples.size());
  double irrelevant = 0.0;
  for (const auto& s : per) {
    switch (s.shape) {
      case detail::TripleStats::Shape::kTwo: out.num2_frac += 1.0 / n; break;
      case detail::TripleStats::Shape::kThree: out.num3_frac += 1.0 / n; break;
      case detail::TripleStats::Shape::kOther: out.others_frac += 1.0 / n; break;
    }
    out.incomplete_ratio += s.ratio / n;
    if (s.irrelevant) irrelevant += 1.0 / n;
  }
  if (k == 3) out.irrelevant3_frac = irrelevant;
  return out;
}

inline constexpr const char* kIrrelevantCaveat =
    "note: the irrelevant-rule flag marks subgraphs holding a node on no u-v path of "
    "length <= 4 (within-subgraph distances); counts under other readings may differ";

inline std::string stats_to_csv(const SubgraphStats& s) {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "split,k,triple_count,num2_frac,num3_frac,others_frac,incomplete_ratio,"
         "irrelevant3_frac\n";
  out << s.split << ',' << s.k << ',' << s.triple_count << ',' << num(s.num2_frac) << ','
      << num(s.num3_frac) << ',' << num(s.others_frac) << ',' << num(s.incomplete_ratio) << ','
      << num(s.irrelevant3_frac) << '\n';
  return out.str();
}

inline std::string stats_to_text(const SubgraphStats& s) {
  std::ostringstream out;
  auto row = [&](const char* name, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "  %-18s %8.3f\n", name, v);
    out << buf;
  };
  out << "subgraph statistics (split=" << (s.split.empty() ? "-" : s.split) << ", k=" << s.k
      << ", triples=" << s.triple_count << ")\n";
  row("Num=2", s.num2_frac);
  row("Num=3", s.num3_frac);
  row("Others", s.others_frac);
  row("Incomplete_Ratio", s.incomplete_ratio);
  if (s.k == 3) {
    row("Irrelevant", s.irrelevant3_frac);
    out << "  " << kIrrelevantCaveat << "\n";
  }
  return out.str();
}

}  // namespace taco
