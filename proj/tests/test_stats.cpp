#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "taco/taco.hpp"

using namespace taco;

namespace {

KnowledgeGraph graph_from(const std::vector<std::array<EntityId, 3>>& triples,
                          std::size_t entities, std::size_t relations) {
  KnowledgeGraphBuilder b;
  std::vector<std::string> en, rn;
  for (std::size_t i = 0; i < entities; ++i) en.push_back("e" + std::to_string(i));
  for (std::size_t i = 0; i < relations; ++i) rn.push_back("r" + std::to_string(i));
  b.preload_entities(en);
  b.preload_relations(rn);
  for (const auto& t : triples) b.add_triple(t[0], static_cast<RelationId>(t[1]), t[2]);
  return b.build();
}

}  // namespace

TEST_CASE("degenerate pair counts as Num=2 with full coverage") {
  // Only the target edge between u and v; nothing else nearby.
  const KnowledgeGraph g = graph_from({{0, 0, 1}, {2, 0, 3}}, 4, 1);
  const SubgraphStats s = compute_stats(g, {Triple{0, 0, 1}}, 2, "train");
  CHECK(s.num2_frac == 1.0);
  CHECK(s.num3_frac == 0.0);
  CHECK(s.others_frac == 0.0);
  CHECK(s.incomplete_ratio == 1.0);  // enclosing and distilled both collapse to {u, v}
  CHECK(std::isnan(s.irrelevant3_frac));
  CHECK(s.triple_count == 1);
  CHECK(s.split == "train");
  CHECK(s.k == 2);
}

TEST_CASE("single bridge counts as Num=3, lopsided third node does not") {
  // Triangle: w adjacent to both targets.
  const KnowledgeGraph tri = graph_from({{0, 0, 1}, {0, 1, 2}, {2, 2, 1}}, 3, 3);
  const SubgraphStats s3 = compute_stats(tri, {Triple{0, 0, 1}}, 2);
  CHECK(s3.num3_frac == 1.0);

  // w hangs off u only; a parallel u-v edge carries w into the subgraph.
  const KnowledgeGraph lop = graph_from({{0, 0, 1}, {0, 1, 1}, {0, 2, 2}}, 3, 3);
  const SubgraphStats so = compute_stats(lop, {Triple{0, 0, 1}}, 2);
  CHECK(so.num3_frac == 0.0);
  CHECK(so.others_frac == 1.0);
}

TEST_CASE("fractions agree with per-triple brute force on random graphs") {
  Rng rng(404);
  for (int trial = 0; trial < 25; ++trial) {
    const KnowledgeGraph g = oracle::random_graph(rng, 16, 3, 50);
    if (g.num_triples() < 4) continue;
    std::vector<Triple> triples(g.triples().begin(),
                                g.triples().begin() + std::min<std::size_t>(8, g.num_triples()));
    const auto k = static_cast<std::uint32_t>(1 + rng.below(3));
    const SubgraphStats s = compute_stats(g, triples, k);

    double num2 = 0, num3 = 0, others = 0, ratio = 0;
    for (const Triple& t : triples) {
      const auto enc = oracle::enclosing(g.triples(), g.num_entities(), t, k);
      const auto plus = oracle::ccn_plus(g.triples(), g.num_entities(), t, k);
      ratio += static_cast<double>(enc.nodes.size()) / static_cast<double>(plus.nodes.size());
      if (enc.nodes.size() == 2) {
        ++num2;
      } else if (enc.nodes.size() == 3) {
        EntityId third = 0;
        for (EntityId e : enc.nodes)
          if (e != t.head && e != t.tail) third = e;
        bool to_u = false, to_v = false;
        for (const Triple& e : enc.edges) {
          const bool touches_third = e.head == third || e.tail == third;
          if (touches_third && (e.head == t.head || e.tail == t.head)) to_u = true;
          if (touches_third && (e.head == t.tail || e.tail == t.tail)) to_v = true;
        }
        if (to_u && to_v) ++num3; else ++others;
      } else {
        ++others;
      }
    }
    const auto n = static_cast<double>(triples.size());
    INFO("trial " << trial << " k " << k);
    CHECK_THAT(s.num2_frac, Catch::Matchers::WithinAbs(num2 / n, 1e-9));
    CHECK_THAT(s.num3_frac, Catch::Matchers::WithinAbs(num3 / n, 1e-9));
    CHECK_THAT(s.others_frac, Catch::Matchers::WithinAbs(others / n, 1e-9));
    CHECK_THAT(s.incomplete_ratio, Catch::Matchers::WithinAbs(ratio / n, 1e-9));
    CHECK_THAT(s.num2_frac + s.num3_frac + s.others_frac,
               Catch::Matchers::WithinAbs(1.0, 1e-9));
    CHECK(s.incomplete_ratio > 0.0);
    CHECK(s.incomplete_ratio <= 1.0 + 1e-12);
  }
}

TEST_CASE("irrelevant flag fires on detour-only members at three hops") {
  // Straight chain u-a-b-v plus a two-node appendix near the chain's middle;
  // appendix members sit at summed distance > 4 from the targets.
  const KnowledgeGraph g = ingest_tsv(std::string(TACO_FIXTURE_DIR) + "/chain_cluster.tsv");
  const Triple target = g.triples().back();
  const SubgraphStats s = compute_stats(g, {target}, 3, "probe");
  CHECK(s.irrelevant3_frac == 1.0);

  const KnowledgeGraph tri = graph_from({{0, 0, 1}, {0, 1, 2}, {2, 2, 1}}, 3, 3);
  const SubgraphStats clean = compute_stats(tri, {Triple{0, 0, 1}}, 3);
  CHECK(clean.irrelevant3_frac == 0.0);

  const SubgraphStats off = compute_stats(tri, {Triple{0, 0, 1}}, 2);
  CHECK(std::isnan(off.irrelevant3_frac));
}

TEST_CASE("stats validate input and stay thread-stable") {
  const KnowledgeGraph g = graph_from({{0, 0, 1}, {1, 0, 2}}, 3, 1);
  CHECK_THROWS_AS(compute_stats(g, {}, 2), ArgumentError);
  CHECK_THROWS_AS(compute_stats(g, {Triple{0, 0, 1}}, 0), ArgumentError);

  Rng rng(505);
  const KnowledgeGraph big = oracle::random_graph(rng, 20, 3, 70);
  std::vector<Triple> triples(big.triples().begin(),
                              big.triples().begin() + std::min<std::size_t>(10, big.num_triples()));
  if (!triples.empty()) {
    const SubgraphStats a = compute_stats(big, triples, 2, "x", 1);
    const SubgraphStats b = compute_stats(big, triples, 2, "x", 4);
    CHECK(a.num2_frac == b.num2_frac);
    CHECK(a.num3_frac == b.num3_frac);
    CHECK(a.others_frac == b.others_frac);
    CHECK(a.incomplete_ratio == b.incomplete_ratio);
  }
}

TEST_CASE("stats render to csv and text") {
  SubgraphStats s;
  s.num2_frac = 0.25;
  s.num3_frac = 0.5;
  s.others_frac = 0.25;
  s.incomplete_ratio = 0.75;
  s.triple_count = 4;
  s.split = "test";
  s.k = 2;

  const std::string csv = stats_to_csv(s);
  CHECK(csv.find("split,k,triple_count,num2_frac,num3_frac,others_frac,incomplete_ratio,"
                 "irrelevant3_frac\n") == 0);
  CHECK(csv.find("test,2,4,0.250000,0.500000,0.250000,0.750000,\n") != std::string::npos);

  const std::string text = stats_to_text(s);
  CHECK(text.find("Num=2") != std::string::npos);
  CHECK(text.find("Num=3") != std::string::npos);
  CHECK(text.find("Others") != std::string::npos);
  CHECK(text.find("Incomplete_Ratio") != std::string::npos);
  CHECK(text.find("Irrelevant") == std::string::npos);  // k != 3 hides the flag

  s.k = 3;
  s.irrelevant3_frac = 0.125;
  const std::string text3 = stats_to_text(s);
  CHECK(text3.find("Irrelevant") != std::string::npos);
  CHECK(text3.find(kIrrelevantCaveat) != std::string::npos);
  const std::string csv3 = stats_to_csv(s);
  CHECK(csv3.find("0.125000\n") != std::string::npos);
}
