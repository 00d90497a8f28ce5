#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "taco/taco.hpp"

using namespace taco;

namespace {

// Writes `content` to a fresh temp file and returns its path.
std::string temp_tsv(const std::string& content) {
  static int counter = 0;
  const auto path = std::filesystem::temp_directory_path() /
                    ("taco_kg_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) +
                     ".tsv");
  std::ofstream out(path);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("tsv ingestion builds vocabularies in first-appearance order") {
  const auto path = temp_tsv(
      "alice\tknows\tbob\n"
      "\n"
      "# a comment line\n"
      "bob\tknows\tcarol\r\n"
      "carol\tlikes\talice\n");
  const KnowledgeGraph g = ingest_tsv(path);
  REQUIRE(g.num_entities() == 3);
  REQUIRE(g.num_relations() == 2);
  REQUIRE(g.num_triples() == 3);
  CHECK(g.entity_name(0) == "alice");
  CHECK(g.entity_name(1) == "bob");
  CHECK(g.entity_name(2) == "carol");
  CHECK(g.relation_name(0) == "knows");
  CHECK(g.relation_name(1) == "likes");
  CHECK(g.triples()[0] == Triple{0, 0, 1});
  CHECK(g.triples()[1] == Triple{1, 0, 2});
  CHECK(g.triples()[2] == Triple{2, 1, 0});
  CHECK(g.contains(Triple{2, 1, 0}));
  CHECK_FALSE(g.contains(Triple{0, 1, 2}));
  CHECK(graph_summary_json(g) == "{\"num_entities\":3,\"num_relations\":2,\"num_triples\":3}");
  std::filesystem::remove(path);
}

TEST_CASE("tsv ingestion reports malformed lines with their line number") {
  const auto path = temp_tsv("a\tr\tb\nnot a triple\n");
  try {
    ingest_tsv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::filesystem::remove(path);

  const auto too_many = temp_tsv("a\tr\tb\tc\n");
  CHECK_THROWS_AS(ingest_tsv(too_many), ParseError);
  std::filesystem::remove(too_many);

  const auto empty_field = temp_tsv("a\t\tb\n");
  CHECK_THROWS_AS(ingest_tsv(empty_field), ParseError);
  std::filesystem::remove(empty_field);
}

TEST_CASE("tsv ingestion rejects self-loops and duplicates with line numbers") {
  const auto loop = temp_tsv("a\tr\tb\nx\tr\tx\n");
  try {
    ingest_tsv(loop);
    FAIL("expected SelfLoopError");
  } catch (const SelfLoopError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::filesystem::remove(loop);

  const auto dup = temp_tsv("a\tr\tb\nc\tr\td\na\tr\tb\n");
  try {
    ingest_tsv(dup);
    FAIL("expected DuplicateTripleError");
  } catch (const DuplicateTripleError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::filesystem::remove(dup);

  CHECK_THROWS_AS(ingest_tsv("/nonexistent/path/triples.tsv"), IoError);
}

TEST_CASE("known vocabulary freezes ids and rejects strangers") {
  const auto path = temp_tsv("b\tr2\ta\n");
  const KnownVocab vocab{{"a", "b", "c"}, {"r1", "r2"}};
  const KnowledgeGraph g = ingest_tsv(path, vocab);
  REQUIRE(g.num_entities() == 3);
  REQUIRE(g.num_relations() == 2);
  CHECK(g.triples()[0] == Triple{1, 1, 0});
  std::filesystem::remove(path);

  // Entities are open: a fresh name extends the vocabulary instead of failing.
  const auto stranger = temp_tsv("a\tr1\tz\n");
  const KnowledgeGraph g2 = ingest_tsv(stranger, vocab);
  CHECK(g2.num_entities() == 4);
  CHECK(g2.entity_name(3) == "z");
  CHECK(g2.triples()[0] == Triple{0, 0, 3});
  std::filesystem::remove(stranger);

  const auto bad_rel = temp_tsv("a\tr9\tb\n");
  CHECK_THROWS_AS(ingest_tsv(bad_rel, vocab), VocabularyError);
  std::filesystem::remove(bad_rel);
}

TEST_CASE("builder rejects bad ids, self-loops, duplicates, vocab duplicates") {
  KnowledgeGraphBuilder b;
  b.preload_entities({"a", "b"});
  b.preload_relations({"r"});
  CHECK_THROWS_AS(b.add_triple(EntityId{5}, RelationId{0}, EntityId{0}), ArgumentError);
  CHECK_THROWS_AS(b.add_triple(EntityId{0}, RelationId{3}, EntityId{1}), ArgumentError);
  CHECK_THROWS_AS(b.add_triple(EntityId{0}, RelationId{0}, EntityId{0}), SelfLoopError);
  b.add_triple(EntityId{0}, RelationId{0}, EntityId{1});
  CHECK_THROWS_AS(b.add_triple(EntityId{0}, RelationId{0}, EntityId{1}), DuplicateTripleError);

  KnowledgeGraphBuilder dup_vocab;
  CHECK_THROWS_AS(dup_vocab.preload_entities({"x", "x"}), VocabularyError);
  KnowledgeGraphBuilder dup_rel;
  CHECK_THROWS_AS(dup_rel.preload_relations({"r", "r"}), VocabularyError);
}

TEST_CASE("write_tsv round-trips a graph") {
  Rng rng(7);
  const KnowledgeGraph g = oracle::random_graph(rng, 20, 4, 60);
  const auto path = temp_tsv("");
  write_tsv(g, path);
  const KnownVocab vocab{g.entity_names(), g.relation_names()};
  const KnowledgeGraph h = ingest_tsv(path, vocab);
  REQUIRE(h.num_triples() == g.num_triples());
  for (std::size_t i = 0; i < g.num_triples(); ++i) CHECK(h.triples()[i] == g.triples()[i]);
  std::filesystem::remove(path);
}

TEST_CASE("adjacency lists hold both directions in insertion order") {
  KnowledgeGraphBuilder b;
  b.preload_entities({"a", "b", "c"});
  b.preload_relations({"r", "s"});
  b.add_triple(EntityId{0}, RelationId{0}, EntityId{1});
  b.add_triple(EntityId{2}, RelationId{1}, EntityId{1});
  const KnowledgeGraph g = b.build();
  REQUIRE(g.out(0).size() == 1);
  CHECK(g.out(0)[0].rel == 0);
  CHECK(g.out(0)[0].node == 1);
  REQUIRE(g.in(1).size() == 2);
  CHECK(g.in(1)[0].node == 0);
  CHECK(g.in(1)[1].node == 2);
  CHECK(g.out(1).empty());
  CHECK_THROWS_AS(g.check_entity(EntityId{9}), ArgumentError);
  CHECK_THROWS_AS(g.check_relation(RelationId{9}), ArgumentError);
}

TEST_CASE("bfs distances match an independent search, with cutoff, exclude, omit") {
  Rng rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const KnowledgeGraph g = oracle::random_graph(rng, 25, 4, 70);
    const auto n = g.num_entities();
    const auto source = static_cast<EntityId>(rng.below(n));
    const auto cutoff = static_cast<std::uint32_t>(1 + rng.below(4));

    std::optional<EntityId> exclude;
    if (rng.below(2) == 0 && n > 1) {
      auto e = static_cast<EntityId>(rng.below(n));
      if (e != source) exclude = e;
    }
    const Triple* omit = nullptr;
    Triple omit_value;
    if (rng.below(2) == 0 && g.num_triples() > 0) {
      omit_value = g.triples()[rng.below(g.num_triples())];
      omit = &omit_value;
    }

    const DistanceMap got = bfs_distances(g, source, cutoff, exclude, omit);
    const auto want = oracle::bfs(g.triples(), n, source, omit ? std::optional<Triple>(*omit)
                                                               : std::nullopt, exclude);
    for (EntityId e = 0; e < n; ++e) {
      const std::uint32_t expected =
          (exclude && e == *exclude) || want[e] > cutoff ? kUnreachable : want[e];
      INFO("trial " << trial << " node " << e);
      CHECK(got.dist[e] == expected);
      CHECK(got.reachable(e) == (expected != kUnreachable));
    }
  }
}

TEST_CASE("bfs argument validation") {
  KnowledgeGraphBuilder b;
  b.preload_entities({"a", "b"});
  b.preload_relations({"r"});
  b.add_triple(EntityId{0}, RelationId{0}, EntityId{1});
  const KnowledgeGraph g = b.build();
  CHECK_THROWS_AS(bfs_distances(g, EntityId{7}, 2), ArgumentError);
  CHECK_THROWS_AS(bfs_distances(g, EntityId{0}, 2, EntityId{0}), ArgumentError);
  CHECK_THROWS_AS(bfs_distances(g, EntityId{0}, 2, EntityId{9}), ArgumentError);
}

TEST_CASE("khop neighbors are the ascending reachable set minus the source") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const KnowledgeGraph g = oracle::random_graph(rng, 20, 3, 50);
    const auto n = g.num_entities();
    const auto source = static_cast<EntityId>(rng.below(n));
    const auto k = static_cast<std::uint32_t>(1 + rng.below(3));
    const auto want_dist = oracle::bfs(g.triples(), n, source, std::nullopt, std::nullopt);
    std::vector<EntityId> want;
    for (EntityId e = 0; e < n; ++e)
      if (e != source && want_dist[e] <= k) want.push_back(e);
    CHECK(khop_neighbors(g, source, k) == want);
  }
}
