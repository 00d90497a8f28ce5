#pragma once
// Evaluation protocols. Two views of a scorer:
//
//   classification - each test triple paired with sampled corruptions;
//                    AUC-PR is average precision with a pessimistic tie rule
//                    (tied positives rank after tied negatives), with the
//                    optimistic value kept alongside as a diagnostic.
//   ranking        - each test triple ranked against `rank_negatives` filtered
//                    corruptions (tail side for even test indices, head side
//                    for odd); rank = 1 + number of strictly greater negative
//                    scores, so ties rank optimistically, and the fraction of
//                    triples with at least one tied negative is reported as
//                    the degenerate tie rate.
//
// Both repeat per seed with fresh negatives; the report keeps per-seed values
// and their means. Negatives never collide with the provided known-triple set
// when filtering is on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taco/kg.hpp"
#include "taco/parallel.hpp"
#include "taco/rng.hpp"

namespace taco {

using TripleScorer = std::function<double(const Triple&)>;

enum class CorruptionMode { kHead, kTail, kEither };

struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Uniform head-or-tail corruptions of `pos`. Corrupted entity differs from
// the original, never forms a self-loop, and (when a filter is given) never
// reproduces a known triple. Bounded retries, then SamplingError.
inline std::vector<Triple> sample_negatives(const KnowledgeGraph& g, const Triple& pos,
                                            std::size_t n, CorruptionMode mode, Rng& rng,
                                            const TripleSet* filter = nullptr) {
  g.check_entity(pos.head);
  g.check_entity(pos.tail);
  g.check_relation(pos.rel);
  std::vector<Triple> out;
  out.reserve(n);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 200 * n + 1000;
  while (out.size() < n) {
    if (++attempts > max_attempts)
      throw SamplingError("could not draw " + std::to_string(n) +
                          " negatives within retry budget");
    const bool corrupt_head = mode == CorruptionMode::kHead ||
                              (mode == CorruptionMode::kEither && rng.coin());
    const auto e = static_cast<EntityId>(rng.below(g.num_entities()));
    Triple cand = pos;
    if (corrupt_head) {
      if (e == pos.head) continue;
      cand.head = e;
    } else {
      if (e == pos.tail) continue;
      cand.tail = e;
    }
    if (cand.head == cand.tail) continue;
    if (filter && filter->count(cand)) continue;
    out.push_back(cand);
  }
  return out;
}

enum class TieRule { kPessimistic, kOptimistic };

// Average precision: walk the ranking from the top, summing precision at each
// positive hit over the positive count. Tie rule decides which side of a
// score tie the positives land on.
inline double average_precision(const std::vector<double>& pos_scores,
                                const std::vector<double>& neg_scores,
                                TieRule rule = TieRule::kPessimistic) {
  if (pos_scores.empty() || neg_scores.empty())
    throw ArgumentError("average precision needs both positive and negative scores");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) {
    if (!std::isfinite(s)) throw ArgumentError("non-finite score");
    items.push_back({s, true});
  }
  for (double s : neg_scores) {
    if (!std::isfinite(s)) throw ArgumentError("non-finite score");
    items.push_back({s, false});
  }
  std::stable_sort(items.begin(), items.end(), [rule](const Item& a, const Item& b) {
    if (a.score != b.score) return a.score > b.score;
    if (rule == TieRule::kPessimistic) return !a.positive && b.positive;
    return a.positive && !b.positive;
  });
  double ap = 0.0;
  std::size_t seen_pos = 0;
  for (std::size_t rank = 1; rank <= items.size(); ++rank) {
    if (!items[rank - 1].positive) continue;
    ++seen_pos;
    ap += static_cast<double>(seen_pos) / static_cast<double>(rank);
  }
  return ap / static_cast<double>(pos_scores.size());
}

inline double auc_pr(const std::vector<double>& pos_scores,
                     const std::vector<double>& neg_scores) {
  return average_precision(pos_scores, neg_scores, TieRule::kPessimistic);
}

struct EvalConfig {
  std::uint32_t rank_negatives = 50;
  std::uint32_t class_negatives = 1;
  bool filtered = true;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<std::uint32_t> hits_levels = {1, 5, 10};

  void validate() const {
    if (seeds.empty()) throw ArgumentError("evaluation needs at least one seed");
    if (rank_negatives < 1 || class_negatives < 1)
      throw ArgumentError("negative counts must be at least 1");
  }
};

struct SeedMetrics {
  std::uint64_t seed = 0;
  double auc = std::nan("");
  double auc_optimistic = std::nan("");
  std::map<std::uint32_t, double> hits;
  double mrr = std::nan("");
  double tie_rate = std::nan("");
};

struct EvalReport {
  std::size_t num_test_triples = 0;
  std::vector<SeedMetrics> per_seed;
  // Means over seeds.
  double auc = std::nan("");
  double auc_optimistic = std::nan("");
  std::map<std::uint32_t, double> hits;
  double mrr = std::nan("");
  double tie_rate = std::nan("");
};

namespace detail {

struct RankOutcome {
  std::size_t rank = 0;
  bool tied = false;
};

inline SeedMetrics eval_one_seed(const TripleScorer& scorer, const KnowledgeGraph& g,
                                 const std::vector<Triple>& test, const EvalConfig& cfg,
                                 const TripleSet& known, std::uint64_t seed, unsigned threads,
                                 bool with_auc, bool with_ranking) {
  SeedMetrics m;
  m.seed = seed;
  const TripleSet* filter = cfg.filtered ? &known : nullptr;
  const Rng base(seed);

  if (with_auc) {
    std::vector<double> pos_scores(test.size());
    std::vector<std::vector<double>> neg_scores(test.size());
    parallel_for(test.size(), threads, [&](std::size_t i) {
      Rng rng = base.fork(2 * i);  // even streams: classification
      pos_scores[i] = scorer(test[i]);
      for (const Triple& neg : sample_negatives(g, test[i], cfg.class_negatives,
                                                CorruptionMode::kEither, rng, filter))
        neg_scores[i].push_back(scorer(neg));
    });
    std::vector<double> flat_neg;
    for (const auto& v : neg_scores) flat_neg.insert(flat_neg.end(), v.begin(), v.end());
    m.auc = average_precision(pos_scores, flat_neg, TieRule::kPessimistic);
    m.auc_optimistic = average_precision(pos_scores, flat_neg, TieRule::kOptimistic);
  }

  if (with_ranking) {
    std::vector<RankOutcome> outcomes(test.size());
    parallel_for(test.size(), threads, [&](std::size_t i) {
      Rng rng = base.fork(2 * i + 1);  // odd streams: ranking
      const CorruptionMode side = i % 2 == 0 ? CorruptionMode::kTail : CorruptionMode::kHead;
      const double pos = scorer(test[i]);
      std::size_t greater = 0;
      bool tied = false;
      for (const Triple& neg :
           sample_negatives(g, test[i], cfg.rank_negatives, side, rng, filter)) {
        const double s = scorer(neg);
        if (s > pos) ++greater;
        if (s == pos) tied = true;
      }
      outcomes[i] = {1 + greater, tied};
    });
    double rr = 0.0, ties = 0.0;
    std::map<std::uint32_t, double> hits;
    for (std::uint32_t lvl : cfg.hits_levels) hits[lvl] = 0.0;
    for (const auto& o : outcomes) {
      rr += 1.0 / static_cast<double>(o.rank);
      ties += o.tied ? 1.0 : 0.0;
      for (std::uint32_t lvl : cfg.hits_levels)
        if (o.rank <= lvl) hits[lvl] += 1.0;
    }
    const auto n = static_cast<double>(test.size());
    m.mrr = rr / n;
    m.tie_rate = ties / n;
    for (auto& [lvl, v] : hits) v /= n;
    m.hits = std::move(hits);
  }
  return m;
}

}  // namespace detail

inline EvalReport evaluate(const TripleScorer& scorer, const KnowledgeGraph& g,
                           const std::vector<Triple>& test, const EvalConfig& cfg,
                           const TripleSet& known, unsigned threads = 1, bool with_auc = true,
                           bool with_ranking = true) {
  cfg.validate();
  if (test.empty()) throw ArgumentError("no test triples");
  EvalReport r;
  r.num_test_triples = test.size();
  for (std::uint64_t seed : cfg.seeds)
    r.per_seed.push_back(detail::eval_one_seed(scorer, g, test, cfg, known, seed, threads,
                                               with_auc, with_ranking));
  const auto n = static_cast<double>(r.per_seed.size());
  if (with_auc) {
    r.auc = 0.0;
    r.auc_optimistic = 0.0;
    for (const auto& s : r.per_seed) {
      r.auc += s.auc / n;
      r.auc_optimistic += s.auc_optimistic / n;
    }
  }
  if (with_ranking) {
    r.mrr = 0.0;
    r.tie_rate = 0.0;
    for (std::uint32_t lvl : cfg.hits_levels) r.hits[lvl] = 0.0;
    for (const auto& s : r.per_seed) {
      r.mrr += s.mrr / n;
      r.tie_rate += s.tie_rate / n;
      for (const auto& [lvl, v] : s.hits) r.hits[lvl] += v / n;
    }
  }
  return r;
}

inline EvalReport ranking_eval(const TripleScorer& scorer, const KnowledgeGraph& g,
                               const std::vector<Triple>& test, const EvalConfig& cfg,
                               const TripleSet& known, unsigned threads = 1) {
  return evaluate(scorer, g, test, cfg, known, threads, /*with_auc=*/false,
                  /*with_ranking=*/true);
}

// Scores every triple by its relation's frequency in the training graph.
inline TripleScorer frequency_baseline(const KnowledgeGraph& g_train) {
  std::vector<double> counts(g_train.num_relations(), 0.0);
  for (const Triple& t : g_train.triples()) counts[t.rel] += 1.0;
  return [counts](const Triple& t) {
    return t.rel < counts.size() ? counts[t.rel] : 0.0;
  };
}

namespace detail {
inline nlohmann::json nan_to_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}
}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& r, const nlohmann::json& config_echo,
                                     const std::string& checkpoint_hash) {
  nlohmann::json j;
  j["num_test_triples"] = r.num_test_triples;
  j["auc_pr"] = detail::nan_to_null(r.auc);
  j["auc_pr_optimistic"] = detail::nan_to_null(r.auc_optimistic);
  j["mrr"] = detail::nan_to_null(r.mrr);
  j["degenerate_tie_rate"] = detail::nan_to_null(r.tie_rate);
  j["hits"] = nlohmann::json::object();
  for (const auto& [lvl, v] : r.hits) j["hits"]["@" + std::to_string(lvl)] = v;
  j["per_seed"] = nlohmann::json::array();
  for (const auto& s : r.per_seed) {
    nlohmann::json js;
    js["seed"] = s.seed;
    js["auc_pr"] = detail::nan_to_null(s.auc);
    js["auc_pr_optimistic"] = detail::nan_to_null(s.auc_optimistic);
    js["mrr"] = detail::nan_to_null(s.mrr);
    js["degenerate_tie_rate"] = detail::nan_to_null(s.tie_rate);
    js["hits"] = nlohmann::json::object();
    for (const auto& [lvl, v] : s.hits) js["hits"]["@" + std::to_string(lvl)] = v;
    j["per_seed"].push_back(js);
  }
  j["config"] = config_echo;
  j["checkpoint_hash"] = checkpoint_hash;
  return j;
}

// Header line plus one data row; the config echo is embedded as a quoted JSON
// string in the final column.
inline std::string report_to_csv(const EvalReport& r, const nlohmann::json& config_echo,
                                 const std::string& checkpoint_hash) {
  std::ostringstream head, row;
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  head << "num_test_triples,auc_pr,auc_pr_optimistic,mrr,degenerate_tie_rate";
  row << r.num_test_triples << ',' << num(r.auc) << ',' << num(r.auc_optimistic) << ','
      << num(r.mrr) << ',' << num(r.tie_rate);
  for (const auto& [lvl, v] : r.hits) {
    head << ",hits@" << lvl;
    row << ',' << num(v);
  }
  head << ",checkpoint_hash,config";
  std::string cfg = config_echo.dump();
  std::string quoted = "\"";
  for (char c : cfg) {
    if (c == '"') quoted += "\"\"";
    else quoted += c;
  }
  quoted += "\"";
  row << ',' << checkpoint_hash << ',' << quoted;
  return head.str() + "\n" + row.str() + "\n";
}

}  // namespace taco
