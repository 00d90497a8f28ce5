#pragma once
// Training loop: minibatch hinge-loss optimization with Adam, per-epoch
// negative resampling, a validation-driven learning-rate schedule, and
// best-validation parameter restoration. Deterministic for a fixed seed
// regardless of thread count: all randomness forks from the seed by index,
// relation slots are minted in a serial pass, and gradient reduction walks
// examples in index order.
//
// Stream layout under the root seed: fork(0) initializes parameters, fork(1)
// draws the (fixed) validation negatives, fork(2 + epoch) drives an epoch's
// negative sampling and batch shuffle, with dropout plans forked per example
// below it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "taco/eval.hpp"
#include "taco/kg.hpp"
#include "taco/model.hpp"
#include "taco/parallel.hpp"
#include "taco/rcg.hpp"
#include "taco/rng.hpp"
#include "taco/subgraph.hpp"

namespace taco {

struct TrainingError : std::runtime_error {
  std::size_t epoch;
  TrainingError(std::size_t epoch_, const std::string& msg)
      : std::runtime_error("epoch " + std::to_string(epoch_) + ": " + msg), epoch(epoch_) {}
};

struct TrainConfig {
  std::uint32_t d = 32;
  double margin = 8.0;
  double learning_rate = 1e-2;
  std::uint32_t batch_size = 16;
  std::uint32_t layers = 2;
  std::uint32_t negatives = 1;  // per positive
  std::uint32_t epochs = 50;
  std::uint64_t seed = 0;
  double dropout = 0.0;       // node dropout rate
  double edge_dropout = 0.0;
  ExtractionMode extraction = ExtractionMode::kCcn;
  std::uint32_t hops = 2;
  double weight_decay = 0.01;     // L2 coefficient on message-passing weights
  std::uint32_t lr_patience = 5;  // stagnant epochs before dividing the rate
  std::uint32_t stop_patience = 8;
  double lr_divisor = 5.0;

  void validate() const {
    if (d < 2) throw ArgumentError("embedding width must be at least 2");
    if (margin <= 0) throw ArgumentError("margin must be positive");
    if (learning_rate <= 0) throw ArgumentError("learning rate must be positive");
    if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
    if (layers < 1) throw ArgumentError("at least one layer required");
    if (negatives < 1) throw ArgumentError("at least one negative per positive required");
    if (dropout < 0 || dropout >= 1 || edge_dropout < 0 || edge_dropout >= 1)
      throw ArgumentError("dropout rates must lie in [0, 1)");
    if (hops < 1) throw ArgumentError("hop count must be at least 1");
    if (weight_decay < 0) throw ArgumentError("weight decay must be nonnegative");
    if (lr_patience < 1 || stop_patience < 1) throw ArgumentError("patience must be at least 1");
    if (lr_divisor <= 1) throw ArgumentError("learning-rate divisor must exceed 1");
  }
};

// Divides the learning rate after `lr_patience` epochs without strict
// validation improvement and signals a stop after `stop_patience`.
class LrSchedule {
 public:
  LrSchedule(double lr, std::uint32_t lr_patience, std::uint32_t stop_patience, double divisor)
      : lr_(lr), lr_patience_(lr_patience), stop_patience_(stop_patience), divisor_(divisor) {}

  // Feed one epoch's validation loss; false means stop training.
  bool observe(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      since_ = 0;
      return true;
    }
    ++since_;
    if (since_ >= stop_patience_) return false;
    if (since_ % lr_patience_ == 0) lr_ /= divisor_;
    return true;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::uint32_t stagnant_epochs() const { return since_; }

 private:
  double lr_;
  std::uint32_t lr_patience_;
  std::uint32_t stop_patience_;
  double divisor_;
  double best_ = std::numeric_limits<double>::infinity();
  std::uint32_t since_ = 0;
};

// Adaptive-moment optimizer over the model's tensor listing.
class Adam {
 public:
  explicit Adam(const ModelParams& shape, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : m_(zero_like(shape)), v_(zero_like(shape)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelParams& params, const ModelGrads& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto pt = params.tensors();
    auto gt = grads.tensors();
    auto mt = m_.tensors();
    auto vt = v_.tensors();
    if (pt.size() != gt.size()) throw ArgumentError("gradient/parameter tensor mismatch");
    for (std::size_t k = 0; k < pt.size(); ++k) {
      auto& w = pt[k].second->data;
      const auto& g = gt[k].second->data;
      auto& m = mt[k].second->data;
      auto& v = vt[k].second->data;
      if (w.size() != g.size()) throw ArgumentError("gradient shape mismatch: " + pt[k].first);
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      }
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  ModelParams m_;
  ModelParams v_;
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

struct EpochLog {
  std::uint32_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = std::nan("");
  double learning_rate = 0.0;
};

struct TrainResult {
  ModelParams params;  // best-validation parameters (final ones without validation)
  RelationSlots slots;
  std::vector<EpochLog> log;
  std::uint32_t epochs_run = 0;
  double best_val_loss = std::nan("");
  std::uint32_t best_epoch = 0;
};

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,learning_rate\n";
  for (const EpochLog& e : log)
    out << e.epoch << ',' << num(e.train_loss) << ',' << num(e.val_loss) << ','
        << num(e.learning_rate) << '\n';
  return out.str();
}

namespace detail {

struct PreparedExample {
  ExtractedSubgraph sub;
  RelationalCorrelationGraph rcg;
};

// Extraction (and labeling, in full mode) runs in parallel; RCG construction
// runs serially afterwards so augmented slots are minted in a fixed order.
inline std::vector<PreparedExample> prepare_examples(const KnowledgeGraph& g,
                                                     const std::vector<Triple>& triples,
                                                     ExtractionMode mode, std::uint32_t k,
                                                     bool with_labels, std::uint32_t width,
                                                     RelationSlots& slots, unsigned threads) {
  std::vector<PreparedExample> out(triples.size());
  parallel_for(triples.size(), threads, [&](std::size_t i) {
    out[i].sub = extract(g, triples[i], mode, k);
    if (with_labels) out[i].sub = label_nodes(g, std::move(out[i].sub), width);
  });
  for (auto& ex : out) ex.rcg = build_rcg(ex.sub, slots);
  return out;
}

inline double l2_regularizer(const ModelParams& p) {
  double s = 0.0;
  for (const auto& layer : p.message_weights)
    for (const Matrix& w : layer) s += squared_norm(w);
  for (const Matrix& w : p.self_weights) s += squared_norm(w);
  return s;
}

inline void add_regularizer_grads(ModelGrads& g, const ModelParams& p, double coeff) {
  for (std::size_t l = 0; l < p.message_weights.size(); ++l)
    for (std::size_t r = 0; r < p.message_weights[l].size(); ++r)
      add_scaled(g.message_weights[l][r], 2.0 * coeff, p.message_weights[l][r]);
  for (std::size_t l = 0; l < p.self_weights.size(); ++l)
    add_scaled(g.self_weights[l], 2.0 * coeff, p.self_weights[l]);
}

inline void accumulate(ModelGrads& acc, const ModelGrads& g) {
  auto at = acc.tensors();
  auto gt = g.tensors();
  for (std::size_t k = 0; k < at.size(); ++k)
    add_scaled(*at[k].second, 1.0, *gt[k].second);
}

// Mean hinge loss of fixed (positive, negative) prepared pairs; used for the
// validation metric. No dropout, no regularizer.
inline double mean_hinge(const ModelParams& params, RelationSlots& slots,
                         const std::vector<PreparedExample>& pos,
                         const std::vector<PreparedExample>& neg, std::uint32_t negatives,
                         double margin, ScoreMode mode, unsigned threads) {
  std::vector<double> pos_scores(pos.size()), neg_scores(neg.size());
  parallel_for(pos.size(), threads, [&](std::size_t i) {
    pos_scores[i] = forward(params, slots, pos[i].sub, pos[i].rcg, mode).score;
  });
  parallel_for(neg.size(), threads, [&](std::size_t i) {
    neg_scores[i] = forward(params, slots, neg[i].sub, neg[i].rcg, mode).score;
  });
  for (double s : pos_scores)
    if (!std::isfinite(s)) return std::nan("");
  for (double s : neg_scores)
    if (!std::isfinite(s)) return std::nan("");
  std::vector<double> paired_pos(neg.size());
  for (std::size_t i = 0; i < neg.size(); ++i) paired_pos[i] = pos_scores[i / negatives];
  return hinge_loss(paired_pos, neg_scores, margin) / static_cast<double>(neg.size());
}

}  // namespace detail

inline TrainResult train(const KnowledgeGraph& g, const std::vector<Triple>& train_triples,
                         const std::vector<Triple>& val_triples, const TrainConfig& cfg,
                         ScoreMode mode, unsigned threads = 1) {
  cfg.validate();
  if (train_triples.empty()) throw ArgumentError("no training triples");
  const bool full = mode == ScoreMode::kFull;

  ModelDims dims;
  dims.d = cfg.d;
  dims.num_base_relations = static_cast<std::uint32_t>(g.num_relations());
  dims.layers = cfg.layers;
  dims.validate();

  const Rng root(cfg.seed);
  Rng init_rng = root.fork(0);
  TrainResult result;
  result.params = ModelParams::init(dims, init_rng);
  result.slots = RelationSlots(dims.num_base_relations, cfg.d);

  const TripleSet known(g.triples().begin(), g.triples().end());

  // Positive subgraphs never change; extract them once.
  const auto train_pos = detail::prepare_examples(g, train_triples, cfg.extraction, cfg.hops,
                                                  full, cfg.d, result.slots, threads);
  std::vector<detail::PreparedExample> val_pos, val_neg;
  if (!val_triples.empty()) {
    val_pos = detail::prepare_examples(g, val_triples, cfg.extraction, cfg.hops, full, cfg.d,
                                       result.slots, threads);
    Rng val_rng = root.fork(1);
    std::vector<Triple> neg_triples;
    for (const Triple& t : val_triples)
      for (const Triple& n :
           sample_negatives(g, t, cfg.negatives, CorruptionMode::kEither, val_rng, &known))
        neg_triples.push_back(n);
    val_neg = detail::prepare_examples(g, neg_triples, cfg.extraction, cfg.hops, full, cfg.d,
                                       result.slots, threads);
  }

  Adam adam(result.params);
  LrSchedule schedule(cfg.learning_rate, cfg.lr_patience, cfg.stop_patience, cfg.lr_divisor);
  ModelParams best_params = result.params;
  bool have_best = false;

  const std::size_t num_pairs = train_triples.size() * cfg.negatives;
  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = schedule.lr();
    Rng epoch_rng = root.fork(2 + epoch);

    // Fresh corruptions each epoch, extracted in parallel, slots minted
    // serially inside prepare_examples.
    std::vector<Triple> neg_triples;
    neg_triples.reserve(num_pairs);
    for (const Triple& t : train_triples)
      for (const Triple& n :
           sample_negatives(g, t, cfg.negatives, CorruptionMode::kEither, epoch_rng, &known))
        neg_triples.push_back(n);
    const auto train_neg = detail::prepare_examples(g, neg_triples, cfg.extraction, cfg.hops,
                                                    full, cfg.d, result.slots, threads);

    std::vector<std::size_t> order(num_pairs);
    std::iota(order.begin(), order.end(), 0);
    epoch_rng.shuffle(order);

    double loss_accum = 0.0;
    for (std::size_t start = 0; start < num_pairs; start += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, num_pairs - start);
      const double inv_pairs = 1.0 / static_cast<double>(count);

      std::vector<ForwardTrace> pos_traces(count), neg_traces(count);
      std::vector<double> pos_scores(count), neg_scores(count);
      parallel_for(count, threads, [&](std::size_t b) {
        const std::size_t pair = order[start + b];
        const auto& pos = train_pos[pair / cfg.negatives];
        const auto& neg = train_neg[pair];
        DropoutPlan pos_plan, neg_plan;
        const DropoutPlan* pp = nullptr;
        const DropoutPlan* np = nullptr;
        if (full && (cfg.dropout > 0 || cfg.edge_dropout > 0)) {
          Rng dp = epoch_rng.fork(2 * pair);
          Rng dn = epoch_rng.fork(2 * pair + 1);
          pos_plan = DropoutPlan::make(dp, pos.sub.edges.size(), pos.sub.num_nodes(), cfg.d,
                                       cfg.layers, cfg.dropout, cfg.edge_dropout);
          neg_plan = DropoutPlan::make(dn, neg.sub.edges.size(), neg.sub.num_nodes(), cfg.d,
                                       cfg.layers, cfg.dropout, cfg.edge_dropout);
          pp = &pos_plan;
          np = &neg_plan;
        }
        pos_traces[b] = forward(result.params, result.slots, pos.sub, pos.rcg, mode, pp);
        neg_traces[b] = forward(result.params, result.slots, neg.sub, neg.rcg, mode, np);
        pos_scores[b] = pos_traces[b].score;
        neg_scores[b] = neg_traces[b].score;
      });

      for (std::size_t b = 0; b < count; ++b)
        if (!std::isfinite(pos_scores[b]) || !std::isfinite(neg_scores[b]))
          throw TrainingError(epoch, "non-finite score");
      const double batch_hinge = hinge_loss(pos_scores, neg_scores, cfg.margin);
      const double reg = cfg.weight_decay * detail::l2_regularizer(result.params);
      const double objective = batch_hinge * inv_pairs + reg;
      if (!std::isfinite(objective)) throw TrainingError(epoch, "non-finite training loss");
      loss_accum += objective * static_cast<double>(count);

      const HingeGrads hg = hinge_grads(pos_scores, neg_scores, cfg.margin);
      std::vector<ModelGrads> pair_grads(count, zero_like(result.params));
      parallel_for(count, threads, [&](std::size_t b) {
        if (hg.d_pos[b] == 0.0 && hg.d_neg[b] == 0.0) return;
        pair_grads[b] = backward(result.params, pos_traces[b], hg.d_pos[b] * inv_pairs);
        detail::accumulate(pair_grads[b],
                           backward(result.params, neg_traces[b], hg.d_neg[b] * inv_pairs));
      });
      ModelGrads total = zero_like(result.params);
      for (const ModelGrads& pg : pair_grads) detail::accumulate(total, pg);
      detail::add_regularizer_grads(total, result.params, cfg.weight_decay);
      adam.step(result.params, total, lr);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_accum / static_cast<double>(num_pairs);
    entry.learning_rate = lr;
    result.epochs_run = epoch;

    bool keep_going = true;
    if (!val_triples.empty()) {
      entry.val_loss = detail::mean_hinge(result.params, result.slots, val_pos, val_neg,
                                          cfg.negatives, cfg.margin, mode, threads);
      if (!std::isfinite(entry.val_loss))
        throw TrainingError(epoch, "non-finite validation loss");
      if (!have_best || entry.val_loss < result.best_val_loss) {
        result.best_val_loss = entry.val_loss;
        result.best_epoch = epoch;
        best_params = result.params;
        have_best = true;
      }
      keep_going = schedule.observe(entry.val_loss);
    }
    result.log.push_back(entry);
    if (!keep_going) break;
  }

  if (have_best) result.params = best_params;
  return result;
}

// --- checkpointing ---------------------------------------------------------

inline constexpr const char* kCheckpointVersion = "taco-checkpoint-v1";

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelParams params;
  RelationSlots slots;
  ScoreMode mode = ScoreMode::kFull;
  ExtractionMode extraction = ExtractionMode::kCcn;
  std::uint32_t hops = 2;
  std::uint64_t seed = 0;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["score_mode"] = score_mode_name(c.mode);
  j["extraction"] = extraction_mode_name(c.extraction);
  j["hops"] = c.hops;
  j["seed"] = c.seed;
  j["dims"] = {{"d", c.params.dims.d},
               {"num_base_relations", c.params.dims.num_base_relations},
               {"layers", c.params.dims.layers}};
  j["slots"] = c.slots.to_json();
  j["tensors"] = nlohmann::json::object();
  for (const auto& [name, mat] : c.params.tensors())
    j["tensors"][name] = {{"rows", mat->rows}, {"cols", mat->cols}, {"data", mat->data}};
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("version") || j.at("version").get<std::string>() != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version");
  Checkpoint c;
  try {
    c.mode = parse_score_mode(j.at("score_mode").get<std::string>());
    const auto extraction = parse_extraction_mode(j.at("extraction").get<std::string>());
    if (!extraction) throw CheckpointError("unknown extraction mode in checkpoint");
    c.extraction = *extraction;
    c.hops = j.at("hops").get<std::uint32_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    ModelDims dims;
    dims.d = j.at("dims").at("d").get<std::uint32_t>();
    dims.num_base_relations = j.at("dims").at("num_base_relations").get<std::uint32_t>();
    dims.layers = j.at("dims").at("layers").get<std::uint32_t>();
    c.params = ModelParams::shaped(dims);
    c.slots = RelationSlots::from_json(j.at("slots"));
    for (auto& [name, mat] : c.params.tensors()) {
      const auto& t = j.at("tensors").at(name);
      if (t.at("rows").get<std::size_t>() != mat->rows ||
          t.at("cols").get<std::size_t>() != mat->cols)
        throw CheckpointError("tensor shape mismatch: " + name);
      const auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != mat->data.size())
        throw CheckpointError("tensor size mismatch: " + name);
      mat->data = data;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_to_json(c).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  return checkpoint_from_json(j);
}

// Scorer over arbitrary triples: extract, correlate, forward. Captures the
// parameters by value; the graph and the slot table must outlive the scorer.
inline TripleScorer make_scorer(const ModelParams& params, RelationSlots& slots,
                                const KnowledgeGraph& g, ExtractionMode extraction,
                                std::uint32_t k, ScoreMode mode) {
  RelationSlots* slot_ptr = &slots;
  const KnowledgeGraph* graph = &g;
  return [params, slot_ptr, graph, extraction, k, mode](const Triple& t) {
    ExtractedSubgraph sub = extract(*graph, t, extraction, k);
    if (mode == ScoreMode::kFull) sub = label_nodes(*graph, std::move(sub), params.dims.d);
    const RelationalCorrelationGraph rcg = build_rcg(sub, *slot_ptr);
    return forward(params, *slot_ptr, sub, rcg, mode).score;
  };
}

}  // namespace taco
