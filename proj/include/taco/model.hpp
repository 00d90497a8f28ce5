#pragma once
// Relation-correlation scoring model.
//
// Target relation r_t is refined from its RCG neighborhood:
//   r_N  = (1/6) * sum_p (N_p o L_p) R W_p      attention-weighted per-pattern
//   r_F  = relu([r_t ++ r_N] H)                 fused relation representation
// where L_p is a masked softmax over leaky-rectified additive attention
// scores a_p . [r_t ++ r_i] on the slots indicated for pattern p.
//
// Node embeddings come from L rounds of per-relation message passing over the
// subgraph (in-neighbors, 1/|N_i^r| normalization, shared self weight), after
// a learned 2d->d projection of the double-radius one-hot features. Scoring:
//   full          f = [r_F ++ mean(E) ++ e_u ++ e_v] W_S
//   relation-only f = r_F W_base                     (structure-blind variant)
//
// Augmented relation slots have no free embedding row: their representation
// is [base embedding ++ one-hot(d_u) ++ one-hot(d_v)] through a shared 3d->d
// projection, and their message weights are the base relation's. backward()
// is exact reverse-mode differentiation of all of the above; every trainable
// tensor gets a gradient entry (zero when untouched).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "taco/linalg.hpp"
#include "taco/rcg.hpp"
#include "taco/rng.hpp"
#include "taco/subgraph.hpp"

namespace taco {

enum class ScoreMode { kFull, kRelationOnly };

inline const char* score_mode_name(ScoreMode m) {
  return m == ScoreMode::kFull ? "full" : "relation-only";
}

inline ScoreMode parse_score_mode(const std::string& name) {
  if (name == "full") return ScoreMode::kFull;
  if (name == "relation-only") return ScoreMode::kRelationOnly;
  throw ArgumentError("unknown score mode: " + name);
}

inline constexpr double kAttentionLeakySlope = 0.2;

struct ModelDims {
  std::uint32_t d = 32;                  // embedding and feature width
  std::uint32_t num_base_relations = 0;  // rows of the relation table
  std::uint32_t layers = 2;              // message passing rounds

  void validate() const {
    if (d < 2) throw ArgumentError("embedding width must be at least 2");
    if (layers < 1) throw ArgumentError("at least one message passing layer required");
    if (num_base_relations < 1) throw ArgumentError("model needs at least one relation");
  }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct ModelParams {
  ModelDims dims;
  Matrix relation_embeddings;                                 // |R| x d
  Matrix aug_projection;                                      // 3d x d
  std::array<Matrix, kNumConnectedPatterns> pattern_projections;  // d x d each
  std::array<Matrix, kNumConnectedPatterns> attention;            // 2d x 1 each
  Matrix fusion;                                              // 2d x d
  Matrix input_projection;                                    // 2d x d
  std::vector<std::vector<Matrix>> message_weights;           // layers x |R|, d x d
  std::vector<Matrix> self_weights;                           // layers, d x d
  Matrix scoring_weights;                                     // 4d x 1
  Matrix base_scoring_weights;                                // d x 1

  // Stable (name, tensor) listing; drives the optimizer, gradient checks and
  // checkpoint serialization.
  template <class Self>
  static auto list_tensors(Self& p) {
    using MatPtr = decltype(&p.fusion);
    std::vector<std::pair<std::string, MatPtr>> out;
    out.emplace_back("relation_embeddings", &p.relation_embeddings);
    out.emplace_back("aug_projection", &p.aug_projection);
    for (std::size_t i = 0; i < kNumConnectedPatterns; ++i)
      out.emplace_back("pattern_projection_" + std::to_string(i), &p.pattern_projections[i]);
    for (std::size_t i = 0; i < kNumConnectedPatterns; ++i)
      out.emplace_back("attention_" + std::to_string(i), &p.attention[i]);
    out.emplace_back("fusion", &p.fusion);
    out.emplace_back("input_projection", &p.input_projection);
    for (std::size_t l = 0; l < p.message_weights.size(); ++l)
      for (std::size_t r = 0; r < p.message_weights[l].size(); ++r)
        out.emplace_back("message_" + std::to_string(l) + "_" + std::to_string(r),
                         &p.message_weights[l][r]);
    for (std::size_t l = 0; l < p.self_weights.size(); ++l)
      out.emplace_back("self_" + std::to_string(l), &p.self_weights[l]);
    out.emplace_back("scoring_weights", &p.scoring_weights);
    out.emplace_back("base_scoring_weights", &p.base_scoring_weights);
    return out;
  }
  auto tensors() { return list_tensors(*this); }
  auto tensors() const { return list_tensors(*this); }

  static ModelParams shaped(const ModelDims& dims) {
    dims.validate();
    const std::size_t d = dims.d;
    ModelParams p;
    p.dims = dims;
    p.relation_embeddings = Matrix(dims.num_base_relations, d);
    p.aug_projection = Matrix(3 * d, d);
    for (auto& m : p.pattern_projections) m = Matrix(d, d);
    for (auto& a : p.attention) a = Matrix(2 * d, 1);
    p.fusion = Matrix(2 * d, d);
    p.input_projection = Matrix(2 * d, d);
    p.message_weights.assign(dims.layers, std::vector<Matrix>(dims.num_base_relations));
    for (auto& layer : p.message_weights)
      for (auto& m : layer) m = Matrix(d, d);
    p.self_weights.assign(dims.layers, Matrix(d, d));
    p.scoring_weights = Matrix(4 * d, 1);
    p.base_scoring_weights = Matrix(d, 1);
    return p;
  }

  // Glorot-uniform projections, N(0, 1/sqrt(d)) relation embeddings.
  static ModelParams init(const ModelDims& dims, Rng& rng) {
    ModelParams p = shaped(dims);
    const double emb_scale = 1.0 / std::sqrt(static_cast<double>(dims.d));
    for (auto& [name, mat] : p.tensors()) {
      if (name == "relation_embeddings") {
        for (double& x : mat->data) x = rng.normal() * emb_scale;
      } else {
        const double s = std::sqrt(6.0 / static_cast<double>(mat->rows + mat->cols));
        for (double& x : mat->data) x = rng.uniform(-s, s);
      }
    }
    return p;
  }
};

using ModelGrads = ModelParams;

inline ModelGrads zero_like(const ModelParams& p) { return ModelParams::shaped(p.dims); }

// Pre-drawn dropout masks. Masks are sampled from shapes and rates only, so a
// forward pass can be replayed (or finite-differenced) under identical noise.
struct DropoutPlan {
  double node_rate = 0.0;
  double edge_rate = 0.0;
  std::vector<std::uint8_t> edge_mask;                   // per subgraph edge, 1 = keep
  std::vector<std::vector<std::uint8_t>> node_masks;     // per layer, n*d entries, 1 = keep

  bool empty() const { return node_rate == 0.0 && edge_rate == 0.0; }

  static DropoutPlan make(Rng& rng, std::size_t num_edges, std::size_t num_nodes,
                          std::uint32_t d, std::uint32_t layers, double node_rate,
                          double edge_rate) {
    if (node_rate < 0 || node_rate >= 1 || edge_rate < 0 || edge_rate >= 1)
      throw ArgumentError("dropout rates must lie in [0, 1)");
    DropoutPlan plan;
    plan.node_rate = node_rate;
    plan.edge_rate = edge_rate;
    if (edge_rate > 0) {
      plan.edge_mask.resize(num_edges);
      for (auto& m : plan.edge_mask) m = rng.uniform01() >= edge_rate ? 1 : 0;
    }
    if (node_rate > 0) {
      plan.node_masks.assign(layers, std::vector<std::uint8_t>(num_nodes * d));
      for (auto& layer : plan.node_masks)
        for (auto& m : layer) m = rng.uniform01() >= node_rate ? 1 : 0;
    }
    return plan;
  }
};

struct TraceEdge {
  std::uint32_t src = 0;        // local head node (message source)
  std::uint32_t dst = 0;        // local tail node (message target)
  RelationId base = 0;          // weight-sharing key
  std::uint32_t slot = 0;       // normalization group key
  double inv_count = 0.0;       // 1 / |in-neighbors of dst under slot|
  bool kept = true;             // edge-dropout survival
};

// Everything backward() needs, captured during the forward pass. Replaying
// the final scoring stage from the stored intermediates reproduces the score
// bit for bit.
struct ForwardTrace {
  ScoreMode mode = ScoreMode::kFull;
  std::uint32_t d = 0;
  Triple target;
  std::uint32_t target_slot = 0;

  struct SlotRow {
    std::uint32_t slot = 0;
    bool augmented = false;
    RelationId base = 0;
    Vec input;  // 3d concat for augmented slots, empty otherwise
    Vec row;    // d-wide embedding used in the pass
  };
  std::vector<SlotRow> slot_rows;                                      // used slots
  Vec r_target;
  std::array<std::vector<std::uint32_t>, kNumConnectedPatterns> support_idx;  // into slot_rows
  std::array<std::vector<double>, kNumConnectedPatterns> att_pre;
  std::array<std::vector<double>, kNumConnectedPatterns> lambda;
  std::array<Vec, kNumConnectedPatterns> pattern_msg;
  Vec r_neighbor;
  Vec fuse_pre;
  Vec r_fused;

  Matrix features;                 // n x 2d (full mode)
  std::vector<TraceEdge> edges;    // full mode
  std::vector<Matrix> layer_act;   // E^0 .. E^L (full mode)
  std::vector<Matrix> layer_pre;   // pre-activations of layers 1..L (full mode)
  DropoutPlan dropout;
  Vec pooled;
  Vec structure;                   // pooled ++ e_u ++ e_v

  double score = 0.0;
  // Smallest |pre-activation| across every relu/leaky kink touched by the
  // pass; finite-difference checks resample instances that sit on a kink.
  double min_abs_preact = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void track_kink(ForwardTrace& t, double pre) {
  const double a = std::fabs(pre);
  if (a < t.min_abs_preact) t.min_abs_preact = a;
}

inline Vec one_hot(std::uint32_t idx, std::uint32_t width) {
  Vec v(width, 0.0);
  v[std::min(idx, width - 1)] = 1.0;
  return v;
}

inline Vec embedding_row(const ModelParams& p, RelationId r) {
  Vec v(p.dims.d);
  for (std::uint32_t c = 0; c < p.dims.d; ++c) v[c] = p.relation_embeddings.at(r, c);
  return v;
}

// Embedding used for a slot; fills input/row of the SlotRow.
inline ForwardTrace::SlotRow make_slot_row(const ModelParams& p, const RelationSlots& slots,
                                           std::uint32_t slot) {
  ForwardTrace::SlotRow sr;
  sr.slot = slot;
  if (!slots.is_augmented_slot(slot)) {
    sr.augmented = false;
    sr.base = slot;
    sr.row = embedding_row(p, slot);
    return sr;
  }
  const auto [base, du, dv] = slots.aug_key(slot);
  sr.augmented = true;
  sr.base = base;
  sr.input = concat(embedding_row(p, base),
                    concat(one_hot(du, p.dims.d), one_hot(dv, p.dims.d)));
  sr.row = row_times(sr.input, p.aug_projection);
  return sr;
}

inline double leaky(double x) { return x > 0 ? x : kAttentionLeakySlope * x; }
inline double leaky_grad(double x) { return x > 0 ? 1.0 : kAttentionLeakySlope; }

inline void rcn_forward(const ModelParams& p, const RelationSlots& slots,
                        const RelationalCorrelationGraph& rcg, RelationId target_rel,
                        ForwardTrace& t) {
  const std::uint32_t d = p.dims.d;
  t.target_slot = slots.base_slot(target_rel);
  t.r_target = embedding_row(p, target_rel);

  // Used slots: union of the six supports, first-seen order (supports are
  // already canonically ordered per pattern).
  std::map<std::uint32_t, std::uint32_t> slot_index;
  for (std::size_t pat = 0; pat < kNumConnectedPatterns; ++pat) {
    for (std::uint32_t slot : rcg.support[pat]) {
      if (!slot_index.count(slot)) {
        slot_index.emplace(slot, static_cast<std::uint32_t>(t.slot_rows.size()));
        t.slot_rows.push_back(make_slot_row(p, slots, slot));
      }
    }
  }

  t.r_neighbor.assign(d, 0.0);
  for (std::size_t pat = 0; pat < kNumConnectedPatterns; ++pat) {
    const auto& sup = rcg.support[pat];
    if (sup.empty()) continue;
    auto& idx = t.support_idx[pat];
    auto& pre = t.att_pre[pat];
    auto& lam = t.lambda[pat];
    for (std::uint32_t slot : sup) idx.push_back(slot_index.at(slot));

    const Vec& a = p.attention[pat].data;  // 2d x 1 flattened
    double max_z = -std::numeric_limits<double>::infinity();
    std::vector<double> z(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Vec& ri = t.slot_rows[idx[i]].row;
      double s = 0.0;
      for (std::uint32_t c = 0; c < d; ++c) s += a[c] * t.r_target[c];
      for (std::uint32_t c = 0; c < d; ++c) s += a[d + c] * ri[c];
      pre.push_back(s);
      track_kink(t, s);
      z[i] = leaky(s);
      if (z[i] > max_z) max_z = z[i];
    }
    double denom = 0.0;
    lam.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      lam[i] = std::exp(z[i] - max_z);
      denom += lam[i];
    }
    for (double& l : lam) l /= denom;

    Vec m(d, 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i) axpy(m, lam[i], t.slot_rows[idx[i]].row);
    t.pattern_msg[pat] = m;
    const Vec contrib = row_times(m, p.pattern_projections[pat]);
    axpy(t.r_neighbor, 1.0 / kNumConnectedPatterns, contrib);
  }

  t.fuse_pre = row_times(concat(t.r_target, t.r_neighbor), p.fusion);
  t.r_fused.resize(d);
  for (std::uint32_t c = 0; c < d; ++c) {
    track_kink(t, t.fuse_pre[c]);
    t.r_fused[c] = t.fuse_pre[c] > 0 ? t.fuse_pre[c] : 0.0;
  }
}

inline void gnn_forward(const ModelParams& p, RelationSlots& slots, const ExtractedSubgraph& sub,
                        const DropoutPlan* plan, ForwardTrace& t) {
  const std::uint32_t d = p.dims.d;
  if (sub.feature_width != d)
    throw ArgumentError("subgraph labeled with width " + std::to_string(sub.feature_width) +
                        " but model expects " + std::to_string(d));
  const std::size_t n = sub.num_nodes();
  t.features = sub.node_features;
  if (plan) t.dropout = *plan;

  t.edges.reserve(sub.edges.size());
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> group_count;
  for (std::size_t e = 0; e < sub.edges.size(); ++e) {
    TraceEdge te;
    te.src = sub.edges[e].head;
    te.dst = sub.edges[e].tail;
    te.base = sub.edges[e].rel.base;
    te.slot = slots.slot_for(sub.edges[e].rel);
    te.kept = t.dropout.edge_mask.empty() ? true : t.dropout.edge_mask[e] != 0;
    if (te.kept) ++group_count[{te.dst, te.slot}];
    t.edges.push_back(te);
  }
  for (TraceEdge& te : t.edges)
    te.inv_count = te.kept ? 1.0 / group_count.at({te.dst, te.slot}) : 0.0;

  // E^0: linear projection of the one-hot features.
  Matrix e0(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    Vec x(t.features.row(i), t.features.row(i) + t.features.cols);
    const Vec y = row_times(x, p.input_projection);
    for (std::uint32_t c = 0; c < d; ++c) e0.at(i, c) = y[c];
  }
  t.layer_act.push_back(std::move(e0));

  for (std::uint32_t l = 0; l < p.dims.layers; ++l) {
    const Matrix& prev = t.layer_act.back();
    Matrix pre(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      Vec self(prev.row(i), prev.row(i) + d);
      const Vec y = row_times(self, p.self_weights[l]);
      for (std::uint32_t c = 0; c < d; ++c) pre.at(i, c) = y[c];
    }
    for (const TraceEdge& te : t.edges) {
      if (!te.kept) continue;
      Vec src(prev.row(te.src), prev.row(te.src) + d);
      const Vec msg = row_times(src, p.message_weights[l][te.base]);
      for (std::uint32_t c = 0; c < d; ++c) pre.at(te.dst, c) += te.inv_count * msg[c];
    }
    Matrix act(n, d);
    const double keep_scale =
        t.dropout.node_rate > 0 ? 1.0 / (1.0 - t.dropout.node_rate) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::uint32_t c = 0; c < d; ++c) {
        const double z = pre.at(i, c);
        track_kink(t, z);
        double a = z > 0 ? z : 0.0;
        if (t.dropout.node_rate > 0 && !t.dropout.node_masks[l][i * d + c]) a = 0.0;
        act.at(i, c) = a * keep_scale;
      }
    }
    t.layer_pre.push_back(std::move(pre));
    t.layer_act.push_back(std::move(act));
  }

  const Matrix& last = t.layer_act.back();
  t.pooled.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t c = 0; c < d; ++c) t.pooled[c] += last.at(i, c);
  for (std::uint32_t c = 0; c < d; ++c) t.pooled[c] /= static_cast<double>(n);
  Vec eu(last.row(sub.local_u()), last.row(sub.local_u()) + d);
  Vec ev(last.row(sub.local_v()), last.row(sub.local_v()) + d);
  t.structure = concat(t.pooled, concat(eu, ev));
}

}  // namespace detail

// Full forward pass. `slots` may grow (augmented relations are interned on
// sight); the pass itself is deterministic given params, inputs and plan.
inline ForwardTrace forward(const ModelParams& params, RelationSlots& slots,
                            const ExtractedSubgraph& sub, const RelationalCorrelationGraph& rcg,
                            ScoreMode mode, const DropoutPlan* plan = nullptr) {
  ForwardTrace t;
  t.mode = mode;
  t.d = params.dims.d;
  t.target = sub.target;
  detail::rcn_forward(params, slots, rcg, sub.target.rel, t);
  if (mode == ScoreMode::kFull) {
    detail::gnn_forward(params, slots, sub, plan, t);
    const Vec cat = concat(t.r_fused, t.structure);
    t.score = dot(cat, params.scoring_weights.data);
  } else {
    t.score = dot(t.r_fused, params.base_scoring_weights.data);
  }
  return t;
}

// Recomputes the score from stored intermediates; must equal trace.score
// bit for bit.
inline double replay_score(const ModelParams& params, const ForwardTrace& t) {
  if (t.mode == ScoreMode::kFull)
    return dot(concat(t.r_fused, t.structure), params.scoring_weights.data);
  return dot(t.r_fused, params.base_scoring_weights.data);
}

inline ModelGrads backward(const ModelParams& p, const ForwardTrace& t, double upstream) {
  const std::uint32_t d = p.dims.d;
  ModelGrads g = zero_like(p);

  Vec d_r_fused(d, 0.0);
  if (t.mode == ScoreMode::kFull) {
    const Vec cat = concat(t.r_fused, t.structure);
    for (std::size_t i = 0; i < cat.size(); ++i)
      g.scoring_weights.data[i] += upstream * cat[i];
    for (std::uint32_t c = 0; c < d; ++c)
      d_r_fused[c] = upstream * p.scoring_weights.data[c];

    // Structure gradient: pooled ++ e_u ++ e_v.
    Vec d_structure(3 * std::size_t(d));
    for (std::size_t i = 0; i < d_structure.size(); ++i)
      d_structure[i] = upstream * p.scoring_weights.data[d + i];

    const std::size_t n = t.layer_act.front().rows;
    Matrix d_act(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::uint32_t c = 0; c < d; ++c)
        d_act.at(i, c) = d_structure[c] / static_cast<double>(n);
    for (std::uint32_t c = 0; c < d; ++c) {
      d_act.at(0, c) += d_structure[d + c];   // e_u
      d_act.at(1, c) += d_structure[2 * d + c];  // e_v
    }

    const double keep_scale =
        t.dropout.node_rate > 0 ? 1.0 / (1.0 - t.dropout.node_rate) : 1.0;
    for (std::uint32_t l = p.dims.layers; l-- > 0;) {
      const Matrix& pre = t.layer_pre[l];
      const Matrix& prev = t.layer_act[l];
      Matrix d_pre(n, d);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::uint32_t c = 0; c < d; ++c) {
          double dv = d_act.at(i, c) * keep_scale;
          if (t.dropout.node_rate > 0 && !t.dropout.node_masks[l][i * d + c]) dv = 0.0;
          d_pre.at(i, c) = pre.at(i, c) > 0 ? dv : 0.0;
        }
      }
      Matrix d_prev(n, d);
      for (std::size_t i = 0; i < n; ++i) {
        Vec prev_i(prev.row(i), prev.row(i) + d);
        Vec dpre_i(d_pre.row(i), d_pre.row(i) + d);
        add_outer(g.self_weights[l], prev_i, dpre_i);
        const Vec back = row_times_transposed(dpre_i, p.self_weights[l]);
        for (std::uint32_t c = 0; c < d; ++c) d_prev.at(i, c) += back[c];
      }
      for (const TraceEdge& te : t.edges) {
        if (!te.kept) continue;
        Vec src(prev.row(te.src), prev.row(te.src) + d);
        Vec dpre_dst(d_pre.row(te.dst), d_pre.row(te.dst) + d);
        Vec scaled(d);
        for (std::uint32_t c = 0; c < d; ++c) scaled[c] = te.inv_count * dpre_dst[c];
        add_outer(g.message_weights[l][te.base], src, scaled);
        const Vec back = row_times_transposed(scaled, p.message_weights[l][te.base]);
        for (std::uint32_t c = 0; c < d; ++c) d_prev.at(te.src, c) += back[c];
      }
      d_act = std::move(d_prev);
    }
    // Through the input projection; feature gradients stop here.
    for (std::size_t i = 0; i < n; ++i) {
      Vec x(t.features.row(i), t.features.row(i) + t.features.cols);
      Vec dy(d_act.row(i), d_act.row(i) + d);
      add_outer(g.input_projection, x, dy);
    }
  } else {
    for (std::uint32_t c = 0; c < d; ++c) {
      g.base_scoring_weights.data[c] += upstream * t.r_fused[c];
      d_r_fused[c] = upstream * p.base_scoring_weights.data[c];
    }
  }

  // Fusion backward.
  Vec d_fuse_pre(d);
  for (std::uint32_t c = 0; c < d; ++c)
    d_fuse_pre[c] = t.fuse_pre[c] > 0 ? d_r_fused[c] : 0.0;
  const Vec fuse_in = concat(t.r_target, t.r_neighbor);
  add_outer(g.fusion, fuse_in, d_fuse_pre);
  const Vec d_fuse_in = row_times_transposed(d_fuse_pre, p.fusion);
  Vec d_r_target(d_fuse_in.begin(), d_fuse_in.begin() + d);
  Vec d_r_neighbor(d_fuse_in.begin() + d, d_fuse_in.end());

  // Per-pattern aggregation backward.
  std::vector<Vec> d_rows(t.slot_rows.size(), Vec(d, 0.0));
  for (std::size_t pat = 0; pat < kNumConnectedPatterns; ++pat) {
    const auto& idx = t.support_idx[pat];
    if (idx.empty()) continue;
    const auto& lam = t.lambda[pat];
    const auto& pre = t.att_pre[pat];

    Vec d_contrib(d);
    for (std::uint32_t c = 0; c < d; ++c)
      d_contrib[c] = d_r_neighbor[c] / kNumConnectedPatterns;
    add_outer(g.pattern_projections[pat], t.pattern_msg[pat], d_contrib);
    const Vec d_m = row_times_transposed(d_contrib, p.pattern_projections[pat]);

    std::vector<double> d_lam(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      d_lam[i] = dot(d_m, t.slot_rows[idx[i]].row);
      axpy(d_rows[idx[i]], lam[i], d_m);
    }
    double lam_dot = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) lam_dot += lam[i] * d_lam[i];
    const Vec& a = p.attention[pat].data;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double d_z = lam[i] * (d_lam[i] - lam_dot);
      const double d_s = d_z * detail::leaky_grad(pre[i]);
      const Vec& ri = t.slot_rows[idx[i]].row;
      for (std::uint32_t c = 0; c < d; ++c) {
        g.attention[pat].data[c] += d_s * t.r_target[c];
        g.attention[pat].data[d + c] += d_s * ri[c];
        d_r_target[c] += d_s * a[c];
        d_rows[idx[i]][c] += d_s * a[d + c];
      }
    }
  }

  // Slot rows back to the relation table / augmented projection.
  for (std::size_t i = 0; i < t.slot_rows.size(); ++i) {
    const auto& sr = t.slot_rows[i];
    const Vec& dr = d_rows[i];
    if (!sr.augmented) {
      for (std::uint32_t c = 0; c < d; ++c)
        g.relation_embeddings.at(sr.base, c) += dr[c];
    } else {
      add_outer(g.aug_projection, sr.input, dr);
      const Vec d_in = row_times_transposed(dr, p.aug_projection);
      for (std::uint32_t c = 0; c < d; ++c)
        g.relation_embeddings.at(sr.base, c) += d_in[c];  // one-hot part is constant
    }
  }
  for (std::uint32_t c = 0; c < d; ++c)
    g.relation_embeddings.at(t.target_slot, c) += d_r_target[c];

  return g;
}

// --- standalone operation views over the same internals -------------------

struct RcnAggregate {
  Vec r_neighbor;
  // (slot, coefficient) per pattern; coefficients within a pattern sum to 1.
  std::array<std::vector<std::pair<std::uint32_t, double>>, kNumConnectedPatterns> coefficients;
};

inline RcnAggregate rcn_aggregate(const ModelParams& params, const RelationSlots& slots,
                                  const RelationalCorrelationGraph& rcg, RelationId target_rel) {
  ForwardTrace t;
  detail::rcn_forward(params, slots, rcg, target_rel, t);
  RcnAggregate out;
  out.r_neighbor = t.r_neighbor;
  for (std::size_t pat = 0; pat < kNumConnectedPatterns; ++pat)
    for (std::size_t i = 0; i < t.support_idx[pat].size(); ++i)
      out.coefficients[pat].emplace_back(t.slot_rows[t.support_idx[pat][i]].slot,
                                         t.lambda[pat][i]);
  return out;
}

inline Vec rcn_fuse(const ModelParams& params, const Vec& r_target, const Vec& r_neighbor) {
  if (r_target.size() != params.dims.d || r_neighbor.size() != params.dims.d)
    throw ArgumentError("rcn_fuse expects d-wide inputs");
  Vec pre = row_times(concat(r_target, r_neighbor), params.fusion);
  for (double& x : pre) x = x > 0 ? x : 0.0;
  return pre;
}

// Node embeddings per layer, E^0 .. E^L.
inline std::vector<Matrix> propagate(const ModelParams& params, RelationSlots& slots,
                                     const ExtractedSubgraph& sub,
                                     const DropoutPlan* plan = nullptr) {
  ForwardTrace t;
  detail::gnn_forward(params, slots, sub, plan, t);
  return std::move(t.layer_act);
}

inline double pool_and_score(const ModelParams& params, const ExtractedSubgraph& sub,
                             const std::vector<Matrix>& layers, const Vec& r_fused,
                             ScoreMode mode) {
  if (mode == ScoreMode::kRelationOnly) return dot(r_fused, params.base_scoring_weights.data);
  const Matrix& last = layers.back();
  const std::uint32_t d = params.dims.d;
  Vec pooled(d, 0.0);
  for (std::size_t i = 0; i < last.rows; ++i)
    for (std::uint32_t c = 0; c < d; ++c) pooled[c] += last.at(i, c);
  for (std::uint32_t c = 0; c < d; ++c) pooled[c] /= static_cast<double>(last.rows);
  Vec eu(last.row(sub.local_u()), last.row(sub.local_u()) + d);
  Vec ev(last.row(sub.local_v()), last.row(sub.local_v()) + d);
  return dot(concat(r_fused, concat(pooled, concat(eu, ev))), params.scoring_weights.data);
}

// Pairwise margin ranking loss: sum_i max(0, f(neg_i) - f(pos_i) + margin).
inline double hinge_loss(const std::vector<double>& pos_scores,
                         const std::vector<double>& neg_scores, double margin) {
  if (margin <= 0) throw ArgumentError("margin must be positive");
  if (pos_scores.size() != neg_scores.size())
    throw ArgumentError("hinge loss needs one negative score per positive score");
  double loss = 0.0;
  for (std::size_t i = 0; i < pos_scores.size(); ++i) {
    const double v = neg_scores[i] - pos_scores[i] + margin;
    if (v > 0) loss += v;
  }
  return loss;
}

struct HingeGrads {
  std::vector<double> d_pos;
  std::vector<double> d_neg;
};

inline HingeGrads hinge_grads(const std::vector<double>& pos_scores,
                              const std::vector<double>& neg_scores, double margin) {
  if (margin <= 0) throw ArgumentError("margin must be positive");
  if (pos_scores.size() != neg_scores.size())
    throw ArgumentError("hinge loss needs one negative score per positive score");
  HingeGrads g{std::vector<double>(pos_scores.size(), 0.0),
               std::vector<double>(pos_scores.size(), 0.0)};
  for (std::size_t i = 0; i < pos_scores.size(); ++i) {
    if (neg_scores[i] - pos_scores[i] + margin > 0) {
      g.d_pos[i] = -1.0;
      g.d_neg[i] = 1.0;
    }
  }
  return g;
}

}  // namespace taco
