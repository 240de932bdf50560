#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tagnn/graph.hpp"
#include "tagnn/rng.hpp"
#include "tagnn/tape.hpp"

namespace tagnn {

/// Session-representation variants. `full` fuses the target-attentive
/// summary with the local and attentive-global embeddings; the others keep
/// subsets of those components.
enum class Variant { full, local_only, avg_pool, att_only, local_plus_att };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::local_only: return "L";
    case Variant::avg_pool: return "Avg";
    case Variant::att_only: return "Att";
    case Variant::local_plus_att: return "L_plus_Att";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "L") return Variant::local_only;
  if (s == "Avg") return Variant::avg_pool;
  if (s == "Att") return Variant::att_only;
  if (s == "L_plus_Att") return Variant::local_plus_att;
  raise(ErrorKind::config,
        "unknown variant '" + s + "' (expected full, L, Avg, Att or L_plus_Att)");
}

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::full, Variant::local_only, Variant::avg_pool,
                                         Variant::att_only, Variant::local_plus_att};
  return v;
}

/// Whether the variant computes the attentive global embedding.
inline bool variant_uses_global(Variant v) {
  return v == Variant::full || v == Variant::att_only || v == Variant::local_plus_att;
}

/// Whether the variant computes per-target attention summaries.
inline bool variant_uses_target(Variant v) { return v == Variant::full; }

/// Number of d-wide blocks in the fusion matrix (0 = no projection).
inline int variant_fusion_blocks(Variant v) {
  switch (v) {
    case Variant::full: return 3;
    case Variant::local_plus_att: return 2;
    case Variant::att_only: return 1;
    default: return 0;
  }
}

enum class LossMode { categorical, eq13 };

inline const char* loss_mode_name(LossMode m) {
  return m == LossMode::categorical ? "categorical" : "eq13";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "categorical") return LossMode::categorical;
  if (s == "eq13") return LossMode::eq13;
  raise(ErrorKind::config, "unknown loss mode '" + s + "' (expected categorical or eq13)");
}

/// All trainable parameters. The embedding table E holds m real items plus a
/// trailing padding row (index m) that stays all-zero and is excluded from
/// candidate scoring and updates. Matrices are stored so that row vectors
/// multiply from the left: y = x @ W.
template <typename T>
struct ModelParamsT {
  int m = 0;  // real item count; row m of E is the padding row
  int d = 0;  // hidden size
  Variant variant = Variant::full;

  TensorT<T> E;             // [m+1, d]
  TensorT<T> H_out, H_in;   // [d, d]   propagation edge transforms
  TensorT<T> b_out, b_in;   // [1, d]   propagation biases
  TensorT<T> Wz, Wr, Wo;    // [2d, d]  gate/candidate message weights
  TensorT<T> Uz, Ur, Uo;    // [d, d]   gate/candidate state weights
  TensorT<T> W1, W2;        // [d, d]   global attention projections
  TensorT<T> q;             // [d, 1]   global attention query
  TensorT<T> c;             // [1, d]   global attention bias
  TensorT<T> W_att;         // [d, d]   target attention bilinear form
  TensorT<T> W3;            // [k*d, d] fusion projection, k = fusion blocks

  int pad_index() const { return m; }

  /// Parameters in a fixed order (used for initialization draws, optimizer
  /// state, and checkpoints). Only tensors the variant uses are listed.
  std::vector<std::pair<std::string, TensorT<T>*>> named() {
    return named_impl(*this);
  }
  std::vector<std::pair<std::string, const TensorT<T>*>> named() const {
    return named_impl(*this);
  }

 private:
  template <typename Self>
  static auto named_impl(Self& s) {
    using Ptr = decltype(&s.E);
    std::vector<std::pair<std::string, Ptr>> out = {
        {"E", &s.E},         {"H_out", &s.H_out}, {"H_in", &s.H_in}, {"b_out", &s.b_out},
        {"b_in", &s.b_in},   {"Wz", &s.Wz},       {"Uz", &s.Uz},     {"Wr", &s.Wr},
        {"Ur", &s.Ur},       {"Wo", &s.Wo},       {"Uo", &s.Uo}};
    if (variant_uses_global(s.variant)) {
      out.push_back({"W1", &s.W1});
      out.push_back({"W2", &s.W2});
      out.push_back({"q", &s.q});
      out.push_back({"c", &s.c});
    }
    if (variant_uses_target(s.variant)) out.push_back({"W_att", &s.W_att});
    if (variant_fusion_blocks(s.variant) > 0) out.push_back({"W3", &s.W3});
    return out;
  }
};

using ModelParams = ModelParamsT<float>;
using ModelParams64 = ModelParamsT<double>;

/// Fresh parameters: every weight uniform in [-1/sqrt(d), +1/sqrt(d)] drawn
/// from the seeded generator in named() order, then the padding embedding
/// row is zeroed.
template <typename T>
ModelParamsT<T> init_params(int m, int d, uint64_t seed, Variant variant = Variant::full) {
  if (m < 1 || d < 1)
    raise(ErrorKind::contract, "init_params needs m >= 1 and d >= 1, got m=" + std::to_string(m) +
                                   " d=" + std::to_string(d));
  ModelParamsT<T> p;
  p.m = m;
  p.d = d;
  p.variant = variant;
  p.E = TensorT<T>::zeros({m + 1, d});
  p.H_out = TensorT<T>::zeros({d, d});
  p.H_in = TensorT<T>::zeros({d, d});
  p.b_out = TensorT<T>::zeros({1, d});
  p.b_in = TensorT<T>::zeros({1, d});
  p.Wz = TensorT<T>::zeros({2 * d, d});
  p.Wr = TensorT<T>::zeros({2 * d, d});
  p.Wo = TensorT<T>::zeros({2 * d, d});
  p.Uz = TensorT<T>::zeros({d, d});
  p.Ur = TensorT<T>::zeros({d, d});
  p.Uo = TensorT<T>::zeros({d, d});
  if (variant_uses_global(variant)) {
    p.W1 = TensorT<T>::zeros({d, d});
    p.W2 = TensorT<T>::zeros({d, d});
    p.q = TensorT<T>::zeros({d, 1});
    p.c = TensorT<T>::zeros({1, d});
  }
  if (variant_uses_target(variant)) p.W_att = TensorT<T>::zeros({d, d});
  const int blocks = variant_fusion_blocks(variant);
  if (blocks > 0) p.W3 = TensorT<T>::zeros({blocks * d, d});

  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(seed);
  for (auto& [name, tensor] : p.named())
    for (T& v : tensor->data) v = static_cast<T>(rng.uniform(-bound, bound));
  for (int j = 0; j < d; ++j) p.E.at(m, j) = T(0);
  return p;
}

/// Tape handles for every bound parameter, in named() order.
struct ModelLeaves {
  Var E, H_out, H_in, b_out, b_in, Wz, Wr, Wo, Uz, Ur, Uo, W1, W2, q, c, W_att, W3;
  std::vector<std::pair<std::string, Var>> order;  // aligned with ModelParamsT::named()
};

/// Binds every parameter the variant uses as a leaf. Pass trainable=false
/// for inference-only forwards so no gradient machinery is recorded.
template <typename T>
ModelLeaves bind_params(TapeT<T>& tape, const ModelParamsT<T>& p, bool trainable = true) {
  ModelLeaves l;
  for (const auto& [name, tensor] : p.named()) {
    Var v = tape.leaf(*tensor, trainable);
    l.order.push_back({name, v});
    if (name == "E") l.E = v;
    else if (name == "H_out") l.H_out = v;
    else if (name == "H_in") l.H_in = v;
    else if (name == "b_out") l.b_out = v;
    else if (name == "b_in") l.b_in = v;
    else if (name == "Wz") l.Wz = v;
    else if (name == "Uz") l.Uz = v;
    else if (name == "Wr") l.Wr = v;
    else if (name == "Ur") l.Ur = v;
    else if (name == "Wo") l.Wo = v;
    else if (name == "Uo") l.Uo = v;
    else if (name == "W1") l.W1 = v;
    else if (name == "W2") l.W2 = v;
    else if (name == "q") l.q = v;
    else if (name == "c") l.c = v;
    else if (name == "W_att") l.W_att = v;
    else if (name == "W3") l.W3 = v;
  }
  return l;
}

/// One session graph's constants on a tape: adjacency matrices, the
/// embedding row per slot, and the validity mask.
struct GraphVars {
  Var a_out, a_in;             // [n, n] constants
  std::vector<int> node_rows;  // embedding row per slot
  std::vector<uint8_t> mask;   // 1 for real slots
  int last_slot = -1;
  int n = 0;
};

template <typename T>
GraphVars bind_graph(TapeT<T>& tape, const PaddedGraph& g) {
  GraphVars out;
  out.a_out = tape.constant(g.a_out.template cast<T>());
  out.a_in = tape.constant(g.a_in.template cast<T>());
  out.node_rows = g.node_ids;
  out.mask = g.mask;
  out.last_slot = g.last_slot;
  out.n = g.max_n();
  return out;
}

template <typename T>
GraphVars bind_graph(TapeT<T>& tape, const SessionGraph& g) {
  GraphVars out;
  out.a_out = tape.constant(g.a_out.template cast<T>());
  out.a_in = tape.constant(g.a_in.template cast<T>());
  out.node_rows = g.nodes;
  out.mask.assign(static_cast<size_t>(g.n()), uint8_t(1));
  out.last_slot = g.last_slot;
  out.n = g.n();
  return out;
}

/// Gated propagation over the session graph. Initial node states are the
/// embedding rows of the slots; each step mixes in-neighbor and out-neighbor
/// messages through update/reset gates. All slots advance simultaneously
/// from the previous step's snapshot. Returns the [n, d] node states.
template <typename T>
Var ggnn_propagate(TapeT<T>& tape, const ModelLeaves& p, const GraphVars& g, int steps) {
  if (steps < 0) raise(ErrorKind::config, "propagation step count must be >= 0");
  Var v = tape.gather_rows(p.E, g.node_rows);
  for (int t = 0; t < steps; ++t) {
    Var m_out = tape.add_rowvec(tape.matmul(g.a_out, tape.matmul(v, p.H_out)), p.b_out);
    Var m_in = tape.add_rowvec(tape.matmul(g.a_in, tape.matmul(v, p.H_in)), p.b_in);
    Var msg = tape.concat_cols(m_out, m_in);  // [n, 2d]
    Var z = tape.sigmoid(tape.add(tape.matmul(msg, p.Wz), tape.matmul(v, p.Uz)));
    Var r = tape.sigmoid(tape.add(tape.matmul(msg, p.Wr), tape.matmul(v, p.Ur)));
    Var h = tape.tanh(tape.add(tape.matmul(msg, p.Wo), tape.matmul(tape.mul(r, v), p.Uo)));
    v = tape.add(tape.mul(tape.one_minus(z), v), tape.mul(z, h));
    if (!tape.val(v).all_finite())
      raise(ErrorKind::numeric,
            "non-finite node state after propagation step " + std::to_string(t + 1));
  }
  return v;
}

/// Per-target attentive summaries: for each candidate item t, attention
/// scores over the session slots are softmax-normalized (padding excluded)
/// and used to mix the node states. Returns [m, d], one row per candidate.
template <typename T>
Var target_attention(TapeT<T>& tape, Var node_states, const std::vector<uint8_t>& mask,
                     Var real_embeds, Var w_att) {
  Var proj = tape.matmul(real_embeds, w_att);       // [m, d]
  Var scores = tape.matmul_nt(proj, node_states);   // [m, n]
  Var betas = tape.softmax(scores, mask);           // masked slots exactly 0
  return tape.matmul(betas, node_states);           // [m, d]
}

/// Attentive global embedding: each slot is gated against the last state and
/// summed, weighted by an unnormalized attention coefficient. Masked slots
/// contribute exactly zero. Returns [1, d].
template <typename T>
Var global_attention(TapeT<T>& tape, Var node_states, Var s_local, const ModelLeaves& p,
                     const std::vector<uint8_t>& mask) {
  Var base = tape.add(tape.matmul(s_local, p.W1), p.c);                              // [1, d]
  Var gates = tape.sigmoid(tape.add_rowvec(tape.matmul(node_states, p.W2), base));   // [n, d]
  Var alpha = tape.matmul(gates, p.q);                                               // [n, 1]
  const int n = tape.val(node_states).rows();
  TensorT<T> mcol = TensorT<T>::zeros({n, 1});
  for (int i = 0; i < n; ++i) mcol.data[i] = (mask.empty() || mask[i]) ? T(1) : T(0);
  Var kept = tape.mul(alpha, tape.constant(std::move(mcol)));
  return tape.matmul(tape.transpose(kept), node_states);  // [1, d]
}

/// Forward pass products for one example.
struct ForwardVars {
  Var node_states;  // [n, d]
  Var scores;       // [1, m]
  Var probs;        // [1, m]
};

/// Runs propagation, builds the variant's session embedding, scores all m
/// real items by inner product, and normalizes. The padding item is never a
/// candidate.
template <typename T>
ForwardVars forward_probs(TapeT<T>& tape, const ModelLeaves& p, const GraphVars& g,
                          Variant variant, int ggnn_steps) {
  const int d = tape.val(p.E).cols();
  const int m = tape.val(p.E).rows() - 1;
  const int blocks = variant_fusion_blocks(variant);
  if (blocks > 0) {
    const TensorT<T>& w3 = tape.val(p.W3);
    if (w3.rows() != blocks * d || w3.cols() != d)
      raise(ErrorKind::config, "variant " + std::string(variant_name(variant)) +
                                   " needs a fusion matrix of shape [" +
                                   std::to_string(blocks * d) + "x" + std::to_string(d) +
                                   "], got " + shape_str(w3.shape));
  }

  ForwardVars out;
  out.node_states = ggnn_propagate(tape, p, g, ggnn_steps);
  Var e_real = tape.slice_rows(p.E, 0, m);                                  // [m, d]
  Var s_local = tape.slice_rows(out.node_states, g.last_slot, g.last_slot + 1);  // [1, d]

  switch (variant) {
    case Variant::local_only:
      out.scores = tape.matmul_nt(s_local, e_real);
      break;
    case Variant::avg_pool: {
      Var s = tape.mean_rows(out.node_states, g.mask);
      out.scores = tape.matmul_nt(s, e_real);
      break;
    }
    case Variant::att_only: {
      Var s_global = global_attention(tape, out.node_states, s_local, p, g.mask);
      out.scores = tape.matmul_nt(tape.matmul(s_global, p.W3), e_real);
      break;
    }
    case Variant::local_plus_att: {
      Var s_global = global_attention(tape, out.node_states, s_local, p, g.mask);
      Var s = tape.add(tape.matmul(s_local, tape.slice_rows(p.W3, 0, d)),
                       tape.matmul(s_global, tape.slice_rows(p.W3, d, 2 * d)));
      out.scores = tape.matmul_nt(s, e_real);
      break;
    }
    case Variant::full: {
      Var s_global = global_attention(tape, out.node_states, s_local, p, g.mask);
      Var s_target = target_attention(tape, out.node_states, g.mask, e_real, p.W_att);
      // Session embedding per target: [s_target ; s_local ; s_global] @ W3,
      // realized block-wise so only the target block varies per row.
      Var per_target = tape.matmul(s_target, tape.slice_rows(p.W3, 0, d));       // [m, d]
      Var from_local = tape.matmul(s_local, tape.slice_rows(p.W3, d, 2 * d));    // [1, d]
      Var from_global = tape.matmul(s_global, tape.slice_rows(p.W3, 2 * d, 3 * d));
      Var s_sess = tape.add_rowvec(tape.add_rowvec(per_target, from_local), from_global);
      out.scores = tape.transpose(tape.row_dot(s_sess, e_real));  // [1, m]
      break;
    }
  }
  out.probs = tape.softmax(out.scores);
  return out;
}

/// Cross-entropy of the normalized scores against the true next item.
/// `categorical` is -log p(label); `eq13` is the literal per-item binary
/// form summed over all candidates. Log arguments are clamped at 1e-12.
template <typename T>
Var example_loss(TapeT<T>& tape, Var probs, int label, LossMode mode) {
  const int m = static_cast<int>(tape.val(probs).numel());
  if (label < 0 || label >= m)
    raise(ErrorKind::contract,
          "label " + std::to_string(label) + " out of range [0," + std::to_string(m) + ")");
  if (mode == LossMode::categorical)
    return tape.scale(tape.pick(tape.log_clamped(probs), label), T(-1));
  Var lp = tape.log_clamped(probs);
  Var l1 = tape.log_clamped(tape.one_minus(probs));
  // -(log p[y] + sum_i log(1-p[i]) - log(1-p[y]))
  Var keep = tape.sub(tape.sum(l1), tape.pick(l1, label));
  return tape.scale(tape.add(tape.pick(lp, label), keep), T(-1));
}

}  // namespace tagnn
