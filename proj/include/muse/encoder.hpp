#pragma once

// Session encoder: embedding lookup, one gated message-passing step over the
// session graph, additive-attention aggregation and next-track scoring.

#include <span>
#include <unordered_map>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/common.hpp"
#include "muse/model.hpp"

namespace muse {

/// Directed graph over the distinct tracks of a session.
struct SessionGraph {
  std::vector<TrackId> nodes;             // first-appearance order
  Matrix a_in;                            // row i: in-neighbours of i, / in-degree
  Matrix a_out;                           // row i: out-neighbours of i, / out-degree
  std::vector<std::size_t> position_map;  // sequence position -> node index

  std::size_t size() const { return nodes.size(); }
};

/// Edge x_t -> x_{t+1} for each adjacent pair. Adjacency is binary (a
/// repeated edge counts once) and then degree-normalized.
inline SessionGraph build_session_graph(std::span<const TrackId> tracks) {
  SessionGraph g;
  std::unordered_map<TrackId, std::size_t> index;
  g.position_map.reserve(tracks.size());
  for (TrackId id : tracks) {
    auto [it, inserted] = index.emplace(id, g.nodes.size());
    if (inserted) g.nodes.push_back(id);
    g.position_map.push_back(it->second);
  }
  const auto n = static_cast<Eigen::Index>(g.nodes.size());
  Matrix edges = Matrix::Zero(n, n);
  for (std::size_t t = 0; t + 1 < tracks.size(); ++t) {
    edges(static_cast<Eigen::Index>(g.position_map[t]), static_cast<Eigen::Index>(g.position_map[t + 1])) = 1.0;
  }
  g.a_out = edges;
  g.a_in = edges.transpose();
  for (Matrix* a : {&g.a_out, &g.a_in}) {
    for (Eigen::Index r = 0; r < n; ++r) {
      double deg = a->row(r).sum();
      if (deg > 0.0) a->row(r) /= deg;
    }
  }
  return g;
}

/// Parameters bound to a tape; both views of a session share one binding.
struct BoundParams {
  ad::Var embedding;
  ad::Var w_in, b_in, w_out, b_out;
  ad::Var w_update, u_update, b_update;
  ad::Var w_reset, u_reset, b_reset;
  ad::Var w_cand, u_cand, b_cand;
  ad::Var att_w1, att_w2, att_w3, att_b;
  ad::Var w_fuse;
  std::size_t hidden_dim = 0;
};

namespace detail {

template <typename Fn>
BoundParams bind_with(const ModelParams& p, Fn&& fn) {
  BoundParams b;
  b.hidden_dim = p.hidden_dim();
  ad::Var* slots[] = {&b.embedding, &b.w_in,    &b.b_in,    &b.w_out,  &b.b_out,  &b.w_update, &b.u_update,
                      &b.b_update,  &b.w_reset, &b.u_reset, &b.b_reset, &b.w_cand, &b.u_cand,  &b.b_cand,
                      &b.att_w1,    &b.att_w2,  &b.att_w3,  &b.att_b,  &b.w_fuse};
  auto tensors = p.tensors();
  static_assert(std::size(slots) == std::tuple_size_v<decltype(tensors)>);
  for (std::size_t i = 0; i < tensors.size(); ++i) *slots[i] = fn(i, *tensors[i].second);
  return b;
}

}  // namespace detail

/// Binds parameters so backward() accumulates into `grads` (same shapes).
inline BoundParams bind(ad::Tape& tape, const ModelParams& params, ModelParams& grads) {
  auto sinks = grads.tensors();
  return detail::bind_with(params, [&](std::size_t i, const Matrix& value) {
    return tape.parameter(value, *sinks[i].second);
  });
}

/// Binds parameters read-only, for inference.
inline BoundParams bind_constant(ad::Tape& tape, const ModelParams& params) {
  return detail::bind_with(params, [&](std::size_t, const Matrix& value) { return tape.constant_ref(value); });
}

/// Embedding rows for each position; zero rows pad up to `padded_len`.
inline ad::Var embed(ad::Tape& tape, const BoundParams& p, std::span<const TrackId> tracks,
                     std::size_t padded_len = 0) {
  std::vector<std::size_t> rows(tracks.begin(), tracks.end());
  auto e = ad::select_rows(tape, p.embedding, std::move(rows));
  return ad::pad_rows(tape, e, padded_len);
}

/// One gated graph step. Node states start from the embedding of each
/// node's first position; the result is read back out per position, so it
/// has one row per non-padding position.
inline ad::Var encode(ad::Tape& tape, const BoundParams& p, ad::Var embeddings, const SessionGraph& g) {
  using namespace ad;
  const std::size_t n = g.size();
  const Matrix& E = tape.value(embeddings);
  if (static_cast<std::size_t>(E.cols()) != p.hidden_dim) throw validation_error("encode: embedding width differs from d");
  if (static_cast<std::size_t>(E.rows()) < g.position_map.size()) {
    throw validation_error("encode: fewer embedding rows than session positions");
  }
  if (static_cast<std::size_t>(g.a_in.rows()) != n || static_cast<std::size_t>(g.a_out.rows()) != n) {
    throw validation_error("encode: adjacency size differs from node count");
  }
  std::vector<std::size_t> first(n, g.position_map.size());
  for (std::size_t pos = g.position_map.size(); pos-- > 0;) first.at(g.position_map[pos]) = pos;

  Var x = select_rows(tape, embeddings, first);
  Var a_in = tape.constant(g.a_in);
  Var a_out = tape.constant(g.a_out);
  Var msg_in = add_row(tape, matmul(tape, a_in, matmul_nt(tape, x, p.w_in)), p.b_in);
  Var msg_out = add_row(tape, matmul(tape, a_out, matmul_nt(tape, x, p.w_out)), p.b_out);
  Var msg = concat_cols(tape, msg_in, msg_out);

  auto gate = [&](Var w, Var u, Var b, Var state) {
    return add_row(tape, add(tape, matmul_nt(tape, msg, w), matmul_nt(tape, state, u)), b);
  };
  Var update = sigmoid(tape, gate(p.w_update, p.u_update, p.b_update, x));
  Var reset = sigmoid(tape, gate(p.w_reset, p.u_reset, p.b_reset, x));
  Var cand = tanh(tape, gate(p.w_cand, p.u_cand, p.b_cand, mul(tape, reset, x)));
  // (1 - update) * x + update * cand
  Var h = add(tape, x, mul(tape, update, sub(tape, cand, x)));
  return select_rows(tape, h, g.position_map);
}

/// Session vector from the first `length` rows of H (the rest is padding):
/// W_fuse [h_last ; sum_i beta_i h_i] with
/// beta_i = w1 . logistic(W2 h_i + W3 h_last + b).
inline ad::Var aggregate(ad::Tape& tape, const BoundParams& p, ad::Var track_reps, std::size_t length) {
  using namespace ad;
  const Matrix& H = tape.value(track_reps);
  if (length == 0 || length > static_cast<std::size_t>(H.rows())) throw validation_error("aggregate: bad length");
  Var h = length == static_cast<std::size_t>(H.rows()) ? track_reps : top_rows(tape, track_reps, length);
  Var last = select_rows(tape, h, {length - 1});
  Var query = add_row(tape, matmul_nt(tape, last, p.att_w3), p.att_b);
  Var act = sigmoid(tape, add_row(tape, matmul_nt(tape, h, p.att_w2), query));
  Var beta = matmul_nt(tape, act, p.att_w1);  // length x 1
  Var global = matmul(tape, transpose(tape, beta), h);
  return matmul_nt(tape, concat_cols(tape, last, global), p.w_fuse);
}

inline ad::Var aggregate(ad::Tape& tape, const BoundParams& p, ad::Var track_reps) {
  return aggregate(tape, p, track_reps, static_cast<std::size_t>(tape.value(track_reps).rows()));
}

/// 1 x |V| logits z . e_v.
inline ad::Var predict_logits(ad::Tape& tape, const BoundParams& p, ad::Var session_rep) {
  return ad::matmul_nt(tape, session_rep, p.embedding);
}

inline RowVector softmax(const RowVector& logits) {
  const double m = logits.maxCoeff();
  RowVector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

struct SessionForward {
  ad::Var track_reps;  // H
  ad::Var session_rep;  // z
};

inline SessionForward forward_session(ad::Tape& tape, const BoundParams& p, std::span<const TrackId> tracks) {
  if (tracks.empty()) throw validation_error("cannot encode an empty session");
  auto graph = build_session_graph(tracks);
  auto h = encode(tape, p, embed(tape, p, tracks), graph);
  return {h, aggregate(tape, p, h)};
}

/// Next-track logits for a prefix.
inline RowVector score_session(const ModelParams& params, std::span<const TrackId> tracks) {
  ad::Tape tape;
  auto p = bind_constant(tape, params);
  auto fwd = forward_session(tape, p, tracks);
  return tape.value(predict_logits(tape, p, fwd.session_rep)).row(0);
}

}  // namespace muse
