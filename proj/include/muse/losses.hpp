#pragma once

// Training objective: item- and similarity-based matching between the two
// views, VICReg regularization, session-level alignment, next-track cross
// entropy and their weighted combination.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/common.hpp"

namespace muse {

struct LossConfig {
  double alpha = 0.2;  // matching vs. alignment balance
  double lambda = 1.0;  // VICReg invariance
  double mu = 1.0;      // VICReg variance
  double nu = 10.0;     // VICReg covariance
  std::size_t kappa = 5;
  std::size_t warmup_epochs = 1;
  double variance_eps = 1e-4;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");
    if (lambda < 0.0 || mu < 0.0 || nu < 0.0) throw config_error("VICReg coefficients must be nonnegative");
    if (kappa < 1) throw config_error("kappa must be at least 1");
    if (!(variance_eps > 0.0)) throw config_error("variance_eps must be positive");
  }
};

/// Row pair (index into H, index into H~) with its squared distance.
struct MatchedPair {
  std::size_t original = 0;
  std::size_t augmented = 0;
  double distance = 0.0;
};

/// Nearest-neighbour matches in both directions, each cut to the top-kappa.
struct MatchedPairs {
  std::vector<MatchedPair> forward;   // each kept row of H with its NN in H~
  std::vector<MatchedPair> backward;  // each kept row of H~ with its NN in H
};

using IndexPairs = std::vector<std::pair<std::size_t, std::size_t>>;

/// Every (t, k) with original[t] == augmented[k].
inline IndexPairs same_track_pairs(std::span<const TrackId> original, std::span<const TrackId> augmented) {
  IndexPairs out;
  for (std::size_t t = 0; t < original.size(); ++t) {
    for (std::size_t k = 0; k < augmented.size(); ++k) {
      if (original[t] == augmented[k]) out.emplace_back(t, k);
    }
  }
  return out;
}

namespace detail {

inline ad::Var zero_scalar(ad::Tape& tape) { return tape.constant(Matrix::Zero(1, 1)); }

/// Sum over pairs of ||a_i - b_j||^2.
inline ad::Var paired_sq_distance(ad::Tape& tape, ad::Var a, ad::Var b, const IndexPairs& pairs) {
  if (pairs.empty()) return zero_scalar(tape);
  std::vector<std::size_t> ia, ib;
  ia.reserve(pairs.size());
  ib.reserve(pairs.size());
  for (auto [i, j] : pairs) {
    ia.push_back(i);
    ib.push_back(j);
  }
  return ad::sum_squares(tape, ad::sub(tape, ad::select_rows(tape, a, ia), ad::select_rows(tape, b, ib)));
}

}  // namespace detail

/// Mean over the original session's positions of the squared distance
/// between every same-track (original, augmented) representation pair.
/// Rows of H / H~ beyond the session lengths are padding and ignored.
inline ad::Var item_matching_loss(ad::Tape& tape, ad::Var h, ad::Var h_aug, std::span<const TrackId> original,
                                  std::span<const TrackId> augmented) {
  if (static_cast<std::size_t>(tape.value(h).rows()) < original.size() ||
      static_cast<std::size_t>(tape.value(h_aug).rows()) < augmented.size()) {
    throw validation_error("item_matching_loss: fewer rows than session positions");
  }
  auto pairs = same_track_pairs(original, augmented);
  if (pairs.empty() || original.empty()) return detail::zero_scalar(tape);
  return ad::scale(tape, detail::paired_sq_distance(tape, h, h_aug, pairs), 1.0 / static_cast<double>(original.size()));
}

namespace detail {

inline std::vector<MatchedPair> nearest_rows(const Matrix& from, std::size_t n_from, const Matrix& to, std::size_t n_to,
                                             bool from_is_original, std::size_t kappa) {
  std::vector<MatchedPair> out;
  if (n_to == 0) return out;
  out.reserve(n_from);
  for (std::size_t i = 0; i < n_from; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_to; ++j) {
      double d = (from.row(static_cast<Eigen::Index>(i)) - to.row(static_cast<Eigen::Index>(j))).squaredNorm();
      if (d < best_d) {  // strict: lowest index wins ties
        best_d = d;
        best = j;
      }
    }
    out.push_back(from_is_original ? MatchedPair{i, best, best_d} : MatchedPair{best, i, best_d});
  }
  // rank by distance, ties by position in the querying session
  std::stable_sort(out.begin(), out.end(), [](const MatchedPair& a, const MatchedPair& b) { return a.distance < b.distance; });
  if (out.size() > kappa) out.resize(kappa);
  return out;
}

}  // namespace detail

/// Squared-Euclidean nearest neighbours between the first `n_h` rows of H
/// and the first `n_aug` rows of H~, keeping the kappa closest pairs per
/// direction.
inline MatchedPairs nn_pairs(const Matrix& h, const Matrix& h_aug, std::size_t kappa, std::size_t n_h,
                             std::size_t n_aug) {
  if (kappa < 1) throw config_error("kappa must be at least 1");
  if (n_h > static_cast<std::size_t>(h.rows()) || n_aug > static_cast<std::size_t>(h_aug.rows())) {
    throw validation_error("nn_pairs: length exceeds row count");
  }
  return {detail::nearest_rows(h, n_h, h_aug, n_aug, true, kappa),
          detail::nearest_rows(h_aug, n_aug, h, n_h, false, kappa)};
}

inline MatchedPairs nn_pairs(const Matrix& h, const Matrix& h_aug, std::size_t kappa) {
  return nn_pairs(h, h_aug, kappa, static_cast<std::size_t>(h.rows()), static_cast<std::size_t>(h_aug.rows()));
}

/// Sum of squared distances over both directions' kept pairs.
inline ad::Var similarity_matching_loss(ad::Tape& tape, ad::Var h, ad::Var h_aug, const MatchedPairs& pairs) {
  IndexPairs all;
  for (const auto* side : {&pairs.forward, &pairs.backward}) {
    for (const auto& p : *side) all.emplace_back(p.original, p.augmented);
  }
  return detail::paired_sq_distance(tape, h, h_aug, all);
}

struct VicregTerms {
  ad::Var invariance;  // s(A, B)
  ad::Var variance;    // v(A) + v(B)
  ad::Var covariance;  // c(A) + c(B)
  ad::Var total;       // lambda s + mu [v] + nu [c]
};

namespace detail {

/// v(M) and c(M) over the first n rows; both are 0 when n < 2.
inline std::pair<ad::Var, ad::Var> variance_covariance(ad::Tape& tape, ad::Var m, std::size_t n, double eps) {
  if (n < 2) return {zero_scalar(tape), zero_scalar(tape)};
  const auto d = static_cast<double>(tape.value(m).cols());
  ad::Var rows = n == static_cast<std::size_t>(tape.value(m).rows()) ? m : ad::top_rows(tape, m, n);
  ad::Var centered = ad::add_row(tape, rows, ad::scale(tape, ad::col_mean(tape, rows), -1.0));
  ad::Var cov = ad::scale(tape, ad::matmul(tape, ad::transpose(tape, centered), centered), 1.0 / (static_cast<double>(n) - 1.0));
  ad::Var std_dev = ad::sqrt_eps(tape, ad::diagonal(tape, cov), eps);
  ad::Var v = ad::scale(tape, ad::sum(tape, ad::relu(tape, ad::rsub_scalar(tape, 1.0, std_dev))), 1.0 / d);
  ad::Var c = ad::scale(tape, ad::offdiag_sum_squares(tape, cov), 1.0 / d);
  return {v, c};
}

}  // namespace detail

/// VICReg between A (first n_a rows) and B (first n_b rows). Invariance is
/// the mean over `pairs` of ||a - b||^2 / d (0 with no pairs).
inline VicregTerms vicreg(ad::Tape& tape, ad::Var a, ad::Var b, const IndexPairs& pairs, const LossConfig& cfg,
                          std::size_t n_a, std::size_t n_b) {
  const Matrix& A = tape.value(a);
  const Matrix& B = tape.value(b);
  if (A.cols() != B.cols()) throw validation_error("vicreg: column counts differ");
  if (n_a > static_cast<std::size_t>(A.rows()) || n_b > static_cast<std::size_t>(B.rows())) {
    throw validation_error("vicreg: length exceeds row count");
  }
  const auto d = static_cast<double>(A.cols());
  VicregTerms out;
  out.invariance = pairs.empty() ? detail::zero_scalar(tape)
                                 : ad::scale(tape, detail::paired_sq_distance(tape, a, b, pairs),
                                             1.0 / (static_cast<double>(pairs.size()) * d));
  auto [va, ca] = detail::variance_covariance(tape, a, n_a, cfg.variance_eps);
  auto [vb, cb] = detail::variance_covariance(tape, b, n_b, cfg.variance_eps);
  out.variance = ad::add(tape, va, vb);
  out.covariance = ad::add(tape, ca, cb);
  ad::Var parts[] = {ad::scale(tape, out.invariance, cfg.lambda), ad::scale(tape, out.variance, cfg.mu),
                     ad::scale(tape, out.covariance, cfg.nu)};
  out.total = ad::add_n(tape, parts);
  return out;
}

inline VicregTerms vicreg(ad::Tape& tape, ad::Var a, ad::Var b, const IndexPairs& pairs, const LossConfig& cfg) {
  return vicreg(tape, a, b, pairs, cfg, static_cast<std::size_t>(tape.value(a).rows()),
                static_cast<std::size_t>(tape.value(b).rows()));
}

/// Per-session matching terms.
struct MatchingTerms {
  ad::Var item;
  ad::Var similarity;
  ad::Var vicreg;
  ad::Var total;
};

/// L_item + L_sim + L_VICReg(H, H~). Similarity matching is switched off
/// (contributes exactly 0) while `use_similarity` is false.
inline MatchingTerms matching_loss(ad::Tape& tape, ad::Var h, ad::Var h_aug, std::span<const TrackId> original,
                                   std::span<const TrackId> augmented, const LossConfig& cfg, bool use_similarity) {
  MatchingTerms out;
  out.item = item_matching_loss(tape, h, h_aug, original, augmented);
  if (use_similarity) {
    auto pairs = nn_pairs(tape.value(h), tape.value(h_aug), cfg.kappa, original.size(), augmented.size());
    out.similarity = similarity_matching_loss(tape, h, h_aug, pairs);
  } else {
    out.similarity = detail::zero_scalar(tape);
  }
  out.vicreg =
      vicreg(tape, h, h_aug, same_track_pairs(original, augmented), cfg, original.size(), augmented.size()).total;
  ad::Var parts[] = {out.item, out.similarity, out.vicreg};
  out.total = ad::add_n(tape, parts);
  return out;
}

/// VICReg over the batch of session vectors, pairing row i with row i.
inline ad::Var align_loss(ad::Tape& tape, ad::Var z, ad::Var z_aug, const LossConfig& cfg) {
  const auto n = static_cast<std::size_t>(tape.value(z).rows());
  if (static_cast<std::size_t>(tape.value(z_aug).rows()) != n) throw validation_error("align_loss: batch sizes differ");
  IndexPairs pairs;
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(i, i);
  return vicreg(tape, z, z_aug, pairs, cfg).total;
}

/// -log softmax(logits)[target].
inline ad::Var rec_loss(ad::Tape& tape, ad::Var logits, std::size_t target) {
  return ad::cross_entropy(tape, logits, target);
}

inline double rec_loss(const RowVector& logits, std::size_t target) {
  if (target >= static_cast<std::size_t>(logits.size())) throw index_error("rec_loss: target outside vocabulary");
  return ad::log_sum_exp(logits) - logits(static_cast<Eigen::Index>(target));
}

/// alpha * matching + (1 - alpha) * align + rec.
inline ad::Var total_loss(ad::Tape& tape, ad::Var matching, ad::Var align, ad::Var rec, double alpha) {
  ad::Var parts[] = {ad::scale(tape, matching, alpha), ad::scale(tape, align, 1.0 - alpha), rec};
  return ad::add_n(tape, parts);
}

inline double total_loss(double matching, double align, double rec, double alpha) {
  return alpha * matching + (1.0 - alpha) * align + rec;
}

}  // namespace muse
