#pragma once

// Session augmentations: transition-based insertion for shuffle sessions and
// windowed reordering for non-shuffle sessions.

#include <cmath>
#include <optional>
#include <vector>

#include "muse/common.hpp"
#include "muse/corpus.hpp"
#include "muse/random.hpp"
#include "muse/transitions.hpp"

namespace muse {

/// Sparse categorical distribution over tracks for one gap.
struct CandidateRow {
  std::vector<TrackId> tracks;  // sorted
  std::vector<double> probs;    // same length, sums to 1 when nonempty

  bool empty() const { return tracks.empty(); }
};

/// One row per gap between consecutive tracks of a session.
struct CandidateDistribution {
  std::vector<CandidateRow> rows;
};

/// Per-gap insertion choice; nullopt means nothing is inserted.
using InsertionPlan = std::vector<std::optional<TrackId>>;

/// For the gap between S[i] and S[i+1], candidate v is weighted by
/// P(v | S[i]) * P(v precedes S[i+1]) and the row renormalized over the
/// support of that product.
inline CandidateDistribution candidate_distribution(const Session& s, const NormalizedTransitions& tr) {
  CandidateDistribution dist;
  if (s.size() < 2) return dist;
  dist.rows.resize(s.size() - 1);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    auto from = tr.row_norm.row(s.tracks[i]);     // targets of the source
    auto into = tr.col_norm.col(s.tracks[i + 1]);  // sources of the target
    auto& row = dist.rows[i];
    std::size_t a = 0, b = 0;
    double total = 0.0;
    while (a < from.size() && b < into.size()) {
      if (from.index[a] < into.index[b]) {
        ++a;
      } else if (into.index[b] < from.index[a]) {
        ++b;
      } else {
        double w = from.value[a] * into.value[b];
        if (w > 0.0) {
          row.tracks.push_back(from.index[a]);
          row.probs.push_back(w);
          total += w;
        }
        ++a;
        ++b;
      }
    }
    for (double& p : row.probs) p /= total;
  }
  return dist;
}

/// Inverse-CDF draw from a nonempty candidate row.
inline TrackId sample_row(const CandidateRow& row, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < row.tracks.size(); ++k) {
    acc += row.probs[k];
    if (u < acc) return row.tracks[k];
  }
  return row.tracks.back();  // u landed in the rounding gap above acc
}

inline InsertionPlan sample_insertions(const CandidateDistribution& dist, Rng& rng) {
  InsertionPlan plan(dist.rows.size());
  for (std::size_t i = 0; i < dist.rows.size(); ++i) {
    if (!dist.rows[i].empty()) plan[i] = sample_row(dist.rows[i], rng);
  }
  return plan;
}

/// Interleaves the planned tracks into their gaps. When the result would be
/// longer than `max_len`, a uniformly random subset of the planned
/// insertions that fits is kept.
inline Session insert(const Session& s, const InsertionPlan& plan, std::size_t max_len, Rng& rng) {
  if (s.size() >= 1 && plan.size() != s.size() - 1) {
    throw validation_error("insertion plan length must equal the number of gaps");
  }
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i]) chosen.push_back(i);
  }
  std::size_t slots = max_len > s.size() ? max_len - s.size() : 0;
  std::vector<bool> keep(plan.size(), false);
  if (chosen.size() <= slots) {
    for (std::size_t g : chosen) keep[g] = true;
  } else {
    for (std::size_t k : sample_without_replacement(chosen.size(), slots, rng)) keep[chosen[k]] = true;
  }

  Session out;
  out.id = s.id;
  out.shuffle = s.shuffle;
  out.tracks.reserve(std::min(max_len, s.size() + chosen.size()));
  for (std::size_t t = 0; t < s.size(); ++t) {
    out.tracks.push_back(s.tracks[t]);
    if (t < plan.size() && keep[t]) out.tracks.push_back(*plan[t]);
  }
  return out;
}

inline Session transition_augment(const Session& s, const NormalizedTransitions& tr, Rng& rng,
                                  std::size_t max_len = kMaxLen) {
  if (s.size() < 2) {
    Session copy = s;
    copy.skipped.clear();
    return copy;
  }
  auto dist = candidate_distribution(s, tr);
  auto plan = sample_insertions(dist, rng);
  return insert(s, plan, max_len, rng);
}

/// Length of the reordered window for a session of length n.
inline std::size_t reorder_window(double gamma, std::size_t n) {
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n) + 1e-9));
}

/// Uniformly permutes a contiguous window of floor(gamma * |S|) tracks
/// starting at a uniformly random offset.
inline Session reorder_augment(const Session& s, double gamma, Rng& rng) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw config_error("reorder gamma must lie in (0, 1]");
  Session out = s;
  out.skipped.clear();
  std::size_t window = reorder_window(gamma, s.size());
  if (window < 2) return out;
  std::size_t start = rng.uniform_int(s.size() - window + 1);
  rng.shuffle(std::span<TrackId>(out.tracks).subspan(start, window));
  return out;
}

}  // namespace muse
