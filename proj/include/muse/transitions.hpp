#pragma once

// Corpus-wide track-to-track transition statistics and their
// source-normalized / target-normalized Markov forms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "muse/common.hpp"
#include "muse/corpus.hpp"
#include "muse/sparse.hpp"

namespace muse {

enum class LogMode {
  log1p,        // ln(1 + c): every observed transition keeps positive weight
  log_nonzero,  // ln(c) on stored entries; count-1 transitions vanish
};

inline LogMode parse_log_mode(std::string_view s) {
  if (s == "log1p") return LogMode::log1p;
  if (s == "log_nonzero") return LogMode::log_nonzero;
  throw config_error("unknown log mode '" + std::string(s) + "' (expected log1p or log_nonzero)");
}

inline std::string_view to_string(LogMode m) {
  return m == LogMode::log1p ? "log1p" : "log_nonzero";
}

/// Sparse integer transition counts. Entries are sorted by (source, target)
/// and every stored count is at least 1.
struct TransitionCounts {
  struct Entry {
    TrackId source = 0;
    TrackId target = 0;
    std::uint64_t count = 0;

    bool operator==(const Entry&) const = default;
  };

  std::size_t dimension = 0;
  std::vector<Entry> entries;

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& e : entries) t += e.count;
    return t;
  }

  std::uint64_t count(TrackId source, TrackId target) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), Entry{source, target, 0},
                               [](const Entry& a, const Entry& b) {
                                 return a.source != b.source ? a.source < b.source : a.target < b.target;
                               });
    if (it == entries.end() || it->source != source || it->target != target) return 0;
    return it->count;
  }
};

/// Counts adjacent (x_t, x_{t+1}) pairs over all sessions, self-transitions
/// included.
inline TransitionCounts build_counts(std::span<const Session> sessions, std::size_t dimension) {
  std::unordered_map<std::uint64_t, std::uint64_t> acc;
  for (const auto& s : sessions) {
    for (std::size_t t = 0; t + 1 < s.tracks.size(); ++t) {
      TrackId a = s.tracks[t], b = s.tracks[t + 1];
      if (a >= dimension || b >= dimension) throw index_error("track id outside transition dimension");
      ++acc[(std::uint64_t{a} << 32) | b];
    }
  }
  TransitionCounts out;
  out.dimension = dimension;
  out.entries.reserve(acc.size());
  for (const auto& [key, c] : acc) {
    out.entries.push_back({static_cast<TrackId>(key >> 32), static_cast<TrackId>(key & 0xffffffffu), c});
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    return a.source != b.source ? a.source < b.source : a.target < b.target;
  });
  return out;
}

/// Log-damped transition weights. Absent entries stay absent.
inline SparseMatrix log_transform(const TransitionCounts& counts, LogMode mode = LogMode::log1p) {
  std::vector<Triplet> trips;
  trips.reserve(counts.entries.size());
  for (const auto& e : counts.entries) {
    double c = static_cast<double>(e.count);
    double v = mode == LogMode::log1p ? std::log1p(c) : std::log(c);
    if (v > 0.0) trips.push_back({e.source, e.target, v});
  }
  return SparseMatrix(counts.dimension, std::move(trips));
}

/// Row-stochastic (source-wise) and column-stochastic (target-wise) views.
struct NormalizedTransitions {
  SparseMatrix row_norm;  // row i: P(next = j | current = i)
  SparseMatrix col_norm;  // column j: P(previous = i | current = j)

  std::size_t dimension() const { return row_norm.dimension(); }
};

inline NormalizedTransitions normalize(const SparseMatrix& m) {
  const std::size_t n = m.dimension();
  std::vector<double> row_sum(n, 0.0), col_sum(n, 0.0);
  auto trips = m.triplets();
  for (const auto& t : trips) {
    row_sum[t.row] += t.value;
    col_sum[t.col] += t.value;
  }
  std::vector<Triplet> by_row = trips, by_col = trips;
  for (auto& t : by_row) t.value /= row_sum[t.row];
  for (auto& t : by_col) t.value /= col_sum[t.col];
  return {SparseMatrix(n, std::move(by_row)), SparseMatrix(n, std::move(by_col))};
}

inline NormalizedTransitions build_transitions(std::span<const Session> sessions, std::size_t dimension,
                                               LogMode mode = LogMode::log1p) {
  return normalize(log_transform(build_counts(sessions, dimension), mode));
}

/// `source<TAB>target<TAB>count` per line.
inline void write_counts(std::ostream& out, const TransitionCounts& counts) {
  for (const auto& e : counts.entries) out << e.source << '\t' << e.target << '\t' << e.count << '\n';
}

inline TransitionCounts read_counts(std::istream& in, std::size_t dimension) {
  TransitionCounts out;
  out.dimension = dimension;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto f = detail::split_fields(line, '\t');
    if (f.size() != 3) throw parse_error(detail::line_error(line_no, "count line needs 3 fields"));
    auto s = detail::parse_int<TrackId>(f[0]);
    auto t = detail::parse_int<TrackId>(f[1]);
    auto c = detail::parse_int<std::uint64_t>(f[2]);
    if (!s || !t || !c || *c == 0) throw parse_error(detail::line_error(line_no, "bad transition count"));
    if (*s >= dimension || *t >= dimension) throw index_error(detail::line_error(line_no, "track id outside vocabulary"));
    out.entries.push_back({*s, *t, *c});
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    return a.source != b.source ? a.source < b.source : a.target < b.target;
  });
  for (std::size_t k = 1; k < out.entries.size(); ++k) {
    if (out.entries[k].source == out.entries[k - 1].source && out.entries[k].target == out.entries[k - 1].target) {
      throw validation_error("duplicate transition in count file");
    }
  }
  return out;
}

}  // namespace muse
