#pragma once

// Ranking metrics, segmented reports and the unique-transition statistic.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "muse/common.hpp"
#include "muse/corpus.hpp"
#include "muse/encoder.hpp"
#include "muse/model.hpp"

namespace muse {

/// 1-based rank: one plus the number of items scoring strictly higher,
/// plus the number of equal-scoring items with a smaller id.
inline std::size_t rank_of_target(std::span<const double> scores, std::size_t target) {
  if (target >= scores.size()) throw index_error("rank_of_target: target outside score vector");
  const double s = scores[target];
  std::size_t rank = 1;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    if (scores[v] > s || (scores[v] == s && v < target)) ++rank;
  }
  return rank;
}

inline double recall_at_k(std::size_t rank, std::size_t k) { return rank <= k ? 1.0 : 0.0; }
inline double mrr_at_k(std::size_t rank, std::size_t k) { return rank <= k ? 1.0 / static_cast<double>(rank) : 0.0; }
inline double ndcg_at_k(std::size_t rank, std::size_t k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

enum class Segment { all, shuffle, non_shuffle };

inline std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::all: return "all";
    case Segment::shuffle: return "shuffle";
    case Segment::non_shuffle: return "non_shuffle";
  }
  return "?";
}

struct SegmentMetrics {
  std::size_t count = 0;
  // keyed by K; empty when count == 0
  std::map<std::size_t, double> recall, mrr, ndcg;

  std::optional<double> get(std::string_view metric, std::size_t k) const {
    if (count == 0) return std::nullopt;
    const auto& m = metric == "recall" ? recall : metric == "mrr" ? mrr : ndcg;
    auto it = m.find(k);
    if (it == m.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const SegmentMetrics&) const = default;
};

struct MetricsReport {
  std::vector<std::size_t> ks;
  SegmentMetrics all, shuffle, non_shuffle;

  const SegmentMetrics& segment(Segment s) const {
    return s == Segment::all ? all : s == Segment::shuffle ? shuffle : non_shuffle;
  }

  bool operator==(const MetricsReport&) const = default;
};

/// Averages metrics over instances given their ranks, overall and per
/// shuffle segment.
inline MetricsReport report_from_ranks(std::span<const std::size_t> ranks, const std::vector<bool>& shuffle,
                                       std::vector<std::size_t> ks = {5, 10}) {
  MetricsReport r;
  r.ks = ks;
  struct Acc {
    std::size_t n = 0;
    std::map<std::size_t, double> rec, mrr, ndcg;
  } acc[3];
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    for (int seg : {0, shuffle[i] ? 1 : 2}) {
      Acc& a = acc[seg];
      ++a.n;
      for (std::size_t k : ks) {
        a.rec[k] += recall_at_k(ranks[i], k);
        a.mrr[k] += mrr_at_k(ranks[i], k);
        a.ndcg[k] += ndcg_at_k(ranks[i], k);
      }
    }
  }
  SegmentMetrics* out[] = {&r.all, &r.shuffle, &r.non_shuffle};
  for (int seg = 0; seg < 3; ++seg) {
    out[seg]->count = acc[seg].n;
    if (acc[seg].n == 0) continue;
    const double n = static_cast<double>(acc[seg].n);
    for (std::size_t k : ks) {
      out[seg]->recall[k] = acc[seg].rec[k] / n;
      out[seg]->mrr[k] = acc[seg].mrr[k] / n;
      out[seg]->ndcg[k] = acc[seg].ndcg[k] / n;
    }
  }
  return r;
}

/// Scores every track for a prefix.
using Scorer = std::function<RowVector(std::span<const TrackId>)>;

/// Ranks each instance's label under `scorer`. Work is split over up to
/// `threads` threads; results do not depend on the thread count.
inline std::vector<std::size_t> rank_instances(const Scorer& scorer, std::span<const TrainingInstance> instances,
                                               unsigned threads = 1) {
  std::vector<std::size_t> ranks(instances.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      RowVector s = scorer(instances[i].prefix);
      ranks[i] = rank_of_target(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), instances[i].label);
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1 || instances.size() < 64) {
    work(0, instances.size());
    return ranks;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (instances.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    std::size_t b = t * chunk, e = std::min(instances.size(), b + chunk);
    if (b >= e) break;
    pool.emplace_back(work, b, e);
  }
  for (auto& th : pool) th.join();
  return ranks;
}

inline MetricsReport evaluate(const Scorer& scorer, std::span<const TrainingInstance> instances,
                              std::vector<std::size_t> ks = {5, 10}, unsigned threads = 1) {
  auto ranks = rank_instances(scorer, instances, threads);
  std::vector<bool> flags;
  flags.reserve(instances.size());
  for (const auto& inst : instances) flags.push_back(inst.shuffle);
  return report_from_ranks(ranks, flags, std::move(ks));
}

inline MetricsReport evaluate(const ModelParams& params, std::span<const TrainingInstance> instances,
                              std::vector<std::size_t> ks = {5, 10}, unsigned threads = 1) {
  Scorer scorer = [&params](std::span<const TrackId> prefix) { return score_session(params, prefix); };
  return evaluate(scorer, instances, std::move(ks), threads);
}

/// Percentage of adjacent pairs whose (source, target) occurs exactly once
/// across the whole set.
inline double unique_transition_rate(std::span<const Session> sessions) {
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& s : sessions) {
    for (std::size_t t = 0; t + 1 < s.tracks.size(); ++t) {
      ++counts[(std::uint64_t{s.tracks[t]} << 32) | s.tracks[t + 1]];
      ++total;
    }
  }
  if (total == 0) throw validation_error("unique_transition_rate: no transitions");
  std::uint64_t unique = 0;
  for (const auto& [key, c] : counts) unique += c == 1 ? 1 : 0;
  return 100.0 * static_cast<double>(unique) / static_cast<double>(total);
}

/// Scores each track by how often it is a training label.
inline Scorer popularity_baseline(std::span<const TrainingInstance> train, std::size_t vocab_size) {
  RowVector freq = RowVector::Zero(static_cast<Eigen::Index>(vocab_size));
  for (const auto& inst : train) {
    if (inst.label >= vocab_size) throw index_error("popularity_baseline: label outside vocabulary");
    freq(static_cast<Eigen::Index>(inst.label)) += 1.0;
  }
  return [freq](std::span<const TrackId>) { return freq; };
}

// ---------------------------------------------------------------------------
// Report output

/// `segment,metric,K,value,count`; absent segments are skipped.
inline void write_report_csv(std::ostream& out, const MetricsReport& r) {
  out << "segment,metric,K,value,count\n";
  for (Segment seg : {Segment::all, Segment::shuffle, Segment::non_shuffle}) {
    const auto& m = r.segment(seg);
    if (m.count == 0) continue;
    for (std::string_view metric : {"recall", "mrr", "ndcg"}) {
      for (std::size_t k : r.ks) {
        out << to_string(seg) << ',' << metric << ',' << k << ',' << std::setprecision(17) << *m.get(metric, k)
            << ',' << m.count << '\n';
      }
    }
  }
}

/// Aligned plain-text table.
inline void write_report_table(std::ostream& out, const MetricsReport& r) {
  out << std::left << std::setw(12) << "segment" << std::right << std::setw(8) << "count";
  for (std::string_view metric : {"Recall", "MRR", "NDCG"}) {
    for (std::size_t k : r.ks) out << std::setw(11) << (std::string(metric) + "@" + std::to_string(k));
  }
  out << '\n';
  for (Segment seg : {Segment::all, Segment::shuffle, Segment::non_shuffle}) {
    const auto& m = r.segment(seg);
    out << std::left << std::setw(12) << to_string(seg) << std::right << std::setw(8) << m.count;
    for (std::string_view metric : {"recall", "mrr", "ndcg"}) {
      for (std::size_t k : r.ks) {
        auto v = m.get(metric, k);
        if (v) {
          out << std::setw(11) << std::fixed << std::setprecision(4) << *v;
        } else {
          out << std::setw(11) << "-";
        }
      }
    }
    out << '\n';
  }
  out.unsetf(std::ios::fixed);
}

}  // namespace muse
