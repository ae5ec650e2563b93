#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "muse/augment.hpp"
#include "oracles.hpp"

using namespace muse;

namespace {

NormalizedTransitions from_sessions(const std::vector<std::vector<TrackId>>& tracks, std::size_t dim) {
  std::vector<Session> s;
  for (const auto& t : tracks) s.push_back(Session{"s", t, true, {}});
  return build_transitions(s, dim);
}

Session shuffle_session(std::vector<TrackId> t) { return Session{"x", std::move(t), true, {}}; }

bool is_subsequence(const std::vector<TrackId>& small, const std::vector<TrackId>& big) {
  std::size_t k = 0;
  for (TrackId t : big) {
    if (k < small.size() && small[k] == t) ++k;
  }
  return k == small.size();
}

}  // namespace

TEST(CandidateDistribution, MatchesHandProduct) {
  // 3-track vocabulary, hand-set tables
  NormalizedTransitions tr{SparseMatrix(3, {{0, 1, 0.5}, {0, 2, 0.5}, {1, 2, 1.0}, {2, 2, 1.0}}),
                           SparseMatrix(3, {{0, 1, 1.0}, {0, 2, 0.2}, {1, 2, 0.3}, {2, 2, 0.5}})};
  auto dist = candidate_distribution(shuffle_session({0, 2}), tr);
  ASSERT_EQ(dist.rows.size(), 1u);
  // v=1: 0.5*0.3, v=2: 0.5*0.5
  ASSERT_EQ(dist.rows[0].tracks, (std::vector<TrackId>{1, 2}));
  EXPECT_NEAR(dist.rows[0].probs[0], 0.15 / 0.40, 1e-15);
  EXPECT_NEAR(dist.rows[0].probs[1], 0.25 / 0.40, 1e-15);
}

TEST(CandidateDistribution, MatchesDenseOracleOnRandomTables) {
  Rng rng(21);
  std::vector<std::vector<TrackId>> sessions;
  std::vector<std::vector<unsigned>> plain;
  for (int i = 0; i < 80; ++i) {
    std::vector<TrackId> s;
    for (std::size_t k = 0, n = 2 + rng.uniform_int(5); k < n; ++k) s.push_back(static_cast<TrackId>(rng.uniform_int(15)));
    sessions.push_back(s);
    plain.emplace_back(s.begin(), s.end());
  }
  auto tr = from_sessions(sessions, 15);
  auto dense = oracle::log1p_dense(oracle::transition_counts(plain, 15));
  auto rn = oracle::row_normalize(dense), cn = oracle::col_normalize(dense);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = shuffle_session({static_cast<TrackId>(rng.uniform_int(15)), static_cast<TrackId>(rng.uniform_int(15)),
                              static_cast<TrackId>(rng.uniform_int(15))});
    auto dist = candidate_distribution(s, tr);
    for (std::size_t g = 0; g < 2; ++g) {
      auto expect = oracle::gap_distribution(rn, cn, s.tracks[g], s.tracks[g + 1]);
      std::vector<double> got(15, 0.0);
      for (std::size_t k = 0; k < dist.rows[g].tracks.size(); ++k) got[dist.rows[g].tracks[k]] = dist.rows[g].probs[k];
      for (std::size_t v = 0; v < 15; ++v) {
        EXPECT_NEAR(got[v], expect[v], 1e-12);
        EXPECT_EQ(got[v] > 0.0, rn[s.tracks[g]][v] > 0.0 && cn[v][s.tracks[g + 1]] > 0.0);
      }
      if (!dist.rows[g].empty()) {
        double sum = 0.0;
        for (double p : dist.rows[g].probs) sum += p;
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
    }
  }
}

TEST(CandidateDistribution, BridgingTrackDominates) {
  // 3 -> 8 and 8 -> 4 are frequent; 3 -> 5 -> 4 happens once
  std::vector<std::vector<TrackId>> s;
  for (int i = 0; i < 20; ++i) s.push_back({3, 8, 4});
  s.push_back({3, 5, 4});
  auto dist = candidate_distribution(shuffle_session({3, 4}), from_sessions(s, 10));
  const auto& row = dist.rows[0];
  auto it = std::max_element(row.probs.begin(), row.probs.end());
  EXPECT_EQ(row.tracks[static_cast<std::size_t>(it - row.probs.begin())], 8u);
  EXPECT_GT(*it, 0.8);
}

TEST(CandidateDistribution, SourceWithoutSuccessorsGivesEmptyRow) {
  auto tr = from_sessions({{0, 1}}, 3);
  auto dist = candidate_distribution(shuffle_session({2, 1}), tr);
  EXPECT_TRUE(dist.rows[0].empty());
}

TEST(SampleInsertions, DegenerateRowAlwaysSame) {
  CandidateDistribution d{{CandidateRow{{7}, {1.0}}, CandidateRow{}}};
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    auto p = sample_insertions(d, rng);
    EXPECT_EQ(p[0], std::optional<TrackId>(7));
    EXPECT_FALSE(p[1]);
  }
}

TEST(SampleInsertions, TwoPointFrequencies) {
  CandidateDistribution d{{CandidateRow{{1, 2}, {0.7, 0.3}}}};
  Rng rng(2);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += *sample_insertions(d, rng)[0] == 1;
  EXPECT_NEAR(ones / double(n), 0.7, 0.01);
}

TEST(Insert, PlacesIntoGaps) {
  Rng rng(3);
  auto out = insert(shuffle_session({0, 1, 2}), InsertionPlan{9, std::nullopt}, 20, rng);
  EXPECT_EQ(out.tracks, (std::vector<TrackId>{0, 9, 1, 2}));
  EXPECT_TRUE(out.shuffle);
  EXPECT_THROW(insert(shuffle_session({0, 1, 2}), InsertionPlan{9}, 20, rng), validation_error);
}

TEST(Insert, EmptyPlanKeepsSession) {
  Rng rng(4);
  auto s = shuffle_session({4, 5, 6});
  EXPECT_EQ(insert(s, InsertionPlan(2), 20, rng).tracks, s.tracks);
}

TEST(Insert, FullSessionTakesNothing) {
  std::vector<TrackId> t(20);
  for (std::size_t i = 0; i < 20; ++i) t[i] = static_cast<TrackId>(i);
  InsertionPlan plan(19, TrackId{99});
  Rng rng(5);
  EXPECT_EQ(insert(shuffle_session(t), plan, 20, rng).tracks, t);
}

TEST(Insert, SingleSurvivorIsUniform) {
  std::vector<TrackId> t(19, 0);
  InsertionPlan plan(18);
  const std::vector<std::size_t> gaps{1, 4, 8, 12, 17};
  for (std::size_t g : gaps) plan[g] = static_cast<TrackId>(100 + g);
  Rng rng(6);
  std::map<TrackId, int> hits;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    auto out = insert(shuffle_session(t), plan, 20, rng);
    ASSERT_EQ(out.size(), 20u);
    for (TrackId x : out.tracks) {
      if (x >= 100) ++hits[x];
    }
  }
  ASSERT_EQ(hits.size(), gaps.size());
  for (const auto& [track, count] : hits) EXPECT_NEAR(count / double(n), 0.2, 0.01) << track;
}

TEST(TransitionAugment, DeterministicTablesPredictable) {
  // each source has one successor, each target one predecessor
  auto tr = from_sessions({{0, 1, 2, 3}}, 4);
  Rng rng(7);
  // gap (0,2): only 1 bridges; gap (1,3): only 2 bridges
  auto out = transition_augment(shuffle_session({0, 2}), tr, rng);
  EXPECT_EQ(out.tracks, (std::vector<TrackId>{0, 1, 2}));
  out = transition_augment(shuffle_session({0, 2, 1, 3}), tr, rng);
  EXPECT_EQ(out.tracks, (std::vector<TrackId>{0, 1, 2, 1, 2, 3}));
}

TEST(TransitionAugment, OriginalIsSubsequenceAndSeeded) {
  Rng gen(8);
  std::vector<std::vector<TrackId>> sessions;
  for (int i = 0; i < 200; ++i) {
    std::vector<TrackId> s;
    for (std::size_t k = 0, n = 2 + gen.uniform_int(10); k < n; ++k) s.push_back(static_cast<TrackId>(gen.uniform_int(20)));
    sessions.push_back(s);
  }
  auto tr = from_sessions(sessions, 20);
  for (const auto& t : sessions) {
    auto s = shuffle_session(t);
    Rng a(42), b(42);
    auto x = transition_augment(s, tr, a);
    EXPECT_EQ(x.tracks, transition_augment(s, tr, b).tracks);
    EXPECT_LE(x.size(), kMaxLen);
    EXPECT_GE(x.size(), s.size());
    EXPECT_TRUE(is_subsequence(s.tracks, x.tracks));
  }
}

TEST(ReorderAugment, WindowLength) {
  EXPECT_EQ(reorder_window(0.5, 10), 5u);
  EXPECT_EQ(reorder_window(0.3, 10), 3u);
  EXPECT_EQ(reorder_window(0.7, 10), 7u);
  EXPECT_EQ(reorder_window(0.9, 3), 2u);
  EXPECT_EQ(reorder_window(1.0, 7), 7u);
}

TEST(ReorderAugment, PreservesMultisetAndOutsideWindow) {
  Rng rng(9);
  Session s{"n", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, false, {}};
  for (double gamma : {0.3, 0.5, 0.7, 0.9}) {
    for (int i = 0; i < 200; ++i) {
      auto out = reorder_augment(s, gamma, rng);
      ASSERT_EQ(out.size(), s.size());
      auto sorted = out.tracks;
      std::sort(sorted.begin(), sorted.end());
      EXPECT_EQ(sorted, s.tracks);
      // moved positions form a window no longer than floor(gamma n)
      std::size_t first = 10, last = 0;
      for (std::size_t k = 0; k < 10; ++k) {
        if (out.tracks[k] != k) {
          first = std::min(first, k);
          last = k;
        }
      }
      if (first < 10) EXPECT_LE(last - first + 1, reorder_window(gamma, 10));
    }
  }
}

TEST(ReorderAugment, TinyWindowIsIdentity) {
  Rng rng(10);
  Session s{"n", {3, 1, 2}, false, {}};
  EXPECT_EQ(reorder_augment(s, 0.3, rng).tracks, s.tracks);
}

TEST(ReorderAugment, BadGamma) {
  Rng rng(11);
  Session s{"n", {0, 1}, false, {}};
  EXPECT_THROW(reorder_augment(s, 0.0, rng), config_error);
  EXPECT_THROW(reorder_augment(s, 1.5, rng), config_error);
}
