#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "muse/corpus.hpp"

using namespace muse;

namespace {

const char* kHeader = "session_id\tposition\ttrack_uri\tskipped\tshuffle\tday\tpremium\n";

std::vector<RawSession> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_log(in);
}

RawSession raw(const std::string& id, std::vector<std::string> uris, bool shuffle = false,
               std::vector<bool> skipped = {}, int day = 1) {
  RawSession s{id, {}};
  for (std::size_t i = 0; i < uris.size(); ++i) {
    s.events.push_back({uris[i], static_cast<int>(i) + 1, skipped.empty() ? false : bool(skipped[i]), shuffle, day});
  }
  return s;
}

Vocabulary vocab_of(std::vector<std::string> uris) {
  Vocabulary v;
  for (const auto& u : uris) v.add(u, 1);
  return v;
}

}  // namespace

TEST(ParseLog, GroupsRowsBySession) {
  auto s = parse(std::string(kHeader) + "s1\t1\ta\t0\t0\t3\t1\ns1\t2\tb\t1\t0\t3\t1\ns1\t3\tc\t0\t0\t3\t1\n");
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(s[0].events.size(), 3u);
  EXPECT_EQ(s[0].events[1].track_uri, "b");
  EXPECT_TRUE(s[0].events[1].skipped);
  EXPECT_EQ(s[0].first_day(), 3);
}

TEST(ParseLog, EmptyInputGivesNothing) {
  EXPECT_TRUE(parse("").empty());
  EXPECT_TRUE(parse(kHeader).empty());
}

TEST(ParseLog, OrdersEventsByPosition) {
  auto s = parse(std::string(kHeader) + "s1\t2\tb\t0\t0\t1\t1\ns1\t1\ta\t0\t0\t1\t1\n");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].events[0].track_uri, "a");
  EXPECT_EQ(s[0].events[1].track_uri, "b");
}

TEST(ParseLog, BadPositionNamesTheLine) {
  try {
    parse(std::string(kHeader) + "s1\t1\ta\t0\t0\t1\t1\ns1\tx\tb\t0\t0\t1\t1\n");
    FAIL() << "expected parse_error";
  } catch (const parse_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ParseLog, GapInPositionsIsAValidationError) {
  EXPECT_THROW(parse(std::string(kHeader) + "s1\t1\ta\t0\t0\t1\t1\ns1\t3\tb\t0\t0\t1\t1\n"), validation_error);
}

TEST(ParseLog, DropsNonPremiumSessions) {
  auto s = parse(std::string(kHeader) + "s1\t1\ta\t0\t0\t1\t1\ns2\t1\tb\t0\t0\t1\t0\ns2\t2\tc\t0\t0\t1\t1\n");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].id, "s1");
}

TEST(ParseLog, PremiumColumnIsOptional) {
  auto s = parse("session_id\tposition\ttrack_uri\tskipped\tshuffle\tday\ns1\t1\ta\t0\t1\t2\n");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_TRUE(s[0].events[0].shuffle);
}

TEST(ParseLog, WrongFieldCountIsAnError) {
  EXPECT_THROW(parse(std::string(kHeader) + "s1\t1\ta\t0\n"), parse_error);
  EXPECT_THROW(parse("a\tb\n"), parse_error);
}

TEST(WriteLog, RoundTrips) {
  std::vector<RawSession> sessions{raw("x", {"a", "b"}, true, {false, true}, 4), raw("y", {"c"})};
  std::stringstream buf;
  write_log(buf, sessions);
  auto back = parse_log(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].events[1].track_uri, "b");
  EXPECT_TRUE(back[0].events[1].skipped);
  EXPECT_TRUE(back[0].events[0].shuffle);
  EXPECT_EQ(back[0].first_day(), 4);
}

TEST(BuildVocabulary, MinCountFilter) {
  std::vector<RawSession> s{raw("1", {"a", "b"}), raw("2", {"a", "b"}), raw("3", {"a", "c"})};
  auto v = build_vocabulary(s, 2);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v.index_to_uri, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(v.counts, (std::vector<std::uint64_t>{3, 2}));
  EXPECT_FALSE(v.find("c"));
}

TEST(BuildVocabulary, FourOccurrencesBelowFive) {
  std::vector<RawSession> s{raw("1", {"a", "a", "a", "a", "b", "b", "b", "b", "b"})};
  auto v = build_vocabulary(s, 5);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(*v.find("b"), 0u);
}

TEST(BuildVocabulary, IndicesAreBijective) {
  std::vector<RawSession> s{raw("1", {"z", "y", "x", "y"})};
  auto v = build_vocabulary(s, 1);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(*v.find(v.index_to_uri[i]), i);
  EXPECT_EQ(v.index_to_uri.front(), "z");
  EXPECT_THROW(build_vocabulary(s, 0), config_error);
}

TEST(Preprocess, ShuffleSessionDropsSkippedTracks) {
  auto v = vocab_of({"x1", "x2", "x3", "x4", "x5"});
  std::vector<RawSession> s{raw("s", {"x1", "x2", "x3", "x4", "x5"}, true, {false, true, false, true, false})};
  auto out = preprocess(s, v);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].tracks, (std::vector<TrackId>{0, 2, 4}));
  EXPECT_TRUE(out[0].shuffle);
  auto inst = expand_instances(out[0]);
  ASSERT_EQ(inst.size(), 2u);
  EXPECT_EQ(inst[0].prefix, (std::vector<TrackId>{0}));
  EXPECT_EQ(inst[0].label, 2u);
  EXPECT_EQ(inst[1].prefix, (std::vector<TrackId>{0, 2}));
  EXPECT_EQ(inst[1].label, 4u);
}

TEST(Preprocess, SingleTrackSessionDropped) {
  auto v = vocab_of({"a", "b"});
  std::vector<RawSession> s{raw("s", {"a", "q"}), raw("t", {"a", "b", "a"}, true, {false, true, true})};
  EXPECT_TRUE(preprocess(s, v).empty());
}

TEST(Preprocess, PlainSessionUnchanged) {
  auto v = vocab_of({"a", "b", "c"});
  std::vector<RawSession> s{raw("s", {"c", "a", "b"})};
  auto out = preprocess(s, v);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].tracks, (std::vector<TrackId>{2, 0, 1}));
  EXPECT_FALSE(out[0].shuffle);
  EXPECT_TRUE(out[0].skipped.empty());
}

TEST(Preprocess, MixedModeCountsAsShuffle) {
  auto v = vocab_of({"a", "b", "c"});
  RawSession s = raw("s", {"a", "b", "c"});
  s.events[2].shuffle = true;
  auto out = preprocess(std::vector<RawSession>{s}, v);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].shuffle);
}

TEST(Preprocess, OutOfVocabularyRemoved) {
  auto v = vocab_of({"a", "b"});
  auto out = preprocess(std::vector<RawSession>{raw("s", {"a", "zz", "b"})}, v);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].tracks, (std::vector<TrackId>{0, 1}));
}

TEST(Preprocess, KeepsMostRecentTracks) {
  std::vector<std::string> uris;
  for (int i = 0; i < 25; ++i) uris.push_back("t" + std::to_string(i));
  auto v = vocab_of(uris);
  auto out = preprocess(std::vector<RawSession>{raw("s", uris)}, v, 20);
  ASSERT_EQ(out[0].size(), 20u);
  EXPECT_EQ(out[0].tracks.front(), 5u);
  EXPECT_EQ(out[0].tracks.back(), 24u);
}

TEST(ExpandInstances, PlainSession) {
  Session s{"s", {0, 1, 2}, false, {}};
  auto inst = expand_instances(s);
  ASSERT_EQ(inst.size(), 2u);
  EXPECT_EQ(inst[0].prefix, (std::vector<TrackId>{0}));
  EXPECT_EQ(inst[0].label, 1u);
  EXPECT_EQ(inst[1].prefix, (std::vector<TrackId>{0, 1}));
  EXPECT_EQ(inst[1].label, 2u);
}

TEST(ExpandInstances, SkippedLabelOmitted) {
  Session s{"s", {0, 1, 2}, false, {false, true, false}};
  auto inst = expand_instances(s);
  ASSERT_EQ(inst.size(), 1u);
  EXPECT_EQ(inst[0].prefix, (std::vector<TrackId>{0, 1}));
  EXPECT_EQ(inst[0].label, 2u);
}

TEST(ExpandInstances, LengthNGivesNMinusOne) {
  for (std::size_t n = 2; n < 12; ++n) {
    Session s;
    for (std::size_t i = 0; i < n; ++i) s.tracks.push_back(static_cast<TrackId>(i));
    EXPECT_EQ(expand_instances(s).size(), n - 1);
  }
}

TEST(SplitByDay, AssignsByFirstDay) {
  std::vector<RawSession> s{raw("a", {"x"}, false, {}, 1), raw("b", {"x"}, false, {}, 4),
                            raw("c", {"x"}, false, {}, 5), raw("d", {"x"}, false, {}, 9)};
  s[0].events.push_back({"y", 2, false, false, 4});  // straddles into day 4
  SplitSpec spec{{1, 3}, {4, 4}, {5, 5}};
  auto out = split_by_day(s, spec);
  ASSERT_EQ(out.train.size(), 1u);
  EXPECT_EQ(out.train[0].id, "a");
  ASSERT_EQ(out.valid.size(), 1u);
  EXPECT_EQ(out.valid[0].id, "b");
  ASSERT_EQ(out.test.size(), 1u);
  EXPECT_EQ(out.test[0].id, "c");
}

TEST(SplitByDay, RangeErrors) {
  std::vector<RawSession> none;
  EXPECT_THROW(split_by_day(none, SplitSpec{{1, 3}, {4, 4}, {6, 5}}), config_error);
  EXPECT_THROW(split_by_day(none, SplitSpec{{1, 3}, {3, 4}, {5, 5}}), config_error);
  EXPECT_THROW(split_by_day(none, SplitSpec{{4, 4}, {1, 3}, {5, 5}}), config_error);
}

TEST(PrepareDataset, SplitsAreDisjointAndInVocabulary) {
  std::vector<RawSession> s;
  for (int i = 0; i < 30; ++i) {
    s.push_back(raw("s" + std::to_string(i), {"a", "b", "c", i % 2 ? "d" : "e", "rare" + std::to_string(i)}, i % 3 == 0,
                    {}, 1 + i % 5));
  }
  auto ds = prepare_dataset(s, SplitSpec{{1, 3}, {4, 4}, {5, 5}}, 2);
  std::set<std::string> ids;
  std::size_t total = 0;
  for (const auto* part : {&ds.sessions.train, &ds.sessions.valid, &ds.sessions.test}) {
    for (const auto& x : *part) {
      ids.insert(x.id);
      ++total;
      for (TrackId t : x.tracks) EXPECT_LT(t, ds.vocab.size());
    }
  }
  EXPECT_EQ(ids.size(), total);
  EXPECT_FALSE(ds.vocab.find("rare0"));
}

TEST(SessionFile, RoundTripWithSkips) {
  std::vector<Session> s{{"a", {3, 1, 2}, true, {}}, {"b", {0, 4}, false, {false, true}}};
  std::stringstream buf;
  write_sessions(buf, s);
  auto back = read_sessions(buf, 5);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].tracks, s[0].tracks);
  EXPECT_TRUE(back[0].shuffle);
  EXPECT_EQ(back[1].skipped, s[1].skipped);
}

TEST(SessionFile, TrackOutsideVocabulary) {
  std::istringstream in("a\t0\t1,9\n");
  EXPECT_THROW(read_sessions(in, 5), index_error);
}

TEST(VocabularyFile, RoundTrip) {
  auto v = vocab_of({"p", "q"});
  v.counts = {7, 9};
  std::stringstream buf;
  write_vocabulary(buf, v);
  auto back = read_vocabulary(buf);
  EXPECT_EQ(back.index_to_uri, v.index_to_uri);
  EXPECT_EQ(back.counts, v.counts);
  EXPECT_EQ(*back.find("q"), 1u);
}
