#pragma once

// Session log ingestion: TSV parsing, vocabulary filtering, preprocessing
// rules, prefix/label expansion and day-based splits.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "muse/common.hpp"

namespace muse {

struct PlayEvent {
  std::string track_uri;
  int position = 1;  // 1-based within the session
  bool skipped = false;
  bool shuffle = false;
  int day = 0;
};

/// Events of one session id, ordered by position.
struct RawSession {
  std::string id;
  std::vector<PlayEvent> events;

  int first_day() const { return events.empty() ? 0 : events.front().day; }
};

struct Vocabulary {
  std::unordered_map<std::string, TrackId> uri_to_index;
  std::vector<std::string> index_to_uri;
  std::vector<std::uint64_t> counts;

  std::size_t size() const { return index_to_uri.size(); }

  std::optional<TrackId> find(std::string_view uri) const {
    auto it = uri_to_index.find(std::string(uri));
    if (it == uri_to_index.end()) return std::nullopt;
    return it->second;
  }

  TrackId add(const std::string& uri, std::uint64_t count) {
    auto id = static_cast<TrackId>(index_to_uri.size());
    uri_to_index.emplace(uri, id);
    index_to_uri.push_back(uri);
    counts.push_back(count);
    return id;
  }
};

struct Session {
  std::string id;
  std::vector<TrackId> tracks;
  bool shuffle = false;
  /// Per-position skip flags; empty means nothing was skipped.
  std::vector<bool> skipped;

  std::size_t size() const { return tracks.size(); }
  bool is_skipped(std::size_t pos) const { return !skipped.empty() && skipped[pos]; }
};

struct TrainingInstance {
  std::vector<TrackId> prefix;
  TrackId label = 0;
  bool shuffle = false;
  std::string session_id;
};

/// Inclusive range of day ordinals.
struct DayRange {
  int first = 0;
  int last = -1;

  bool contains(int day) const { return day >= first && day <= last; }
  bool empty() const { return last < first; }
};

struct SplitSpec {
  DayRange train, valid, test;

  void validate() const {
    if (train.empty()) throw config_error("training day range is empty");
    if (valid.empty()) throw config_error("validation day range is empty");
    if (test.empty()) throw config_error("test day range is empty");
    if (!(train.last < valid.first && valid.last < test.first)) {
      throw config_error("day ranges must be disjoint and ordered train < valid < test");
    }
  }
};

template <typename T>
struct Splits {
  std::vector<T> train, valid, test;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

inline std::optional<bool> parse_flag(std::string_view s) {
  if (s == "0") return false;
  if (s == "1") return true;
  return std::nullopt;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::string line_error(std::size_t line_no, std::string_view what) {
  return "line " + std::to_string(line_no) + ": " + std::string(what);
}

}  // namespace detail

/// Parses the session log TSV. Columns are
/// `session_id position track_uri skipped shuffle day [premium]`; the header
/// row is required. Sessions come back in first-appearance order of their id,
/// events sorted by position. Sessions with any non-premium row are dropped.
inline std::vector<RawSession> parse_log(std::istream& in) {
  static constexpr std::string_view kColumns[] = {"session_id", "position", "track_uri", "skipped",
                                                  "shuffle",    "day",      "premium"};
  std::vector<RawSession> sessions;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<bool> non_premium;

  std::string line;
  std::size_t line_no = 0;
  std::size_t n_columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, '\t');
    if (n_columns == 0) {
      if (fields.size() != 6 && fields.size() != 7) {
        throw parse_error(detail::line_error(line_no, "header must have 6 or 7 columns"));
      }
      for (std::size_t c = 0; c < fields.size(); ++c) {
        if (fields[c] != kColumns[c]) {
          throw parse_error(detail::line_error(line_no, "unexpected header column '" +
                                                            std::string(fields[c]) + "'"));
        }
      }
      n_columns = fields.size();
      continue;
    }
    if (fields.size() != n_columns) {
      throw parse_error(detail::line_error(line_no, "expected " + std::to_string(n_columns) +
                                                        " fields, got " +
                                                        std::to_string(fields.size())));
    }
    PlayEvent ev;
    auto position = detail::parse_int<int>(fields[1]);
    if (!position || *position < 1) {
      throw parse_error(detail::line_error(line_no, "position must be a positive integer"));
    }
    ev.position = *position;
    if (fields[2].empty()) throw parse_error(detail::line_error(line_no, "empty track_uri"));
    ev.track_uri = std::string(fields[2]);
    auto skipped = detail::parse_flag(fields[3]);
    auto shuffle = detail::parse_flag(fields[4]);
    auto day = detail::parse_int<int>(fields[5]);
    if (!skipped) throw parse_error(detail::line_error(line_no, "skipped must be 0 or 1"));
    if (!shuffle) throw parse_error(detail::line_error(line_no, "shuffle must be 0 or 1"));
    if (!day) throw parse_error(detail::line_error(line_no, "day must be an integer"));
    ev.skipped = *skipped;
    ev.shuffle = *shuffle;
    ev.day = *day;
    bool premium = true;
    if (n_columns == 7) {
      auto flag = detail::parse_flag(fields[6]);
      if (!flag) throw parse_error(detail::line_error(line_no, "premium must be 0 or 1"));
      premium = *flag;
    }

    std::string id(fields[0]);
    auto [it, inserted] = index.emplace(id, sessions.size());
    if (inserted) {
      sessions.push_back(RawSession{id, {}});
      non_premium.push_back(false);
    }
    sessions[it->second].events.push_back(std::move(ev));
    if (!premium) non_premium[it->second] = true;
  }
  if (n_columns == 0 && line_no > 0) {
    // only blank lines
    return {};
  }

  std::vector<RawSession> out;
  out.reserve(sessions.size());
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    auto& events = sessions[s].events;
    std::stable_sort(events.begin(), events.end(),
                     [](const PlayEvent& a, const PlayEvent& b) { return a.position < b.position; });
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i].position != static_cast<int>(i) + 1) {
        throw validation_error("session " + sessions[s].id +
                               ": positions are not consecutive from 1");
      }
    }
    if (!non_premium[s]) out.push_back(std::move(sessions[s]));
  }
  return out;
}

/// Writes sessions in the log format read by parse_log, with every row
/// marked premium.
inline void write_log(std::ostream& out, std::span<const RawSession> sessions) {
  out << "session_id\tposition\ttrack_uri\tskipped\tshuffle\tday\tpremium\n";
  for (const auto& s : sessions) {
    for (const auto& e : s.events) {
      out << s.id << '\t' << e.position << '\t' << e.track_uri << '\t' << (e.skipped ? 1 : 0) << '\t'
          << (e.shuffle ? 1 : 0) << '\t' << e.day << "\t1\n";
    }
  }
}

/// Tracks seen at least `min_count` times in the given sessions, indexed in
/// first-appearance order.
inline Vocabulary build_vocabulary(std::span<const RawSession> sessions, std::uint64_t min_count) {
  if (min_count < 1) throw config_error("min_count must be at least 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  std::vector<const std::string*> order;
  for (const auto& s : sessions) {
    for (const auto& ev : s.events) {
      auto [it, inserted] = counts.emplace(ev.track_uri, 0);
      if (inserted) order.push_back(&it->first);
      ++it->second;
    }
  }
  Vocabulary vocab;
  for (const std::string* uri : order) {
    std::uint64_t c = counts.at(*uri);
    if (c >= min_count) vocab.add(*uri, c);
  }
  return vocab;
}

/// Applies the session filters: out-of-vocabulary tracks removed, skipped
/// tracks removed from shuffle sessions, mixed-mode sessions treated as
/// shuffle, sessions shorter than 2 dropped, long sessions truncated to
/// their most recent `max_len` tracks.
inline std::vector<Session> preprocess(std::span<const RawSession> raw, const Vocabulary& vocab,
                                       std::size_t max_len = kMaxLen) {
  std::vector<Session> out;
  for (const auto& rs : raw) {
    Session s;
    s.id = rs.id;
    s.shuffle = std::any_of(rs.events.begin(), rs.events.end(),
                            [](const PlayEvent& e) { return e.shuffle; });
    bool any_skip = false;
    for (const auto& ev : rs.events) {
      if (s.shuffle && ev.skipped) continue;
      auto id = vocab.find(ev.track_uri);
      if (!id) continue;
      s.tracks.push_back(*id);
      s.skipped.push_back(ev.skipped);
      any_skip = any_skip || ev.skipped;
    }
    if (s.tracks.size() < 2) continue;
    if (s.tracks.size() > max_len) {
      auto drop = static_cast<std::ptrdiff_t>(s.tracks.size() - max_len);
      s.tracks.erase(s.tracks.begin(), s.tracks.begin() + drop);
      s.skipped.erase(s.skipped.begin(), s.skipped.begin() + drop);
      any_skip = std::find(s.skipped.begin(), s.skipped.end(), true) != s.skipped.end();
    }
    if (!any_skip) s.skipped.clear();
    out.push_back(std::move(s));
  }
  return out;
}

/// Prefix/label pairs ([x1], x2), ..., ([x1..x_{n-1}], x_n), omitting
/// instances whose label the user skipped.
inline std::vector<TrainingInstance> expand_instances(const Session& s) {
  std::vector<TrainingInstance> out;
  if (s.size() < 2) return out;
  out.reserve(s.size() - 1);
  for (std::size_t t = 1; t < s.size(); ++t) {
    if (s.is_skipped(t)) continue;
    TrainingInstance inst;
    inst.prefix.assign(s.tracks.begin(), s.tracks.begin() + static_cast<std::ptrdiff_t>(t));
    inst.label = s.tracks[t];
    inst.shuffle = s.shuffle;
    inst.session_id = s.id;
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::vector<TrainingInstance> expand_instances(std::span<const Session> sessions) {
  std::vector<TrainingInstance> out;
  for (const auto& s : sessions) {
    auto part = expand_instances(s);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

/// Assigns each session to a split by the day of its first event; sessions
/// outside every range are dropped.
inline Splits<RawSession> split_by_day(std::span<const RawSession> sessions, const SplitSpec& spec) {
  spec.validate();
  Splits<RawSession> out;
  for (const auto& s : sessions) {
    if (s.events.empty()) continue;
    int day = s.first_day();
    if (spec.train.contains(day)) {
      out.train.push_back(s);
    } else if (spec.valid.contains(day)) {
      out.valid.push_back(s);
    } else if (spec.test.contains(day)) {
      out.test.push_back(s);
    }
  }
  return out;
}

/// Training vocabulary plus preprocessed sessions of every split.
struct Dataset {
  Vocabulary vocab;
  Splits<Session> sessions;
};

/// split_by_day, then a training-only vocabulary applied to all three splits.
inline Dataset prepare_dataset(std::span<const RawSession> raw, const SplitSpec& spec,
                               std::uint64_t min_count = 5, std::size_t max_len = kMaxLen) {
  auto splits = split_by_day(raw, spec);
  Dataset ds;
  ds.vocab = build_vocabulary(splits.train, min_count);
  ds.sessions.train = preprocess(splits.train, ds.vocab, max_len);
  ds.sessions.valid = preprocess(splits.valid, ds.vocab, max_len);
  ds.sessions.test = preprocess(splits.test, ds.vocab, max_len);
  return ds;
}

// ---------------------------------------------------------------------------
// File formats

/// One session per line: `id<TAB>shuffle<TAB>t0,t1,...`, plus an optional
/// fourth column of per-track skip flags when any track was skipped.
inline void write_sessions(std::ostream& out, std::span<const Session> sessions) {
  for (const auto& s : sessions) {
    out << s.id << '\t' << (s.shuffle ? 1 : 0) << '\t';
    for (std::size_t i = 0; i < s.tracks.size(); ++i) {
      if (i) out << ',';
      out << s.tracks[i];
    }
    if (!s.skipped.empty()) {
      out << '\t';
      for (std::size_t i = 0; i < s.skipped.size(); ++i) {
        if (i) out << ',';
        out << (s.skipped[i] ? 1 : 0);
      }
    }
    out << '\n';
  }
}

/// Reads a session file. When `vocab_size` is given, every id must be below it.
inline std::vector<Session> read_sessions(std::istream& in,
                                          std::optional<std::size_t> vocab_size = std::nullopt) {
  std::vector<Session> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, '\t');
    if (fields.size() != 3 && fields.size() != 4) {
      throw parse_error(detail::line_error(line_no, "session line needs 3 or 4 fields"));
    }
    Session s;
    s.id = std::string(fields[0]);
    auto shuffle = detail::parse_flag(fields[1]);
    if (!shuffle) throw parse_error(detail::line_error(line_no, "shuffle must be 0 or 1"));
    s.shuffle = *shuffle;
    for (auto tok : detail::split_fields(fields[2], ',')) {
      auto id = detail::parse_int<TrackId>(tok);
      if (!id) throw parse_error(detail::line_error(line_no, "bad track id '" + std::string(tok) + "'"));
      if (vocab_size && *id >= *vocab_size) {
        throw index_error(detail::line_error(line_no, "track id " + std::to_string(*id) +
                                                          " outside vocabulary"));
      }
      s.tracks.push_back(*id);
    }
    if (fields.size() == 4) {
      for (auto tok : detail::split_fields(fields[3], ',')) {
        auto flag = detail::parse_flag(tok);
        if (!flag) throw parse_error(detail::line_error(line_no, "skip flags must be 0 or 1"));
        s.skipped.push_back(*flag);
      }
      if (s.skipped.size() != s.tracks.size()) {
        throw parse_error(detail::line_error(line_no, "skip flag count differs from track count"));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// `index<TAB>track_uri<TAB>count`, one track per line.
inline void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << i << '\t' << vocab.index_to_uri[i] << '\t' << vocab.counts[i] << '\n';
  }
}

inline Vocabulary read_vocabulary(std::istream& in) {
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, '\t');
    if (fields.size() != 3) throw parse_error(detail::line_error(line_no, "vocabulary line needs 3 fields"));
    auto index = detail::parse_int<std::size_t>(fields[0]);
    auto count = detail::parse_int<std::uint64_t>(fields[2]);
    if (!index || !count) throw parse_error(detail::line_error(line_no, "bad index or count"));
    if (*index != vocab.size()) {
      throw validation_error(detail::line_error(line_no, "vocabulary indices must be dense and ordered"));
    }
    std::string uri(fields[1]);
    if (vocab.find(uri)) throw validation_error(detail::line_error(line_no, "duplicate track_uri " + uri));
    vocab.add(uri, *count);
  }
  return vocab;
}

}  // namespace muse
