#pragma once

// Synthetic listening logs drawn from a clustered Markov chain over tracks.

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "muse/common.hpp"
#include "muse/corpus.hpp"
#include "muse/random.hpp"

namespace muse {

struct SynthConfig {
  std::size_t n_tracks = 2000;
  std::size_t n_clusters = 20;
  std::size_t n_sessions = 20000;
  std::pair<std::size_t, std::size_t> session_len_range{5, 15};  // inclusive
  double shuffle_fraction = 0.4;
  double skip_prob_shuffle = 0.3;
  double within_cluster_prob = 0.9;
  double preferred_share = 0.8;  // of the within-cluster mass
  std::size_t n_preferred = 4;
  int n_days = 5;
  std::uint64_t seed = 0;

  std::size_t cluster_size() const { return n_tracks / n_clusters; }

  void validate() const {
    if (n_clusters == 0 || n_tracks % n_clusters != 0) {
      throw config_error("n_clusters must divide n_tracks evenly");
    }
    if (cluster_size() < 2) throw config_error("clusters need at least two tracks");
    auto [lo, hi] = session_len_range;
    if (lo < 1 || lo > hi) throw config_error("session_len_range must satisfy 1 <= min <= max");
    auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!unit(shuffle_fraction)) throw config_error("shuffle_fraction must lie in [0, 1]");
    if (!unit(skip_prob_shuffle)) throw config_error("skip_prob_shuffle must lie in [0, 1]");
    if (!unit(within_cluster_prob)) throw config_error("within_cluster_prob must lie in [0, 1]");
    if (!unit(preferred_share)) throw config_error("preferred_share must lie in [0, 1]");
    if (n_days < 1) throw config_error("n_days must be at least 1");
  }
};

/// Ground-truth chain. Tracks are assigned to clusters in contiguous blocks.
/// From track i, mass `within` stays in i's cluster: a `preferred_share`
/// part goes to i's preferred successors with halving weights and the rest
/// is uniform over the other cluster members. The remaining 1 - `within`
/// is uniform over all tracks of other clusters. No self transitions.
class Catalog {
 public:
  Catalog() = default;
  Catalog(std::size_t n_tracks, std::size_t n_clusters, double within, double preferred_share,
          std::vector<std::vector<TrackId>> preferred)
      : n_tracks_(n_tracks), n_clusters_(n_clusters), within_(n_clusters == 1 ? 1.0 : within),
        preferred_(std::move(preferred)) {
    weights_.resize(n_tracks_);
    for (std::size_t i = 0; i < n_tracks_; ++i) {
      double w = 1.0, total = 0.0;
      for (std::size_t k = 0; k < preferred_[i].size(); ++k, w *= 0.5) {
        weights_[i].push_back(w);
        total += w;
      }
      for (double& x : weights_[i]) x /= total;
    }
    share_.assign(n_tracks_, preferred_share);
    for (std::size_t i = 0; i < n_tracks_; ++i) {
      if (preferred_[i].empty()) share_[i] = 0.0;
    }
  }

  std::size_t n_tracks() const { return n_tracks_; }
  std::size_t n_clusters() const { return n_clusters_; }
  std::size_t cluster_size() const { return n_tracks_ / n_clusters_; }
  std::size_t cluster_of(TrackId t) const { return t / cluster_size(); }
  TrackId cluster_begin(std::size_t c) const { return static_cast<TrackId>(c * cluster_size()); }
  const std::vector<TrackId>& preferred(TrackId t) const { return preferred_[t]; }

  double probability(TrackId from, TrackId to) const {
    if (from == to) return 0.0;
    const std::size_t cs = cluster_size();
    if (cluster_of(from) != cluster_of(to)) return (1.0 - within_) / static_cast<double>(n_tracks_ - cs);
    double p = within_ * (1.0 - share_[from]) / static_cast<double>(cs - 1);
    const auto& pref = preferred_[from];
    for (std::size_t k = 0; k < pref.size(); ++k) {
      if (pref[k] == to) p += within_ * share_[from] * weights_[from][k];
    }
    return p;
  }

  std::vector<double> row(TrackId from) const {
    std::vector<double> r(n_tracks_);
    for (std::size_t j = 0; j < n_tracks_; ++j) r[j] = probability(from, static_cast<TrackId>(j));
    return r;
  }

  TrackId step(TrackId from, Rng& rng) const {
    const std::size_t cs = cluster_size();
    const TrackId begin = cluster_begin(cluster_of(from));
    if (rng.uniform() < within_) {
      if (rng.uniform() < share_[from]) {
        const double u = rng.uniform();
        double acc = 0.0;
        const auto& w = weights_[from];
        for (std::size_t k = 0; k < w.size(); ++k) {
          acc += w[k];
          if (u < acc) return preferred_[from][k];
        }
        return preferred_[from].back();
      }
      auto j = static_cast<TrackId>(begin + rng.uniform_int(cs - 1));
      return j >= from ? j + 1 : j;
    }
    auto j = static_cast<TrackId>(rng.uniform_int(n_tracks_ - cs));
    return j < begin ? j : static_cast<TrackId>(j + cs);
  }

 private:
  std::size_t n_tracks_ = 0, n_clusters_ = 1;
  double within_ = 1.0;
  std::vector<double> share_;
  std::vector<std::vector<TrackId>> preferred_;
  std::vector<std::vector<double>> weights_;
};

inline Catalog generate_catalog(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t cs = cfg.cluster_size();
  const std::size_t k = std::min(cfg.n_preferred, cs - 1);
  std::vector<std::vector<TrackId>> preferred(cfg.n_tracks);
  for (std::size_t t = 0; t < cfg.n_tracks; ++t) {
    const std::size_t begin = (t / cs) * cs;
    auto picks = sample_without_replacement(cs - 1, k, rng);
    rng.shuffle(picks);  // order sets the weight rank
    for (std::size_t p : picks) {
      std::size_t j = begin + p;
      if (j >= t) ++j;
      preferred[t].push_back(static_cast<TrackId>(j));
    }
  }
  return Catalog(cfg.n_tracks, cfg.n_clusters, cfg.within_cluster_prob, cfg.preferred_share, std::move(preferred));
}

inline std::string synth_track_uri(TrackId t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "t%06u", static_cast<unsigned>(t));
  return buf;
}

/// Each session picks a cluster. Non-shuffle sessions walk the chain from a
/// random member with no skips; shuffle sessions are distinct cluster
/// members in random order, each skipped with probability
/// `skip_prob_shuffle`. Session i draws from its own stream, so the output
/// does not depend on generation order.
inline std::vector<RawSession> generate_sessions(const Catalog& catalog, const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t cs = catalog.cluster_size();
  std::vector<RawSession> out(cfg.n_sessions);
  for (std::size_t i = 0; i < cfg.n_sessions; ++i) {
    Rng rng = Rng::derive(cfg.seed, 1, i);
    char id[24];
    std::snprintf(id, sizeof id, "s%07zu", i);
    RawSession& s = out[i];
    s.id = id;
    const std::size_t cluster = rng.uniform_int(catalog.n_clusters());
    const auto [lo, hi] = cfg.session_len_range;
    const std::size_t len = lo + rng.uniform_int(hi - lo + 1);
    const bool shuffle = rng.bernoulli(cfg.shuffle_fraction);
    const int day = 1 + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(cfg.n_days)));
    const TrackId begin = catalog.cluster_begin(cluster);

    std::vector<TrackId> tracks;
    std::vector<bool> skipped;
    if (shuffle) {
      auto picks = sample_without_replacement(cs, std::min(len, cs), rng);
      rng.shuffle(picks);
      for (std::size_t p : picks) {
        tracks.push_back(static_cast<TrackId>(begin + p));
        skipped.push_back(rng.bernoulli(cfg.skip_prob_shuffle));
      }
    } else {
      TrackId t = static_cast<TrackId>(begin + rng.uniform_int(cs));
      for (std::size_t n = 0; n < len; ++n) {
        tracks.push_back(t);
        skipped.push_back(false);
        t = catalog.step(t, rng);
      }
    }
    for (std::size_t n = 0; n < tracks.size(); ++n) {
      s.events.push_back(PlayEvent{synth_track_uri(tracks[n]), static_cast<int>(n) + 1, skipped[n], shuffle, day});
    }
  }
  return out;
}

/// Catalog and sessions from the config seed.
inline std::pair<Catalog, std::vector<RawSession>> synthesize(const SynthConfig& cfg) {
  Rng rng = Rng::derive(cfg.seed, 0, 0);
  Catalog catalog = generate_catalog(cfg, rng);
  auto sessions = generate_sessions(catalog, cfg);
  return {std::move(catalog), std::move(sessions)};
}

/// Day split for synthetic logs: the last day is test, the one before it
/// validation, everything earlier training.
inline SplitSpec synth_split(int n_days) {
  if (n_days < 3) throw config_error("a synthetic day split needs at least three days");
  return SplitSpec{{1, n_days - 2}, {n_days - 1, n_days - 1}, {n_days, n_days}};
}

}  // namespace muse
