#pragma once

// Command-line front end: synth, ingest, stats, augment, train, evaluate.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "muse/muse.hpp"

namespace muse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Missing or unreadable input; reported as a data error.
class input_error : public error {
 public:
  using error::error;
};

namespace detail {

inline std::ifstream open_input(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw input_error("cannot open input file: " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw input_error("cannot open output file: " + path);
  return out;
}

inline DayRange parse_day_range(const std::string& text) {
  auto dash = text.find('-', 1);
  auto first = muse::detail::parse_int<int>(text.substr(0, dash));
  auto last = dash == std::string::npos ? first : muse::detail::parse_int<int>(text.substr(dash + 1));
  if (!first || !last) throw config_error("bad day range '" + text + "' (expected A-B or A)");
  return {*first, *last};
}

inline std::vector<Session> load_sessions(const std::string& path, std::optional<std::size_t> vocab_size = {}) {
  auto in = open_input(path);
  return read_sessions(in, vocab_size);
}

inline Vocabulary load_vocabulary(const std::string& path) {
  auto in = open_input(path);
  return read_vocabulary(in);
}

struct Segments {
  std::vector<Session> all, shuffle, non_shuffle;
};

inline Segments segment(std::vector<Session> sessions) {
  Segments s;
  for (const auto& x : sessions) (x.shuffle ? s.shuffle : s.non_shuffle).push_back(x);
  s.all = std::move(sessions);
  return s;
}

}  // namespace detail

/// Runs one command line. Returns 0 on success, 1 on a usage error and 2 on
/// a data or validation error; messages go to `err`.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Session-based next-track recommendation with shuffle-aware augmentation", "muse"};
  app.require_subcommand(1);
  unsigned threads = 1;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--threads", threads, "Upper bound on worker threads")->check(CLI::PositiveNumber);
  };

  // synth
  SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic session log");
  synth->add_option("--out", synth_out, "Output log TSV")->required();
  synth->add_option("--n-tracks", synth_cfg.n_tracks, "Catalog size");
  synth->add_option("--n-clusters", synth_cfg.n_clusters, "Number of track clusters");
  synth->add_option("--n-sessions", synth_cfg.n_sessions, "Number of sessions");
  synth->add_option("--min-len", synth_cfg.session_len_range.first, "Shortest session");
  synth->add_option("--max-len", synth_cfg.session_len_range.second, "Longest session");
  synth->add_option("--shuffle-fraction", synth_cfg.shuffle_fraction, "Share of shuffle sessions");
  synth->add_option("--skip-prob-shuffle", synth_cfg.skip_prob_shuffle, "Skip probability in shuffle sessions");
  synth->add_option("--within-cluster-prob", synth_cfg.within_cluster_prob, "Probability of staying in the cluster");
  synth->add_option("--preferred-share", synth_cfg.preferred_share, "Within-cluster mass on preferred successors");
  synth->add_option("--n-preferred", synth_cfg.n_preferred, "Preferred successors per track");
  synth->add_option("--n-days", synth_cfg.n_days, "Number of day ordinals");
  common(synth);

  // ingest
  std::string ingest_log, ingest_dir;
  std::uint64_t min_count = 5;
  std::size_t max_len = kMaxLen;
  std::string train_days = "1-3", valid_days = "4", test_days = "5";
  auto* ingest = app.add_subcommand("ingest", "Preprocess a log into vocabulary and day-split session files");
  ingest->add_option("--log", ingest_log, "Input log TSV")->required();
  ingest->add_option("--out-dir", ingest_dir, "Output directory")->required();
  ingest->add_option("--min-count", min_count, "Minimum training occurrences per track");
  ingest->add_option("--max-len", max_len, "Keep at most this many trailing tracks");
  ingest->add_option("--train-days", train_days, "Training days, A-B");
  ingest->add_option("--valid-days", valid_days, "Validation days, A-B");
  ingest->add_option("--test-days", test_days, "Test days, A-B");
  common(ingest);

  // stats
  std::string stats_sessions;
  auto* stats = app.add_subcommand("stats", "Session counts and unique-transition rates per segment");
  stats->add_option("--sessions", stats_sessions, "Session file")->required();
  common(stats);

  // augment
  std::string aug_sessions, aug_train, aug_out;
  double aug_gamma = 0.5;
  std::size_t aug_max_len = kMaxLen;
  std::string aug_log_mode = "log1p";
  auto* augment = app.add_subcommand("augment", "Write one augmented view of every session");
  augment->add_option("--sessions", aug_sessions, "Sessions to augment")->required();
  augment->add_option("--train", aug_train, "Sessions for the transition tables (default: --sessions)");
  augment->add_option("--out", aug_out, "Output session file")->required();
  augment->add_option("--gamma", aug_gamma, "Reordered share of non-shuffle sessions");
  augment->add_option("--log-mode", aug_log_mode, "log1p or log_nonzero");
  augment->add_option("--max-len", aug_max_len, "Length cap for transition insertion");
  common(augment);

  // train
  std::string train_config, train_data, train_out, train_log;
  std::vector<std::string> train_set;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint and training log");
  train->add_option("--config", train_config, "key = value configuration file");
  train->add_option("--data", train_data, "Directory written by ingest")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--log", train_log, "Training log CSV (default: checkpoint path + .csv)");
  train->add_option("--set", train_set, "Override a setting, key=value");
  std::optional<std::size_t> epochs_flag;
  train->add_option("--epochs", epochs_flag, "Number of epochs");
  common(train);

  // evaluate
  std::string eval_model, eval_sessions, eval_out, eval_baseline, eval_train;
  std::vector<std::size_t> eval_ks{5, 10};
  bool eval_table = false;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score next-track predictions on a session file");
  evaluate_cmd->add_option("--model", eval_model, "Checkpoint");
  evaluate_cmd->add_option("--sessions", eval_sessions, "Session file to evaluate")->required();
  evaluate_cmd->add_option("--k", eval_ks, "Cutoffs")->delimiter(',');
  evaluate_cmd->add_option("--out", eval_out, "Write the CSV report here instead of standard output");
  evaluate_cmd->add_option("--baseline", eval_baseline, "Score with a baseline instead of a model: popularity")
      ->check(CLI::IsMember({"popularity"}));
  evaluate_cmd->add_option("--train", eval_train, "Training sessions for the popularity baseline");
  evaluate_cmd->add_flag("--table", eval_table, "Print an aligned table instead of CSV");
  common(evaluate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      synth_cfg.seed = seed;
      auto [catalog, sessions] = synthesize(synth_cfg);
      auto o = detail::open_output(synth_out);
      write_log(o, sessions);
      out << "wrote " << sessions.size() << " sessions to " << synth_out << '\n';
    } else if (ingest->parsed()) {
      SplitSpec spec{detail::parse_day_range(train_days), detail::parse_day_range(valid_days),
                     detail::parse_day_range(test_days)};
      auto in = detail::open_input(ingest_log);
      auto raw = parse_log(in);
      auto ds = prepare_dataset(raw, spec, min_count, max_len);
      std::filesystem::create_directories(ingest_dir);
      const std::filesystem::path dir(ingest_dir);
      {
        auto o = detail::open_output((dir / "vocab.tsv").string());
        write_vocabulary(o, ds.vocab);
      }
      const std::pair<const char*, const std::vector<Session>*> files[] = {
          {"train.tsv", &ds.sessions.train}, {"valid.tsv", &ds.sessions.valid}, {"test.tsv", &ds.sessions.test}};
      for (const auto& [name, sessions] : files) {
        auto o = detail::open_output((dir / name).string());
        write_sessions(o, *sessions);
      }
      {
        auto o = detail::open_output((dir / "counts.tsv").string());
        write_counts(o, build_counts(ds.sessions.train, ds.vocab.size()));
      }
      out << "vocabulary " << ds.vocab.size() << ", sessions train " << ds.sessions.train.size() << " valid "
          << ds.sessions.valid.size() << " test " << ds.sessions.test.size() << '\n';
    } else if (stats->parsed()) {
      auto seg = detail::segment(detail::load_sessions(stats_sessions));
      out << "segment,sessions,share,unique_transition_rate\n" << std::setprecision(10);
      const std::pair<const char*, const std::vector<Session>*> rows[] = {
          {"all", &seg.all}, {"shuffle", &seg.shuffle}, {"non_shuffle", &seg.non_shuffle}};
      for (const auto& [name, s] : rows) {
        out << name << ',' << s->size() << ',';
        if (!seg.all.empty()) out << static_cast<double>(s->size()) / static_cast<double>(seg.all.size());
        out << ',';
        if (!s->empty()) out << unique_transition_rate(*s);
        out << '\n';
      }
    } else if (augment->parsed()) {
      auto sessions = detail::load_sessions(aug_sessions);
      auto source = aug_train.empty() ? sessions : detail::load_sessions(aug_train);
      std::size_t dim = 0;
      for (const auto* set : {&sessions, &source}) {
        for (const auto& s : *set) {
          for (TrackId t : s.tracks) dim = std::max<std::size_t>(dim, std::size_t{t} + 1);
        }
      }
      auto tr = build_transitions(source, dim, parse_log_mode(aug_log_mode));
      std::vector<Session> augmented;
      augmented.reserve(sessions.size());
      for (std::size_t i = 0; i < sessions.size(); ++i) {
        // one stream per session id, independent of file order
        Rng rng = Rng::derive(seed, hash_string(sessions[i].id));
        augmented.push_back(sessions[i].shuffle ? transition_augment(sessions[i], tr, rng, aug_max_len)
                                                : reorder_augment(sessions[i], aug_gamma, rng));
      }
      auto o = detail::open_output(aug_out);
      write_sessions(o, augmented);
    } else if (train->parsed()) {
      TrainConfig cfg;
      if (!train_config.empty()) {
        auto in = detail::open_input(train_config);
        cfg = read_train_config(in);
      }
      if (train->count("--seed") > 0) cfg.seed = seed;
      if (train->count("--threads") > 0) cfg.threads = threads;
      if (epochs_flag) cfg.epochs = *epochs_flag;
      for (const auto& kv : train_set) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      cfg.validate();
      const std::filesystem::path dir(train_data);
      auto vocab = detail::load_vocabulary((dir / "vocab.tsv").string());
      auto train_sessions = detail::load_sessions((dir / "train.tsv").string(), vocab.size());
      auto valid_sessions = detail::load_sessions((dir / "valid.tsv").string(), vocab.size());
      auto tr = build_transitions(train_sessions, vocab.size(), cfg.log_mode);
      auto train_instances = expand_instances(train_sessions);
      auto valid_instances = expand_instances(valid_sessions);
      auto result = fit(train_instances, valid_instances, tr, vocab.size(), cfg, [&](const EpochRecord& e) {
        err << "epoch " << e.epoch << " loss " << e.loss.total << " valid MRR@5 " << e.valid_mrr5 << '\n';
      });
      {
        auto o = detail::open_output(train_out, true);
        save_checkpoint(o, result.best);
      }
      auto log = detail::open_output(train_log.empty() ? train_out + ".csv" : train_log);
      write_training_log(log, result.report);
      out << "best epoch " << result.report.best_epoch << ", checkpoint " << train_out << '\n';
    } else if (evaluate_cmd->parsed()) {
      if (eval_model.empty() == eval_baseline.empty()) {
        throw config_error("evaluate needs exactly one of --model or --baseline");
      }
      MetricsReport report;
      if (!eval_model.empty()) {
        auto in = detail::open_input(eval_model, true);
        auto params = load_checkpoint(in);
        auto sessions = detail::load_sessions(eval_sessions, params.vocab_size());
        report = evaluate(params, expand_instances(sessions), eval_ks, threads);
      } else {
        if (eval_train.empty()) throw config_error("--baseline popularity needs --train");
        auto train_sessions = detail::load_sessions(eval_train);
        auto sessions = detail::load_sessions(eval_sessions);
        std::size_t dim = 0;
        for (const auto* set : {&train_sessions, &sessions}) {
          for (const auto& s : *set) {
            for (TrackId t : s.tracks) dim = std::max<std::size_t>(dim, std::size_t{t} + 1);
          }
        }
        auto scorer = popularity_baseline(expand_instances(train_sessions), dim);
        report = evaluate(scorer, expand_instances(sessions), eval_ks, threads);
      }
      std::ostringstream buf;
      if (eval_table) {
        write_report_table(buf, report);
      } else {
        write_report_csv(buf, report);
      }
      if (eval_out.empty()) {
        out << buf.str();
      } else {
        auto o = detail::open_output(eval_out);
        o << buf.str();
      }
    }
  } catch (const config_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace muse::cli
