#pragma once

// Dual-view self-supervised training loop.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "muse/augment.hpp"
#include "muse/autograd.hpp"
#include "muse/common.hpp"
#include "muse/corpus.hpp"
#include "muse/encoder.hpp"
#include "muse/eval.hpp"
#include "muse/losses.hpp"
#include "muse/model.hpp"
#include "muse/random.hpp"
#include "muse/transitions.hpp"

namespace muse {

enum class OptimizerKind { sgd, adam };

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw config_error("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = 100;
  std::size_t max_len = kMaxLen;
  LossConfig loss;
  double gamma = 0.5;
  bool augment_shuffle = true;
  bool augment_nonshuffle = true;
  LogMode log_mode = LogMode::log1p;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  double clip_norm = 5.0;  // <= 0 disables clipping
  unsigned threads = 1;    // evaluation only

  void validate() const {
    if (batch_size < 1) throw config_error("batch_size must be at least 1");
    if (!(learning_rate >= 0.0)) throw config_error("learning_rate must be nonnegative");
    if (hidden_dim < 1) throw config_error("hidden_dim must be at least 1");
    if (max_len < 2) throw config_error("max_len must be at least 2");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw config_error("gamma must lie in (0, 1]");
    if (momentum < 0.0 || momentum >= 1.0) throw config_error("momentum must lie in [0, 1)");
    loss.validate();
  }
};

/// Applies `key = value` settings onto a config. Unknown keys are errors.
inline void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto as_size = [&]() -> std::size_t {
    auto v = detail::parse_int<std::size_t>(value);
    if (!v) throw config_error("setting " + key + " expects a nonnegative integer, got '" + value + "'");
    return *v;
  };
  auto as_double = [&]() -> double {
    try {
      std::size_t used = 0;
      double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw config_error("setting " + key + " expects a number, got '" + value + "'");
    }
  };
  auto as_bool = [&]() -> bool {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw config_error("setting " + key + " expects true/false, got '" + value + "'");
  };
  if (key == "epochs") cfg.epochs = as_size();
  else if (key == "batch_size") cfg.batch_size = as_size();
  else if (key == "learning_rate") cfg.learning_rate = as_double();
  else if (key == "seed") cfg.seed = as_size();
  else if (key == "hidden_dim") cfg.hidden_dim = as_size();
  else if (key == "max_len") cfg.max_len = as_size();
  else if (key == "alpha") cfg.loss.alpha = as_double();
  else if (key == "lambda") cfg.loss.lambda = as_double();
  else if (key == "mu") cfg.loss.mu = as_double();
  else if (key == "nu") cfg.loss.nu = as_double();
  else if (key == "kappa") cfg.loss.kappa = as_size();
  else if (key == "warmup_epochs") cfg.loss.warmup_epochs = as_size();
  else if (key == "variance_eps") cfg.loss.variance_eps = as_double();
  else if (key == "gamma") cfg.gamma = as_double();
  else if (key == "augment_shuffle") cfg.augment_shuffle = as_bool();
  else if (key == "augment_nonshuffle") cfg.augment_nonshuffle = as_bool();
  else if (key == "log_mode") cfg.log_mode = parse_log_mode(value);
  else if (key == "optimizer") cfg.optimizer = parse_optimizer(value);
  else if (key == "momentum") cfg.momentum = as_double();
  else if (key == "clip_norm") cfg.clip_norm = as_double();
  else if (key == "threads") cfg.threads = static_cast<unsigned>(as_size());
  else throw config_error("unknown setting '" + key + "'");
}

/// Parses `key = value` lines; `#` starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in) {
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    s.erase(0, s.find_first_not_of(ws));
    auto end = s.find_last_not_of(ws);
    s.erase(end == std::string::npos ? 0 : end + 1);
    return s;
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error(detail::line_error(line_no, "expected key = value"));
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw config_error(detail::line_error(line_no, "empty key"));
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline TrainConfig read_train_config(std::istream& in, TrainConfig base = {}) {
  for (const auto& [k, v] : parse_key_values(in)) apply_setting(base, k, v);
  return base;
}

// ---------------------------------------------------------------------------
// Views

struct SessionViews {
  std::vector<TrackId> original;
  std::vector<TrackId> augmented;
};

/// Original prefix plus its augmented twin: transition insertion for shuffle
/// instances, windowed reorder for the rest, each behind its own switch.
inline SessionViews make_views(const TrainingInstance& inst, const NormalizedTransitions& transitions,
                               const TrainConfig& cfg, Rng& rng) {
  SessionViews v;
  v.original = inst.prefix;
  Session s;
  s.id = inst.session_id;
  s.tracks = inst.prefix;
  s.shuffle = inst.shuffle;
  if (inst.shuffle && cfg.augment_shuffle) {
    v.augmented = transition_augment(s, transitions, rng, cfg.max_len).tracks;
  } else if (!inst.shuffle && cfg.augment_nonshuffle) {
    v.augmented = reorder_augment(s, cfg.gamma, rng).tracks;
  } else {
    v.augmented = inst.prefix;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Loss over a batch

struct BatchLoss {
  ad::Var total;
  ad::Var rec;       // mean cross entropy
  ad::Var matching;  // mean per-session matching loss
  ad::Var align;
  ad::Var item, similarity, vicreg;  // means of the matching parts
};

/// Encodes both views of every batch element with the same bound
/// parameters and assembles alpha * matching + (1 - alpha) * align + rec.
inline BatchLoss batch_loss(ad::Tape& tape, const BoundParams& p, std::span<const SessionViews> views,
                            std::span<const TrackId> labels, const LossConfig& cfg, bool use_similarity) {
  if (views.empty() || views.size() != labels.size()) throw validation_error("batch_loss: bad batch");
  const double inv_n = 1.0 / static_cast<double>(views.size());
  std::vector<ad::Var> z, z_aug, rec, item, sim, vic, match;
  for (std::size_t i = 0; i < views.size(); ++i) {
    auto orig = forward_session(tape, p, views[i].original);
    auto aug = forward_session(tape, p, views[i].augmented);
    z.push_back(orig.session_rep);
    z_aug.push_back(aug.session_rep);
    rec.push_back(rec_loss(tape, predict_logits(tape, p, orig.session_rep), labels[i]));
    auto m = matching_loss(tape, orig.track_reps, aug.track_reps, views[i].original, views[i].augmented, cfg,
                           use_similarity);
    item.push_back(m.item);
    sim.push_back(m.similarity);
    vic.push_back(m.vicreg);
    match.push_back(m.total);
  }
  BatchLoss out;
  auto mean = [&](const std::vector<ad::Var>& terms) { return ad::scale(tape, ad::add_n(tape, terms), inv_n); };
  out.rec = mean(rec);
  out.item = mean(item);
  out.similarity = mean(sim);
  out.vicreg = mean(vic);
  out.matching = mean(match);
  out.align = align_loss(tape, ad::stack_rows(tape, z), ad::stack_rows(tape, z_aug), cfg);
  out.total = total_loss(tape, out.matching, out.align, out.rec, cfg.alpha);
  return out;
}

struct LossBreakdown {
  double total = 0, rec = 0, matching = 0, align = 0, item = 0, similarity = 0, vicreg = 0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    total += o.total, rec += o.rec, matching += o.matching, align += o.align;
    item += o.item, similarity += o.similarity, vicreg += o.vicreg;
    return *this;
  }
  LossBreakdown scaled(double s) const {
    return {total * s, rec * s, matching * s, align * s, item * s, similarity * s, vicreg * s};
  }
};

// ---------------------------------------------------------------------------
// Optimizer

/// SGD with momentum, or Adam, over every tensor of ModelParams.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ModelParams& shape)
      : kind_(cfg.optimizer), lr_(cfg.learning_rate), momentum_(cfg.momentum), clip_(cfg.clip_norm),
        first_(shape.zeros_like()), second_(shape.zeros_like()) {}

  /// Clips `grads` to the configured global norm, then updates `params`.
  void step(ModelParams& params, ModelParams& grads) {
    if (clip_ > 0.0) {
      double sq = 0.0;
      for (const auto& [name, g] : grads.tensors()) sq += g->squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > clip_) {
        for (auto& [name, g] : grads.tensors()) *g *= clip_ / norm;
      }
    }
    if (lr_ == 0.0) return;
    ++t_;
    auto ps = params.tensors();
    auto gs = grads.tensors();
    auto ms = first_.tensors();
    auto vs = second_.tensors();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Matrix& p = *ps[i].second;
      const Matrix& g = *gs[i].second;
      Matrix& m = *ms[i].second;
      if (kind_ == OptimizerKind::sgd) {
        m = momentum_ * m + g;
        p -= lr_ * m;
      } else {
        Matrix& v = *vs[i].second;
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  OptimizerKind kind_;
  double lr_, momentum_, clip_;
  ModelParams first_, second_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training

/// One optimization step on a batch. Throws divergence_error naming the
/// first non-finite loss component.
inline LossBreakdown train_step(std::span<const TrainingInstance> batch, ModelParams& params, Optimizer& opt,
                                const NormalizedTransitions& transitions, const TrainConfig& cfg,
                                std::size_t epoch, Rng& rng) {
  std::vector<SessionViews> views;
  std::vector<TrackId> labels;
  views.reserve(batch.size());
  for (const auto& inst : batch) {
    if (inst.prefix.empty()) throw validation_error("training instance with empty prefix");
    views.push_back(make_views(inst, transitions, cfg, rng));
    labels.push_back(inst.label);
  }
  ModelParams grads = params.zeros_like();
  ad::Tape tape;
  auto bound = bind(tape, params, grads);
  auto loss = batch_loss(tape, bound, views, labels, cfg.loss, epoch >= cfg.loss.warmup_epochs);

  LossBreakdown out{tape.scalar(loss.total), tape.scalar(loss.rec),        tape.scalar(loss.matching),
                    tape.scalar(loss.align), tape.scalar(loss.item),       tape.scalar(loss.similarity),
                    tape.scalar(loss.vicreg)};
  const std::pair<const char*, double> parts[] = {{"rec", out.rec},       {"item", out.item},
                                                  {"similarity", out.similarity}, {"vicreg", out.vicreg},
                                                  {"align", out.align},   {"total", out.total}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) {
      throw divergence_error(std::string("loss component '") + name + "' is not finite at epoch " +
                             std::to_string(epoch));
    }
  }
  tape.backward(loss.total);
  opt.step(params, grads);
  if (!params.all_finite()) throw divergence_error("parameters became non-finite at epoch " + std::to_string(epoch));
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown loss;  // instance-weighted mean over the epoch's batches
  double valid_mrr5 = std::numeric_limits<double>::quiet_NaN();
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t batch_size = 0;
  LossBreakdown loss;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::size_t best_epoch = 0;
  double best_valid_mrr5 = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
  ModelParams best;
  TrainReport report;
};

/// Epoch loop with seeded shuffled batching. After each epoch the model is
/// scored on `valid` by MRR@5 and the best epoch's parameters are kept
/// (the last epoch when `valid` is empty).
inline FitResult fit(std::span<const TrainingInstance> train, std::span<const TrainingInstance> valid,
                     const NormalizedTransitions& transitions, std::size_t vocab_size, const TrainConfig& cfg,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw validation_error("training set is empty");
  if (transitions.dimension() != vocab_size) throw validation_error("transition tables do not match vocabulary size");

  FitResult result;
  ModelParams params = ModelParams::random(vocab_size, cfg.hidden_dim, mix64(cfg.seed ^ 0x1f2e3d4cULL));
  Optimizer opt(cfg, params);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng = Rng::derive(cfg.seed, epoch, 0xba7c4);
    order_rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<TrainingInstance> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) batch.push_back(train[order[k]]);
      Rng step_rng = Rng::derive(cfg.seed, epoch + 1, b + 1);
      auto loss = train_step(batch, params, opt, transitions, cfg, epoch, step_rng);
      result.report.steps.push_back({epoch, batch.size(), loss});
      rec.loss += loss.scaled(static_cast<double>(batch.size()));
      seen += batch.size();
    }
    rec.loss = rec.loss.scaled(1.0 / static_cast<double>(seen));
    if (!valid.empty()) {
      rec.valid_mrr5 = *evaluate(params, valid, {5}, cfg.threads).all.get("mrr", 5);
    }
    const double score = valid.empty() ? static_cast<double>(epoch) : rec.valid_mrr5;
    if (score > best) {
      best = score;
      result.best = params;
      result.report.best_epoch = epoch;
      result.report.best_valid_mrr5 = rec.valid_mrr5;
    }
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (cfg.epochs == 0) result.best = params;
  return result;
}

/// CSV: epoch,loss_total,loss_rec,loss_match,loss_align,valid_mrr5 followed
/// by the matching parts loss_item,loss_sim,loss_vicreg.
inline void write_training_log(std::ostream& out, const TrainReport& report) {
  out << "epoch,loss_total,loss_rec,loss_match,loss_align,valid_mrr5,loss_item,loss_sim,loss_vicreg\n";
  out << std::setprecision(17);
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.loss.total << ',' << e.loss.rec << ',' << e.loss.matching << ',' << e.loss.align
        << ',';
    if (!std::isnan(e.valid_mrr5)) out << e.valid_mrr5;
    out << ',' << e.loss.item << ',' << e.loss.similarity << ',' << e.loss.vicreg << '\n';
  }
}

}  // namespace muse
