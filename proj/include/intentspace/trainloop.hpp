#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "intentspace/model.hpp"
#include "intentspace/training.hpp"

namespace intentspace {

// One row per epoch. `step` counts interleave blocks, matching the
// granularity of the training-progress curves.
struct HistoryRow {
  int step = 0;
  char phase = 'W';  // 'W' bases, 'A' coordinates, 'O' expansions
  int epoch = 0;
  double train_loss = 0.0;
  double valid_acc_seen = -1.0;    // percent; -1 when not evaluated
  double valid_acc_unseen = -1.0;  // percent; -1 when not evaluated
};

struct TrainLog {
  std::vector<HistoryRow> rows;
  double best_metric = -1.0;
  int best_epoch = -1;
  bool stopped_early = false;
};

// Top-1 accuracy (percent) under the engine's caches; ties go to the lowest
// intent id.
inline double engine_accuracy(const TrainingEngine& engine,
                              const EncodedCorpus& corpus) {
  if (corpus.size() == 0) throw EmptyInputError("accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    TrainingEngine::Eval ev = engine.evaluate(corpus, i, false);
    std::size_t best = 0;
    for (std::size_t c = 1; c < ev.s.dim(); ++c) {
      if (ev.s[c] > ev.s[best]) best = c;
    }
    if (static_cast<int>(best) == corpus.examples[i].label) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(corpus.size());
}

inline double corpus_accuracy(const IntentSpaceModel& model,
                              const EncodedCorpus& corpus) {
  ParamSelector all_live;
  all_live.input = true;
  TrainingEngine engine(model, all_live);
  return engine_accuracy(engine, corpus);
}

namespace detail {

struct SeenSnapshot {
  Matrix input_weight;
  Vector input_bias;
  BasisSet bases;
  Matrix beta;
  ScorerParams scorer;

  static SeenSnapshot take(const IntentSpaceModel& m) {
    return {m.input_weight, m.input_bias, m.bases, m.coords.beta, m.scorer};
  }
  void restore(IntentSpaceModel& m) const {
    m.input_weight = input_weight;
    m.input_bias = input_bias;
    m.bases = bases;
    m.coords.beta = beta;
    m.scorer = scorer;
  }
};

inline std::vector<std::vector<std::size_t>> make_batches(
    std::vector<std::size_t>& order, Rng& rng, int batch_size) {
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
    std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + lo, order.begin() + hi);
  }
  return batches;
}

}  // namespace detail

// Interleaved seen-intent training: bases/input/scorer for interleave_epochs
// with coordinates frozen, then coordinates with everything else frozen,
// repeating until early stopping on validation accuracy or the epoch cap.
// Restores the best-validation parameters before returning.
inline TrainLog train_seen(IntentSpaceModel& model, const EncodedCorpus& train,
                           const EncodedCorpus* valid, const TrainingConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw EmptyInputError("train_seen: empty training set");
  if (model.coords.beta.rows != model.intent_count() ||
      model.coords.beta.cols != model.basis_count()) {
    throw ShapeError("train_seen: coordinate block shape mismatch");
  }

  TrainLog log;
  Rng rng(cfg.seed);
  BlockOptimizer optimizer(cfg.optimizer);
  std::vector<std::size_t> order = all_rows(train);
  detail::SeenSnapshot best = detail::SeenSnapshot::take(model);
  int since_improve = 0;

  std::optional<TrainingEngine> engine;
  int current_phase = -1;
  for (int epoch = 0; epoch < cfg.max_epochs_seen; ++epoch) {
    int phase_idx = (epoch / cfg.interleave_epochs) % 2;
    ParamSelector selector = phase_idx == 0 ? ParamSelector::seen_bases_phase()
                                            : ParamSelector::seen_coordinate_phase();
    if (phase_idx != current_phase) {
      engine.emplace(model, selector);
      current_phase = phase_idx;
    }

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const auto& batch : detail::make_batches(order, rng, cfg.batch_size)) {
      std::vector<WorkItem> items;
      items.reserve(batch.size());
      double w = 1.0 / static_cast<double>(batch.size());
      for (std::size_t row : batch) {
        items.push_back({&train, row, WorkItem::Kind::kNll, w});
      }
      BatchResult result =
          compute_batch_gradient(*engine, model, items, {}, cfg.threads);
      auto binds = bind_gradients(model, selector, result.grads);
      optimizer.apply(binds);
      engine->refresh();
      loss_sum += result.value * static_cast<double>(batch.size());
      loss_count += batch.size();
    }

    double metric = valid != nullptr ? engine_accuracy(*engine, *valid)
                                     : engine_accuracy(*engine, train);
    HistoryRow row;
    row.step = epoch / cfg.interleave_epochs;
    row.phase = phase_idx == 0 ? 'W' : 'A';
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(loss_count);
    row.valid_acc_seen = metric;
    log.rows.push_back(row);

    if (metric > log.best_metric) {
      log.best_metric = metric;
      log.best_epoch = epoch;
      best = detail::SeenSnapshot::take(model);
      since_improve = 0;
    } else {
      ++since_improve;
      if (since_improve >= cfg.early_stop_patience) {
        log.stopped_early = true;
        break;
      }
    }
  }
  if (cfg.restore_best) best.restore(model);
  return log;
}

}  // namespace intentspace
