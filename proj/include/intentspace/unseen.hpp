#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "intentspace/model.hpp"
#include "intentspace/trainloop.hpp"
#include "intentspace/training.hpp"

namespace intentspace {

// ---------------------------------------------------------------------------
// Frozen-parameter extension (coordinates first, expansions optionally after)

struct ExtensionRequest {
  std::vector<std::string> new_labels;
  const EncodedCorpus* unseen_train = nullptr;  // labels are final model ids
  const EncodedCorpus* seen_sample = nullptr;   // K sentences of seen data
  const EncodedCorpus* unseen_valid = nullptr;  // optional early-stop metric
  const EncodedCorpus* seen_valid = nullptr;    // optional, history only
  TrainingConfig cfg;
  bool enable_omega = true;
};

namespace detail {

struct ExtensionPhaseSpec {
  ParamSelector selector;
  char phase_tag = 'A';
  int max_epochs = 0;
  int step_offset = 0;
};

// Blocks owned by the extension phases: the new coordinate rows, new scorer
// rows and new expansion matrices. Restoring only these keeps every
// pre-existing tensor untouched.
struct ExtensionSnapshot {
  std::vector<std::pair<int, std::vector<double>>> beta_rows;
  std::vector<std::pair<int, std::vector<double>>> scorer_rows;  // a row + d appended
  std::vector<std::pair<int, std::vector<Matrix>>> omegas;

  static ExtensionSnapshot take(const IntentSpaceModel& m,
                                std::span<const int> new_ids, bool with_omega) {
    ExtensionSnapshot s;
    for (int c : new_ids) {
      const double* row = m.coords.beta.row(static_cast<std::size_t>(c));
      s.beta_rows.emplace_back(c, std::vector<double>(row, row + m.coords.beta.cols));
      if (m.scorer.kind == ScorerParams::Kind::kPerIntent) {
        const double* arow = m.scorer.a.row(static_cast<std::size_t>(c));
        std::vector<double> packed(arow, arow + m.scorer.a.cols);
        packed.push_back(m.scorer.d[static_cast<std::size_t>(c)]);
        s.scorer_rows.emplace_back(c, std::move(packed));
      }
      if (with_omega && m.expansions.has(c)) {
        s.omegas.emplace_back(c, m.expansions.per_intent.at(c));
      }
    }
    return s;
  }

  void restore(IntentSpaceModel& m) const {
    for (const auto& [c, row] : beta_rows) {
      std::copy(row.begin(), row.end(), m.coords.beta.row(static_cast<std::size_t>(c)));
    }
    for (const auto& [c, packed] : scorer_rows) {
      std::copy(packed.begin(), packed.end() - 1,
                m.scorer.a.row(static_cast<std::size_t>(c)));
      m.scorer.d[static_cast<std::size_t>(c)] = packed.back();
    }
    for (const auto& [c, mats] : omegas) m.expansions.per_intent[c] = mats;
  }
};

inline void run_extension_phase(IntentSpaceModel& model, const ExtensionRequest& req,
                                std::span<const int> new_ids,
                                const ExtensionPhaseSpec& phase, TrainLog& log) {
  const TrainingConfig& cfg = req.cfg;
  TrainingEngine engine(model, phase.selector);
  engine.prime_cache(*req.unseen_train);
  if (req.seen_sample != nullptr) engine.prime_cache(*req.seen_sample);
  if (req.unseen_valid != nullptr) engine.prime_cache(*req.unseen_valid);
  if (req.seen_valid != nullptr) engine.prime_cache(*req.seen_valid);

  Rng rng(cfg.seed + (phase.phase_tag == 'O' ? 1 : 0));
  BlockOptimizer optimizer(cfg.optimizer);
  std::vector<std::size_t> order = all_rows(*req.unseen_train);
  std::vector<std::size_t> sample_rows =
      req.seen_sample != nullptr ? all_rows(*req.seen_sample) : std::vector<std::size_t>{};
  std::vector<int> ids(new_ids.begin(), new_ids.end());

  double best_metric = -1.0;
  int best_epoch = -1;
  ExtensionSnapshot best =
      ExtensionSnapshot::take(model, ids, phase.phase_tag == 'O');
  int since_improve = 0;

  for (int epoch = 0; epoch < phase.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const auto& batch : make_batches(order, rng, cfg.batch_size)) {
      std::vector<WorkItem> items;
      items.reserve(batch.size() + sample_rows.size());
      double w = 1.0 / static_cast<double>(batch.size());
      for (std::size_t row : batch) {
        items.push_back({req.unseen_train, row, WorkItem::Kind::kNll, w});
      }
      if (cfg.epsilon != 0.0 && !sample_rows.empty()) {
        double pair_w = cfg.epsilon / (static_cast<double>(sample_rows.size()) *
                                       static_cast<double>(ids.size()));
        for (std::size_t row : sample_rows) {
          items.push_back({req.seen_sample, row, WorkItem::Kind::kRankReg, pair_w});
        }
      }
      BatchResult result =
          compute_batch_gradient(engine, model, items, ids, cfg.threads);
      double coord_reg = cfg.zeta != 0.0 ? cfg.zeta * reg_coordinates(model, ids) : 0.0;
      if (phase.selector.coordinates && cfg.zeta != 0.0) {
        add_reg_coordinates_gradient(model, ids, cfg.zeta, result.grads.beta);
      }
      auto binds = bind_gradients(model, phase.selector, result.grads);
      optimizer.apply(binds);
      engine.refresh();
      loss_sum += (result.value + coord_reg) * static_cast<double>(batch.size());
      loss_count += batch.size();
    }

    // Early-stopping metric: unseen accuracy balanced with seen accuracy so
    // the kept snapshot preserves the existing intents. The regulariser
    // sample stands in for a seen validation set when none is provided.
    const EncodedCorpus* unseen_metric_corpus =
        req.unseen_valid != nullptr ? req.unseen_valid : req.unseen_train;
    const EncodedCorpus* seen_metric_corpus =
        req.seen_valid != nullptr ? req.seen_valid : req.seen_sample;
    double unseen_acc = engine_accuracy(engine, *unseen_metric_corpus);
    double metric = unseen_acc;
    double seen_acc = -1.0;
    if (seen_metric_corpus != nullptr && seen_metric_corpus->size() > 0) {
      seen_acc = engine_accuracy(engine, *seen_metric_corpus);
      metric = 0.5 * (unseen_acc + seen_acc);
    }
    HistoryRow row;
    row.step = phase.step_offset + epoch / cfg.interleave_epochs;
    row.phase = phase.phase_tag;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(loss_count);
    row.valid_acc_unseen = unseen_acc;
    row.valid_acc_seen = seen_acc;
    log.rows.push_back(row);

    if (metric > best_metric) {
      best_metric = metric;
      best_epoch = epoch;
      best = ExtensionSnapshot::take(model, ids, phase.phase_tag == 'O');
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
  if (best_metric > log.best_metric) {
    log.best_metric = best_metric;
    log.best_epoch = best_epoch;
  }
}

}  // namespace detail

// Appends the requested intents and estimates only their parameters: first
// the new coordinate rows (plus new scorer rows for per-intent scorers),
// then, when enabled, fresh identity-initialised expansion matrices. Every
// pre-existing tensor is left bitwise unchanged.
inline TrainLog add_intents(IntentSpaceModel& model, const ExtensionRequest& req) {
  if (req.new_labels.empty()) {
    throw EmptyInputError("add_intents: empty extension request");
  }
  req.cfg.validate();
  if (req.unseen_train == nullptr || req.unseen_train->size() == 0) {
    throw EmptyInputError("add_intents: no unseen training data");
  }
  for (const auto& label : req.new_labels) {
    if (std::find(model.labels.begin(), model.labels.end(), label) !=
        model.labels.end()) {
      throw ConfigError("add_intents: label already in model: " + label);
    }
  }

  std::size_t c_old = model.intent_count();
  std::size_t u = req.new_labels.size();
  std::size_t b_count = model.basis_count();
  std::vector<int> new_ids;
  for (std::size_t i = 0; i < u; ++i) {
    new_ids.push_back(static_cast<int>(c_old + i));
    model.labels.push_back(req.new_labels[i]);
  }
  for (const auto& ex : req.unseen_train->examples) {
    if (ex.label < static_cast<int>(c_old) ||
        ex.label >= static_cast<int>(c_old + u)) {
      throw ConfigError("add_intents: unseen data labelled outside the new intents");
    }
  }

  // New coordinate rows: normalised alpha uniform over the bases.
  Matrix beta(c_old + u, b_count);
  std::copy(model.coords.beta.data.begin(), model.coords.beta.data.end(),
            beta.data.begin());
  if (model.coords.mode == SpaceMode::kEuclidean) {
    for (std::size_t r = c_old; r < c_old + u; ++r) {
      for (std::size_t b = 0; b < b_count; ++b) {
        beta(r, b) = 1.0 / static_cast<double>(b_count);
      }
    }
  }
  model.coords.beta = std::move(beta);

  if (model.scorer.kind == ScorerParams::Kind::kPerIntent) {
    Rng rng(req.cfg.seed);
    Matrix a(c_old + u, model.hidden);
    std::copy(model.scorer.a.data.begin(), model.scorer.a.data.end(), a.data.begin());
    Vector d(c_old + u);
    std::copy(model.scorer.d.begin(), model.scorer.d.end(), d.begin());
    for (std::size_t r = c_old; r < c_old + u; ++r) {
      for (std::size_t i = 0; i < model.hidden; ++i) a(r, i) = rng.uniform(-0.05, 0.05);
      d[r] = rng.uniform(-0.05, 0.05);
    }
    model.scorer.a = std::move(a);
    model.scorer.d = std::move(d);
  }

  TrainLog log;
  detail::ExtensionPhaseSpec coord_phase;
  coord_phase.selector.coordinates = true;
  coord_phase.selector.coordinate_rows = new_ids;
  if (model.scorer.kind == ScorerParams::Kind::kPerIntent) {
    coord_phase.selector.scorer = true;
    coord_phase.selector.scorer_rows = new_ids;
  }
  coord_phase.phase_tag = 'A';
  coord_phase.max_epochs = req.cfg.max_epochs_coords;
  detail::run_extension_phase(model, req, new_ids, coord_phase, log);

  if (req.enable_omega) {
    for (int c : new_ids) {
      std::vector<Matrix> omegas(b_count, Matrix::identity(model.hidden));
      model.expansions.per_intent.emplace(c, std::move(omegas));
    }
    detail::ExtensionPhaseSpec omega_phase;
    omega_phase.selector.expansions = true;
    omega_phase.selector.expansion_intents = new_ids;
    omega_phase.phase_tag = 'O';
    omega_phase.max_epochs = req.cfg.max_epochs_omega;
    omega_phase.step_offset =
        log.rows.empty() ? 0 : log.rows.back().step + 1;
    detail::run_extension_phase(model, req, new_ids, omega_phase, log);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Unseen-intent detection

struct DetectionResult {
  double entropy = 0.0;
  bool unseen = false;
  double threshold = 0.0;
};

// Entropy threshold rule: unseen iff H > rho (ties count as seen).
inline DetectionResult detect_by_entropy(const IntentSpaceModel& model,
                                         std::span<const Vector> sentence,
                                         double rho) {
  Vector dist = predict_distribution(model, sentence);
  double h = entropy(dist);
  return {h, h > rho, rho};
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// Threshold sweep over the observed entropies, descending, so FPR and TPR are
// non-decreasing along the curve from (0,0) to (1,1). AUC by trapezoid rule.
inline RocCurve roc_from_entropies(std::span<const double> seen,
                                   std::span<const double> unseen) {
  if (seen.empty() || unseen.empty()) {
    throw EvalError("roc: need both seen and unseen examples");
  }
  std::vector<double> thresholds(seen.begin(), seen.end());
  thresholds.insert(thresholds.end(), unseen.begin(), unseen.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  double lo = thresholds.back() - 1.0;
  double hi = thresholds.front() + 1.0;
  thresholds.insert(thresholds.begin(), hi);
  thresholds.push_back(lo);

  RocCurve curve;
  auto rate_above = [](std::span<const double> values, double rho) {
    std::size_t n = 0;
    for (double v : values) {
      if (v > rho) ++n;
    }
    return static_cast<double>(n) / static_cast<double>(values.size());
  };
  for (double rho : thresholds) {
    curve.points.push_back({rho, rate_above(seen, rho), rate_above(unseen, rho)});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return curve;
}

// Entropies of a labelled corpus split by ground truth (label ids in
// `unseen_ids` count as unseen), then the sweep above.
inline RocCurve roc_curve(const IntentSpaceModel& model, const EncodedCorpus& corpus,
                          const std::set<int>& unseen_ids) {
  ParamSelector all_live;
  all_live.input = true;
  TrainingEngine engine(model, all_live);
  std::vector<double> seen_h;
  std::vector<double> unseen_h;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    TrainingEngine::Eval ev = engine.evaluate(corpus, i, false);
    Vector dist(ev.s.dim());
    for (std::size_t c = 0; c < ev.s.dim(); ++c) dist[c] = ev.s[c] / ev.s_sum;
    double h = entropy(dist);
    if (unseen_ids.count(corpus.examples[i].label) != 0) {
      unseen_h.push_back(h);
    } else {
      seen_h.push_back(h);
    }
  }
  return roc_from_entropies(seen_h, unseen_h);
}

// ---------------------------------------------------------------------------
// Coordinate-based detection sketch

// Fits a fresh coordinate row for a virtual intent on one sentence: uniform
// init, `steps` SGD iterations (lr 0.1) maximising the virtual intent's
// normalised score, everything else frozen. Returns the normalised row.
inline Vector estimate_sentence_coordinates(const IntentSpaceModel& model,
                                            std::span<const Vector> sentence,
                                            int steps = 25, double lr = 0.1) {
  if (steps < 1) throw ConfigError("estimate_sentence_coordinates: steps must be >= 1");
  if (sentence.empty()) throw EmptyInputError("estimate_sentence_coordinates: empty sentence");
  IntentSpaceModel probe = model;
  std::size_t c_old = model.intent_count();
  std::size_t b_count = model.basis_count();
  probe.labels.push_back("(virtual)");

  Matrix beta(c_old + 1, b_count);
  std::copy(model.coords.beta.data.begin(), model.coords.beta.data.end(),
            beta.data.begin());
  if (probe.coords.mode == SpaceMode::kEuclidean) {
    for (std::size_t b = 0; b < b_count; ++b) {
      beta(c_old, b) = 1.0 / static_cast<double>(b_count);
    }
  }
  probe.coords.beta = std::move(beta);

  if (probe.scorer.kind == ScorerParams::Kind::kPerIntent) {
    // The virtual intent scores through the mean of the existing rows.
    Matrix a(c_old + 1, model.hidden);
    std::copy(model.scorer.a.data.begin(), model.scorer.a.data.end(), a.data.begin());
    Vector d(c_old + 1);
    std::copy(model.scorer.d.begin(), model.scorer.d.end(), d.begin());
    for (std::size_t i = 0; i < model.hidden; ++i) {
      double mean = 0.0;
      for (std::size_t c = 0; c < c_old; ++c) mean += a(c, i);
      a(c_old, i) = mean / static_cast<double>(c_old);
    }
    double mean_d = 0.0;
    for (std::size_t c = 0; c < c_old; ++c) mean_d += d[c];
    d[c_old] = mean_d / static_cast<double>(c_old);
    probe.scorer.a = std::move(a);
    probe.scorer.d = std::move(d);
  }

  EncodedCorpus corpus;
  corpus.dim = model.input_dim;
  corpus.word_vectors = Matrix(sentence.size(), model.input_dim);
  EncodedExample ex;
  ex.label = static_cast<int>(c_old);
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    if (sentence[t].dim() != model.input_dim) {
      throw ShapeError("estimate_sentence_coordinates: word dim mismatch");
    }
    std::copy(sentence[t].begin(), sentence[t].end(), corpus.word_vectors.row(t));
    ex.words.push_back(static_cast<int>(t));
  }
  corpus.examples.push_back(std::move(ex));

  ParamSelector selector;
  selector.coordinates = true;
  selector.coordinate_rows = std::vector<int>{static_cast<int>(c_old)};
  TrainingEngine engine(probe, selector);
  engine.prime_cache(corpus);
  SgdOptions sgd{lr, 0.0};
  for (int step = 0; step < steps; ++step) {
    std::vector<WorkItem> items{{&corpus, 0, WorkItem::Kind::kNll, 1.0}};
    BatchResult result = compute_batch_gradient(engine, probe, items, {}, 1);
    auto binds = bind_gradients(probe, selector, result.grads);
    for (const auto& bind : binds) {
      sgd_step({bind.params, bind.size}, {bind.grads, bind.size}, sgd, false);
    }
    engine.refresh();
  }
  return normalize_coordinates(probe, static_cast<int>(c_old));
}

// Unseen iff the estimated coordinates are farther (L2) than `threshold`
// from every seen intent's coordinates.
inline DetectionResult detect_by_coordinates(const IntentSpaceModel& model,
                                             std::span<const Vector> sentence,
                                             double threshold, int steps = 25) {
  Vector estimate = estimate_sentence_coordinates(model, sentence, steps);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.seen_intents; ++c) {
    Vector alpha = normalize_coordinates(model, static_cast<int>(c));
    double dist = 0.0;
    for (std::size_t b = 0; b < alpha.dim(); ++b) {
      double diff = alpha[b] - estimate[b];
      dist += diff * diff;
    }
    best = std::min(best, std::sqrt(dist));
  }
  DetectionResult result;
  result.entropy = best;  // distance plays the role of the statistic here
  result.unseen = best > threshold;
  result.threshold = threshold;
  return result;
}

// Seeded per-intent sample used for the rank-preservation regulariser.
inline LabeledDataset sample_per_intent(const LabeledDataset& data, int per_intent,
                                        std::uint64_t seed) {
  if (per_intent <= 0) throw ConfigError("sample_per_intent: need a positive count");
  std::vector<std::vector<std::size_t>> by_intent(data.label_count());
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    by_intent[data.label_id(data.examples[i].intent)].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& rows : by_intent) {
    rng.shuffle(rows);
    rows.resize(std::min<std::size_t>(rows.size(), per_intent));
    chosen.insert(chosen.end(), rows.begin(), rows.end());
  }
  std::sort(chosen.begin(), chosen.end());
  LabeledDataset out;
  for (const auto& name : data.label_names) out.intern_label(name);
  for (std::size_t row : chosen) out.add(data.examples[row]);
  return out;
}

}  // namespace intentspace
