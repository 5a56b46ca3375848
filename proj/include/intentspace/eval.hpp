#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "intentspace/errors.hpp"
#include "intentspace/model.hpp"
#include "intentspace/trainloop.hpp"
#include "intentspace/training.hpp"
#include "intentspace/unseen.hpp"

namespace intentspace {

// %.17g round-trips doubles exactly; used for every numeric text output so
// identical runs produce identical files.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Top-1 accuracy in percent. With `restrict_to`, only examples whose
// reference label is in the subset are counted (prediction still runs over
// every intent). Ties resolve to the lowest intent id.
inline double accuracy(const IntentSpaceModel& model, const EncodedCorpus& corpus,
                       const std::optional<std::set<int>>& restrict_to = std::nullopt) {
  if (restrict_to && restrict_to->empty()) {
    throw EvalError("accuracy: empty restriction subset");
  }
  ParamSelector all_live;
  all_live.input = true;
  TrainingEngine engine(model, all_live);
  std::size_t total = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    int label = corpus.examples[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= model.intent_count()) {
      throw EvalError("accuracy: label id out of range");
    }
    if (restrict_to && restrict_to->count(label) == 0) continue;
    TrainingEngine::Eval ev = engine.evaluate(corpus, i, false);
    std::size_t best = 0;
    for (std::size_t c = 1; c < ev.s.dim(); ++c) {
      if (ev.s[c] > ev.s[best]) best = c;
    }
    ++total;
    if (static_cast<int>(best) == label) ++correct;
  }
  if (total == 0) throw EvalError("accuracy: no examples matched the restriction");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

struct EntropyStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline EntropyStats entropy_stats(const std::vector<double>& values) {
  EntropyStats stats;
  stats.count = values.size();
  if (values.empty()) return stats;
  double sum = 0.0;
  stats.min = values.front();
  stats.max = values.front();
  for (double v : values) {
    sum += v;
    stats.min = std::min(stats.min, v);
    stats.max = std::max(stats.max, v);
  }
  stats.mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - stats.mean) * (v - stats.mean);
  stats.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return stats;
}

struct EvalReport {
  double overall_accuracy = 0.0;
  double seen_accuracy = -1.0;
  std::optional<double> unseen_accuracy;
  std::map<std::string, double> per_intent_accuracy;
  EntropyStats entropy_seen;
  EntropyStats entropy_unseen;
  Matrix coordinates_snapshot;  // normalised rows, C_total x B
};

// One pass over the corpus: accuracies split by the ground-truth group
// (labels in `unseen_ids` count as unseen), per-intent accuracy, entropy
// summaries and a snapshot of the normalised coordinates.
inline EvalReport evaluate(const IntentSpaceModel& model, const EncodedCorpus& corpus,
                           const std::set<int>& unseen_ids = {}) {
  if (corpus.size() == 0) throw EmptyInputError("evaluate: empty dataset");
  ParamSelector all_live;
  all_live.input = true;
  TrainingEngine engine(model, all_live);

  std::size_t c_total = model.intent_count();
  std::vector<std::size_t> per_intent_total(c_total, 0);
  std::vector<std::size_t> per_intent_correct(c_total, 0);
  std::vector<double> seen_entropies;
  std::vector<double> unseen_entropies;
  std::size_t correct = 0;

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    int label = corpus.examples[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= c_total) {
      throw EvalError("evaluate: label id out of range");
    }
    TrainingEngine::Eval ev = engine.evaluate(corpus, i, false);
    Vector dist(c_total);
    std::size_t best = 0;
    for (std::size_t c = 0; c < c_total; ++c) {
      dist[c] = ev.s[c] / ev.s_sum;
      if (ev.s[c] > ev.s[best]) best = c;
    }
    bool hit = static_cast<int>(best) == label;
    if (hit) ++correct;
    ++per_intent_total[static_cast<std::size_t>(label)];
    if (hit) ++per_intent_correct[static_cast<std::size_t>(label)];
    double h = entropy(dist);
    if (unseen_ids.count(label) != 0) {
      unseen_entropies.push_back(h);
    } else {
      seen_entropies.push_back(h);
    }
  }

  EvalReport report;
  report.overall_accuracy =
      100.0 * static_cast<double>(correct) / static_cast<double>(corpus.size());
  std::size_t seen_total = 0;
  std::size_t seen_correct = 0;
  std::size_t unseen_total = 0;
  std::size_t unseen_correct = 0;
  for (std::size_t c = 0; c < c_total; ++c) {
    if (per_intent_total[c] > 0) {
      report.per_intent_accuracy[model.labels[c]] =
          100.0 * static_cast<double>(per_intent_correct[c]) /
          static_cast<double>(per_intent_total[c]);
    }
    if (unseen_ids.count(static_cast<int>(c)) != 0) {
      unseen_total += per_intent_total[c];
      unseen_correct += per_intent_correct[c];
    } else {
      seen_total += per_intent_total[c];
      seen_correct += per_intent_correct[c];
    }
  }
  if (seen_total > 0) {
    report.seen_accuracy =
        100.0 * static_cast<double>(seen_correct) / static_cast<double>(seen_total);
  }
  if (unseen_total > 0) {
    report.unseen_accuracy =
        100.0 * static_cast<double>(unseen_correct) / static_cast<double>(unseen_total);
  }
  report.entropy_seen = entropy_stats(seen_entropies);
  report.entropy_unseen = entropy_stats(unseen_entropies);

  report.coordinates_snapshot = Matrix(c_total, model.basis_count());
  for (std::size_t c = 0; c < c_total; ++c) {
    Vector alpha = normalize_coordinates(model, static_cast<int>(c));
    for (std::size_t b = 0; b < alpha.dim(); ++b) {
      report.coordinates_snapshot(c, b) = alpha[b];
    }
  }
  return report;
}

// Writes the C_total x B matrix of normalised coordinates as bare CSV rows.
inline void export_coordinates(const IntentSpaceModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write coordinates: " + path);
  for (std::size_t c = 0; c < model.intent_count(); ++c) {
    Vector alpha = normalize_coordinates(model, static_cast<int>(c));
    for (std::size_t b = 0; b < alpha.dim(); ++b) {
      if (b > 0) out << ',';
      out << format_double(alpha[b]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Experiment drivers

struct ExperimentData {
  const EmbeddingTable* embeddings = nullptr;
  LabeledDataset train;  // all intents, validation already removed
  LabeledDataset valid;  // all intents (may be empty)
  LabeledDataset test;   // all intents
};

struct PipelineSettings {
  ModelInit init;
  TrainingConfig cfg;
  bool omega = true;
};

// Seen-intent model plus the dataset partitions it was trained from; the
// starting point every extension shares.
struct SeenBase {
  IntentSpaceModel model;
  LabeledDataset train_seen_d;
  LabeledDataset train_unseen_d;
  LabeledDataset valid_seen_d;
  LabeledDataset valid_unseen_d;
  TrainLog log;
};

inline SeenBase train_seen_base(const ExperimentData& data,
                                const PipelineSettings& settings,
                                const std::vector<std::string>& unseen_labels) {
  SplitSpec spec;
  spec.unseen_labels.insert(unseen_labels.begin(), unseen_labels.end());
  SeenBase base;
  auto train_split = partition_seen_unseen(data.train, spec);
  base.train_seen_d = std::move(train_split.first);
  base.train_unseen_d = std::move(train_split.second);
  if (!data.valid.examples.empty()) {
    auto valid_split = partition_seen_unseen(data.valid, spec);
    base.valid_seen_d = std::move(valid_split.first);
    base.valid_unseen_d = std::move(valid_split.second);
  }
  base.model = make_seen_model(base.train_seen_d.label_names, settings.init);
  EncodedCorpus train_enc =
      encode_corpus(*data.embeddings, base.train_seen_d, base.model.labels);
  std::optional<EncodedCorpus> valid_enc;
  if (!base.valid_seen_d.examples.empty()) {
    valid_enc = encode_corpus(*data.embeddings, base.valid_seen_d, base.model.labels);
  }
  base.log = train_seen(base.model, train_enc, valid_enc ? &*valid_enc : nullptr,
                        settings.cfg);
  return base;
}

struct UnseenRunResult {
  IntentSpaceModel model;
  TrainLog seen_log;
  TrainLog extension_log;
  double seen_accuracy = -1.0;    // on test, seen labels
  double unseen_accuracy = -1.0;  // on test, extension labels
  double weighted_accuracy = -1.0;
  std::vector<int> new_ids;
};

// Extends a copy of the base model with the held-out intents and evaluates
// on the test split. Only the new rows (and expansions when enabled) are
// estimated; the base stays untouched.
inline UnseenRunResult extend_and_eval(
    const SeenBase& base, const ExperimentData& data,
    const PipelineSettings& settings, const std::vector<std::string>& unseen_labels,
    const LabeledDataset* unseen_train_override = nullptr) {
  UnseenRunResult result;
  result.model = base.model;
  result.seen_log = base.log;
  IntentSpaceModel& model = result.model;

  std::vector<std::string> final_labels = model.labels;
  for (const auto& l : unseen_labels) final_labels.push_back(l);
  const LabeledDataset& unseen_train_d =
      unseen_train_override != nullptr ? *unseen_train_override : base.train_unseen_d;
  LabeledDataset sample_d = sample_per_intent(
      base.train_seen_d, settings.cfg.k_reg_sentences, settings.cfg.seed);
  EncodedCorpus sample_enc = encode_corpus(*data.embeddings, sample_d, final_labels);
  EncodedCorpus unseen_enc =
      encode_corpus(*data.embeddings, unseen_train_d, final_labels);
  std::optional<EncodedCorpus> unseen_valid_enc;
  std::optional<EncodedCorpus> seen_valid_enc;
  if (!base.valid_unseen_d.examples.empty()) {
    unseen_valid_enc =
        encode_corpus(*data.embeddings, base.valid_unseen_d, final_labels);
  }
  if (!base.valid_seen_d.examples.empty()) {
    seen_valid_enc = encode_corpus(*data.embeddings, base.valid_seen_d, final_labels);
  }

  ExtensionRequest req;
  req.new_labels = unseen_labels;
  req.unseen_train = &unseen_enc;
  req.seen_sample = &sample_enc;
  req.unseen_valid = unseen_valid_enc ? &*unseen_valid_enc : nullptr;
  req.seen_valid = seen_valid_enc ? &*seen_valid_enc : nullptr;
  req.cfg = settings.cfg;
  req.enable_omega = settings.omega;
  result.extension_log = add_intents(model, req);
  for (std::size_t i = 0; i < unseen_labels.size(); ++i) {
    result.new_ids.push_back(
        static_cast<int>(model.intent_count() - unseen_labels.size() + i));
  }

  if (!data.test.examples.empty()) {
    EncodedCorpus test_enc = encode_corpus(*data.embeddings, data.test, model.labels);
    std::set<int> seen_ids;
    std::set<int> new_ids(result.new_ids.begin(), result.new_ids.end());
    for (std::size_t c = 0; c < model.intent_count(); ++c) {
      if (new_ids.count(static_cast<int>(c)) == 0) {
        seen_ids.insert(static_cast<int>(c));
      }
    }
    result.seen_accuracy = accuracy(model, test_enc, seen_ids);
    result.unseen_accuracy = accuracy(model, test_enc, new_ids);
    result.weighted_accuracy = accuracy(model, test_enc);
  }
  return result;
}

// Full protocol for one unseen configuration: train on the seen intents,
// extend with the held-out ones, evaluate on the test split.
inline UnseenRunResult run_unseen_config(
    const ExperimentData& data, const PipelineSettings& settings,
    const std::vector<std::string>& unseen_labels,
    const LabeledDataset* unseen_train_override = nullptr) {
  SeenBase base = train_seen_base(data, settings, unseen_labels);
  return extend_and_eval(base, data, settings, unseen_labels, unseen_train_override);
}

struct TableRow {
  std::string unseen_label;
  double seen_accuracy = -1.0;
  double unseen_accuracy = -1.0;
  double weighted_accuracy = -1.0;
};

struct Table2Report {
  std::vector<TableRow> rows;
  double mean_seen = 0.0;
  double mean_unseen = 0.0;
  double mean_weighted = 0.0;
};

// Holds out each intent in turn: train on the rest, extend, evaluate.
inline Table2Report run_table2(const ExperimentData& data,
                               const PipelineSettings& settings) {
  Table2Report report;
  for (const auto& label : data.train.label_names) {
    UnseenRunResult run = run_unseen_config(data, settings, {label});
    report.rows.push_back(
        {label, run.seen_accuracy, run.unseen_accuracy, run.weighted_accuracy});
  }
  for (const auto& row : report.rows) {
    report.mean_seen += row.seen_accuracy;
    report.mean_unseen += row.unseen_accuracy;
    report.mean_weighted += row.weighted_accuracy;
  }
  double n = static_cast<double>(report.rows.size());
  report.mean_seen /= n;
  report.mean_unseen /= n;
  report.mean_weighted /= n;
  return report;
}

struct Table3Row {
  std::size_t unseen_sentences = 0;
  double seen_accuracy = -1.0;
  double unseen_accuracy = -1.0;  // -1 for the seen-only row
};

struct Table3Report {
  std::vector<Table3Row> rows;
};

// Data-quantity curve: one seen base model, then one extension per subsample
// size of the unseen training data. Size 0 emits the seen-only row.
inline Table3Report run_table3(const ExperimentData& data,
                               const PipelineSettings& settings,
                               const std::vector<std::size_t>& sizes,
                               const std::string& unseen_label) {
  SeenBase base = train_seen_base(data, settings, {unseen_label});
  SplitSpec spec;
  spec.unseen_labels.insert(unseen_label);

  Table3Report report;
  for (std::size_t size : sizes) {
    Table3Row row;
    row.unseen_sentences = size;
    if (size == 0) {
      LabeledDataset test_seen_d = partition_seen_unseen(data.test, spec).first;
      EncodedCorpus test_enc =
          encode_corpus(*data.embeddings, test_seen_d, base.model.labels);
      row.seen_accuracy = accuracy(base.model, test_enc);
    } else {
      LabeledDataset sub =
          subsample_unseen(base.train_unseen_d, size, settings.cfg.seed);
      UnseenRunResult run = extend_and_eval(base, data, settings, {unseen_label}, &sub);
      row.seen_accuracy = run.seen_accuracy;
      row.unseen_accuracy = run.unseen_accuracy;
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace intentspace
