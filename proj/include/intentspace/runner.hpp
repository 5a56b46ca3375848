#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "intentspace/checkpoint.hpp"
#include "intentspace/convert.hpp"
#include "intentspace/data.hpp"
#include "intentspace/embeddings.hpp"
#include "intentspace/eval.hpp"
#include "intentspace/runconfig.hpp"
#include "intentspace/trainloop.hpp"
#include "intentspace/unseen.hpp"

namespace intentspace {

namespace fs = std::filesystem;

inline std::unordered_set<std::string> collect_vocabulary(
    std::initializer_list<const LabeledDataset*> datasets) {
  std::unordered_set<std::string> vocab;
  for (const LabeledDataset* d : datasets) {
    if (d == nullptr) continue;
    for (const auto& ex : d->examples) {
      vocab.insert(ex.tokens.begin(), ex.tokens.end());
    }
  }
  return vocab;
}

inline void write_history_csv(const std::vector<HistoryRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write history: " + path);
  out << "step,phase,epoch,train_loss,valid_acc_seen,valid_acc_unseen\n";
  for (const auto& row : rows) {
    out << row.step << ',' << row.phase << ',' << row.epoch << ','
        << format_double(row.train_loss) << ',';
    if (row.valid_acc_seen >= 0.0) out << format_double(row.valid_acc_seen);
    out << ',';
    if (row.valid_acc_unseen >= 0.0) out << format_double(row.valid_acc_unseen);
    out << '\n';
  }
}

inline void write_manifest(const std::string& path, const std::string& command,
                           const std::map<std::string, std::string>& config_echo,
                           std::uint64_t seed, const nlohmann::json& extra) {
  nlohmann::json manifest;
  manifest["command"] = command;
  manifest["config"] = config_echo;
  manifest["seed"] = seed;
  manifest["version"] = kVersion;
  manifest["extra"] = extra;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << manifest.dump(2) << '\n';
}

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

// ---------------------------------------------------------------------------
// train

struct TrainOutputs {
  std::string run_dir;
  std::string checkpoint_path;
  std::string history_path;
  std::string coords_path;
  double final_train_accuracy = -1.0;
  double best_valid_accuracy = -1.0;
  int epochs_run = 0;
};

inline TrainOutputs run_train(const RunConfig& cfg) {
  for (const std::string& path :
       {cfg.train_path, cfg.embeddings_path, cfg.valid_path, cfg.test_path}) {
    if (!path.empty() && !fs::exists(path)) {
      throw IoError("missing input file: " + path);
    }
  }
  LabeledDataset train_all = load_jsonl(cfg.train_path);
  if (train_all.size() == 0) throw EmptyInputError("training dataset is empty");
  std::optional<LabeledDataset> valid_all;
  if (!cfg.valid_path.empty()) {
    valid_all = load_jsonl(cfg.valid_path);
  } else if (cfg.validation_per_intent > 0) {
    auto split = make_validation_split(train_all, cfg.validation_per_intent);
    train_all = std::move(split.first);
    valid_all = std::move(split.second);
  }

  auto vocab = collect_vocabulary({&train_all, valid_all ? &*valid_all : nullptr});
  EmbeddingTable table =
      load_embeddings(cfg.embeddings_path, static_cast<std::size_t>(cfg.embedding_dim),
                      cfg.restrict_vocab ? &vocab : nullptr);

  SplitSpec spec;
  spec.unseen_labels.insert(cfg.unseen_labels.begin(), cfg.unseen_labels.end());
  LabeledDataset train_seen_d = train_all;
  LabeledDataset valid_seen_d;
  if (!spec.unseen_labels.empty()) {
    train_seen_d = partition_seen_unseen(train_all, spec).first;
  }
  if (valid_all) {
    valid_seen_d = spec.unseen_labels.empty()
                       ? *valid_all
                       : partition_seen_unseen(*valid_all, spec).first;
  }

  IntentSpaceModel model = make_seen_model(train_seen_d.label_names, cfg.init);
  EncodedCorpus train_enc = encode_corpus(table, train_seen_d, model.labels);
  std::optional<EncodedCorpus> valid_enc;
  if (!valid_seen_d.examples.empty()) {
    valid_enc = encode_corpus(table, valid_seen_d, model.labels);
  }
  TrainLog log =
      train_seen(model, train_enc, valid_enc ? &*valid_enc : nullptr, cfg.training);

  TrainOutputs outputs;
  fs::path run_dir = fs::path(cfg.out_dir) /
                     ("run-" + config_hash(cfg.raw) + "-s" +
                      std::to_string(cfg.training.seed));
  fs::create_directories(run_dir);
  outputs.run_dir = run_dir.string();
  outputs.checkpoint_path = (run_dir / "checkpoint.bin").string();
  outputs.history_path = (run_dir / "history.csv").string();
  outputs.coords_path = (run_dir / "coords.csv").string();
  save_checkpoint(model, outputs.checkpoint_path);
  write_history_csv(log.rows, outputs.history_path);
  export_coordinates(model, outputs.coords_path);
  outputs.final_train_accuracy = corpus_accuracy(model, train_enc);
  outputs.best_valid_accuracy = log.best_metric;
  outputs.epochs_run = static_cast<int>(log.rows.size());

  nlohmann::json extra;
  extra["labels"] = model.labels;
  extra["train_examples"] = train_enc.size();
  extra["final_train_accuracy"] = round2(outputs.final_train_accuracy);
  extra["best_valid_accuracy"] = round2(outputs.best_valid_accuracy);
  extra["epochs_run"] = outputs.epochs_run;
  write_manifest((run_dir / "manifest.json").string(), "train", cfg.raw,
                 cfg.training.seed, extra);
  return outputs;
}

// ---------------------------------------------------------------------------
// add-intent

struct AddIntentOptions {
  std::string checkpoint_path;
  std::string data_path;
  std::string valid_path;
  std::string embeddings_path;
  int embedding_dim = 300;
  std::vector<std::string> labels;  // default: every label not in the model
  TrainingConfig cfg;
  bool omega = true;
  bool restrict_vocab = true;
  std::string out_dir;
};

struct AddIntentOutputs {
  std::string checkpoint_path;
  std::string history_path;
  std::string diff_report_path;
  std::vector<std::string> added_labels;
  bool frozen_ok = false;
  double best_unseen_metric = -1.0;
};

namespace detail {

inline bool same_doubles(const std::vector<double>& a, const std::vector<double>& b,
                         std::size_t count) {
  if (a.size() < count || b.size() < count) return false;
  return std::memcmp(a.data(), b.data(), count * sizeof(double)) == 0;
}

// Byte-compares every tensor that existed before the extension.
inline nlohmann::json frozen_diff_report(const IntentSpaceModel& before,
                                         const IntentSpaceModel& after,
                                         bool* all_equal) {
  nlohmann::json report;
  auto check = [&](const std::string& name, bool ok) {
    report[name] = ok;
    if (!ok) *all_equal = false;
  };
  *all_equal = true;
  check("input_weight", before.input_weight.data == after.input_weight.data);
  check("input_bias", before.input_bias.data == after.input_bias.data);
  check("initial_state", before.initial_state.data == after.initial_state.data);
  bool bases_ok = true;
  for (std::size_t b = 0; b < before.basis_count(); ++b) {
    switch (before.bases.form) {
      case BasisForm::kFullMatrix:
        bases_ok = bases_ok && before.bases.full[b].data == after.bases.full[b].data;
        break;
      case BasisForm::kReducedRank:
        bases_ok =
            bases_ok && before.bases.factors[b].data == after.bases.factors[b].data;
        break;
      case BasisForm::kVectorBias:
        bases_ok = bases_ok &&
                   before.bases.bias_vectors[b].data == after.bases.bias_vectors[b].data;
        break;
    }
  }
  check("bases", bases_ok);
  bool beta_ok = true;
  for (std::size_t c = 0; c < before.coords.beta.rows; ++c) {
    beta_ok = beta_ok &&
              std::memcmp(before.coords.beta.row(c), after.coords.beta.row(c),
                          before.coords.beta.cols * sizeof(double)) == 0;
  }
  check("coordinates", beta_ok);
  bool scorer_ok = true;
  for (std::size_t r = 0; r < before.scorer.a.rows; ++r) {
    scorer_ok = scorer_ok && std::memcmp(before.scorer.a.row(r), after.scorer.a.row(r),
                                         before.scorer.a.cols * sizeof(double)) == 0;
  }
  scorer_ok = scorer_ok && same_doubles(after.scorer.d.data, before.scorer.d.data,
                                        before.scorer.d.dim());
  check("scorer", scorer_ok);
  bool omegas_ok = true;
  for (const auto& [intent, mats] : before.expansions.per_intent) {
    auto it = after.expansions.per_intent.find(intent);
    if (it == after.expansions.per_intent.end()) {
      omegas_ok = false;
      break;
    }
    for (std::size_t b = 0; b < mats.size(); ++b) {
      omegas_ok = omegas_ok && mats[b].data == it->second[b].data;
    }
  }
  check("expansions", omegas_ok);
  return report;
}

}  // namespace detail

inline AddIntentOutputs run_add_intent(const AddIntentOptions& options) {
  for (const std::string& path :
       {options.checkpoint_path, options.data_path, options.embeddings_path,
        options.valid_path}) {
    if (!path.empty() && !fs::exists(path)) {
      throw IoError("missing input file: " + path);
    }
  }
  if (options.out_dir.empty()) throw ConfigError("add-intent: --out is required");
  IntentSpaceModel before = load_checkpoint(options.checkpoint_path);
  IntentSpaceModel model = before;

  LabeledDataset data = load_jsonl(options.data_path);
  std::optional<LabeledDataset> valid;
  if (!options.valid_path.empty()) valid = load_jsonl(options.valid_path);

  std::set<std::string> existing(model.labels.begin(), model.labels.end());
  std::vector<std::string> new_labels;
  if (!options.labels.empty()) {
    new_labels = options.labels;
    for (const auto& l : new_labels) {
      if (existing.count(l) != 0) {
        throw ConfigError("add-intent: label already in model: " + l);
      }
      if (data.label_id(l) < 0) {
        throw ConfigError("add-intent: label not present in data: " + l);
      }
    }
  } else {
    for (const auto& l : data.label_names) {
      if (existing.count(l) == 0) new_labels.push_back(l);
    }
  }
  if (new_labels.empty()) {
    throw EmptyInputError("add-intent: no new labels to add");
  }
  std::set<std::string> new_set(new_labels.begin(), new_labels.end());

  // Route rows: model labels feed the regulariser sample, new labels feed the
  // extension training set; anything else is rejected as unknown.
  LabeledDataset seen_pool;
  LabeledDataset unseen_pool;
  for (const auto& name : model.labels) seen_pool.intern_label(name);
  for (const auto& name : new_labels) unseen_pool.intern_label(name);
  for (const auto& ex : data.examples) {
    if (existing.count(ex.intent) != 0) {
      seen_pool.add(ex);
    } else if (new_set.count(ex.intent) != 0) {
      unseen_pool.add(ex);
    } else if (options.labels.empty()) {
      throw ConfigError("add-intent: unknown label in data: " + ex.intent);
    }
    // with --labels given, other new labels are deliberately skipped
  }
  if (unseen_pool.size() == 0) {
    throw EmptyInputError("add-intent: no examples for the new labels");
  }

  auto vocab = collect_vocabulary({&data, valid ? &*valid : nullptr});
  EmbeddingTable table = load_embeddings(
      options.embeddings_path, static_cast<std::size_t>(options.embedding_dim),
      options.restrict_vocab ? &vocab : nullptr);

  std::vector<std::string> final_labels = model.labels;
  final_labels.insert(final_labels.end(), new_labels.begin(), new_labels.end());

  EncodedCorpus unseen_enc = encode_corpus(table, unseen_pool, final_labels);
  std::optional<EncodedCorpus> sample_enc;
  if (seen_pool.size() > 0) {
    LabeledDataset sample_d = sample_per_intent(
        seen_pool, options.cfg.k_reg_sentences, options.cfg.seed);
    sample_enc = encode_corpus(table, sample_d, final_labels);
  }
  std::optional<EncodedCorpus> unseen_valid_enc;
  std::optional<EncodedCorpus> seen_valid_enc;
  if (valid) {
    LabeledDataset valid_unseen;
    LabeledDataset valid_seen;
    for (const auto& name : new_labels) valid_unseen.intern_label(name);
    for (const auto& name : model.labels) valid_seen.intern_label(name);
    for (const auto& ex : valid->examples) {
      if (new_set.count(ex.intent) != 0) {
        valid_unseen.add(ex);
      } else if (existing.count(ex.intent) != 0) {
        valid_seen.add(ex);
      }
    }
    if (valid_unseen.size() > 0) {
      unseen_valid_enc = encode_corpus(table, valid_unseen, final_labels);
    }
    if (valid_seen.size() > 0) {
      seen_valid_enc = encode_corpus(table, valid_seen, final_labels);
    }
  }

  ExtensionRequest req;
  req.new_labels = new_labels;
  req.unseen_train = &unseen_enc;
  req.seen_sample = sample_enc ? &*sample_enc : nullptr;
  req.unseen_valid = unseen_valid_enc ? &*unseen_valid_enc : nullptr;
  req.seen_valid = seen_valid_enc ? &*seen_valid_enc : nullptr;
  req.cfg = options.cfg;
  req.enable_omega = options.omega;
  TrainLog log = add_intents(model, req);

  fs::create_directories(options.out_dir);
  AddIntentOutputs outputs;
  outputs.added_labels = new_labels;
  outputs.best_unseen_metric = log.best_metric;
  outputs.checkpoint_path = (fs::path(options.out_dir) / "checkpoint.bin").string();
  outputs.history_path = (fs::path(options.out_dir) / "history.csv").string();
  outputs.diff_report_path =
      (fs::path(options.out_dir) / "diff_report.json").string();
  save_checkpoint(model, outputs.checkpoint_path);
  write_history_csv(log.rows, outputs.history_path);
  export_coordinates(model, (fs::path(options.out_dir) / "coords.csv").string());

  nlohmann::json diff = detail::frozen_diff_report(before, model, &outputs.frozen_ok);
  {
    std::ofstream out(outputs.diff_report_path, std::ios::binary);
    if (!out) throw IoError("cannot write diff report: " + outputs.diff_report_path);
    nlohmann::json wrapper;
    wrapper["pre_existing_tensors_bitwise_equal"] = outputs.frozen_ok;
    wrapper["tensors"] = diff;
    out << wrapper.dump(2) << '\n';
  }

  std::map<std::string, std::string> echo;
  echo["checkpoint"] = options.checkpoint_path;
  echo["data"] = options.data_path;
  echo["valid"] = options.valid_path;
  echo["embeddings"] = options.embeddings_path;
  echo["omega"] = options.omega ? "true" : "false";
  echo["epsilon"] = format_double(options.cfg.epsilon);
  echo["zeta"] = format_double(options.cfg.zeta);
  nlohmann::json extra;
  extra["added_labels"] = new_labels;
  extra["frozen_ok"] = outputs.frozen_ok;
  extra["best_unseen_metric"] = round2(log.best_metric);
  write_manifest((fs::path(options.out_dir) / "manifest.json").string(), "add-intent",
                 echo, options.cfg.seed, extra);
  return outputs;
}

// ---------------------------------------------------------------------------
// eval / detect / roc / export

struct EvalOptions {
  std::string checkpoint_path;
  std::string data_path;
  std::string embeddings_path;
  int embedding_dim = 300;
  std::vector<std::string> unseen_labels;  // default: intents added after seen training
  bool restrict_vocab = true;
  std::string out_path;
};

inline std::set<int> resolve_unseen_ids(const IntentSpaceModel& model,
                                        const std::vector<std::string>& labels) {
  std::set<int> ids;
  if (labels.empty()) {
    for (std::size_t c = model.seen_intents; c < model.intent_count(); ++c) {
      ids.insert(static_cast<int>(c));
    }
    return ids;
  }
  for (const auto& label : labels) {
    auto it = std::find(model.labels.begin(), model.labels.end(), label);
    if (it == model.labels.end()) {
      throw EvalError("unknown label: " + label);
    }
    ids.insert(static_cast<int>(it - model.labels.begin()));
  }
  return ids;
}

inline nlohmann::json eval_report_json(const IntentSpaceModel& model,
                                       const EvalReport& report) {
  nlohmann::json j;
  j["overall_accuracy"] = round2(report.overall_accuracy);
  if (report.seen_accuracy >= 0.0) j["seen_accuracy"] = round2(report.seen_accuracy);
  if (report.unseen_accuracy) j["unseen_accuracy"] = round2(*report.unseen_accuracy);
  j["per_intent_accuracy"] = nlohmann::json::object();
  for (const auto& [label, acc] : report.per_intent_accuracy) {
    j["per_intent_accuracy"][label] = round2(acc);
  }
  auto stats_json = [](const EntropyStats& s) {
    nlohmann::json e;
    e["count"] = s.count;
    e["mean"] = s.mean;
    e["stddev"] = s.stddev;
    e["min"] = s.min;
    e["max"] = s.max;
    return e;
  };
  j["entropy_seen"] = stats_json(report.entropy_seen);
  j["entropy_unseen"] = stats_json(report.entropy_unseen);
  nlohmann::json coords = nlohmann::json::array();
  for (std::size_t c = 0; c < report.coordinates_snapshot.rows; ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t b = 0; b < report.coordinates_snapshot.cols; ++b) {
      row.push_back(report.coordinates_snapshot(c, b));
    }
    coords.push_back(row);
  }
  j["coordinates"] = coords;
  j["labels"] = model.labels;
  return j;
}

inline EvalReport run_eval(const EvalOptions& options) {
  IntentSpaceModel model = load_checkpoint(options.checkpoint_path);
  LabeledDataset data = load_jsonl(options.data_path);
  auto vocab = collect_vocabulary({&data});
  EmbeddingTable table = load_embeddings(
      options.embeddings_path, static_cast<std::size_t>(options.embedding_dim),
      options.restrict_vocab ? &vocab : nullptr);
  EncodedCorpus corpus = encode_corpus(table, data, model.labels);
  std::set<int> unseen_ids = resolve_unseen_ids(model, options.unseen_labels);
  EvalReport report = evaluate(model, corpus, unseen_ids);
  if (!options.out_path.empty()) {
    std::ofstream out(options.out_path, std::ios::binary);
    if (!out) throw IoError("cannot write report: " + options.out_path);
    out << eval_report_json(model, report).dump(2) << '\n';
  }
  return report;
}

struct DetectOptions {
  std::string checkpoint_path;
  std::string data_path;
  std::string embeddings_path;
  int embedding_dim = 300;
  double rho = 0.0;
  bool restrict_vocab = true;
  std::string out_path;
};

inline void run_detect(const DetectOptions& options) {
  IntentSpaceModel model = load_checkpoint(options.checkpoint_path);
  LabeledDataset data = load_jsonl(options.data_path);
  auto vocab = collect_vocabulary({&data});
  EmbeddingTable table = load_embeddings(
      options.embeddings_path, static_cast<std::size_t>(options.embedding_dim),
      options.restrict_vocab ? &vocab : nullptr);
  EncodedCorpus corpus = encode_corpus(table, data, model.labels);

  ParamSelector all_live;
  all_live.input = true;
  TrainingEngine engine(model, all_live);
  std::ofstream out(options.out_path, std::ios::binary);
  if (!out) throw IoError("cannot write detections: " + options.out_path);
  out << "index,intent,entropy,decision\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    TrainingEngine::Eval ev = engine.evaluate(corpus, i, false);
    Vector dist(ev.s.dim());
    for (std::size_t c = 0; c < ev.s.dim(); ++c) dist[c] = ev.s[c] / ev.s_sum;
    double h = entropy(dist);
    out << i << ',' << data.examples[i].intent << ',' << format_double(h) << ','
        << (h > options.rho ? "unseen" : "seen") << '\n';
  }
}

struct RocOptions {
  std::string checkpoint_path;
  std::string data_path;
  std::string embeddings_path;
  int embedding_dim = 300;
  std::vector<std::string> unseen_labels;
  bool restrict_vocab = true;
  std::string out_csv;
  std::string out_json;
};

inline RocCurve run_roc(const RocOptions& options) {
  IntentSpaceModel model = load_checkpoint(options.checkpoint_path);
  LabeledDataset data = load_jsonl(options.data_path);
  auto vocab = collect_vocabulary({&data});
  EmbeddingTable table = load_embeddings(
      options.embeddings_path, static_cast<std::size_t>(options.embedding_dim),
      options.restrict_vocab ? &vocab : nullptr);
  EncodedCorpus corpus = encode_corpus(table, data, model.labels);
  std::set<int> unseen_ids = resolve_unseen_ids(model, options.unseen_labels);
  if (unseen_ids.empty()) {
    throw EvalError("roc: no unseen intents configured");
  }
  RocCurve curve = roc_curve(model, corpus, unseen_ids);
  if (!options.out_csv.empty()) {
    std::ofstream out(options.out_csv, std::ios::binary);
    if (!out) throw IoError("cannot write roc csv: " + options.out_csv);
    out << "threshold,fpr,tpr\n";
    for (const auto& point : curve.points) {
      out << format_double(point.threshold) << ',' << format_double(point.fpr) << ','
          << format_double(point.tpr) << '\n';
    }
  }
  if (!options.out_json.empty()) {
    std::ofstream out(options.out_json, std::ios::binary);
    if (!out) throw IoError("cannot write roc json: " + options.out_json);
    nlohmann::json j;
    j["auc"] = curve.auc;
    j["points"] = curve.points.size();
    out << j.dump(2) << '\n';
  }
  return curve;
}

inline void run_export_coords(const std::string& checkpoint_path,
                              const std::string& out_path) {
  IntentSpaceModel model = load_checkpoint(checkpoint_path);
  export_coordinates(model, out_path);
}

}  // namespace intentspace
