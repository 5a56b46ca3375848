#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "intentspace/intentspace.hpp"

namespace is = intentspace;

namespace {

void print_counts(const is::ConversionCounts& counts, bool with_valid) {
  auto dump = [](const char* name, const std::map<std::string, std::size_t>& m) {
    std::size_t total = 0;
    for (const auto& [intent, n] : m) {
      std::printf("  %-28s %zu\n", intent.c_str(), n);
      total += n;
    }
    std::printf("%s total: %zu\n", name, total);
  };
  dump("train", counts.train);
  if (with_valid) dump("valid", counts.valid);
  dump("test", counts.test);
}

is::TrainingConfig training_config_from_flags(double lr, double weight_decay,
                                              const std::string& optimizer,
                                              double epsilon, double zeta, int patience,
                                              int batch_size, std::uint64_t seed,
                                              int k_reg, int threads, int max_coords,
                                              int max_omega) {
  is::TrainingConfig cfg;
  if (optimizer == "sgd") {
    cfg.optimizer.kind = is::OptimizerOptions::Kind::kSgd;
  } else if (optimizer == "adam") {
    cfg.optimizer.kind = is::OptimizerOptions::Kind::kAdam;
  } else {
    throw is::ConfigError("optimizer must be sgd or adam, got " + optimizer);
  }
  cfg.optimizer.sgd.lr = lr;
  cfg.optimizer.sgd.weight_decay = weight_decay;
  cfg.optimizer.adam.lr = lr;
  cfg.epsilon = epsilon;
  cfg.zeta = zeta;
  cfg.early_stop_patience = patience;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.k_reg_sentences = k_reg;
  cfg.threads = threads;
  cfg.max_epochs_coords = max_coords;
  cfg.max_epochs_omega = max_omega;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intent-space sequence classifier"};
  app.require_subcommand(1);

  // convert -----------------------------------------------------------------
  auto* convert = app.add_subcommand("convert", "convert a corpus to JSONL");
  std::string convert_format;
  std::string convert_in;
  std::string convert_out;
  int convert_valid_n = 100;
  convert->add_option("--format", convert_format, "snips or atis")->required();
  convert->add_option("--in", convert_in, "source directory")->required();
  convert->add_option("--out", convert_out, "output directory")->required();
  convert->add_option("--validation-per-intent", convert_valid_n,
                      "snips: sentences moved to the validation split");

  // train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train on seen intents from a config");
  std::string train_config;
  std::string train_out_override;
  std::int64_t train_seed_override = -1;
  int train_threads_override = 0;
  train->add_option("--config", train_config, "run config file")->required();
  train->add_option("--out", train_out_override, "override output.dir");
  train->add_option("--seed", train_seed_override, "override training.seed");
  train->add_option("--threads", train_threads_override, "override training.threads");

  // add-intent ----------------------------------------------------------
  auto* add = app.add_subcommand("add-intent",
                                 "extend a checkpoint with unseen intents");
  std::string add_checkpoint, add_data, add_valid, add_embeddings, add_out;
  std::vector<std::string> add_labels;
  int add_dim = 300;
  bool add_omega = true;
  double add_epsilon = 0.20, add_zeta = 1.00, add_lr = 0.05, add_wd = 1e-5;
  std::string add_optimizer = "sgd";
  int add_patience = 5, add_batch = 16, add_k = 50, add_threads = 1;
  int add_max_coords = 150, add_max_omega = 500;
  std::uint64_t add_seed = 1;
  add->add_option("--checkpoint", add_checkpoint, "base checkpoint")->required();
  add->add_option("--data", add_data, "JSONL with unseen (and seen) examples")
      ->required();
  add->add_option("--valid", add_valid, "JSONL validation data");
  add->add_option("--embeddings", add_embeddings, "embedding file")->required();
  add->add_option("--dim", add_dim, "embedding dimensionality");
  add->add_option("--labels", add_labels, "new labels (default: all not in model)")
      ->delimiter(',');
  add->add_flag("--omega,!--no-omega", add_omega,
                "train expansion matrices after coordinates");
  add->add_option("--epsilon", add_epsilon, "rank-preservation weight");
  add->add_option("--zeta", add_zeta, "coordinate regulariser weight");
  add->add_option("--optimizer", add_optimizer, "sgd or adam");
  add->add_option("--lr", add_lr, "learning rate");
  add->add_option("--weight-decay", add_wd, "sgd weight decay");
  add->add_option("--patience", add_patience, "early stopping patience");
  add->add_option("--batch-size", add_batch, "batch size");
  add->add_option("--seed", add_seed, "rng seed");
  add->add_option("--k-reg", add_k, "regulariser sample per seen intent");
  add->add_option("--threads", add_threads, "worker threads");
  add->add_option("--max-epochs-coords", add_max_coords, "coordinate epoch cap");
  add->add_option("--max-epochs-omega", add_max_omega, "expansion epoch cap");
  add->add_option("--out", add_out, "output directory")->required();

  // eval ------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_checkpoint, eval_data, eval_embeddings, eval_out;
  std::vector<std::string> eval_unseen;
  int eval_dim = 300;
  eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--embeddings", eval_embeddings)->required();
  eval_cmd->add_option("--dim", eval_dim, "embedding dimensionality");
  eval_cmd->add_option("--unseen-labels", eval_unseen,
                       "labels reported as the unseen group")
      ->delimiter(',');
  eval_cmd->add_option("--out", eval_out, "report JSON path")->required();

  // detect ------------------------------------------------------------------
  auto* detect = app.add_subcommand("detect", "entropy detection per sentence");
  std::string det_checkpoint, det_data, det_embeddings, det_out;
  int det_dim = 300;
  double det_rho = 0.0;
  detect->add_option("--checkpoint", det_checkpoint)->required();
  detect->add_option("--data", det_data)->required();
  detect->add_option("--embeddings", det_embeddings)->required();
  detect->add_option("--dim", det_dim, "embedding dimensionality");
  detect->add_option("--rho", det_rho, "entropy threshold")->required();
  detect->add_option("--out", det_out, "decisions CSV path")->required();

  // roc ---------------------------------------------------------------------
  auto* roc = app.add_subcommand("roc", "entropy ROC over a labelled dataset");
  std::string roc_checkpoint, roc_data, roc_embeddings, roc_csv, roc_json;
  std::vector<std::string> roc_unseen;
  int roc_dim = 300;
  roc->add_option("--checkpoint", roc_checkpoint)->required();
  roc->add_option("--data", roc_data)->required();
  roc->add_option("--embeddings", roc_embeddings)->required();
  roc->add_option("--dim", roc_dim, "embedding dimensionality");
  roc->add_option("--unseen-labels", roc_unseen, "ground-truth unseen labels")
      ->delimiter(',');
  roc->add_option("--out-csv", roc_csv, "ROC points CSV")->required();
  roc->add_option("--out-json", roc_json, "summary JSON with AUC")->required();

  // export-coords -------------------------------------------------------------
  auto* export_cmd = app.add_subcommand("export-coords",
                                        "write normalised coordinates as CSV");
  std::string exp_checkpoint, exp_out;
  export_cmd->add_option("--checkpoint", exp_checkpoint)->required();
  export_cmd->add_option("--out", exp_out)->required();

  // grad-check ----------------------------------------------------------------
  auto* gradcheck_cmd = app.add_subcommand(
      "grad-check", "verify analytic gradients against central differences");
  std::uint64_t gc_seed = 7;
  double gc_tolerance = 1e-4;
  gradcheck_cmd->add_option("--seed", gc_seed, "instance seed");
  gradcheck_cmd->add_option("--tolerance", gc_tolerance, "max relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (convert->parsed()) {
      if (convert_format == "snips") {
        is::ConversionCounts counts =
            is::convert_snips(convert_in, convert_out, convert_valid_n);
        print_counts(counts, true);
      } else if (convert_format == "atis") {
        is::ConversionCounts counts = is::convert_atis(convert_in, convert_out);
        print_counts(counts, false);
      } else {
        throw is::ConfigError("--format must be snips or atis, got " + convert_format);
      }
    } else if (train->parsed()) {
      is::RunConfig cfg = is::load_run_config(train_config);
      if (!train_out_override.empty()) {
        cfg.out_dir = train_out_override;
        cfg.raw["output.dir"] = train_out_override;
      }
      if (train_seed_override >= 0) {
        cfg.training.seed = static_cast<std::uint64_t>(train_seed_override);
        cfg.init.seed = cfg.training.seed;
        cfg.raw["training.seed"] = std::to_string(train_seed_override);
      }
      if (train_threads_override > 0) {
        cfg.training.threads = train_threads_override;
        cfg.raw["training.threads"] = std::to_string(train_threads_override);
      }
      is::TrainOutputs outputs = is::run_train(cfg);
      std::printf("run dir: %s\n", outputs.run_dir.c_str());
      std::printf("train accuracy: %.2f\n", outputs.final_train_accuracy);
      if (outputs.best_valid_accuracy >= 0.0) {
        std::printf("best validation accuracy: %.2f\n", outputs.best_valid_accuracy);
      }
    } else if (add->parsed()) {
      is::AddIntentOptions options;
      options.checkpoint_path = add_checkpoint;
      options.data_path = add_data;
      options.valid_path = add_valid;
      options.embeddings_path = add_embeddings;
      options.embedding_dim = add_dim;
      options.labels = add_labels;
      options.omega = add_omega;
      options.out_dir = add_out;
      options.cfg = training_config_from_flags(
          add_lr, add_wd, add_optimizer, add_epsilon, add_zeta, add_patience,
          add_batch, add_seed, add_k, add_threads, add_max_coords, add_max_omega);
      is::AddIntentOutputs outputs = is::run_add_intent(options);
      std::printf("extended checkpoint: %s\n", outputs.checkpoint_path.c_str());
      std::printf("pre-existing tensors bitwise equal: %s\n",
                  outputs.frozen_ok ? "yes" : "NO");
      if (outputs.best_unseen_metric >= 0.0) {
        std::printf("best unseen metric: %.2f\n", outputs.best_unseen_metric);
      }
    } else if (eval_cmd->parsed()) {
      is::EvalOptions options;
      options.checkpoint_path = eval_checkpoint;
      options.data_path = eval_data;
      options.embeddings_path = eval_embeddings;
      options.embedding_dim = eval_dim;
      options.unseen_labels = eval_unseen;
      options.out_path = eval_out;
      is::EvalReport report = is::run_eval(options);
      std::printf("overall accuracy: %.2f\n", report.overall_accuracy);
      if (report.seen_accuracy >= 0.0) {
        std::printf("seen accuracy: %.2f\n", report.seen_accuracy);
      }
      if (report.unseen_accuracy) {
        std::printf("unseen accuracy: %.2f\n", *report.unseen_accuracy);
      }
    } else if (detect->parsed()) {
      is::DetectOptions options;
      options.checkpoint_path = det_checkpoint;
      options.data_path = det_data;
      options.embeddings_path = det_embeddings;
      options.embedding_dim = det_dim;
      options.rho = det_rho;
      options.out_path = det_out;
      is::run_detect(options);
      std::printf("detections written to %s\n", det_out.c_str());
    } else if (roc->parsed()) {
      is::RocOptions options;
      options.checkpoint_path = roc_checkpoint;
      options.data_path = roc_data;
      options.embeddings_path = roc_embeddings;
      options.embedding_dim = roc_dim;
      options.unseen_labels = roc_unseen;
      options.out_csv = roc_csv;
      options.out_json = roc_json;
      is::RocCurve curve = is::run_roc(options);
      std::printf("auc: %.4f (%zu points)\n", curve.auc, curve.points.size());
    } else if (export_cmd->parsed()) {
      is::run_export_coords(exp_checkpoint, exp_out);
      std::printf("coordinates written to %s\n", exp_out.c_str());
    } else if (gradcheck_cmd->parsed()) {
      bool ok = true;
      for (const is::GradCheckCase& result : is::gradient_check_sweep(gc_seed)) {
        bool pass = result.max_rel_err < gc_tolerance;
        ok = ok && pass;
        std::printf("%-40s max rel err %.3e  %s\n", result.name.c_str(),
                    result.max_rel_err, pass ? "ok" : "FAIL");
      }
      if (!ok) {
        std::fprintf(stderr, "gradient check failed (tolerance %.1e)\n", gc_tolerance);
        return 4;
      }
    }
  } catch (const is::Error& error) {
    std::fprintf(stderr, "error (%s): %s\n", error.category(), error.what());
    return error.exit_code();
  } catch (const std::exception& error) {
    std::fprintf(stderr, "error: %s\n", error.what());
    return 1;
  }
  return 0;
}
