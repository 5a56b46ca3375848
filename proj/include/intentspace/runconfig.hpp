#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "intentspace/errors.hpp"
#include "intentspace/model.hpp"
#include "intentspace/training.hpp"

namespace intentspace {

inline const char* kVersion = "1.0.0";

// Flat key-value config with [section] headers. Keys are stored as
// "section.key"; '#' and ';' start comments.
inline std::map<std::string, std::string> parse_keyvalue_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path);
  std::map<std::string, std::string> values;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError(path + " line " + std::to_string(line_no) +
                         ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": empty key");
    }
    values[section.empty() ? key : section + "." + key] = value;
  }
  return values;
}

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, std::string> values)
      : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) {
      throw ConfigError("config: missing required field `" + key + "`");
    }
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: field `" + key + "` is not a number: " + it->second);
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      long long v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: field `" + key + "` is not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    for (char& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: field `" + key + "` is not a boolean: " + it->second);
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::stringstream stream(it->second);
    std::string item;
    while (std::getline(stream, item, ',')) {
      std::size_t a = item.find_first_not_of(" \t");
      std::size_t b = item.find_last_not_of(" \t");
      if (a == std::string::npos) continue;
      out.push_back(item.substr(a, b - a + 1));
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace detail

struct RunConfig {
  // [data]
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string embeddings_path;
  int embedding_dim = 300;
  int validation_per_intent = 0;
  std::vector<std::string> unseen_labels;
  bool restrict_vocab = true;
  // [model]
  ModelInit init;
  bool omega = true;
  // [training]
  TrainingConfig training;
  // [output]
  std::string out_dir = "runs";

  // Raw key/value echo for the manifest and the run-directory hash.
  std::map<std::string, std::string> raw;
};

inline RunConfig run_config_from_values(std::map<std::string, std::string> values) {
  detail::ConfigReader reader(std::move(values));
  RunConfig cfg;
  cfg.raw = reader.values();

  cfg.train_path = reader.require_string("data.train");
  cfg.valid_path = reader.get_string("data.valid", "");
  cfg.test_path = reader.get_string("data.test", "");
  cfg.embeddings_path = reader.require_string("data.embeddings");
  cfg.embedding_dim = static_cast<int>(reader.get_int("data.embedding_dim", 300));
  cfg.validation_per_intent =
      static_cast<int>(reader.get_int("data.validation_per_intent", 0));
  cfg.unseen_labels = reader.get_list("data.unseen_labels");
  cfg.restrict_vocab = reader.get_bool("data.restrict_vocab", true);

  cfg.init.hidden = static_cast<std::size_t>(reader.get_int("model.hidden", 300));
  cfg.init.input_dim = static_cast<std::size_t>(cfg.embedding_dim);
  std::string mode = reader.get_string("model.mode", "simplex");
  if (mode == "simplex") {
    cfg.init.mode = SpaceMode::kSimplex;
  } else if (mode == "euclidean") {
    cfg.init.mode = SpaceMode::kEuclidean;
  } else {
    throw ConfigError("config: model.mode must be simplex or euclidean, got " + mode);
  }
  std::string form = reader.get_string("model.basis_form", "full");
  if (form == "full") {
    cfg.init.form = BasisForm::kFullMatrix;
  } else if (form == "reduced") {
    cfg.init.form = BasisForm::kReducedRank;
  } else {
    throw ConfigError("config: model.basis_form must be full or reduced, got " + form);
  }
  cfg.init.rank = static_cast<std::size_t>(reader.get_int("model.rank", 1));
  std::string scorer = reader.get_string("model.scorer", "shared");
  if (scorer == "shared") {
    cfg.init.scorer_kind = ScorerParams::Kind::kShared;
  } else if (scorer == "per-intent") {
    cfg.init.scorer_kind = ScorerParams::Kind::kPerIntent;
  } else {
    throw ConfigError("config: model.scorer must be shared or per-intent, got " +
                      scorer);
  }
  cfg.init.init_noise = reader.get_double("model.init_noise", 0.05);
  cfg.init.onehot_beta = reader.get_double("model.onehot_beta", 10.0);
  cfg.omega = reader.get_bool("model.omega", true);

  TrainingConfig& t = cfg.training;
  std::string optimizer = reader.get_string("training.optimizer", "sgd");
  if (optimizer == "sgd") {
    t.optimizer.kind = OptimizerOptions::Kind::kSgd;
  } else if (optimizer == "adam") {
    t.optimizer.kind = OptimizerOptions::Kind::kAdam;
  } else {
    throw ConfigError("config: training.optimizer must be sgd or adam, got " +
                      optimizer);
  }
  t.optimizer.sgd.lr = reader.get_double("training.lr", 0.05);
  t.optimizer.sgd.weight_decay = reader.get_double("training.weight_decay", 1e-5);
  t.optimizer.adam.lr = reader.get_double("training.lr", 1e-3);
  t.optimizer.adam.beta1 = reader.get_double("training.beta1", 0.9);
  t.optimizer.adam.beta2 = reader.get_double("training.beta2", 0.999);
  t.optimizer.adam.eps = reader.get_double("training.adam_eps", 1e-8);
  t.interleave_epochs = static_cast<int>(reader.get_int("training.interleave_epochs", 5));
  t.max_epochs_seen = static_cast<int>(reader.get_int("training.max_epochs_seen", 50));
  t.max_epochs_coords =
      static_cast<int>(reader.get_int("training.max_epochs_coords", 150));
  t.max_epochs_omega =
      static_cast<int>(reader.get_int("training.max_epochs_omega", 500));
  t.epsilon = reader.get_double("training.epsilon", 0.20);
  t.zeta = reader.get_double("training.zeta", 1.00);
  t.early_stop_patience =
      static_cast<int>(reader.get_int("training.patience", 5));
  t.batch_size = static_cast<int>(reader.get_int("training.batch_size", 16));
  t.seed = static_cast<std::uint64_t>(reader.get_int("training.seed", 1));
  cfg.init.seed = t.seed;
  t.k_reg_sentences =
      static_cast<int>(reader.get_int("training.k_reg_sentences", 50));
  t.threads = static_cast<int>(reader.get_int("training.threads", 1));
  t.validate();

  cfg.out_dir = reader.get_string("output.dir", "runs");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  return run_config_from_values(parse_keyvalue_file(path));
}

// FNV-1a over the canonical "key=value\n" listing; names the run directory.
inline std::string config_hash(const std::map<std::string, std::string>& values) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [k, v] : values) {
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);  // first 8 hex digits are plenty
}

}  // namespace intentspace
