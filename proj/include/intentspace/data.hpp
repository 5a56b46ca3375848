#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "intentspace/embeddings.hpp"
#include "intentspace/errors.hpp"
#include "intentspace/rng.hpp"

namespace intentspace {

struct LabeledExample {
  std::vector<std::string> tokens;
  std::string intent;
};

// Examples plus a dense label index in first-appearance order.
struct LabeledDataset {
  std::vector<LabeledExample> examples;
  std::vector<std::string> label_names;
  std::unordered_map<std::string, int> label_index;

  int intern_label(const std::string& name) {
    auto it = label_index.find(name);
    if (it != label_index.end()) return it->second;
    int id = static_cast<int>(label_names.size());
    label_names.push_back(name);
    label_index.emplace(name, id);
    return id;
  }

  int label_id(const std::string& name) const {
    auto it = label_index.find(name);
    return it == label_index.end() ? -1 : it->second;
  }

  void add(LabeledExample example) {
    intern_label(example.intent);
    examples.push_back(std::move(example));
  }

  std::size_t size() const { return examples.size(); }
  std::size_t label_count() const { return label_names.size(); }
};

struct SplitSpec {
  std::set<std::string> seen_labels;
  std::set<std::string> unseen_labels;
  int validation_per_intent = 0;
};

// Canonical format: JSON Lines with string fields `text` and `intent`.
inline LabeledDataset load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path);
  LabeledDataset dataset;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": not a JSON object");
    }
    if (!record.contains("text") || !record["text"].is_string() ||
        !record.contains("intent") || !record["intent"].is_string()) {
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": missing string field `text` or `intent`");
    }
    LabeledExample example;
    example.tokens = tokenize(record["text"].get<std::string>());
    example.intent = record["intent"].get<std::string>();
    if (example.intent.empty()) {
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": empty intent");
    }
    if (example.tokens.empty()) continue;  // nothing left after tokenization
    dataset.add(std::move(example));
  }
  return dataset;
}

inline void save_jsonl(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset: " + path);
  for (const auto& example : dataset.examples) {
    std::string text;
    for (std::size_t i = 0; i < example.tokens.size(); ++i) {
      if (i > 0) text += ' ';
      text += example.tokens[i];
    }
    nlohmann::json record{{"text", text}, {"intent", example.intent}};
    out << record.dump() << '\n';
  }
}

// First n_per_intent examples of each intent, in input order, become the
// validation set; everything else stays in train, order preserved.
inline std::pair<LabeledDataset, LabeledDataset> make_validation_split(
    const LabeledDataset& dataset, int n_per_intent) {
  if (n_per_intent < 0) throw ConfigError("validation_per_intent must be >= 0");
  std::vector<int> taken(dataset.label_count(), 0);
  LabeledDataset train;
  LabeledDataset valid;
  for (const auto& name : dataset.label_names) {
    train.intern_label(name);  // keep label ids aligned with the source
    valid.intern_label(name);
  }
  for (const auto& example : dataset.examples) {
    int id = dataset.label_id(example.intent);
    if (taken[id] < n_per_intent) {
      ++taken[id];
      valid.add(example);
    } else {
      train.add(example);
    }
  }
  for (std::size_t id = 0; id < taken.size(); ++id) {
    if (taken[id] < n_per_intent) {
      throw SplitError("intent `" + dataset.label_names[id] + "` has only " +
                       std::to_string(taken[id]) + " examples, need " +
                       std::to_string(n_per_intent) + " for validation");
    }
  }
  return {std::move(train), std::move(valid)};
}

// Routes examples by label: `seen` re-indexes densely without the unseen
// labels, `unseen` keeps its own labels. Lossless by construction.
inline std::pair<LabeledDataset, LabeledDataset> partition_seen_unseen(
    const LabeledDataset& dataset, const SplitSpec& spec) {
  for (const auto& name : spec.unseen_labels) {
    if (dataset.label_id(name) < 0) {
      throw ConfigError("unseen label not in dataset: " + name);
    }
  }
  for (const auto& name : spec.seen_labels) {
    if (dataset.label_id(name) < 0) {
      throw ConfigError("seen label not in dataset: " + name);
    }
    if (spec.unseen_labels.count(name) != 0) {
      throw ConfigError("label in both seen and unseen sets: " + name);
    }
  }
  LabeledDataset seen;
  LabeledDataset unseen;
  for (const auto& name : dataset.label_names) {
    if (spec.unseen_labels.count(name) != 0) {
      unseen.intern_label(name);
    } else if (spec.seen_labels.empty() || spec.seen_labels.count(name) != 0) {
      seen.intern_label(name);
    } else {
      // Explicit seen set given and this label is in neither set.
      throw ConfigError("label `" + name + "` is in neither seen nor unseen set");
    }
  }
  for (const auto& example : dataset.examples) {
    if (spec.unseen_labels.count(example.intent) != 0) {
      unseen.add(example);
    } else {
      seen.add(example);
    }
  }
  return {std::move(seen), std::move(unseen)};
}

// Deterministic seeded sample of n examples. Stratified per intent: quotas
// proportional to intent frequency (largest fractional remainder first), rows
// drawn by seeded shuffle within each intent, output in original file order.
inline LabeledDataset subsample_unseen(const LabeledDataset& dataset,
                                       std::size_t n, std::uint64_t seed) {
  if (n > dataset.size()) {
    throw RangeError("subsample: requested " + std::to_string(n) + " of " +
                     std::to_string(dataset.size()) + " examples");
  }
  if (n == dataset.size()) return dataset;

  std::vector<std::vector<std::size_t>> by_intent(dataset.label_count());
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    by_intent[dataset.label_id(dataset.examples[i].intent)].push_back(i);
  }
  double total = static_cast<double>(dataset.size());
  std::vector<std::size_t> quota(by_intent.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t id = 0; id < by_intent.size(); ++id) {
    double exact = static_cast<double>(n) * by_intent[id].size() / total;
    quota[id] = static_cast<std::size_t>(exact);
    assigned += quota[id];
    remainders.emplace_back(exact - static_cast<double>(quota[id]), id);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < n; ++i) {
    std::size_t id = remainders[i % remainders.size()].second;
    if (quota[id] < by_intent[id].size()) {
      ++quota[id];
      ++assigned;
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t id = 0; id < by_intent.size(); ++id) {
    auto rows = by_intent[id];
    rng.shuffle(rows);
    rows.resize(std::min(quota[id], rows.size()));
    chosen.insert(chosen.end(), rows.begin(), rows.end());
  }
  std::sort(chosen.begin(), chosen.end());

  LabeledDataset out;
  for (const auto& name : dataset.label_names) out.intern_label(name);
  for (std::size_t row : chosen) out.add(dataset.examples[row]);
  return out;
}

}  // namespace intentspace
