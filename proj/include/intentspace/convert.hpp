#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "intentspace/data.hpp"
#include "intentspace/errors.hpp"

namespace intentspace {

struct ConversionCounts {
  std::map<std::string, std::size_t> train;
  std::map<std::string, std::size_t> valid;
  std::map<std::string, std::size_t> test;

  std::size_t total(const std::map<std::string, std::size_t>& m) const {
    std::size_t n = 0;
    for (const auto& [k, v] : m) n += v;
    return n;
  }
  std::size_t train_total() const { return total(train); }
  std::size_t valid_total() const { return total(valid); }
  std::size_t test_total() const { return total(test); }
};

struct SnipsCorpus {
  LabeledDataset train;
  LabeledDataset valid;
  LabeledDataset test;
};

namespace detail {

// Some corpus files carry stray Latin-1 bytes; re-encode them so the JSON
// parser accepts the payload.
inline std::string latin1_to_utf8(const std::string& bytes) {
  std::string out;
  out.reserve(bytes.size());
  for (unsigned char c : bytes) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  std::string bytes = buffer.str();
  nlohmann::json parsed = nlohmann::json::parse(bytes, nullptr, false);
  if (parsed.is_discarded()) {
    parsed = nlohmann::json::parse(latin1_to_utf8(bytes), nullptr, false);
  }
  if (parsed.is_discarded()) {
    throw ParseError("invalid JSON in " + path.string());
  }
  return parsed;
}

// A SNIPS record is a list of text chunks; the sentence is their
// concatenation.
inline std::string snips_sentence(const nlohmann::json& record) {
  std::string text;
  if (!record.contains("data") || !record["data"].is_array()) {
    throw FormatError("snips record without a data array");
  }
  for (const auto& chunk : record["data"]) {
    if (chunk.contains("text") && chunk["text"].is_string()) {
      text += chunk["text"].get<std::string>();
    }
  }
  return text;
}

inline void append_snips_file(const std::filesystem::path& path,
                              const std::string& intent, LabeledDataset& out) {
  nlohmann::json parsed = parse_json_file(path);
  if (!parsed.is_object() || !parsed.contains(intent) || !parsed[intent].is_array()) {
    throw FormatError(path.string() + ": expected top-level key `" + intent + "`");
  }
  for (const auto& record : parsed[intent]) {
    LabeledExample example;
    example.tokens = tokenize(snips_sentence(record));
    example.intent = intent;
    if (!example.tokens.empty()) out.add(example);
  }
}

}  // namespace detail

// Loads the nlu-benchmark directory layout: one directory per intent with
// train_<Intent>_full.json and validate_<Intent>.json. The first
// `validation_per_intent` training sentences per intent (file order) become
// the validation split; the validate files become the test split.
inline SnipsCorpus load_snips(const std::string& root,
                              int validation_per_intent = 100) {
  namespace fs = std::filesystem;
  fs::path dir(root);
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + root);
  // Accept either the repository root or the engines directory itself.
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() &&
        entry.path().filename().string().find("custom-intent-engines") !=
            std::string::npos) {
      dir = entry.path();
      break;
    }
  }
  std::vector<std::string> intents;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    std::string name = entry.path().filename().string();
    if (fs::exists(entry.path() / ("train_" + name + "_full.json")) ||
        fs::exists(entry.path() / ("train_" + name + ".json"))) {
      intents.push_back(name);
    }
  }
  if (intents.empty()) {
    throw FormatError("no intent directories under " + dir.string());
  }
  std::sort(intents.begin(), intents.end());

  LabeledDataset full_train;
  LabeledDataset test;
  for (const auto& intent : intents) {
    fs::path intent_dir = dir / intent;
    fs::path train_path = intent_dir / ("train_" + intent + "_full.json");
    if (!fs::exists(train_path)) {
      train_path = intent_dir / ("train_" + intent + ".json");
    }
    if (!fs::exists(train_path)) {
      throw FormatError("missing training file for intent " + intent);
    }
    detail::append_snips_file(train_path, intent, full_train);
    fs::path validate_path = intent_dir / ("validate_" + intent + ".json");
    if (fs::exists(validate_path)) {
      detail::append_snips_file(validate_path, intent, test);
    }
  }

  SnipsCorpus corpus;
  auto split = make_validation_split(full_train, validation_per_intent);
  corpus.train = std::move(split.first);
  corpus.valid = std::move(split.second);
  corpus.test = std::move(test);
  return corpus;
}

inline ConversionCounts convert_snips(const std::string& in_dir,
                                      const std::string& out_dir,
                                      int validation_per_intent = 100) {
  namespace fs = std::filesystem;
  SnipsCorpus corpus = load_snips(in_dir, validation_per_intent);
  fs::create_directories(out_dir);
  save_jsonl(corpus.train, (fs::path(out_dir) / "train.jsonl").string());
  save_jsonl(corpus.valid, (fs::path(out_dir) / "valid.jsonl").string());
  save_jsonl(corpus.test, (fs::path(out_dir) / "test.jsonl").string());
  ConversionCounts counts;
  for (const auto& ex : corpus.train.examples) ++counts.train[ex.intent];
  for (const auto& ex : corpus.valid.examples) ++counts.valid[ex.intent];
  for (const auto& ex : corpus.test.examples) ++counts.test[ex.intent];
  return counts;
}

namespace detail {

// Single-line CSV/TSV fields with RFC-4180 style quoting.
inline std::vector<std::string> split_delimited(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Drops sentence boundary markers used by some exports.
inline std::string strip_bos_eos(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    std::string low = lower(word);
    if (low == "bos" || low == "eos") continue;
    words.push_back(word);
  }
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

inline LabeledDataset load_delimited_queries(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  int text_col = -1;
  int intent_col = -1;
  char delim = ',';
  LabeledDataset out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      auto header = split_delimited(line, delim);
      for (std::size_t i = 0; i < header.size(); ++i) {
        std::string name = lower(header[i]);
        if (text_col < 0 && (name.find("token") != std::string::npos ||
                             name.find("text") != std::string::npos ||
                             name.find("query") != std::string::npos ||
                             name.find("utterance") != std::string::npos)) {
          text_col = static_cast<int>(i);
        }
        if (intent_col < 0 && name.find("intent") != std::string::npos) {
          intent_col = static_cast<int>(i);
        }
      }
      if (text_col >= 0 && intent_col >= 0) continue;  // header consumed
      if (header.size() == 2) {
        text_col = 0;
        intent_col = 1;
        // fall through: the first line is data
      } else {
        throw FormatError(path.string() +
                          ": cannot locate query and intent columns");
      }
    }
    auto fields = split_delimited(line, delim);
    if (static_cast<int>(fields.size()) <= std::max(text_col, intent_col)) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) +
                       ": too few columns");
    }
    LabeledExample example;
    example.tokens =
        tokenize(strip_bos_eos(fields[static_cast<std::size_t>(text_col)]));
    example.intent = fields[static_cast<std::size_t>(intent_col)];
    if (example.tokens.empty() || example.intent.empty()) continue;
    out.add(example);
  }
  return out;
}

inline std::filesystem::path find_file(const std::filesystem::path& dir,
                                       const std::string& needle) {
  namespace fs = std::filesystem;
  std::vector<fs::path> hits;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = lower(entry.path().filename().string());
    std::string ext = lower(entry.path().extension().string());
    if ((ext == ".csv" || ext == ".tsv") && name.find(needle) != std::string::npos) {
      hits.push_back(entry.path());
    }
  }
  if (hits.empty()) {
    throw FormatError("no *" + needle + "*.csv/.tsv under " + dir.string());
  }
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

}  // namespace detail

// Kaggle-style ATIS export: train and test CSV/TSV files with query and
// intent columns. Intents absent from either split are removed.
inline ConversionCounts convert_atis(const std::string& in_dir,
                                     const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::path dir(in_dir);
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + in_dir);
  LabeledDataset train_raw = detail::load_delimited_queries(detail::find_file(dir, "train"));
  LabeledDataset test_raw = detail::load_delimited_queries(detail::find_file(dir, "test"));

  std::set<std::string> keep;
  for (const auto& name : train_raw.label_names) {
    if (test_raw.label_id(name) >= 0) keep.insert(name);
  }
  LabeledDataset train;
  LabeledDataset test;
  for (const auto& ex : train_raw.examples) {
    if (keep.count(ex.intent) != 0) train.add(ex);
  }
  for (const auto& ex : test_raw.examples) {
    if (keep.count(ex.intent) != 0) test.add(ex);
  }

  fs::create_directories(out_dir);
  save_jsonl(train, (fs::path(out_dir) / "train.jsonl").string());
  save_jsonl(test, (fs::path(out_dir) / "test.jsonl").string());
  ConversionCounts counts;
  for (const auto& ex : train.examples) ++counts.train[ex.intent];
  for (const auto& ex : test.examples) ++counts.test[ex.intent];
  return counts;
}

}  // namespace intentspace
