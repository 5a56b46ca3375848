#pragma once

#include <cctype>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "intentspace/errors.hpp"
#include "intentspace/linalg.hpp"

namespace intentspace {

// Pre-trained word vectors plus the fallback used for out-of-vocabulary
// tokens: the arithmetic mean over every row of the source file.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, Vector> entries;
  Vector oov_vector;

  const Vector& lookup(const std::string& token) const {
    auto it = entries.find(token);
    return it == entries.end() ? oov_vector : it->second;
  }
};

// Lowercase, split on whitespace, strip leading/trailing ASCII punctuation
// per token, drop empties. Interior punctuation ("what's") is kept.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) continue;
    std::size_t lo = start;
    std::size_t hi = i;
    auto is_ascii_punct = [&](char c) {
      unsigned char u = static_cast<unsigned char>(c);
      return u < 128 && std::ispunct(u);
    };
    while (lo < hi && is_ascii_punct(text[lo])) ++lo;
    while (hi > lo && is_ascii_punct(text[hi - 1])) --hi;
    if (lo == hi) continue;
    std::string token(text.substr(lo, hi - lo));
    for (char& c : token) {
      unsigned char u = static_cast<unsigned char>(c);
      if (u < 128) c = static_cast<char>(std::tolower(u));
    }
    tokens.push_back(std::move(token));
  }
  return tokens;
}

// GloVe text format: one record per line, token followed by `dim` floats,
// single-space separated, no header. When `vocab` is given only those tokens
// are stored, but the OOV mean is still taken over every row in the file.
inline EmbeddingTable load_embeddings(
    const std::string& path, std::size_t dim,
    const std::unordered_set<std::string>* vocab = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path);

  EmbeddingTable table;
  table.dim = dim;
  Vector sum(dim);
  std::size_t row_count = 0;
  std::string line;
  std::size_t line_no = 0;
  Vector values(dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) {
      throw ParseError("embedding file " + path + " line " +
                       std::to_string(line_no) + ": expected token and values");
    }
    std::string token = line.substr(0, sp);
    const char* cursor = line.data() + sp;
    const char* end = line.data() + line.size();
    std::size_t count = 0;
    while (cursor < end) {
      while (cursor < end && *cursor == ' ') ++cursor;
      if (cursor == end) break;
      double value = 0.0;
      auto [next, ec] = std::from_chars(cursor, end, value);
      if (ec != std::errc()) {
        throw ParseError("embedding file " + path + " line " +
                         std::to_string(line_no) + ": bad float near column " +
                         std::to_string(cursor - line.data() + 1));
      }
      if (count >= dim) {
        ++count;
        break;
      }
      values[count++] = value;
      cursor = next;
    }
    if (count != dim) {
      throw FormatError("embedding file " + path + " line " +
                        std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, found " +
                        std::to_string(count));
    }
    if (!all_finite({values.data.data(), values.dim()})) {
      throw NumericError("embedding file " + path + " line " +
                         std::to_string(line_no) + ": non-finite value");
    }
    for (std::size_t i = 0; i < dim; ++i) sum[i] += values[i];
    ++row_count;
    if (vocab == nullptr || vocab->count(token) != 0) {
      table.entries.emplace(std::move(token), values);
    }
  }
  if (row_count == 0) {
    throw FormatError("embedding file " + path + " has no vectors to average");
  }
  table.oov_vector = Vector(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    table.oov_vector[i] = sum[i] / static_cast<double>(row_count);
  }
  return table;
}

inline std::vector<Vector> encode_sentence(const EmbeddingTable& table,
                                           const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw EmptyInputError("encode_sentence: no tokens");
  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (const auto& token : tokens) out.push_back(table.lookup(token));
  return out;
}

}  // namespace intentspace
