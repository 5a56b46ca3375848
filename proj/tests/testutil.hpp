#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "intentspace/data.hpp"
#include "intentspace/embeddings.hpp"
#include "intentspace/linalg.hpp"
#include "intentspace/model.hpp"
#include "intentspace/rng.hpp"
#include "intentspace/training.hpp"

namespace testutil {

namespace fs = std::filesystem;
using namespace intentspace;

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "intentspace-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (mkdtemp(buf.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// In-memory embedding table with deterministic vectors per token.
inline EmbeddingTable synthetic_table(const std::vector<std::string>& tokens,
                                      std::size_t dim, std::uint64_t seed) {
  EmbeddingTable table;
  table.dim = dim;
  Rng rng(seed);
  Vector sum(dim);
  for (const auto& token : tokens) {
    Vector v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
    table.entries.emplace(token, std::move(v));
  }
  table.oov_vector = Vector(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    table.oov_vector[i] = sum[i] / static_cast<double>(tokens.size());
  }
  return table;
}

// Separable synthetic dataset: each intent draws from its own token pool.
struct ToyWorld {
  std::vector<std::string> intents;
  std::vector<std::vector<std::string>> pools;
  LabeledDataset data;
  EmbeddingTable table;
};

inline ToyWorld make_toy_world(int per_intent = 24, std::size_t dim = 12,
                               std::uint64_t seed = 42, int n_intents = 3) {
  ToyWorld world;
  const char* names[] = {"alpha_intent", "beta_intent", "gamma_intent",
                         "delta_intent"};
  std::vector<std::string> all_tokens;
  Rng rng(seed);
  for (int c = 0; c < n_intents; ++c) {
    world.intents.push_back(names[c]);
    std::vector<std::string> pool;
    for (int w = 0; w < 8; ++w) {
      pool.push_back(std::string(names[c]) + "_w" + std::to_string(w));
    }
    all_tokens.insert(all_tokens.end(), pool.begin(), pool.end());
    world.pools.push_back(std::move(pool));
  }
  for (int c = 0; c < n_intents; ++c) {
    for (int i = 0; i < per_intent; ++i) {
      LabeledExample ex;
      std::size_t len = 3 + rng.below(3);
      for (std::size_t t = 0; t < len; ++t) {
        ex.tokens.push_back(world.pools[c][rng.below(world.pools[c].size())]);
      }
      ex.intent = world.intents[c];
      world.data.add(std::move(ex));
    }
  }
  world.table = synthetic_table(all_tokens, dim, seed + 1);
  return world;
}

// Random small model with an extension intent, mirroring the diagnostics
// probe but reusable with explicit shapes.
inline IntentSpaceModel tiny_model(std::uint64_t seed, std::size_t hidden = 4,
                                   std::size_t input_dim = 3, std::size_t c = 2,
                                   SpaceMode mode = SpaceMode::kSimplex,
                                   ScorerParams::Kind kind = ScorerParams::Kind::kShared,
                                   BasisForm form = BasisForm::kFullMatrix) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < c; ++i) labels.push_back("intent" + std::to_string(i));
  ModelInit init;
  init.hidden = hidden;
  init.input_dim = input_dim;
  init.mode = mode;
  init.scorer_kind = kind;
  init.form = form;
  init.rank = 2;
  init.seed = seed;
  return make_seen_model(labels, init);
}

inline std::vector<Vector> random_sentence(Rng& rng, std::size_t len, std::size_t dim) {
  std::vector<Vector> words;
  for (std::size_t t = 0; t < len; ++t) {
    Vector v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = rng.uniform(-1.0, 1.0);
    words.push_back(std::move(v));
  }
  return words;
}

inline EncodedCorpus encode_sentences(const std::vector<std::vector<Vector>>& sentences,
                                      const std::vector<int>& labels) {
  EncodedCorpus corpus;
  corpus.dim = sentences.front().front().dim();
  std::vector<double> vectors;
  int row = 0;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    EncodedExample ex;
    ex.label = labels[s];
    for (const Vector& word : sentences[s]) {
      vectors.insert(vectors.end(), word.begin(), word.end());
      ex.words.push_back(row++);
    }
    corpus.examples.push_back(std::move(ex));
  }
  corpus.word_vectors.rows = static_cast<std::size_t>(row);
  corpus.word_vectors.cols = corpus.dim;
  corpus.word_vectors.data = std::move(vectors);
  return corpus;
}

// Cyclic Jacobi eigenvalues for symmetric matrices (test-only helper for the
// reduced-rank checks).
inline std::vector<double> symmetric_eigenvalues(Matrix m, int sweeps = 50) {
  std::size_t n = m.rows;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    }
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(m(p, q)) < 1e-300) continue;
        double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double cos = 1.0 / std::sqrt(t * t + 1.0);
        double sin = t * cos;
        for (std::size_t k = 0; k < n; ++k) {
          double mkp = m(k, p);
          double mkq = m(k, q);
          m(k, p) = cos * mkp - sin * mkq;
          m(k, q) = sin * mkp + cos * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double mpk = m(p, k);
          double mqk = m(q, k);
          m(p, k) = cos * mpk - sin * mqk;
          m(q, k) = sin * mpk + cos * mqk;
        }
      }
    }
  }
  std::vector<double> eig;
  for (std::size_t i = 0; i < n; ++i) eig.push_back(m(i, i));
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

}  // namespace testutil
