#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "intentspace/errors.hpp"
#include "intentspace/linalg.hpp"
#include "intentspace/rng.hpp"

namespace intentspace {

enum class SpaceMode { kEuclidean, kSimplex };

enum class BasisForm { kFullMatrix, kReducedRank, kVectorBias };

// Shared bases spanning the intent space. FullMatrix holds one HxH matrix per
// basis; ReducedRank holds K rank-one factors per basis (rows of a KxH
// matrix), composed as sum_k w_k w_k^T; VectorBias holds one H-vector per
// basis.
struct BasisSet {
  BasisForm form = BasisForm::kFullMatrix;
  std::size_t hidden = 0;
  std::size_t rank = 0;  // K, ReducedRank only
  std::vector<Matrix> full;
  std::vector<Matrix> factors;
  std::vector<Vector> bias_vectors;

  std::size_t count() const {
    switch (form) {
      case BasisForm::kFullMatrix: return full.size();
      case BasisForm::kReducedRank: return factors.size();
      case BasisForm::kVectorBias: return bias_vectors.size();
    }
    return 0;
  }
};

// Unnormalised per-intent coordinates over the bases, one row per intent.
struct CoordinateBlock {
  Matrix beta;  // C_total x B
  SpaceMode mode = SpaceMode::kSimplex;
};

// Per-(intent, basis) expansion matrices, present only for intents that were
// explicitly expanded. A fresh block is the identity for every basis.
struct ExpansionBlock {
  std::map<int, std::vector<Matrix>> per_intent;

  bool has(int intent) const { return per_intent.count(intent) != 0; }
};

struct ScorerParams {
  enum class Kind { kShared, kPerIntent };
  Kind kind = Kind::kShared;
  Matrix a;  // Shared: 1xH; PerIntent: one row per intent
  Vector d;  // Shared: dim 1; PerIntent: one entry per intent
};

struct IntentSpaceModel {
  std::size_t hidden = 0;
  std::size_t input_dim = 0;
  Matrix input_weight;   // V, H x d_in
  Vector input_bias;     // b
  Vector initial_state;  // h0
  BasisSet bases;
  CoordinateBlock coords;
  ExpansionBlock expansions;
  ScorerParams scorer;
  std::vector<std::string> labels;     // intent id -> name
  std::size_t seen_intents = 0;        // intents present during seen training

  std::size_t intent_count() const { return labels.size(); }
  std::size_t basis_count() const { return bases.count(); }
};

// ---------------------------------------------------------------------------
// Coordinate handling

inline Vector coordinate_row(const CoordinateBlock& coords, int intent) {
  Vector row(coords.beta.cols);
  for (std::size_t b = 0; b < coords.beta.cols; ++b) {
    row[b] = coords.beta(static_cast<std::size_t>(intent), b);
  }
  return row;
}

// Simplex mode: softmax of the beta row. Euclidean: raw passthrough.
inline Vector normalize_coordinates(const CoordinateBlock& coords, int intent) {
  if (intent < 0 || static_cast<std::size_t>(intent) >= coords.beta.rows) {
    throw RangeError("normalize_coordinates: intent id out of range");
  }
  Vector row = coordinate_row(coords, intent);
  if (coords.mode == SpaceMode::kSimplex) return softmax(row);
  return row;
}

inline Vector normalize_coordinates(const IntentSpaceModel& model, int intent) {
  return normalize_coordinates(model.coords, intent);
}

// ---------------------------------------------------------------------------
// Basis composition

// Materialises basis b as an HxH matrix (ReducedRank: sum_k w_k w_k^T).
inline Matrix basis_matrix(const BasisSet& bases, std::size_t b) {
  switch (bases.form) {
    case BasisForm::kFullMatrix:
      return bases.full[b];
    case BasisForm::kReducedRank: {
      const Matrix& f = bases.factors[b];
      Matrix out(bases.hidden, bases.hidden);
      for (std::size_t k = 0; k < f.rows; ++k) {
        outer_accumulate(out, 1.0, {f.row(k), f.cols}, {f.row(k), f.cols});
      }
      return out;
    }
    case BasisForm::kVectorBias:
      throw UnsupportedFormError("basis_matrix: vector-bias bases have no matrix form");
  }
  throw UnsupportedFormError("basis_matrix: unknown form");
}

// U_c = sum_b alpha_{c,b} W_b, or sum_b alpha_{c,b} Omega_{c,b} W_b when the
// intent has an expansion block. A exactly-one-hot coordinate row returns the
// selected basis unchanged.
inline Matrix compose_recurrent(const IntentSpaceModel& model, int intent) {
  if (model.bases.form == BasisForm::kVectorBias) {
    throw UnsupportedFormError(
        "compose_recurrent: vector-bias bases compose with compose_bias");
  }
  Vector alpha = normalize_coordinates(model, intent);
  std::size_t h = model.hidden;
  bool expanded = model.expansions.has(intent);

  if (!expanded) {
    int only = -1;
    int nonzero = 0;
    for (std::size_t b = 0; b < alpha.dim(); ++b) {
      if (alpha[b] != 0.0) {
        ++nonzero;
        only = static_cast<int>(b);
      }
    }
    if (nonzero == 1 && alpha[static_cast<std::size_t>(only)] == 1.0) {
      return basis_matrix(model.bases, static_cast<std::size_t>(only));
    }
  }

  Matrix composed(h, h);
  const std::vector<Matrix>* omega =
      expanded ? &model.expansions.per_intent.at(intent) : nullptr;
  for (std::size_t b = 0; b < alpha.dim(); ++b) {
    if (alpha[b] == 0.0) continue;
    Matrix w = basis_matrix(model.bases, b);
    if (omega != nullptr) w = matmul((*omega)[b], w);
    axpy(alpha[b], {w.data.data(), w.data.size()},
         {composed.data.data(), composed.data.size()});
  }
  return composed;
}

// u_c = sum_b alpha_{c,b} w_b for vector-bias bases.
inline Vector compose_bias(const IntentSpaceModel& model, int intent) {
  if (model.bases.form != BasisForm::kVectorBias) {
    throw UnsupportedFormError("compose_bias: bases are not vector-bias form");
  }
  Vector alpha = normalize_coordinates(model, intent);
  Vector out(model.hidden);
  for (std::size_t b = 0; b < alpha.dim(); ++b) {
    if (alpha[b] == 0.0) continue;
    axpy(alpha[b], {model.bases.bias_vectors[b].data.data(), model.hidden},
         {out.data.data(), model.hidden});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass

struct IntentTrace {
  // states[0] is h0; states[t] is the history state after word t.
  std::vector<Vector> states;

  const Vector& final_state() const { return states.back(); }
};

// Shared per-sentence work: proj[t] = V x_t + b.
inline std::vector<Vector> input_projection(const IntentSpaceModel& model,
                                            std::span<const Vector> sentence) {
  std::vector<Vector> proj;
  proj.reserve(sentence.size());
  for (const Vector& word : sentence) {
    if (word.dim() != model.input_dim) {
      throw ShapeError("forward: word vector dim " + std::to_string(word.dim()) +
                       " != model input dim " + std::to_string(model.input_dim));
    }
    Vector p = matvec(model.input_weight, word);
    axpy(1.0, {model.input_bias.data.data(), model.hidden},
         {p.data.data(), model.hidden});
    proj.push_back(std::move(p));
  }
  return proj;
}

// h_t = sigmoid(U h_{t-1} + proj_t) starting from h0.
inline IntentTrace recurrence(const Matrix& recurrent,
                              std::span<const Vector> proj, const Vector& h0) {
  IntentTrace trace;
  trace.states.reserve(proj.size() + 1);
  trace.states.push_back(h0);
  for (const Vector& p : proj) {
    Vector pre = matvec(recurrent, trace.states.back());
    axpy(1.0, {p.data.data(), p.dim()}, {pre.data.data(), pre.dim()});
    trace.states.push_back(elementwise_sigmoid(pre));
  }
  return trace;
}

// Intent-dependent history states for intent c over the sentence.
inline IntentTrace forward_intent(const IntentSpaceModel& model,
                                  std::span<const Vector> sentence, int intent) {
  if (sentence.empty()) throw EmptyInputError("forward_intent: empty sentence");
  Matrix recurrent = compose_recurrent(model, intent);
  std::vector<Vector> proj = input_projection(model, sentence);
  return recurrence(recurrent, proj, model.initial_state);
}

// ---------------------------------------------------------------------------
// Scoring

// Raw affine score a^T h + d for intent c (shared or per-intent parameters).
inline double affine_score(const IntentSpaceModel& model, const Vector& h,
                           int intent) {
  std::size_t row =
      model.scorer.kind == ScorerParams::Kind::kShared ? 0 : static_cast<std::size_t>(intent);
  if (h.dim() != model.scorer.a.cols || row >= model.scorer.a.rows) {
    throw ShapeError("score: scorer shape mismatch");
  }
  return dot({model.scorer.a.row(row), model.scorer.a.cols},
             {h.data.data(), h.dim()}) +
         model.scorer.d[row];
}

// Sigmoid of the affine score; clamped away from zero so the score-sum
// normalisation always has a positive denominator.
inline double score(const IntentSpaceModel& model, const Vector& h, int intent) {
  double s = sigmoid(affine_score(model, h, intent));
  return s > 1e-300 ? s : 1e-300;
}

// P(c) = S_c / sum_k S_k over every intent currently in the model.
inline Vector predict_distribution(const IntentSpaceModel& model,
                                   std::span<const Vector> sentence) {
  std::size_t c_total = model.intent_count();
  if (c_total == 0) throw ConfigError("predict: model has no intents");
  if (sentence.empty()) throw EmptyInputError("predict: empty sentence");
  std::vector<Vector> proj = input_projection(model, sentence);
  Vector scores(c_total);
  double sum = 0.0;
  for (std::size_t c = 0; c < c_total; ++c) {
    Matrix recurrent = compose_recurrent(model, static_cast<int>(c));
    IntentTrace trace = recurrence(recurrent, proj, model.initial_state);
    scores[c] = score(model, trace.final_state(), static_cast<int>(c));
    sum += scores[c];
  }
  for (std::size_t c = 0; c < c_total; ++c) scores[c] /= sum;
  return scores;
}

// Shannon entropy (natural log) of a probability vector, 0 log 0 := 0.
inline double entropy(const Vector& dist) {
  double h = 0.0;
  for (double p : dist) {
    if (p < 0.0) throw DomainError("entropy: negative probability");
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Discrete-softmax baseline

struct BaselineRnn {
  Matrix recurrent;      // U, H x H
  Matrix input_weight;   // V, H x d_in
  Vector input_bias;     // b
  Matrix output_weight;  // A, C x H
  Vector output_bias;    // d
  Vector initial_state;  // h0
};

inline Vector baseline_forward(const BaselineRnn& rnn,
                               std::span<const Vector> sentence) {
  if (sentence.empty()) throw EmptyInputError("baseline_forward: empty sentence");
  Vector h = rnn.initial_state;
  for (const Vector& word : sentence) {
    Vector pre = matvec(rnn.recurrent, h);
    Vector vx = matvec(rnn.input_weight, word);
    axpy(1.0, {vx.data.data(), vx.dim()}, {pre.data.data(), pre.dim()});
    axpy(1.0, {rnn.input_bias.data.data(), rnn.input_bias.dim()},
         {pre.data.data(), pre.dim()});
    h = elementwise_sigmoid(pre);
  }
  Vector logits = matvec(rnn.output_weight, h);
  axpy(1.0, {rnn.output_bias.data.data(), rnn.output_bias.dim()},
       {logits.data.data(), logits.dim()});
  return softmax(logits);
}

// ---------------------------------------------------------------------------
// Initialisation

struct ModelInit {
  std::size_t hidden = 300;
  std::size_t input_dim = 300;
  BasisForm form = BasisForm::kFullMatrix;
  std::size_t rank = 1;  // K when ReducedRank
  SpaceMode mode = SpaceMode::kSimplex;
  ScorerParams::Kind scorer_kind = ScorerParams::Kind::kShared;
  double init_noise = 0.05;      // uniform half-width for random parameters
  double onehot_beta = 10.0;     // simplex beta magnitude for one-hot rows
  std::uint64_t seed = 1;
};

// Builds the seen-training model: one basis per intent, one-hot coordinates,
// V = identity when square, bases = identity plus small uniform noise,
// remaining parameters small uniform noise.
inline IntentSpaceModel make_seen_model(const std::vector<std::string>& labels,
                                        const ModelInit& init) {
  if (labels.empty()) throw ConfigError("make_seen_model: no labels");
  IntentSpaceModel model;
  model.hidden = init.hidden;
  model.input_dim = init.input_dim;
  model.labels = labels;
  model.seen_intents = labels.size();
  std::size_t c = labels.size();
  std::size_t h = init.hidden;

  Rng rng(init.seed);
  if (init.hidden == init.input_dim) {
    model.input_weight = Matrix::identity(h);
  } else {
    model.input_weight = Matrix(h, init.input_dim);
    for (double& v : model.input_weight.data) {
      v = rng.uniform(-init.init_noise, init.init_noise);
    }
  }
  model.input_bias = Vector(h);
  for (double& v : model.input_bias.data) {
    v = rng.uniform(-init.init_noise, init.init_noise);
  }
  model.initial_state = Vector(h);  // zero

  model.bases.form = init.form;
  model.bases.hidden = h;
  switch (init.form) {
    case BasisForm::kFullMatrix:
      for (std::size_t b = 0; b < c; ++b) {
        Matrix w = Matrix::identity(h);
        for (double& v : w.data) v += rng.uniform(-init.init_noise, init.init_noise);
        model.bases.full.push_back(std::move(w));
      }
      break;
    case BasisForm::kReducedRank:
      model.bases.rank = init.rank;
      for (std::size_t b = 0; b < c; ++b) {
        Matrix f(init.rank, h);
        for (double& v : f.data) v = rng.uniform(-init.init_noise, init.init_noise);
        model.bases.factors.push_back(std::move(f));
      }
      break;
    case BasisForm::kVectorBias:
      for (std::size_t b = 0; b < c; ++b) {
        Vector w(h);
        for (double& v : w.data) v = rng.uniform(-init.init_noise, init.init_noise);
        model.bases.bias_vectors.push_back(std::move(w));
      }
      break;
  }

  // One basis per intent. Euclidean rows are exactly one-hot; simplex rows
  // put onehot_beta on the diagonal so the normalised row is one-hot-like.
  model.coords.mode = init.mode;
  model.coords.beta = Matrix(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    model.coords.beta(i, i) = init.mode == SpaceMode::kSimplex ? init.onehot_beta : 1.0;
  }

  model.scorer.kind = init.scorer_kind;
  std::size_t scorer_rows = init.scorer_kind == ScorerParams::Kind::kShared ? 1 : c;
  model.scorer.a = Matrix(scorer_rows, h);
  model.scorer.d = Vector(scorer_rows);
  for (double& v : model.scorer.a.data) {
    v = rng.uniform(-init.init_noise, init.init_noise);
  }
  for (double& v : model.scorer.d.data) {
    v = rng.uniform(-init.init_noise, init.init_noise);
  }
  return model;
}

}  // namespace intentspace
