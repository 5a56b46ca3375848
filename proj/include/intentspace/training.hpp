#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "intentspace/data.hpp"
#include "intentspace/embeddings.hpp"
#include "intentspace/errors.hpp"
#include "intentspace/linalg.hpp"
#include "intentspace/model.hpp"

namespace intentspace {

// ---------------------------------------------------------------------------
// Configuration

struct SgdOptions {
  double lr = 0.05;
  double weight_decay = 1e-5;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerOptions {
  enum class Kind { kSgd, kAdam };
  Kind kind = Kind::kSgd;
  SgdOptions sgd;
  AdamOptions adam;
};

struct TrainingConfig {
  OptimizerOptions optimizer;
  int interleave_epochs = 5;
  int max_epochs_seen = 50;
  int max_epochs_coords = 150;
  int max_epochs_omega = 500;
  double epsilon = 0.20;  // rank-preservation weight
  double zeta = 1.00;     // coordinate-regulariser weight
  int early_stop_patience = 5;
  int batch_size = 16;
  std::uint64_t seed = 1;
  int k_reg_sentences = 50;  // regulariser sample size per seen intent
  int threads = 1;
  bool restore_best = true;  // keep the best-metric snapshot, not the last epoch

  void validate() const {
    if (interleave_epochs <= 0) throw ConfigError("interleave_epochs must be positive");
    if (max_epochs_seen <= 0 || max_epochs_coords <= 0 || max_epochs_omega <= 0) {
      throw ConfigError("epoch limits must be positive");
    }
    if (epsilon < 0.0 || zeta < 0.0) throw ConfigError("epsilon and zeta must be >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (threads <= 0) throw ConfigError("threads must be positive");
    double lr = optimizer.kind == OptimizerOptions::Kind::kSgd ? optimizer.sgd.lr
                                                               : optimizer.adam.lr;
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  }
};

// Which parameter blocks receive gradients and updates. Row scopes restrict
// coordinates / per-intent scorer rows / expansion blocks to given intents.
struct ParamSelector {
  bool bases = false;
  bool coordinates = false;
  bool expansions = false;
  bool input = false;
  bool scorer = false;
  std::optional<std::vector<int>> coordinate_rows;
  std::optional<std::vector<int>> scorer_rows;
  std::optional<std::vector<int>> expansion_intents;

  bool empty() const {
    return !bases && !coordinates && !expansions && !input && !scorer;
  }

  static ParamSelector seen_bases_phase() {
    ParamSelector s;
    s.bases = s.input = s.scorer = true;
    return s;
  }
  static ParamSelector seen_coordinate_phase() {
    ParamSelector s;
    s.coordinates = true;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Encoded corpora: tokens mapped to rows of a dense embedding matrix, labels
// mapped to model intent ids.

struct EncodedExample {
  std::vector<int> words;
  int label = -1;
};

struct EncodedCorpus {
  std::size_t dim = 0;
  Matrix word_vectors;
  std::vector<EncodedExample> examples;

  std::size_t size() const { return examples.size(); }
};

inline EncodedCorpus encode_corpus(const EmbeddingTable& table,
                                   const LabeledDataset& data,
                                   std::span<const std::string> target_labels) {
  std::unordered_map<std::string, int> label_map;
  for (std::size_t i = 0; i < target_labels.size(); ++i) {
    label_map.emplace(target_labels[i], static_cast<int>(i));
  }
  EncodedCorpus corpus;
  corpus.dim = table.dim;
  std::unordered_map<std::string, int> token_rows;
  std::vector<double> vectors;
  for (const auto& example : data.examples) {
    auto label_it = label_map.find(example.intent);
    if (label_it == label_map.end()) {
      throw EvalError("unknown label: " + example.intent);
    }
    EncodedExample encoded;
    encoded.label = label_it->second;
    encoded.words.reserve(example.tokens.size());
    for (const auto& token : example.tokens) {
      auto [it, inserted] = token_rows.emplace(
          token, static_cast<int>(token_rows.size()));
      if (inserted) {
        const Vector& vec = table.lookup(token);
        vectors.insert(vectors.end(), vec.begin(), vec.end());
      }
      encoded.words.push_back(it->second);
    }
    corpus.examples.push_back(std::move(encoded));
  }
  corpus.word_vectors.rows = token_rows.size();
  corpus.word_vectors.cols = table.dim;
  corpus.word_vectors.data = std::move(vectors);
  return corpus;
}

// ---------------------------------------------------------------------------
// Gradients

struct Gradients {
  Matrix input_weight;
  Vector input_bias;
  std::vector<Matrix> bases;  // FullMatrix: HxH per basis; ReducedRank: KxH factors
  Matrix beta;
  std::map<int, std::vector<Matrix>> expansions;
  Matrix scorer_a;
  Vector scorer_d;

  // Accumulated dLoss/dU_c per intent, consumed by the composition backward.
  std::vector<Matrix> du_recurrent;
  std::vector<std::uint8_t> du_set;

  void add(const Gradients& other) {
    auto add_mat = [](Matrix& a, const Matrix& b) {
      for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
    };
    if (!other.input_weight.data.empty()) add_mat(input_weight, other.input_weight);
    for (std::size_t i = 0; i < input_bias.dim(); ++i) {
      input_bias[i] += other.input_bias[i];
    }
    for (std::size_t b = 0; b < bases.size(); ++b) add_mat(bases[b], other.bases[b]);
    if (!other.beta.data.empty()) add_mat(beta, other.beta);
    for (const auto& [intent, mats] : other.expansions) {
      auto& mine = expansions.at(intent);
      for (std::size_t b = 0; b < mats.size(); ++b) add_mat(mine[b], mats[b]);
    }
    if (!other.scorer_a.data.empty()) add_mat(scorer_a, other.scorer_a);
    for (std::size_t i = 0; i < scorer_d.dim(); ++i) scorer_d[i] += other.scorer_d[i];
    for (std::size_t c = 0; c < du_recurrent.size(); ++c) {
      if (other.du_set[c]) {
        if (!du_set[c] || du_recurrent[c].data.empty()) {
          du_recurrent[c] = other.du_recurrent[c];
        } else {
          add_mat(du_recurrent[c], other.du_recurrent[c]);
        }
        du_set[c] = 1;
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Forward/backward engine. Holds composed recurrent matrices for the current
// parameter values and score caches for intents that are frozen under the
// selector, so repeated passes over unchanged intents cost nothing.

class TrainingEngine {
 public:
  TrainingEngine(const IntentSpaceModel& model, ParamSelector selector)
      : model_(model), selector_(std::move(selector)) {
    std::size_t c_total = model.intent_count();
    live_.assign(c_total, 0);
    need_bptt_.assign(c_total, 0);
    bool all_live = selector_.bases || selector_.input;
    if (selector_.scorer) {
      if (model.scorer.kind == ScorerParams::Kind::kShared || !selector_.scorer_rows) {
        all_live = true;
      }
    }
    auto in_scope = [](const std::optional<std::vector<int>>& scope, int c) {
      return !scope || std::find(scope->begin(), scope->end(), c) != scope->end();
    };
    for (int c = 0; c < static_cast<int>(c_total); ++c) {
      bool coord = selector_.coordinates && in_scope(selector_.coordinate_rows, c);
      bool omega = selector_.expansions && model.expansions.has(c) &&
                   in_scope(selector_.expansion_intents, c);
      bool scorer_row = selector_.scorer &&
                        model.scorer.kind == ScorerParams::Kind::kPerIntent &&
                        selector_.scorer_rows && in_scope(selector_.scorer_rows, c);
      live_[c] = all_live || coord || omega || scorer_row;
      need_bptt_[c] = selector_.bases || selector_.input || coord || omega;
    }
    composed_.resize(c_total);
    omega_w_.resize(c_total);
    refresh();
  }

  const ParamSelector& selector() const { return selector_; }
  bool live(int c) const { return live_[static_cast<std::size_t>(c)] != 0; }

  // Recompute composed matrices after a parameter update. Frozen intents are
  // composed once (first call); live intents every time.
  void refresh() {
    std::size_t c_total = model_.intent_count();
    if (model_.bases.form == BasisForm::kVectorBias) {
      throw UnsupportedFormError("training: vector-bias bases are not trainable");
    }
    bool first = basis_mats_.empty();
    if (first || selector_.bases) {
      basis_mats_.clear();
      for (std::size_t b = 0; b < model_.basis_count(); ++b) {
        basis_mats_.push_back(basis_matrix(model_.bases, b));
      }
    }
    for (std::size_t c = 0; c < c_total; ++c) {
      if (!first && !live_[c]) continue;
      Vector alpha = normalize_coordinates(model_, static_cast<int>(c));
      Matrix composed(model_.hidden, model_.hidden);
      if (model_.expansions.has(static_cast<int>(c))) {
        const auto& omegas = model_.expansions.per_intent.at(static_cast<int>(c));
        auto& cache = omega_w_[c];
        cache.clear();
        for (std::size_t b = 0; b < alpha.dim(); ++b) {
          cache.push_back(matmul(omegas[b], basis_mats_[b]));
          if (alpha[b] != 0.0) {
            axpy(alpha[b], {cache[b].data.data(), cache[b].data.size()},
                 {composed.data.data(), composed.data.size()});
          }
        }
      } else {
        for (std::size_t b = 0; b < alpha.dim(); ++b) {
          if (alpha[b] == 0.0) continue;
          axpy(alpha[b], {basis_mats_[b].data.data(), basis_mats_[b].data.size()},
               {composed.data.data(), composed.data.size()});
        }
      }
      composed_[c] = std::move(composed);
    }
  }

  // Prime the frozen-score cache for a corpus so later evaluations skip the
  // recurrences of frozen intents. Safe only while those intents stay frozen.
  void prime_cache(const EncodedCorpus& corpus) {
    std::size_t c_total = model_.intent_count();
    bool any_frozen = false;
    for (std::size_t c = 0; c < c_total; ++c) {
      if (!live_[c]) any_frozen = true;
    }
    if (!any_frozen) return;
    auto& cache = caches_[&corpus];
    cache.assign(corpus.size(), Vector());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      std::vector<Vector> proj = project(corpus, corpus.examples[i]);
      Vector scores(c_total);
      for (std::size_t c = 0; c < c_total; ++c) {
        if (live_[c]) continue;
        IntentTrace trace = recurrence(composed_[c], proj, model_.initial_state);
        scores[c] = score(model_, trace.final_state(), static_cast<int>(c));
      }
      cache[i] = std::move(scores);
    }
  }

  struct Eval {
    std::vector<Vector> proj;
    std::vector<IntentTrace> traces;  // per intent; empty for frozen intents
    Vector s;                         // sigmoid scores, all intents
    double s_sum = 0.0;
  };

  Eval evaluate(const EncodedCorpus& corpus, std::size_t row, bool with_traces) const {
    const EncodedExample& ex = corpus.examples[row];
    std::size_t c_total = model_.intent_count();
    Eval ev;
    ev.proj = project(corpus, ex);
    ev.s = Vector(c_total);
    const std::vector<Vector>* cache = nullptr;
    auto it = caches_.find(&corpus);
    if (it != caches_.end()) cache = &it->second;
    if (with_traces) ev.traces.resize(c_total);
    for (std::size_t c = 0; c < c_total; ++c) {
      if (!live_[c] && cache != nullptr) {
        ev.s[c] = (*cache)[row][c];
        continue;
      }
      IntentTrace trace = recurrence(composed_[c], ev.proj, model_.initial_state);
      ev.s[c] = score(model_, trace.final_state(), static_cast<int>(c));
      if (with_traces) ev.traces[c] = std::move(trace);
    }
    for (std::size_t c = 0; c < c_total; ++c) ev.s_sum += ev.s[c];
    return ev;
  }

  // Negative log-likelihood of `label` under the score-sum normalisation.
  // Adds dLoss/dz seeds (z = raw affine score) scaled by `weight`.
  double nll_with_seeds(const Eval& ev, int label, double weight,
                        std::span<double> seeds) const {
    double p = ev.s[static_cast<std::size_t>(label)] / ev.s_sum;
    for (std::size_t c = 0; c < ev.s.dim(); ++c) {
      double ds = 1.0 / ev.s_sum;
      if (static_cast<int>(c) == label) ds -= 1.0 / ev.s[c];
      seeds[c] += weight * ds * ev.s[c] * (1.0 - ev.s[c]);
    }
    return -weight * std::log(p);
  }

  // One sentence of the rank-preservation term: for each unseen id u adds
  // -w * (log max_{c in seen} S_c - log S_u) and the matching seeds.
  double rank_reg_with_seeds(const Eval& ev, std::span<const int> unseen_ids,
                             double pair_weight, std::span<double> seeds) const {
    std::size_t seen = model_.seen_intents;
    if (seen == 0) throw ConfigError("rank regulariser: model has no seen intents");
    std::size_t best = 0;
    for (std::size_t c = 1; c < seen; ++c) {
      if (ev.s[c] > ev.s[best]) best = c;
    }
    double log_best = std::log(ev.s[best]);
    double value = 0.0;
    for (int u : unseen_ids) {
      double su = ev.s[static_cast<std::size_t>(u)];
      value -= pair_weight * (log_best - std::log(su));
      seeds[static_cast<std::size_t>(u)] += pair_weight * (1.0 - su);
      seeds[best] -= pair_weight * (1.0 - ev.s[best]);
    }
    return value;
  }

  // Backpropagate the seeded objective through scorer, recurrences and input
  // projection. Composition backward happens later in finish().
  void backward(const EncodedCorpus& corpus, std::size_t row, const Eval& ev,
                std::span<const double> seeds, Gradients& grads) const {
    const EncodedExample& ex = corpus.examples[row];
    std::size_t c_total = model_.intent_count();
    std::size_t h = model_.hidden;
    bool per_intent = model_.scorer.kind == ScorerParams::Kind::kPerIntent;
    auto in_scope = [](const std::optional<std::vector<int>>& scope, int c) {
      return !scope || std::find(scope->begin(), scope->end(), c) != scope->end();
    };
    for (std::size_t c = 0; c < c_total; ++c) {
      double seed = seeds[c];
      if (seed == 0.0 || !live_[c]) continue;
      const IntentTrace& trace = ev.traces[c];
      const Vector& h_final = trace.final_state();
      if (selector_.scorer) {
        std::size_t srow = per_intent ? c : 0;
        bool row_ok = !per_intent || in_scope(selector_.scorer_rows, static_cast<int>(c));
        if (row_ok) {
          axpy(seed, {h_final.data.data(), h}, {grads.scorer_a.row(srow), h});
          grads.scorer_d[srow] += seed;
        }
      }
      if (!need_bptt_[c]) continue;

      std::size_t srow = per_intent ? c : 0;
      Vector g(h);
      axpy(seed, {model_.scorer.a.row(srow), h}, {g.data.data(), h});

      const Matrix& recurrent = composed_[c];
      Matrix* du = nullptr;
      if (selector_.bases || selector_.coordinates || selector_.expansions) {
        if (grads.du_recurrent[c].data.empty()) {
          grads.du_recurrent[c] = Matrix(h, h);
        }
        du = &grads.du_recurrent[c];
        grads.du_set[c] = 1;
      }
      for (std::size_t t = ex.words.size(); t >= 1; --t) {
        const Vector& h_t = trace.states[t];
        const Vector& h_prev = trace.states[t - 1];
        Vector q(h);
        for (std::size_t i = 0; i < h; ++i) {
          q[i] = g[i] * h_t[i] * (1.0 - h_t[i]);
        }
        if (du != nullptr) {
          outer_accumulate(*du, 1.0, {q.data.data(), h}, {h_prev.data.data(), h});
        }
        if (selector_.input) {
          const double* word = corpus.word_vectors.row(
              static_cast<std::size_t>(ex.words[t - 1]));
          outer_accumulate(grads.input_weight, 1.0, {q.data.data(), h},
                           {word, corpus.dim});
          axpy(1.0, {q.data.data(), h}, {grads.input_bias.data.data(), h});
        }
        if (t > 1) g = matvec_transposed(recurrent, q);
      }
    }
  }

  // Composition backward: turn accumulated dU_c into basis, coordinate and
  // expansion gradients. Call once per step after all sentences.
  void finish(Gradients& grads) const {
    std::size_t c_total = model_.intent_count();
    std::size_t b_count = model_.basis_count();
    std::size_t h = model_.hidden;
    bool reduced = model_.bases.form == BasisForm::kReducedRank;
    std::vector<Matrix> basis_acc;  // dLoss/dW_b as full matrices
    if (selector_.bases) basis_acc.assign(b_count, Matrix(h, h));
    auto in_scope = [](const std::optional<std::vector<int>>& scope, int c) {
      return !scope || std::find(scope->begin(), scope->end(), c) != scope->end();
    };
    for (std::size_t c = 0; c < c_total; ++c) {
      if (!grads.du_set[c]) continue;
      const Matrix& g = grads.du_recurrent[c];
      Vector alpha = normalize_coordinates(model_, static_cast<int>(c));
      bool expanded = model_.expansions.has(static_cast<int>(c));
      bool want_coord = selector_.coordinates &&
                        in_scope(selector_.coordinate_rows, static_cast<int>(c));
      bool want_omega = selector_.expansions && expanded &&
                        in_scope(selector_.expansion_intents, static_cast<int>(c));
      Vector dalpha(alpha.dim());
      for (std::size_t b = 0; b < b_count; ++b) {
        const Matrix& m = expanded ? omega_w_[c][b] : basis_mats_[b];
        if (want_coord) dalpha[b] = frobenius_dot(g, m);
        if (selector_.bases) {
          if (expanded) {
            const Matrix& omega = model_.expansions.per_intent.at(static_cast<int>(c))[b];
            matmul_atb_accumulate(basis_acc[b], alpha[b], omega, g);
          } else {
            axpy(alpha[b], {g.data.data(), g.data.size()},
                 {basis_acc[b].data.data(), basis_acc[b].data.size()});
          }
        }
        if (want_omega) {
          matmul_abt_accumulate(grads.expansions.at(static_cast<int>(c))[b], alpha[b],
                                g, basis_mats_[b]);
        }
      }
      if (want_coord) {
        add_coordinate_gradient(static_cast<int>(c), alpha, dalpha, grads.beta);
      }
    }
    if (selector_.bases) {
      for (std::size_t b = 0; b < b_count; ++b) {
        if (reduced) {
          // W_b = sum_k w_k w_k^T, so dw_k = (G + G^T) w_k.
          const Matrix& factors = model_.bases.factors[b];
          for (std::size_t k = 0; k < factors.rows; ++k) {
            const double* w = factors.row(k);
            double* out = grads.bases[b].row(k);
            for (std::size_t i = 0; i < h; ++i) {
              double acc = 0.0;
              for (std::size_t j = 0; j < h; ++j) {
                acc += (basis_acc[b](i, j) + basis_acc[b](j, i)) * w[j];
              }
              out[i] += acc;
            }
          }
        } else {
          axpy(1.0, {basis_acc[b].data.data(), basis_acc[b].data.size()},
               {grads.bases[b].data.data(), grads.bases[b].data.size()});
        }
      }
    }
  }

  // dObjective/dbeta row for a given dObjective/dalpha, through the simplex
  // softmax when applicable.
  void add_coordinate_gradient(int intent, const Vector& alpha, const Vector& dalpha,
                               Matrix& beta_grad) const {
    std::size_t b_count = alpha.dim();
    double* out = beta_grad.row(static_cast<std::size_t>(intent));
    if (model_.coords.mode == SpaceMode::kSimplex) {
      double mix = 0.0;
      for (std::size_t b = 0; b < b_count; ++b) mix += alpha[b] * dalpha[b];
      for (std::size_t b = 0; b < b_count; ++b) {
        out[b] += alpha[b] * (dalpha[b] - mix);
      }
    } else {
      for (std::size_t b = 0; b < b_count; ++b) out[b] += dalpha[b];
    }
  }

  Gradients make_gradients() const {
    Gradients g;
    std::size_t h = model_.hidden;
    if (selector_.input) {
      g.input_weight = Matrix(h, model_.input_dim);
      g.input_bias = Vector(h);
    }
    if (selector_.bases) {
      for (std::size_t b = 0; b < model_.basis_count(); ++b) {
        if (model_.bases.form == BasisForm::kReducedRank) {
          g.bases.emplace_back(model_.bases.rank, h);
        } else {
          g.bases.emplace_back(h, h);
        }
      }
    }
    if (selector_.coordinates) {
      g.beta = Matrix(model_.coords.beta.rows, model_.coords.beta.cols);
    }
    if (selector_.expansions) {
      for (const auto& [intent, mats] : model_.expansions.per_intent) {
        if (selector_.expansion_intents &&
            std::find(selector_.expansion_intents->begin(),
                      selector_.expansion_intents->end(),
                      intent) == selector_.expansion_intents->end()) {
          continue;
        }
        g.expansions.emplace(intent, std::vector<Matrix>(mats.size(), Matrix(h, h)));
      }
    }
    if (selector_.scorer) {
      g.scorer_a = Matrix(model_.scorer.a.rows, model_.scorer.a.cols);
      g.scorer_d = Vector(model_.scorer.d.dim());
    }
    g.du_recurrent.resize(model_.intent_count());
    g.du_set.assign(model_.intent_count(), 0);
    return g;
  }

  std::vector<Vector> project(const EncodedCorpus& corpus,
                              const EncodedExample& ex) const {
    std::size_t h = model_.hidden;
    std::vector<Vector> proj;
    proj.reserve(ex.words.size());
    for (int word : ex.words) {
      const double* x = corpus.word_vectors.row(static_cast<std::size_t>(word));
      Vector p(h);
      for (std::size_t r = 0; r < h; ++r) {
        p[r] = dot({model_.input_weight.row(r), model_.input_dim},
                   {x, corpus.dim}) +
               model_.input_bias[r];
      }
      proj.push_back(std::move(p));
    }
    return proj;
  }

 private:
  const IntentSpaceModel& model_;
  ParamSelector selector_;
  std::vector<std::uint8_t> live_;
  std::vector<std::uint8_t> need_bptt_;
  std::vector<Matrix> composed_;
  std::vector<Matrix> basis_mats_;
  std::vector<std::vector<Matrix>> omega_w_;  // per intent: Omega_{c,b} W_b
  std::map<const EncodedCorpus*, std::vector<Vector>> caches_;
};

// ---------------------------------------------------------------------------
// Losses and regularisers (reference implementations over fresh forwards)

namespace detail {

inline ParamSelector live_all_selector() {
  // Everything live, nothing cached; used for pure evaluation.
  ParamSelector s;
  s.input = true;
  return s;
}

}  // namespace detail

inline double loss_nll(const IntentSpaceModel& model, const EncodedCorpus& corpus,
                       std::span<const std::size_t> rows) {
  if (rows.empty()) throw EmptyInputError("loss_nll: empty batch");
  TrainingEngine engine(model, detail::live_all_selector());
  double total = 0.0;
  for (std::size_t row : rows) {
    int label = corpus.examples[row].label;
    if (label < 0 || static_cast<std::size_t>(label) >= model.intent_count()) {
      throw EvalError("loss_nll: label out of range");
    }
    TrainingEngine::Eval ev = engine.evaluate(corpus, row, false);
    total += -std::log(ev.s[static_cast<std::size_t>(label)] / ev.s_sum);
  }
  double loss = total / static_cast<double>(rows.size());
  if (!std::isfinite(loss)) throw NumericError("loss_nll: loss is not finite");
  return loss;
}

inline std::vector<std::size_t> all_rows(const EncodedCorpus& corpus) {
  std::vector<std::size_t> rows(corpus.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

inline double loss_nll(const IntentSpaceModel& model, const EncodedCorpus& corpus) {
  auto rows = all_rows(corpus);
  return loss_nll(model, corpus, rows);
}

// R = -(1/(K U)) sum_r sum_u log(max_{c in seen} S_c / S_u) over the K-sample.
inline double reg_rank_preservation(const IntentSpaceModel& model,
                                    const EncodedCorpus& seen_sample,
                                    std::span<const std::size_t> rows,
                                    std::span<const int> unseen_ids) {
  if (model.seen_intents == 0) throw ConfigError("rank regulariser: empty seen set");
  if (rows.empty()) throw EmptyInputError("rank regulariser: empty sample");
  if (unseen_ids.empty()) throw EmptyInputError("rank regulariser: no unseen intents");
  for (int u : unseen_ids) {
    if (u < 0 || static_cast<std::size_t>(u) >= model.intent_count()) {
      throw RangeError("rank regulariser: unseen id out of range");
    }
  }
  TrainingEngine engine(model, detail::live_all_selector());
  double pair_weight =
      1.0 / (static_cast<double>(rows.size()) * static_cast<double>(unseen_ids.size()));
  double value = 0.0;
  Vector dummy(model.intent_count());
  for (std::size_t row : rows) {
    TrainingEngine::Eval ev = engine.evaluate(seen_sample, row, false);
    value += engine.rank_reg_with_seeds(ev, unseen_ids, pair_weight,
                                        {dummy.data.data(), dummy.dim()});
  }
  return value;
}

inline double reg_rank_preservation(const IntentSpaceModel& model,
                                    const EncodedCorpus& seen_sample,
                                    std::span<const int> unseen_ids) {
  auto rows = all_rows(seen_sample);
  return reg_rank_preservation(model, seen_sample, rows, unseen_ids);
}

// Simplex: mean KL(alpha_c || uniform); Euclidean: mean squared L2 of alpha_c.
inline double reg_coordinates(const IntentSpaceModel& model,
                              std::span<const int> intents) {
  if (intents.empty()) return 0.0;
  double total = 0.0;
  std::size_t b_count = model.basis_count();
  for (int c : intents) {
    Vector alpha = normalize_coordinates(model, c);
    if (model.coords.mode == SpaceMode::kSimplex) {
      double kl = 0.0;
      for (std::size_t b = 0; b < b_count; ++b) {
        if (alpha[b] > 0.0) {
          kl += alpha[b] * std::log(alpha[b] * static_cast<double>(b_count));
        }
      }
      total += kl;
    } else {
      total += dot({alpha.data.data(), alpha.dim()}, {alpha.data.data(), alpha.dim()});
    }
  }
  return total / static_cast<double>(intents.size());
}

// Gradient of zeta * reg_coordinates w.r.t. the beta rows of `intents`.
inline void add_reg_coordinates_gradient(const IntentSpaceModel& model,
                                         std::span<const int> intents, double zeta,
                                         Matrix& beta_grad) {
  if (intents.empty() || zeta == 0.0) return;
  std::size_t b_count = model.basis_count();
  double scale = zeta / static_cast<double>(intents.size());
  for (int c : intents) {
    Vector alpha = normalize_coordinates(model, c);
    double* out = beta_grad.row(static_cast<std::size_t>(c));
    if (model.coords.mode == SpaceMode::kSimplex) {
      // d KL / d alpha_b = log(alpha_b B) + 1, then softmax backward.
      Vector dalpha(b_count);
      for (std::size_t b = 0; b < b_count; ++b) {
        dalpha[b] = std::log(alpha[b] * static_cast<double>(b_count)) + 1.0;
      }
      double mix = 0.0;
      for (std::size_t b = 0; b < b_count; ++b) mix += alpha[b] * dalpha[b];
      for (std::size_t b = 0; b < b_count; ++b) {
        out[b] += scale * alpha[b] * (dalpha[b] - mix);
      }
    } else {
      for (std::size_t b = 0; b < b_count; ++b) out[b] += scale * 2.0 * alpha[b];
    }
  }
}

// O = F(D') + epsilon R(D) + zeta R_alpha. With no unseen ids the regulariser
// terms are omitted (seen-intent training).
inline double objective(const IntentSpaceModel& model,
                        const EncodedCorpus& seen_sample,
                        const EncodedCorpus& unseen_batch,
                        std::span<const int> unseen_ids, const TrainingConfig& cfg) {
  double value = loss_nll(model, unseen_batch);
  if (!unseen_ids.empty()) {
    if (cfg.epsilon != 0.0) {
      value += cfg.epsilon * reg_rank_preservation(model, seen_sample, unseen_ids);
    }
    if (cfg.zeta != 0.0) {
      value += cfg.zeta * reg_coordinates(model, unseen_ids);
    }
  }
  return value;
}

// ---------------------------------------------------------------------------
// Optimizers

inline void sgd_step(std::span<double> params, std::span<const double> grads,
                     const SgdOptions& opt, bool decay) {
  if (params.size() != grads.size()) throw ShapeError("sgd_step: size mismatch");
  double wd = decay ? opt.lr * opt.weight_decay : 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= opt.lr * grads[i] + wd * params[i];
  }
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& state, const AdamOptions& opt) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state mismatch");
  ++state.t;
  double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * grads[i];
    state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    params[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
  }
}

// One (parameter slice, gradient slice) pair scheduled for an update.
struct ParamBinding {
  double* params = nullptr;
  const double* grads = nullptr;
  std::size_t size = 0;
  bool decay = false;
  long state_id = 0;
};

// Enumerates the slices selected by the selector, in a fixed order. Row scopes
// bind individual rows so frozen rows are never touched.
inline std::vector<ParamBinding> bind_gradients(IntentSpaceModel& model,
                                                const ParamSelector& sel,
                                                Gradients& grads) {
  std::vector<ParamBinding> binds;
  auto rows_or_all = [](const std::optional<std::vector<int>>& scope,
                        std::size_t count) {
    std::vector<int> rows;
    if (scope) {
      rows = *scope;
    } else {
      rows.resize(count);
      for (std::size_t i = 0; i < count; ++i) rows[i] = static_cast<int>(i);
    }
    return rows;
  };
  if (sel.input) {
    binds.push_back({model.input_weight.data.data(), grads.input_weight.data.data(),
                     model.input_weight.data.size(), true, 0});
    binds.push_back({model.input_bias.data.data(), grads.input_bias.data.data(),
                     model.input_bias.dim(), true, 1});
  }
  if (sel.bases) {
    for (std::size_t b = 0; b < model.basis_count(); ++b) {
      auto& data = model.bases.form == BasisForm::kReducedRank
                       ? model.bases.factors[b].data
                       : model.bases.full[b].data;
      binds.push_back({data.data(), grads.bases[b].data.data(), data.size(), true,
                       100 + static_cast<long>(b)});
    }
  }
  if (sel.coordinates) {
    for (int row : rows_or_all(sel.coordinate_rows, model.coords.beta.rows)) {
      binds.push_back({model.coords.beta.row(static_cast<std::size_t>(row)),
                       grads.beta.row(static_cast<std::size_t>(row)),
                       model.coords.beta.cols, false, 10000 + row});
    }
  }
  if (sel.expansions) {
    for (auto& [intent, mats] : model.expansions.per_intent) {
      if (sel.expansion_intents &&
          std::find(sel.expansion_intents->begin(), sel.expansion_intents->end(),
                    intent) == sel.expansion_intents->end()) {
        continue;
      }
      auto& gmats = grads.expansions.at(intent);
      for (std::size_t b = 0; b < mats.size(); ++b) {
        binds.push_back({mats[b].data.data(), gmats[b].data.data(),
                         mats[b].data.size(), false,
                         20000 + static_cast<long>(intent) * 1000 + static_cast<long>(b)});
      }
    }
  }
  if (sel.scorer) {
    bool per_intent = model.scorer.kind == ScorerParams::Kind::kPerIntent;
    std::vector<int> rows =
        per_intent ? rows_or_all(sel.scorer_rows, model.scorer.a.rows)
                   : std::vector<int>{0};
    for (int row : rows) {
      binds.push_back({model.scorer.a.row(static_cast<std::size_t>(row)),
                       grads.scorer_a.row(static_cast<std::size_t>(row)),
                       model.scorer.a.cols, true, 30000 + 2L * row});
      binds.push_back({&model.scorer.d[static_cast<std::size_t>(row)],
                       &grads.scorer_d[static_cast<std::size_t>(row)], 1, true,
                       30001 + 2L * row});
    }
  }
  return binds;
}

// Applies SGD or Adam across bindings, keeping per-slice Adam state.
class BlockOptimizer {
 public:
  explicit BlockOptimizer(OptimizerOptions options) : options_(options) {}

  void apply(const std::vector<ParamBinding>& binds) {
    for (const auto& bind : binds) {
      std::span<double> p{bind.params, bind.size};
      std::span<const double> g{bind.grads, bind.size};
      if (options_.kind == OptimizerOptions::Kind::kSgd) {
        sgd_step(p, g, options_.sgd, bind.decay);
      } else {
        adam_step(p, g, states_[bind.state_id], options_.adam);
      }
    }
  }

 private:
  OptimizerOptions options_;
  std::map<long, AdamState> states_;
};

// ---------------------------------------------------------------------------
// Batch gradient driver (optionally threaded; reduction order is fixed)

struct WorkItem {
  const EncodedCorpus* corpus = nullptr;
  std::size_t row = 0;
  enum class Kind { kNll, kRankReg } kind = Kind::kNll;
  double weight = 0.0;
};

struct BatchResult {
  Gradients grads;
  double value = 0.0;  // objective value accumulated over items
};

inline BatchResult compute_batch_gradient(const TrainingEngine& engine,
                                          const IntentSpaceModel& model,
                                          std::span<const WorkItem> items,
                                          std::span<const int> unseen_ids,
                                          int threads) {
  std::size_t c_total = model.intent_count();
  auto run_chunk = [&](std::size_t lo, std::size_t hi, Gradients& grads,
                       double& value) {
    Vector seeds(c_total);
    for (std::size_t i = lo; i < hi; ++i) {
      const WorkItem& item = items[i];
      TrainingEngine::Eval ev = engine.evaluate(*item.corpus, item.row, true);
      std::fill(seeds.begin(), seeds.end(), 0.0);
      if (item.kind == WorkItem::Kind::kNll) {
        value += engine.nll_with_seeds(ev, item.corpus->examples[item.row].label,
                                       item.weight, {seeds.data.data(), c_total});
      } else {
        value += engine.rank_reg_with_seeds(ev, unseen_ids, item.weight,
                                            {seeds.data.data(), c_total});
      }
      engine.backward(*item.corpus, item.row, ev, {seeds.data.data(), c_total}, grads);
    }
  };

  BatchResult result;
  result.grads = engine.make_gradients();
  int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(items.size())));
  if (n_threads == 1) {
    run_chunk(0, items.size(), result.grads, result.value);
  } else {
    std::vector<Gradients> partial(n_threads);
    std::vector<double> values(n_threads, 0.0);
    for (int t = 0; t < n_threads; ++t) partial[t] = engine.make_gradients();
    std::vector<std::thread> pool;
    std::size_t chunk = (items.size() + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      std::size_t lo = std::min(items.size(), static_cast<std::size_t>(t) * chunk);
      std::size_t hi = std::min(items.size(), lo + chunk);
      pool.emplace_back([&, lo, hi, t] { run_chunk(lo, hi, partial[t], values[t]); });
    }
    for (auto& th : pool) th.join();
    for (int t = 0; t < n_threads; ++t) {
      result.grads.add(partial[t]);
      result.value += values[t];
    }
  }
  engine.finish(result.grads);
  if (!std::isfinite(result.value)) {
    throw NumericError("training: objective is not finite");
  }
  return result;
}

}  // namespace intentspace
