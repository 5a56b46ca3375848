#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "intentspace/gradcheck.hpp"
#include "intentspace/model.hpp"
#include "intentspace/training.hpp"
#include "intentspace/unseen.hpp"

namespace intentspace {

// Small seeded instances used to verify every analytic gradient against
// central differences, per parameter selector. Also behind the `grad-check`
// CLI command.

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
};

namespace detail {

inline EncodedCorpus random_corpus(Rng& rng, std::size_t n, std::size_t dim,
                                   std::size_t max_len, int label_lo, int label_hi) {
  EncodedCorpus corpus;
  corpus.dim = dim;
  std::vector<double> vectors;
  int next_row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    EncodedExample ex;
    ex.label = label_lo + static_cast<int>(rng.below(
                             static_cast<std::uint64_t>(label_hi - label_lo + 1)));
    std::size_t len = 1 + rng.below(max_len);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t d = 0; d < dim; ++d) vectors.push_back(rng.uniform(-1.0, 1.0));
      ex.words.push_back(next_row++);
    }
    corpus.examples.push_back(std::move(ex));
  }
  corpus.word_vectors.rows = static_cast<std::size_t>(next_row);
  corpus.word_vectors.cols = dim;
  corpus.word_vectors.data = std::move(vectors);
  return corpus;
}

// A deliberately non-degenerate instance: random coordinates, one extension
// intent with perturbed expansion matrices, scorer per request.
inline IntentSpaceModel make_probe_model(std::uint64_t seed, std::size_t hidden,
                                         std::size_t input_dim, std::size_t c_seen,
                                         BasisForm form, SpaceMode mode,
                                         ScorerParams::Kind scorer_kind,
                                         bool with_omega) {
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < c_seen; ++c) labels.push_back("seen" + std::to_string(c));
  ModelInit init;
  init.hidden = hidden;
  init.input_dim = input_dim;
  init.form = form;
  init.rank = 2;
  init.mode = mode;
  init.scorer_kind = scorer_kind;
  init.seed = seed;
  IntentSpaceModel model = make_seen_model(labels, init);
  Rng rng(seed + 17);
  // Off the one-hot corner so softmax derivatives are informative.
  for (double& v : model.coords.beta.data) v = rng.uniform(-0.7, 0.7);
  for (double& v : model.input_bias.data) v = rng.uniform(-0.3, 0.3);

  // One added intent (extension style).
  std::size_t c_new = model.intent_count();
  model.labels.push_back("added");
  Matrix beta(c_new + 1, model.basis_count());
  std::copy(model.coords.beta.data.begin(), model.coords.beta.data.end(),
            beta.data.begin());
  for (std::size_t b = 0; b < model.basis_count(); ++b) {
    beta(c_new, b) = rng.uniform(-0.5, 0.5);
  }
  model.coords.beta = std::move(beta);
  if (scorer_kind == ScorerParams::Kind::kPerIntent) {
    Matrix a(c_new + 1, hidden);
    std::copy(model.scorer.a.data.begin(), model.scorer.a.data.end(), a.data.begin());
    Vector d(c_new + 1);
    std::copy(model.scorer.d.begin(), model.scorer.d.end(), d.begin());
    for (std::size_t i = 0; i < hidden; ++i) a(c_new, i) = rng.uniform(-0.3, 0.3);
    d[c_new] = rng.uniform(-0.3, 0.3);
    model.scorer.a = std::move(a);
    model.scorer.d = std::move(d);
  }
  if (with_omega) {
    std::vector<Matrix> omegas;
    for (std::size_t b = 0; b < model.basis_count(); ++b) {
      Matrix omega = Matrix::identity(hidden);
      for (double& v : omega.data) v += rng.uniform(-0.2, 0.2);
      omegas.push_back(std::move(omega));
    }
    model.expansions.per_intent.emplace(static_cast<int>(c_new), std::move(omegas));
  }
  return model;
}

struct FlatGradient {
  std::vector<double*> params;
  std::vector<double> analytic;
};

inline void push_span(FlatGradient& flat, double* p, const double* g, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    flat.params.push_back(p + i);
    flat.analytic.push_back(g[i]);
  }
}

inline FlatGradient flatten_gradient(IntentSpaceModel& model, const ParamSelector& sel,
                                     Gradients& grads) {
  FlatGradient flat;
  for (const ParamBinding& bind : bind_gradients(model, sel, grads)) {
    push_span(flat, bind.params, bind.grads, bind.size);
  }
  return flat;
}

}  // namespace detail

// Max relative error of the analytic objective gradient for one selector,
// against central differences (the objective recomposed from scratch at every
// perturbed point).
inline double check_selector_gradient(IntentSpaceModel& model,
                                      const ParamSelector& selector,
                                      const EncodedCorpus& batch,
                                      const EncodedCorpus& sample,
                                      const std::vector<int>& unseen_ids,
                                      const TrainingConfig& cfg, double eps = 1e-5) {
  TrainingEngine engine(model, selector);
  std::vector<WorkItem> items;
  double w = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    items.push_back({&batch, i, WorkItem::Kind::kNll, w});
  }
  if (!unseen_ids.empty() && cfg.epsilon != 0.0) {
    double pair_w = cfg.epsilon / (static_cast<double>(sample.size()) *
                                   static_cast<double>(unseen_ids.size()));
    for (std::size_t i = 0; i < sample.size(); ++i) {
      items.push_back({&sample, i, WorkItem::Kind::kRankReg, pair_w});
    }
  }
  BatchResult result = compute_batch_gradient(engine, model, items, unseen_ids, 1);
  if (selector.coordinates && !unseen_ids.empty() && cfg.zeta != 0.0) {
    add_reg_coordinates_gradient(model, unseen_ids, cfg.zeta, result.grads.beta);
  }
  detail::FlatGradient flat = detail::flatten_gradient(model, selector, result.grads);
  auto objective_value = [&]() {
    return objective(model, sample, batch, unseen_ids, cfg);
  };
  return grad_check(objective_value, flat.params, flat.analytic, eps);
}

// The selector sweep behind acceptance: bases, coordinates (simplex and
// euclidean), expansions, input and scorer (shared and per-intent), for full
// and reduced-rank bases.
inline std::vector<GradCheckCase> gradient_check_sweep(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  struct Variant {
    const char* tag;
    BasisForm form;
    SpaceMode mode;
    ScorerParams::Kind scorer;
  };
  const Variant variants[] = {
      {"full/simplex/shared", BasisForm::kFullMatrix, SpaceMode::kSimplex,
       ScorerParams::Kind::kShared},
      {"full/euclidean/per-intent", BasisForm::kFullMatrix, SpaceMode::kEuclidean,
       ScorerParams::Kind::kPerIntent},
      {"reduced/simplex/per-intent", BasisForm::kReducedRank, SpaceMode::kSimplex,
       ScorerParams::Kind::kPerIntent},
  };
  TrainingConfig cfg;
  cfg.epsilon = 0.2;
  cfg.zeta = 1.0;
  for (const Variant& variant : variants) {
    IntentSpaceModel model =
        detail::make_probe_model(seed, 6, 5, 2, variant.form, variant.mode,
                                 variant.scorer, true);
    std::vector<int> unseen_ids{static_cast<int>(model.intent_count() - 1)};
    Rng rng(seed + 99);
    EncodedCorpus batch = detail::random_corpus(
        rng, 3, model.input_dim, 5, 0, static_cast<int>(model.intent_count() - 1));
    EncodedCorpus sample = detail::random_corpus(
        rng, 2, model.input_dim, 4, 0, static_cast<int>(model.seen_intents - 1));

    struct Named {
      const char* name;
      ParamSelector sel;
    };
    ParamSelector bases_sel;
    bases_sel.bases = true;
    ParamSelector coords_sel;
    coords_sel.coordinates = true;
    ParamSelector omega_sel;
    omega_sel.expansions = true;
    ParamSelector input_sel;
    input_sel.input = true;
    ParamSelector scorer_sel;
    scorer_sel.scorer = true;
    const Named selectors[] = {
        {"bases", bases_sel},   {"coordinates", coords_sel}, {"expansions", omega_sel},
        {"input", input_sel},   {"scorer", scorer_sel},
    };
    for (const Named& named : selectors) {
      GradCheckCase result;
      result.name = std::string(variant.tag) + "/" + named.name;
      result.max_rel_err = check_selector_gradient(model, named.sel, batch, sample,
                                                   unseen_ids, cfg);
      cases.push_back(result);
    }
  }
  return cases;
}

}  // namespace intentspace
