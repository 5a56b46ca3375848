#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "intentspace/diagnostics.hpp"
#include "intentspace/training.hpp"
#include "testutil.hpp"

using namespace intentspace;

namespace {

// Per-intent constant scorers (a = 0) pin S_c = sigmoid(d_c) regardless of
// the sentence, which lets the regulariser tests use exact score values.
IntentSpaceModel constant_score_model(const std::vector<double>& scores,
                                      std::size_t seen) {
  IntentSpaceModel model =
      testutil::tiny_model(40, 3, 3, scores.size(), SpaceMode::kSimplex,
                           ScorerParams::Kind::kPerIntent);
  model.seen_intents = seen;
  model.scorer.a = Matrix(scores.size(), 3);  // zero
  model.scorer.d = Vector(scores.size());
  for (std::size_t c = 0; c < scores.size(); ++c) {
    double s = scores[c];
    model.scorer.d[c] = std::log(s / (1.0 - s));  // logit
  }
  return model;
}

EncodedCorpus small_corpus(std::uint64_t seed, std::size_t n, std::size_t dim,
                           int label_lo, int label_hi) {
  Rng rng(seed);
  std::vector<std::vector<Vector>> sentences;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    sentences.push_back(testutil::random_sentence(rng, 1 + rng.below(3), dim));
    labels.push_back(label_lo +
                     static_cast<int>(rng.below(label_hi - label_lo + 1)));
  }
  return testutil::encode_sentences(sentences, labels);
}

}  // namespace

TEST_CASE("loss_nll is zero when the model has a single intent") {
  IntentSpaceModel model = testutil::tiny_model(41, 3, 3, 1);
  EncodedCorpus corpus = small_corpus(42, 3, 3, 0, 0);
  CHECK(loss_nll(model, corpus) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("loss_nll is ln 2 for a uniform two-intent model") {
  IntentSpaceModel model = testutil::tiny_model(43, 3, 3, 2, SpaceMode::kEuclidean);
  model.bases.full[1] = model.bases.full[0];  // identical intents -> P = 0.5
  EncodedCorpus corpus = small_corpus(44, 1, 3, 0, 0);
  CHECK(loss_nll(model, corpus) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss_nll is the mean of per-sentence terms") {
  IntentSpaceModel model = testutil::tiny_model(45, 4, 3, 3);
  EncodedCorpus corpus = small_corpus(46, 4, 3, 0, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::vector<std::size_t> row{i};
    total += loss_nll(model, corpus, row);
  }
  CHECK(loss_nll(model, corpus) ==
        Catch::Approx(total / static_cast<double>(corpus.size())).epsilon(1e-12));
  CHECK(loss_nll(model, corpus) >= 0.0);
  std::vector<std::size_t> empty;
  CHECK_THROWS_AS(loss_nll(model, corpus, empty), EmptyInputError);
}

TEST_CASE("rank regulariser analytic values") {
  EncodedCorpus sample = small_corpus(47, 2, 3, 0, 1);
  std::vector<int> unseen{2};

  // unseen score equals the max seen score -> log 1 -> 0
  {
    IntentSpaceModel model = constant_score_model({0.5, 0.4, 0.5}, 2);
    CHECK(reg_rank_preservation(model, sample, unseen) ==
          Catch::Approx(0.0).margin(1e-12));
  }
  // unseen = max_seen / e on every pair -> -1
  {
    double top = 0.6;
    IntentSpaceModel model = constant_score_model({top, 0.2, top / std::exp(1.0)}, 2);
    CHECK(reg_rank_preservation(model, sample, unseen) ==
          Catch::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("rank regulariser matches the direct formula") {
  IntentSpaceModel model = constant_score_model({0.55, 0.31, 0.47, 0.62}, 2);
  EncodedCorpus sample = small_corpus(48, 2, 3, 0, 1);
  std::vector<int> unseen{2, 3};
  double want = 0.0;
  for (int r = 0; r < 2; ++r) {
    for (int u : unseen) {
      double smax = std::max(0.55, 0.31);
      double su = u == 2 ? 0.47 : 0.62;
      want += std::log(smax / su);
    }
  }
  want *= -1.0 / (2.0 * 2.0);
  CHECK(reg_rank_preservation(model, sample, unseen) ==
        Catch::Approx(want).epsilon(1e-10));
}

TEST_CASE("rank regulariser error paths") {
  IntentSpaceModel model = constant_score_model({0.5, 0.5}, 0);
  EncodedCorpus sample = small_corpus(49, 1, 3, 0, 1);
  std::vector<int> unseen{1};
  CHECK_THROWS_AS(reg_rank_preservation(model, sample, unseen), ConfigError);
  model.seen_intents = 1;
  std::vector<int> none;
  CHECK_THROWS_AS(reg_rank_preservation(model, sample, none), EmptyInputError);
}

TEST_CASE("coordinate regulariser values") {
  // simplex uniform row -> KL = 0
  IntentSpaceModel model = testutil::tiny_model(50, 3, 3, 2, SpaceMode::kSimplex);
  model.coords.beta = Matrix(2, 2);  // zeros -> uniform alpha
  std::vector<int> intents{0, 1};
  CHECK(reg_coordinates(model, intents) == Catch::Approx(0.0).margin(1e-14));

  // euclidean zero row -> 0
  IntentSpaceModel euclid = testutil::tiny_model(51, 3, 3, 2, SpaceMode::kEuclidean);
  euclid.coords.beta = Matrix(2, 2);
  CHECK(reg_coordinates(euclid, intents) == Catch::Approx(0.0).margin(1e-14));

  // simplex near-one-hot row with B = 4 -> ln 4
  IntentSpaceModel onehot = testutil::tiny_model(52, 3, 3, 4, SpaceMode::kSimplex);
  onehot.coords.beta = Matrix(4, 4);
  onehot.coords.beta(0, 0) = 60.0;
  std::vector<int> first{0};
  CHECK(reg_coordinates(onehot, first) ==
        Catch::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(reg_coordinates(onehot, first) >= 0.0);
}

TEST_CASE("objective combines its parts linearly") {
  IntentSpaceModel model = testutil::tiny_model(53, 4, 3, 3);
  model.seen_intents = 2;
  Rng rng(54);
  for (double& v : model.coords.beta.data) v = rng.uniform(-0.8, 0.8);
  EncodedCorpus batch = small_corpus(55, 3, 3, 2, 2);   // unseen-labelled
  EncodedCorpus sample = small_corpus(56, 2, 3, 0, 1);  // seen-labelled
  std::vector<int> unseen{2};

  TrainingConfig cfg;
  cfg.epsilon = 0.0;
  cfg.zeta = 0.0;
  CHECK(objective(model, sample, batch, unseen, cfg) ==
        Catch::Approx(loss_nll(model, batch)).epsilon(1e-12));

  cfg.epsilon = 0.20;
  cfg.zeta = 1.00;
  double want = loss_nll(model, batch) +
                0.20 * reg_rank_preservation(model, sample, unseen) +
                1.00 * reg_coordinates(model, unseen);
  CHECK(objective(model, sample, batch, unseen, cfg) ==
        Catch::Approx(want).epsilon(1e-12));

  // epsilon/zeta weighting is plain arithmetic over the parts
  double f = loss_nll(model, batch);
  double r = reg_rank_preservation(model, sample, unseen);
  double ra = reg_coordinates(model, unseen);
  CHECK(f + 0.20 * r + 1.00 * ra == Catch::Approx(want));
}

TEST_CASE("gradient check passes for every selector and variant") {
  for (const GradCheckCase& result : gradient_check_sweep(7)) {
    INFO(result.name);
    CHECK(result.max_rel_err < 1e-4);
  }
}

TEST_CASE("unselected blocks receive no gradient") {
  IntentSpaceModel model = detail::make_probe_model(
      60, 5, 4, 2, BasisForm::kFullMatrix, SpaceMode::kSimplex,
      ScorerParams::Kind::kShared, true);
  Rng rng(61);
  EncodedCorpus batch = detail::random_corpus(rng, 3, 4, 4, 0,
                                              static_cast<int>(model.intent_count()) - 1);
  ParamSelector sel;
  sel.coordinates = true;
  TrainingEngine engine(model, sel);
  std::vector<WorkItem> items;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    items.push_back({&batch, i, WorkItem::Kind::kNll, 1.0 / 3.0});
  }
  BatchResult result = compute_batch_gradient(engine, model, items, {}, 1);
  CHECK(result.grads.bases.empty());
  CHECK(result.grads.input_weight.data.empty());
  CHECK(result.grads.scorer_a.data.empty());
  CHECK(result.grads.expansions.empty());
  CHECK(result.grads.beta.data.size() == model.coords.beta.data.size());
  bool any_nonzero = false;
  for (double g : result.grads.beta.data) any_nonzero = any_nonzero || g != 0.0;
  CHECK(any_nonzero);
}

TEST_CASE("row-scoped selector only fills the scoped rows") {
  IntentSpaceModel model = detail::make_probe_model(
      62, 5, 4, 2, BasisForm::kFullMatrix, SpaceMode::kSimplex,
      ScorerParams::Kind::kShared, false);
  Rng rng(63);
  int last = static_cast<int>(model.intent_count()) - 1;
  EncodedCorpus batch = detail::random_corpus(rng, 3, 4, 4, last, last);
  ParamSelector sel;
  sel.coordinates = true;
  sel.coordinate_rows = std::vector<int>{last};
  TrainingEngine engine(model, sel);
  std::vector<WorkItem> items;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    items.push_back({&batch, i, WorkItem::Kind::kNll, 1.0 / 3.0});
  }
  BatchResult result = compute_batch_gradient(engine, model, items, {}, 1);
  for (std::size_t c = 0; c + 1 < model.intent_count(); ++c) {
    for (std::size_t b = 0; b < model.basis_count(); ++b) {
      CHECK(result.grads.beta(c, b) == 0.0);
    }
  }
  bool any = false;
  for (std::size_t b = 0; b < model.basis_count(); ++b) {
    any = any || result.grads.beta(static_cast<std::size_t>(last), b) != 0.0;
  }
  CHECK(any);
}

TEST_CASE("threaded gradients are repeatable and match single-threaded") {
  IntentSpaceModel model = detail::make_probe_model(
      64, 6, 4, 3, BasisForm::kFullMatrix, SpaceMode::kSimplex,
      ScorerParams::Kind::kShared, false);
  Rng rng(65);
  EncodedCorpus batch = detail::random_corpus(rng, 8, 4, 5, 0,
                                              static_cast<int>(model.intent_count()) - 1);
  ParamSelector sel = ParamSelector::seen_bases_phase();
  TrainingEngine engine(model, sel);
  std::vector<WorkItem> items;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    items.push_back({&batch, i, WorkItem::Kind::kNll, 1.0 / 8.0});
  }
  BatchResult one = compute_batch_gradient(engine, model, items, {}, 1);
  BatchResult four = compute_batch_gradient(engine, model, items, {}, 4);
  BatchResult four_again = compute_batch_gradient(engine, model, items, {}, 4);

  // fixed thread count: bitwise repeatable (chunks reduced in index order)
  CHECK(four.value == four_again.value);
  for (std::size_t b = 0; b < four.grads.bases.size(); ++b) {
    CHECK(four.grads.bases[b].data == four_again.grads.bases[b].data);
  }
  CHECK(four.grads.input_weight.data == four_again.grads.input_weight.data);
  CHECK(four.grads.scorer_a.data == four_again.grads.scorer_a.data);

  // across thread counts: equal up to summation reassociation
  CHECK(std::abs(one.value - four.value) < 1e-12);
  for (std::size_t b = 0; b < one.grads.bases.size(); ++b) {
    for (std::size_t i = 0; i < one.grads.bases[b].data.size(); ++i) {
      CHECK(std::abs(one.grads.bases[b].data[i] - four.grads.bases[b].data[i]) <
            1e-12);
    }
  }
}

TEST_CASE("sgd step values") {
  SgdOptions opt{0.1, 0.0};
  double p = 1.0;
  double g = 1.0;
  sgd_step({&p, 1}, {&g, 1}, opt, true);
  CHECK(p == Catch::Approx(0.9).epsilon(1e-15));

  SgdOptions decay{0.1, 0.1};
  p = 1.0;
  g = 0.0;
  sgd_step({&p, 1}, {&g, 1}, decay, true);
  CHECK(p == Catch::Approx(0.99).epsilon(1e-15));

  // decay disabled for excluded blocks
  p = 1.0;
  g = 0.0;
  sgd_step({&p, 1}, {&g, 1}, decay, false);
  CHECK(p == 1.0);
}

TEST_CASE("adam first step has magnitude ~lr regardless of gradient scale") {
  AdamOptions opt;
  for (double g0 : {1e-4, 1.0, 250.0}) {
    AdamState state;
    double p = 0.0;
    double g = g0;
    adam_step({&p, 1}, {&g, 1}, state, opt);
    CHECK(std::abs(p + opt.lr) < opt.lr * 1e-3);  // p moved by ~ -lr
  }
}

TEST_CASE("adam bias correction across steps") {
  AdamOptions opt;
  AdamState state;
  double p = 0.0;
  double g = 2.0;
  // two identical-gradient steps keep moving p in the same direction
  adam_step({&p, 1}, {&g, 1}, state, opt);
  double after_one = p;
  adam_step({&p, 1}, {&g, 1}, state, opt);
  CHECK(p < after_one);
  CHECK(state.t == 2);
}
