#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "intentspace/eval.hpp"
#include "intentspace/unseen.hpp"
#include "testutil.hpp"

using namespace intentspace;

namespace {

// Trains a 2-intent toy model, returns it together with the world so tests
// can extend it with the third intent.
struct ExtendFixture {
  testutil::ToyWorld world;
  IntentSpaceModel model;
  LabeledDataset seen_d;
  LabeledDataset unseen_d;
  std::vector<std::string> final_labels;
  EncodedCorpus unseen_enc;
  EncodedCorpus sample_enc;
  TrainingConfig cfg;
};

ExtendFixture make_fixture(std::uint64_t seed, bool train_base = true) {
  ExtendFixture f;
  f.world = testutil::make_toy_world(18, 10, seed, 3);
  SplitSpec spec;
  spec.unseen_labels = {f.world.intents[2]};
  auto split = partition_seen_unseen(f.world.data, spec);
  f.seen_d = std::move(split.first);
  f.unseen_d = std::move(split.second);

  ModelInit init;
  init.hidden = 10;
  init.input_dim = 10;
  init.seed = seed;
  init.init_noise = 0.5;
  f.model = make_seen_model(f.seen_d.label_names, init);

  f.cfg.optimizer.sgd.lr = 3.0;
  f.cfg.max_epochs_seen = 30;
  f.cfg.max_epochs_coords = 40;
  f.cfg.max_epochs_omega = 60;
  f.cfg.batch_size = 8;
  f.cfg.early_stop_patience = 30;
  f.cfg.seed = seed;
  f.cfg.k_reg_sentences = 6;

  if (train_base) {
    EncodedCorpus train_enc = encode_corpus(f.world.table, f.seen_d, f.model.labels);
    TrainingConfig base_cfg = f.cfg;
    train_seen(f.model, train_enc, nullptr, base_cfg);
  }

  f.final_labels = f.model.labels;
  f.final_labels.push_back(f.world.intents[2]);
  f.unseen_enc = encode_corpus(f.world.table, f.unseen_d, f.final_labels);
  LabeledDataset sample_d = sample_per_intent(f.seen_d, f.cfg.k_reg_sentences, seed);
  f.sample_enc = encode_corpus(f.world.table, sample_d, f.final_labels);
  return f;
}

ExtensionRequest make_request(ExtendFixture& f, bool omega) {
  ExtensionRequest req;
  req.new_labels = {f.world.intents[2]};
  req.unseen_train = &f.unseen_enc;
  req.seen_sample = &f.sample_enc;
  req.cfg = f.cfg;
  req.enable_omega = omega;
  return req;
}

}  // namespace

TEST_CASE("add_intents keeps every pre-existing tensor bitwise identical") {
  for (bool omega : {false, true}) {
    ExtendFixture f = make_fixture(80);
    IntentSpaceModel before = f.model;
    ExtensionRequest req = make_request(f, omega);
    add_intents(f.model, req);

    CHECK(f.model.intent_count() == before.intent_count() + 1);
    CHECK(f.model.input_weight.data == before.input_weight.data);
    CHECK(f.model.input_bias.data == before.input_bias.data);
    CHECK(f.model.initial_state.data == before.initial_state.data);
    for (std::size_t b = 0; b < before.bases.full.size(); ++b) {
      CHECK(f.model.bases.full[b].data == before.bases.full[b].data);
    }
    for (std::size_t c = 0; c < before.coords.beta.rows; ++c) {
      for (std::size_t b = 0; b < before.coords.beta.cols; ++b) {
        CHECK(f.model.coords.beta(c, b) == before.coords.beta(c, b));
      }
    }
    CHECK(f.model.scorer.a.data == before.scorer.a.data);  // shared scorer
    if (omega) {
      CHECK(f.model.expansions.per_intent.size() == 1);
      CHECK(f.model.expansions.has(2));
    } else {
      CHECK(f.model.expansions.per_intent.empty());
    }
  }
}

TEST_CASE("add_intents appends exactly U rows with uniform initial mixing") {
  ExtendFixture f = make_fixture(81, false);  // untrained base, no optimisation needed
  f.cfg.max_epochs_coords = 1;
  f.cfg.max_epochs_omega = 1;
  ExtensionRequest req = make_request(f, true);
  std::size_t rows_before = f.model.coords.beta.rows;
  add_intents(f.model, req);
  CHECK(f.model.coords.beta.rows == rows_before + 1);
  CHECK(f.model.expansions.per_intent.size() == 1);
  CHECK(f.model.expansions.per_intent.at(2).size() == f.model.basis_count());
}

TEST_CASE("add_intents validates the request") {
  ExtendFixture f = make_fixture(82, false);
  ExtensionRequest req = make_request(f, false);
  req.new_labels.clear();
  CHECK_THROWS_AS(add_intents(f.model, req), EmptyInputError);

  ExtensionRequest dup = make_request(f, false);
  dup.new_labels = {f.model.labels[0]};
  CHECK_THROWS_AS(add_intents(f.model, dup), ConfigError);

  ExtensionRequest no_data = make_request(f, false);
  no_data.unseen_train = nullptr;
  CHECK_THROWS_AS(add_intents(f.model, no_data), EmptyInputError);
}

TEST_CASE("extension recovers the held-out toy intent") {
  ExtendFixture f = make_fixture(83);
  f.cfg.optimizer.sgd.lr = 0.5;
  ExtensionRequest req = make_request(f, true);
  add_intents(f.model, req);
  double unseen_acc = accuracy(f.model, f.unseen_enc);
  CHECK(unseen_acc >= 95.0);
}

TEST_CASE("large epsilon preserves seen top-1 predictions on the sample") {
  ExtendFixture f = make_fixture(83);
  // property of the converged objective: run the full budget, keep the last state
  f.cfg.optimizer.sgd.lr = 0.5;
  f.cfg.max_epochs_coords = 60;
  f.cfg.early_stop_patience = 60;
  f.cfg.restore_best = false;
  std::vector<int> before_top;
  {
    ParamSelector all_live;
    all_live.input = true;
    TrainingEngine engine(f.model, all_live);
    for (std::size_t i = 0; i < f.sample_enc.size(); ++i) {
      TrainingEngine::Eval ev = engine.evaluate(f.sample_enc, i, false);
      std::size_t best = 0;
      for (std::size_t c = 1; c < ev.s.dim(); ++c) {
        if (ev.s[c] > ev.s[best]) best = c;
      }
      before_top.push_back(static_cast<int>(best));
    }
  }
  f.cfg.epsilon = 10.0;
  ExtensionRequest req = make_request(f, false);
  add_intents(f.model, req);
  {
    ParamSelector all_live;
    all_live.input = true;
    TrainingEngine engine(f.model, all_live);
    for (std::size_t i = 0; i < f.sample_enc.size(); ++i) {
      TrainingEngine::Eval ev = engine.evaluate(f.sample_enc, i, false);
      std::size_t best = 0;
      for (std::size_t c = 1; c < ev.s.dim(); ++c) {
        if (ev.s[c] > ev.s[best]) best = c;
      }
      CHECK(static_cast<int>(best) == before_top[i]);
    }
  }
}

TEST_CASE("entropy detection threshold rule") {
  // identical intents -> uniform distribution -> entropy ln C
  IntentSpaceModel model = testutil::tiny_model(85, 4, 3, 6, SpaceMode::kEuclidean);
  for (std::size_t b = 1; b < 6; ++b) model.bases.full[b] = model.bases.full[0];
  Rng rng(86);
  auto sentence = testutil::random_sentence(rng, 3, 3);

  DetectionResult result = detect_by_entropy(model, sentence, 1.0);
  CHECK(result.entropy == Catch::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(result.unseen);  // ln 6 > 1

  // boundary: rho exactly ln C counts as seen
  result = detect_by_entropy(model, sentence, std::log(6.0));
  CHECK_FALSE(result.unseen);

  // near one-hot distribution -> seen for any positive rho
  IntentSpaceModel sharp = testutil::tiny_model(87, 4, 3, 2, SpaceMode::kEuclidean);
  sharp.scorer.kind = ScorerParams::Kind::kPerIntent;
  sharp.scorer.a = Matrix(2, 4);
  sharp.scorer.d = Vector(2);
  sharp.scorer.d[0] = 40.0;    // S ~ 1
  sharp.scorer.d[1] = -40.0;   // S ~ 0
  DetectionResult sharp_result = detect_by_entropy(sharp, sentence, 0.01);
  CHECK_FALSE(sharp_result.unseen);
}

TEST_CASE("roc sweep on hand-constructed entropies") {
  // perfectly separated -> AUC 1
  std::vector<double> seen{0.1, 0.2};
  std::vector<double> unseen{0.3, 0.4};
  RocCurve curve = roc_from_entropies(seen, unseen);
  CHECK(curve.auc == Catch::Approx(1.0));
  CHECK(curve.points.front().fpr == 0.0);
  CHECK(curve.points.front().tpr == 0.0);
  CHECK(curve.points.back().fpr == 1.0);
  CHECK(curve.points.back().tpr == 1.0);
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
    CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr);
  }

  // identical entropies -> diagonal, AUC 0.5
  std::vector<double> same{0.7, 0.7, 0.7};
  RocCurve diag = roc_from_entropies(same, same);
  CHECK(diag.auc == Catch::Approx(0.5));

  // one class absent -> eval error
  std::vector<double> empty;
  CHECK_THROWS_AS(roc_from_entropies(empty, unseen), EvalError);
}

TEST_CASE("roc auc stays within [0,1] on random inputs") {
  Rng rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> seen;
    std::vector<double> unseen;
    for (int i = 0; i < 1 + static_cast<int>(rng.below(20)); ++i) {
      seen.push_back(rng.uniform(0.0, 2.0));
    }
    for (int i = 0; i < 1 + static_cast<int>(rng.below(20)); ++i) {
      unseen.push_back(rng.uniform(0.0, 2.0));
    }
    RocCurve curve = roc_from_entropies(seen, unseen);
    CHECK(curve.auc >= 0.0);
    CHECK(curve.auc <= 1.0);
    CHECK(curve.points.front().fpr == 0.0);
    CHECK(curve.points.front().tpr == 0.0);
    CHECK(curve.points.back().fpr == 1.0);
    CHECK(curve.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
      CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr);
    }
  }
}

TEST_CASE("estimate_sentence_coordinates basic properties") {
  // single basis, simplex -> [1.0]
  IntentSpaceModel one = testutil::tiny_model(89, 4, 3, 1, SpaceMode::kSimplex);
  Rng rng(90);
  auto sentence = testutil::random_sentence(rng, 3, 3);
  Vector alpha = estimate_sentence_coordinates(one, sentence, 5);
  REQUIRE(alpha.dim() == 1);
  CHECK(alpha[0] == 1.0);

  IntentSpaceModel model = testutil::tiny_model(91, 4, 3, 3, SpaceMode::kSimplex);
  Vector est = estimate_sentence_coordinates(model, sentence, 25);
  double sum = 0.0;
  for (std::size_t b = 0; b < est.dim(); ++b) {
    CHECK(est[b] > 0.0);
    sum += est[b];
  }
  CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("estimated coordinates land nearest the sentence's own intent") {
  ExtendFixture f = make_fixture(92);  // trained 2-seen-intent model
  // a training sentence from each seen intent
  EncodedCorpus seen_enc = encode_corpus(f.world.table, f.seen_d, f.model.labels);
  int checked = 0;
  for (std::size_t i = 0; i < seen_enc.size() && checked < 6; i += 7, ++checked) {
    const EncodedExample& ex = seen_enc.examples[i];
    std::vector<Vector> sentence;
    for (int w : ex.words) {
      Vector v(seen_enc.dim);
      const double* row = seen_enc.word_vectors.row(static_cast<std::size_t>(w));
      std::copy(row, row + seen_enc.dim, v.begin());
      sentence.push_back(std::move(v));
    }
    Vector est = estimate_sentence_coordinates(f.model, sentence, 25);
    // enumerate distances to each seen row
    double best_dist = 1e300;
    int best_c = -1;
    for (std::size_t c = 0; c < f.model.seen_intents; ++c) {
      Vector alpha = normalize_coordinates(f.model, static_cast<int>(c));
      double d = 0.0;
      for (std::size_t b = 0; b < alpha.dim(); ++b) {
        d += (alpha[b] - est[b]) * (alpha[b] - est[b]);
      }
      if (d < best_dist) {
        best_dist = d;
        best_c = static_cast<int>(c);
      }
    }
    CHECK(best_c == ex.label);
  }
}

TEST_CASE("detect_by_coordinates distance rule") {
  ExtendFixture f = make_fixture(93);
  EncodedCorpus seen_enc = encode_corpus(f.world.table, f.seen_d, f.model.labels);
  const EncodedExample& ex = seen_enc.examples[0];
  std::vector<Vector> sentence;
  for (int w : ex.words) {
    Vector v(seen_enc.dim);
    const double* row = seen_enc.word_vectors.row(static_cast<std::size_t>(w));
    std::copy(row, row + seen_enc.dim, v.begin());
    sentence.push_back(std::move(v));
  }
  // a huge threshold always says seen; threshold 0 always says unseen
  CHECK_FALSE(detect_by_coordinates(f.model, sentence, 1e6).unseen);
  CHECK(detect_by_coordinates(f.model, sentence, 0.0).unseen);
}

TEST_CASE("sample_per_intent draws a deterministic per-intent subset") {
  testutil::ToyWorld world = testutil::make_toy_world(12, 8, 94, 3);
  LabeledDataset a = sample_per_intent(world.data, 4, 7);
  LabeledDataset b = sample_per_intent(world.data, 4, 7);
  REQUIRE(a.size() == 12);
  REQUIRE(b.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.examples[i].tokens == b.examples[i].tokens);
  }
  std::map<std::string, int> counts;
  for (const auto& ex : a.examples) ++counts[ex.intent];
  for (const auto& [intent, n] : counts) CHECK(n == 4);
}
