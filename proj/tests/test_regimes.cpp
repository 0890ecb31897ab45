#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <set>
#include <vector>

#include "oietd/regimes.hpp"
#include "oietd/synth.hpp"

using namespace oietd;

namespace {

constexpr ToyEncoderConfig kEnc{128, 8, 256};

std::vector<ModelInput> prepare(const Corpus& corpus, Split split,
                                const SubwordTokenizer& tok) {
  std::vector<ModelInput> out;
  for (const Sentence* s : corpus.split_sentences(split)) out.push_back(make_model_input(*s, tok));
  return out;
}

SynthConfig small_synth() {
  SynthConfig cfg;
  cfg.n_train = 60;
  cfg.n_valid = 20;
  cfg.n_test = 20;
  cfg.seed = 5;
  return cfg;
}

RegimeConfig fast_config(Regime regime, ModelDesign design) {
  RegimeConfig c;
  c.regime = regime;
  c.design = design;
  c.epochs = 3;
  c.encoder = kEnc;
  c.seed = 17;
  return c;
}

ModelBundle make_bundle(const RegimeConfig& c) {
  return ModelBundle(c.design, std::make_shared<ToyEncoder>(c.encoder, c.seed + 1),
                     c.design == ModelDesign::kImplicit ? c.resolved_implicit_d() : 0, c.mlm,
                     c.seed + 2);
}

}  // namespace

TEST_CASE("regime names round trip") {
  for (Regime r : {Regime::kInDomain, Regime::kJointTraining, Regime::kJointTransfer,
                   Regime::kSequentialTransfer})
    CHECK(regime_from_string(to_string(r)) == r);
  CHECK_THROWS_AS(regime_from_string("nope"), ConfigError);
}

TEST_CASE("implicit width defaults depend on the regime") {
  RegimeConfig c;
  c.regime = Regime::kJointTraining;
  CHECK(c.resolved_implicit_d() == 300);
  c.regime = Regime::kInDomain;
  CHECK(c.resolved_implicit_d() == 10);
  c.implicit_d = 50;
  CHECK(c.resolved_implicit_d() == 50);
}

TEST_CASE("joint epoch composes 27 source + 5 target per batch") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  Corpus src = generate_domain(small_synth(), "s", false, 1);
  auto source = prepare(src, Split::kTrain, tok);  // 60 sentences -> chunks 27/27/6

  RegimeConfig c = fast_config(Regime::kJointTransfer, ModelDesign::kVanilla);
  c.epochs = 1;
  c.shots = 10;
  ModelBundle bundle = make_bundle(c);
  AdamOptimizer opt(bundle.params(), c.grad_clip);
  Rng rng(c.seed);

  std::vector<ModelInput> fewshot(source.begin(), source.begin() + 10);
  std::vector<std::pair<std::size_t, std::size_t>> batches;
  run_joint_epoch(bundle, opt, source, fewshot, rng, c,
                  scheduled_lr(c.lr, c.lr_decay_factor, 0),
                  [&](std::size_t s, std::size_t t) { batches.emplace_back(s, t); });
  REQUIRE(batches.size() == 3);
  CHECK(batches[0] == std::make_pair<std::size_t, std::size_t>(27, 5));
  CHECK(batches[1] == std::make_pair<std::size_t, std::size_t>(27, 5));
  CHECK(batches[2] == std::make_pair<std::size_t, std::size_t>(6, 5));
}

TEST_CASE("joint regimes reject too-small target pools") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  Corpus src = generate_domain(small_synth(), "s", false, 1);
  auto source = prepare(src, Split::kTrain, tok);
  std::vector<ModelInput> tiny(source.begin(), source.begin() + 4);

  RegimeConfig c = fast_config(Regime::kJointTraining, ModelDesign::kVanilla);
  c.shots = 4;
  ModelBundle bundle = make_bundle(c);
  AdamOptimizer opt(bundle.params(), c.grad_clip);
  Rng rng(1);
  CHECK_THROWS_AS(run_joint_epoch(bundle, opt, source, tiny, rng, c, 1e-5), DataError);
  auto valid = prepare(src, Split::kValid, tok);
  CHECK_THROWS_AS(train_joint(bundle, c, source, tiny, valid), DataError);
}

TEST_CASE("a 5-shot pool appears whole in every joint batch") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  Corpus src = generate_domain(small_synth(), "s", false, 1);
  auto source = prepare(src, Split::kTrain, tok);
  std::vector<ModelInput> fewshot(source.begin(), source.begin() + 5);

  RegimeConfig c = fast_config(Regime::kJointTransfer, ModelDesign::kVanilla);
  c.shots = 5;
  ModelBundle bundle = make_bundle(c);
  AdamOptimizer opt(bundle.params(), c.grad_clip);
  Rng rng(3);
  std::vector<std::size_t> target_sizes;
  run_joint_epoch(bundle, opt, source, fewshot, rng, c, 1e-5,
                  [&](std::size_t, std::size_t t) { target_sizes.push_back(t); });
  for (auto t : target_sizes) CHECK(t == 5);
}

TEST_CASE("source training selects the argmax-F1 epoch and restores it") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  SynthConfig sc = small_synth();
  Corpus src = generate_domain(sc, "s", false, 1);
  auto train = prepare(src, Split::kTrain, tok);
  auto valid = prepare(src, Split::kValid, tok);

  RegimeConfig c = fast_config(Regime::kInDomain, ModelDesign::kVanilla);
  c.epochs = 4;
  c.lr = 5e-3;  // desk-scale rate so validation F1 actually moves
  ModelBundle bundle = make_bundle(c);
  TrainOutcome out = train_on_source(bundle, c, train, valid);

  REQUIRE(out.metric_log.size() == 4);
  // selected_epoch is the first argmax of the logged valid F1.
  double best = -1.0;
  int best_epoch = -1;
  for (const auto& e : out.metric_log) {
    const double f1 = e.at("f1").get<double>();
    if (f1 > best) {
      best = f1;
      best_epoch = e.at("epoch").get<int>();
    }
  }
  CHECK(out.selection.selected_epoch == best_epoch);
  CHECK(out.selection.selected_f1 == best);
  // The restored weights reproduce the selected score.
  CHECK(evaluate_td(bundle, valid).f1 == Catch::Approx(best).margin(1e-12));
  // Learning-rate schedule in the log.
  for (const auto& e : out.metric_log) {
    const int k = e.at("epoch").get<int>();
    CHECK(e.at("lr").get<double>() ==
          Catch::Approx(scheduled_lr(c.lr, c.lr_decay_factor, k)).epsilon(1e-12));
  }
}

TEST_CASE("training is deterministic in the seed") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  Corpus src = generate_domain(small_synth(), "s", false, 1);
  auto train = prepare(src, Split::kTrain, tok);
  auto valid = prepare(src, Split::kValid, tok);

  RegimeConfig c = fast_config(Regime::kInDomain, ModelDesign::kExplicit);
  c.epochs = 2;
  ModelBundle a = make_bundle(c);
  ModelBundle b = make_bundle(c);
  TrainOutcome oa = train_on_source(a, c, train, valid);
  TrainOutcome ob = train_on_source(b, c, train, valid);
  CHECK(oa.metric_log == ob.metric_log);

  c.seed = 18;
  ModelBundle d = make_bundle(c);
  TrainOutcome od = train_on_source(d, c, train, valid);
  CHECK(oa.metric_log != od.metric_log);
}

TEST_CASE("few-shot fine-tuning keeps the final epoch below 50 shots") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  Corpus src = generate_domain(small_synth(), "s", false, 1);
  auto train = prepare(src, Split::kTrain, tok);
  auto valid = prepare(src, Split::kValid, tok);
  std::vector<ModelInput> fewshot(train.begin(), train.begin() + 10);

  RegimeConfig c = fast_config(Regime::kInDomain, ModelDesign::kVanilla);
  c.epochs = 3;
  c.shots = 10;
  ModelBundle bundle = make_bundle(c);
  TrainOutcome out = finetune_on_fewshot(bundle, c, fewshot, valid);
  CHECK(out.selection.selected_epoch == 2);

  // At 50 shots, target-valid argmax selection kicks in.
  std::vector<ModelInput> fifty(train.begin(), train.begin() + 50);
  c.shots = 50;
  c.lr = 5e-3;
  ModelBundle bundle2 = make_bundle(c);
  TrainOutcome out2 = finetune_on_fewshot(bundle2, c, fifty, valid);
  double best = -1.0;
  int best_epoch = -1;
  for (const auto& e : out2.metric_log) {
    const double f1 = e.at("valid_f1").get<double>();
    if (f1 > best) {
      best = f1;
      best_epoch = e.at("epoch").get<int>();
    }
  }
  CHECK(out2.selection.selected_epoch == best_epoch);
  CHECK(evaluate_td(bundle2, valid).f1 == Catch::Approx(best).margin(1e-12));

  CHECK_THROWS_AS(finetune_on_fewshot(bundle, c, {}, valid), DataError);
}

TEST_CASE("MLM-enabled training logs the auxiliary loss") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  SynthConfig sc = small_synth();
  SynthPair pair = generate_pair(sc);
  auto train = prepare(pair.source, Split::kTrain, tok);
  auto valid = prepare(pair.source, Split::kValid, tok);
  auto tgt_train = prepare(pair.target, Split::kTrain, tok);

  RegimeConfig c = fast_config(Regime::kSequentialTransfer, ModelDesign::kVanilla);
  c.epochs = 2;
  c.mlm = true;
  ModelBundle bundle = make_bundle(c);
  TrainOutcome out = train_on_source(bundle, c, train, valid, tgt_train);
  for (const auto& e : out.metric_log) {
    REQUIRE(e.contains("loss_mlm"));
    CHECK(e.at("loss_mlm").get<double>() > 0.0);
  }
}

TEST_CASE("implicit zero-shot evaluation demands target relation tags") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  RegimeConfig c = fast_config(Regime::kInDomain, ModelDesign::kImplicit);
  ModelBundle bundle = make_bundle(c);
  Sentence s;
  s.sentence_id = "z";
  s.tokens = {"a", "b", "c"};
  ModelInput in = make_model_input(s, tok);
  in.word_rel_tags.clear();
  CHECK_THROWS_AS(zero_shot_eval(bundle, {in}), DataError);
}

TEST_CASE("implicit grid search covers 12 cells in tie-break order") {
  SubwordTokenizer tok{kEnc.vocab_size, 4};
  SynthConfig sc = small_synth();
  sc.n_train = 8;
  sc.n_valid = 4;
  sc.trigger_rate = 0.0;  // no triggers: every cell scores 0, pure tie
  Corpus src = generate_domain(sc, "s", false, 1);
  auto train = prepare(src, Split::kTrain, tok);
  auto valid = prepare(src, Split::kValid, tok);

  RegimeConfig c = fast_config(Regime::kJointTransfer, ModelDesign::kImplicit);
  c.epochs = 1;
  GridSearchResult res = grid_search_implicit(
      c, train, valid, [&]() { return std::make_shared<ToyEncoder>(kEnc, c.seed); });

  REQUIRE(res.runs.size() == 12);
  // Enumeration order: d ascending, lr_e descending within each d.
  const int dims[] = {10, 50, 100, 300};
  const double rates[] = {1e-4, 5e-5, 1e-5};
  for (int i = 0; i < 12; ++i) {
    CHECK(res.runs[i].at("d").get<int>() == dims[i / 3]);
    CHECK(res.runs[i].at("lr_e").get<double>() == rates[i % 3]);
  }
  // All-tie case resolves to the smallest d, largest lr_e.
  CHECK(res.d == 10);
  CHECK(res.lr_e == 1e-4);
  CHECK(res.valid_f1 == 0.0);
}
