#include "jitterlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "jitterlab/dataset.hpp"
#include "jitterlab/model.hpp"
#include "jitterlab/numerics.hpp"

using namespace jitterlab;

namespace {

StepDistribution dist_from_probs(const std::vector<double>& probs, int t = 0) {
  StepDistribution d;
  d.t = t;
  d.logits = Tensor({static_cast<int>(probs.size())});
  for (size_t i = 0; i < probs.size(); ++i)
    d.logits.values[i] = static_cast<real>(std::log(std::max(probs[i], 1e-300)));
  return d;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.encoder_dim = 16;
  c.decoder_layers = 1;
  c.decoder_heads = 2;
  c.decoder_dim = 16;
  c.output_embed_dim = 12;
  c.dropout = 0.0;
  c.max_output_len = 24;
  c.max_src_positions = 16;
  return c;
}

Corpus built_corpus(uint64_t seed, int n, double ambiguity = 0.0) {
  Corpus c = generate_synthetic(seed, n, ambiguity);
  build_vocab(c);
  return c;
}

RegimeConfig tiny_regime(const std::string& method, std::vector<uint64_t> seeds, int k = 1) {
  RegimeConfig rc;
  rc.method = method;
  rc.k = k;
  rc.seeds = std::move(seeds);
  rc.steps = 20;
  rc.batch_size = 8;
  rc.learning_rate = 3e-3;
  rc.model = tiny_config();
  rc.teacher_model = tiny_config();
  return rc;
}

double agreement_of_pair(const ModelParams& a, const ModelParams& b, const Corpus& eval_corpus,
                         const EncodedCorpus& enc) {
  int agree = 0;
  for (size_t i = 0; i < enc.examples.size(); ++i) {
    DecodeResult ra =
        greedy_decode(a, enc.examples[i].src, eval_corpus.target_vocab, eval_corpus.examples[i].utterance);
    DecodeResult rb =
        greedy_decode(b, enc.examples[i].src, eval_corpus.target_vocab, eval_corpus.examples[i].utterance);
    if (ra.text == rb.text) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(enc.examples.size());
}

}  // namespace

TEST_CASE("training: nll_loss fixed values") {
  // certainty on every gold symbol
  std::vector<StepDistribution> sure = {dist_from_probs({1.0 - 2e-13, 1e-13, 1e-13}, 0),
                                        dist_from_probs({1e-13, 1.0 - 2e-13, 1e-13}, 1)};
  CHECK(nll_loss(sure, {0, 1}) == doctest::Approx(0.0).epsilon(1e-9));

  // uniform over V costs ln V per token
  std::vector<StepDistribution> unif = {dist_from_probs({0.25, 0.25, 0.25, 0.25}, 0)};
  CHECK(nll_loss(unif, {2}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // two steps at probabilities 0.5 and 0.25
  std::vector<StepDistribution> toy = {dist_from_probs({0.5, 0.25, 0.25}, 0),
                                       dist_from_probs({0.5, 0.25, 0.25}, 1)};
  CHECK(nll_loss(toy, {0, 1}) ==
        doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-12));

  CHECK_THROWS_AS(nll_loss(toy, {0}), LengthMismatch);
  CHECK_THROWS_AS(nll_loss({}, {}), LengthMismatch);
  CHECK_THROWS_AS(nll_loss(toy, {0, 9}), UnknownSymbol);
}

TEST_CASE("training: ensemble_distribution mixes probabilities") {
  StepDistribution a = dist_from_probs({0.6, 0.4});
  StepDistribution b = dist_from_probs({0.2, 0.8});
  StepDistribution mix = ensemble_distribution({a, b});
  Tensor p = softmax_temperature(mix.logits, 1.0);
  CHECK(p.values[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(p.values[1] == doctest::Approx(0.6).epsilon(1e-12));

  // idempotence: identical members reproduce the member
  StepDistribution same = ensemble_distribution({a, a, a});
  Tensor ps = softmax_temperature(same.logits, 1.0);
  CHECK(ps.values[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(ps.values[1] == doctest::Approx(0.4).epsilon(1e-12));

  StepDistribution c = dist_from_probs({0.3, 0.3, 0.4});
  CHECK_THROWS_AS(ensemble_distribution({a, c}), VocabMismatch);
  CHECK_THROWS_AS(ensemble_distribution({a}), ConfigInvalid);
}

TEST_CASE("training: ensemble mixture matches high-precision recomputation") {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const int v = 2 + static_cast<int>(rng.below(6));
    std::vector<StepDistribution> members;
    std::vector<std::vector<double>> probs;
    for (int k = 0; k < 3; ++k) {
      std::vector<double> p(static_cast<size_t>(v));
      double sum = 0;
      for (auto& x : p) {
        x = 0.01 + rng.uniform();
        sum += x;
      }
      for (auto& x : p) x /= sum;
      probs.push_back(p);
      members.push_back(dist_from_probs(p));
    }
    StepDistribution mix = ensemble_distribution(members);
    Tensor got = softmax_temperature(mix.logits, 1.0);
    double total = 0;
    for (int i = 0; i < v; ++i) {
      double want = (probs[0][i] + probs[1][i] + probs[2][i]) / 3.0;
      CHECK(std::abs(static_cast<double>(got.values[i]) - want) < 1e-12);
      total += static_cast<double>(got.values[i]);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("training: kd_loss fixed values and scaling") {
  // teacher q=[0.8,0.2] against student p=[0.5,0.5] at T=1 is ln 2
  std::vector<StepDistribution> q = {dist_from_probs({0.8, 0.2})};
  std::vector<StepDistribution> p = {dist_from_probs({0.5, 0.5})};
  CHECK(kd_loss(q, p, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // teacher == student at T=1 sits at the entropy floor
  std::vector<StepDistribution> t2 = {dist_from_probs({0.7, 0.2, 0.1})};
  double floor = kd_loss(t2, t2, 1.0);
  double want_entropy =
      -(0.7 * std::log(0.7) + 0.2 * std::log(0.2) + 0.1 * std::log(0.1));
  CHECK(floor == doctest::Approx(want_entropy).epsilon(1e-9));
  // any other student is more expensive
  std::vector<StepDistribution> other = {dist_from_probs({0.5, 0.3, 0.2})};
  CHECK(kd_loss(t2, other, 1.0) > floor);

  // the T^2 factor against a manual recomputation at T=2.5
  double manual = 0;
  {
    Tensor qt = softmax_temperature(q[0].logits, 2.5);
    Tensor pt = softmax_temperature(p[0].logits, 2.5);
    manual = static_cast<double>(cross_entropy(qt, pt)) * 2.5 * 2.5;
  }
  CHECK(kd_loss(q, p, 2.5) == doctest::Approx(manual).epsilon(1e-12));

  CHECK_THROWS_AS(kd_loss(q, {}, 1.0), LengthMismatch);
  CHECK_THROWS_AS(kd_loss(q, p, 0.0), NonPositiveTemperature);
  std::vector<StepDistribution> wide = {dist_from_probs({0.5, 0.3, 0.2})};
  CHECK_THROWS_AS(kd_loss(q, wide, 1.0), VocabMismatch);
}

TEST_CASE("training: one-hot teacher reduces kd to nll on teacher labels") {
  Rng rng(505);
  for (int trial = 0; trial < 50; ++trial) {
    const int v = 3 + static_cast<int>(rng.below(5));
    const int steps = 1 + static_cast<int>(rng.below(4));
    std::vector<StepDistribution> teacher, student;
    std::vector<int> labels;
    for (int s = 0; s < steps; ++s) {
      int hot = static_cast<int>(rng.below(static_cast<uint64_t>(v)));
      labels.push_back(hot);
      std::vector<double> tq(static_cast<size_t>(v), 0.0);
      tq[static_cast<size_t>(hot)] = 1.0;
      teacher.push_back(dist_from_probs(tq));
      std::vector<double> sp(static_cast<size_t>(v));
      double sum = 0;
      for (auto& x : sp) {
        x = 0.05 + rng.uniform();
        sum += x;
      }
      for (auto& x : sp) x /= sum;
      student.push_back(dist_from_probs(sp));
    }
    CHECK(std::abs(kd_loss(teacher, student, 1.0) - nll_loss(student, labels)) < 1e-6);
  }
}

TEST_CASE("training: student_loss is affine in lambda") {
  Corpus c = built_corpus(71, 10);
  EncodedCorpus enc = encode_corpus(c, c.source_vocab, c.target_vocab);
  ModelParams student = init_params(tiny_config(), enc.src_vocab_size, enc.tgt_vocab_size,
                                    enc.copy_base, 21);
  ModelParams teacher = init_params(tiny_config(), enc.src_vocab_size, enc.tgt_vocab_size,
                                    enc.copy_base, 22);
  const EncodedExample& ex = enc.examples[0];

  double l0 = student_loss(student, {&teacher}, ex, 0.0, 1.0);
  double lh = student_loss(student, {&teacher}, ex, 0.5, 1.0);
  double l1 = student_loss(student, {&teacher}, ex, 1.0, 1.0);
  double l2 = student_loss(student, {&teacher}, ex, 2.0, 1.0);

  // lambda = 0 leaves pure KD
  std::vector<StepDistribution> s = forward_teacher_forced(student, ex.src, ex.tgt);
  std::vector<StepDistribution> t = forward_teacher_forced(teacher, ex.src, ex.tgt);
  CHECK(l0 == doctest::Approx(kd_loss(t, s, 1.0)).epsilon(1e-12));

  // equal spacing in lambda gives equal spacing in loss
  CHECK(l1 - lh == doctest::Approx(lh - l0).epsilon(1e-9));
  CHECK(l2 - l1 == doctest::Approx(2.0 * (lh - l0)).epsilon(1e-9));

  // the slope is exactly the NLL term
  std::vector<int> gold = ex.tgt;
  gold.push_back(Vocab::kEos);
  CHECK(l1 - l0 == doctest::Approx(nll_loss(s, gold)).epsilon(1e-9));

  // two-teacher mixture path works and differs from the single teacher
  ModelParams teacher2 = init_params(tiny_config(), enc.src_vocab_size, enc.tgt_vocab_size,
                                     enc.copy_base, 23);
  double mix = student_loss(student, {&teacher, &teacher2}, ex, 1.0, 1.0);
  CHECK(mix != doctest::Approx(l1).epsilon(1e-9));

  Corpus c2 = generate_synthetic(71, 4, 0.0);
  // a vocab of a different size must be rejected
  Corpus small;
  small.split = Split::Train;
  small.examples = {c2.examples[0]};
  build_vocab(small);
  EncodedCorpus enc_small = encode_corpus(small, small.source_vocab, small.target_vocab);
  ModelParams other = init_params(tiny_config(), enc_small.src_vocab_size,
                                  enc_small.tgt_vocab_size, enc_small.copy_base, 24);
  CHECK_THROWS_AS(student_loss(student, {&other}, ex, 1.0, 1.0), VocabMismatch);
}

TEST_CASE("training: baseline runs are deterministic") {
  Corpus c = built_corpus(81, 40);
  RegimeConfig rc = tiny_regime("baseline", {400});
  TrainedRun r1 = train(rc, c);
  TrainedRun r2 = train(rc, c);
  REQUIRE(r1.models.size() == 1);
  CHECK(params_fingerprint(r1.models[0].params) == params_fingerprint(r2.models[0].params));
  CHECK(r1.models[0].loss_curve == r2.models[0].loss_curve);
  CHECK(r1.config_hash == r2.config_hash);
  CHECK(r1.models[0].wall_steps == rc.steps);
  CHECK(static_cast<int>(r1.models[0].loss_curve.size()) == rc.steps);

  // a different seed moves the parameters
  RegimeConfig rc2 = tiny_regime("baseline", {401});
  TrainedRun r3 = train(rc2, c);
  CHECK(params_fingerprint(r1.models[0].params) != params_fingerprint(r3.models[0].params));
  CHECK(r1.config_hash != r3.config_hash);
}

TEST_CASE("training: loss decreases over a short baseline run") {
  Corpus c = built_corpus(83, 40);
  RegimeConfig rc = tiny_regime("baseline", {83});
  rc.steps = 60;
  TrainedRun r = train(rc, c);
  const std::vector<double>& curve = r.models[0].loss_curve;
  double head = std::accumulate(curve.begin(), curve.begin() + 5, 0.0) / 5.0;
  double tail = std::accumulate(curve.end() - 5, curve.end(), 0.0) / 5.0;
  CHECK(tail < head);
}

TEST_CASE("training: co-distillation with kd disabled is bitwise baseline") {
  Corpus c = built_corpus(91, 30);

  RegimeConfig co = tiny_regime("codistill", {900, 901}, 2);
  co.steps = 15;
  co.burn_in_steps = 1000000;  // kd never activates
  TrainedRun rc_run = train(co, c);
  REQUIRE(rc_run.models.size() == 2);

  for (int i = 0; i < 2; ++i) {
    RegimeConfig base = tiny_regime("baseline", {co.seeds[static_cast<size_t>(i)]});
    base.steps = co.steps;
    TrainedRun rb = train(base, c);
    CHECK(params_fingerprint(rb.models[0].params) ==
          params_fingerprint(rc_run.models[static_cast<size_t>(i)].params));
    CHECK(rb.models[0].loss_curve == rc_run.models[static_cast<size_t>(i)].loss_curve);
  }

  // with kd active from the start, peers leave the baseline trajectory
  RegimeConfig co2 = tiny_regime("codistill", {900, 901}, 2);
  co2.steps = 15;
  co2.burn_in_steps = 0;
  TrainedRun active = train(co2, c);
  RegimeConfig base0 = tiny_regime("baseline", {900});
  base0.steps = 15;
  TrainedRun rb0 = train(base0, c);
  CHECK(params_fingerprint(active.models[0].params) !=
        params_fingerprint(rb0.models[0].params));
}

TEST_CASE("training: symmetric peers stay in lockstep") {
  Corpus c = built_corpus(95, 20);
  EncodedCorpus enc = encode_corpus(c, c.source_vocab, c.target_vocab);

  CodistillState st;
  for (int i = 0; i < 2; ++i) {
    st.peers.push_back(init_params(tiny_config(), enc.src_vocab_size, enc.tgt_vocab_size,
                                   enc.copy_base, 7));
    OptimizerState opt;
    opt.cfg.lr = 1e-3;
    st.opts.push_back(std::move(opt));
    st.dropout_rngs.emplace_back(1);
  }

  Rng pick(33);
  for (int step = 0; step < 8; ++step) {
    std::vector<const EncodedExample*> batch;
    for (int b = 0; b < 6; ++b)
      batch.push_back(&enc.examples[pick.below(enc.examples.size())]);
    codistill_step(st, {batch, batch}, 1.0, 1.0, 0);
  }
  CHECK(st.step == 8);
  CHECK(st.loss_curves[0] == st.loss_curves[1]);
  CHECK(params_fingerprint(st.peers[0]) == params_fingerprint(st.peers[1]));
}

TEST_CASE("training: peer mismatches are rejected") {
  Corpus c = built_corpus(97, 12);
  EncodedCorpus enc = encode_corpus(c, c.source_vocab, c.target_vocab);

  ModelConfig other = tiny_config();
  other.decoder_dim = 32;
  other.decoder_heads = 2;

  CodistillState st;
  st.peers.push_back(init_params(tiny_config(), enc.src_vocab_size, enc.tgt_vocab_size,
                                 enc.copy_base, 1));
  st.peers.push_back(init_params(other, enc.src_vocab_size, enc.tgt_vocab_size,
                                 enc.copy_base, 2));
  for (int i = 0; i < 2; ++i) {
    st.opts.emplace_back();
    st.dropout_rngs.emplace_back(1);
  }
  std::vector<const EncodedExample*> batch = {&enc.examples[0]};
  CHECK_THROWS_AS(codistill_step(st, {batch, batch}, 1.0, 1.0, 0), PeerConfigMismatch);

  CodistillState lone;
  lone.peers.push_back(init_params(tiny_config(), enc.src_vocab_size, enc.tgt_vocab_size,
                                   enc.copy_base, 1));
  lone.opts.emplace_back();
  lone.dropout_rngs.emplace_back(1);
  CHECK_THROWS_AS(codistill_step(lone, {batch}, 1.0, 1.0, 0), PeerConfigMismatch);
}

TEST_CASE("training: ensemble run composes member distributions") {
  Corpus c = built_corpus(101, 30);
  EncodedCorpus enc = encode_corpus(c, c.source_vocab, c.target_vocab);
  RegimeConfig rc = tiny_regime("ensemble", {550}, 3);
  rc.steps = 12;
  TrainedRun run = train(rc, c);
  REQUIRE(run.models.size() == 3);

  // derived member seeds are seed+index
  CHECK(run.models[0].seed == 550);
  CHECK(run.models[1].seed == 551);
  CHECK(run.models[2].seed == 552);

  const EncodedExample& ex = enc.examples[2];
  std::vector<int> prefix(ex.tgt.begin(), ex.tgt.begin() + 2);

  std::vector<std::unique_ptr<StepScorer>> members;
  for (const TrainedModel& m : run.models)
    members.push_back(std::make_unique<ModelScorer>(m.params, ex.src));
  EnsembleScorer composite(std::move(members));
  std::vector<double> got = composite.next_probs(prefix);

  std::vector<StepDistribution> at_step;
  for (const TrainedModel& m : run.models) {
    std::vector<StepDistribution> steps = forward_teacher_forced(m.params, ex.src, prefix);
    at_step.push_back(steps.back());
  }
  Tensor want = softmax_temperature(ensemble_distribution(at_step).logits, 1.0);

  double sum = 0;
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(got[i] - static_cast<double>(want.values[i])) < 1e-9);
    sum += got[i];
  }
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("training: soft distillation trains teachers then a student") {
  Corpus c = built_corpus(103, 30);
  RegimeConfig rc = tiny_regime("distill_soft", {700}, 2);
  rc.steps = 12;
  TrainedRun run = train(rc, c);
  REQUIRE(run.models.size() == 1);
  REQUIRE(run.teachers.size() == 2);

  // the teachers are exactly the models an ensemble with the derived seeds
  // would train, and student training left them untouched
  RegimeConfig ens = tiny_regime("ensemble", {701, 702}, 2);
  ens.steps = 12;
  TrainedRun ens_run = train(ens, c);
  CHECK(params_fingerprint(run.teachers[0].params) ==
        params_fingerprint(ens_run.models[0].params));
  CHECK(params_fingerprint(run.teachers[1].params) ==
        params_fingerprint(ens_run.models[1].params));

  // the kd term changed the student relative to a pure baseline at the seed
  RegimeConfig base = tiny_regime("baseline", {700});
  base.steps = 12;
  TrainedRun base_run = train(base, c);
  CHECK(params_fingerprint(run.models[0].params) !=
        params_fingerprint(base_run.models[0].params));

  // large-model teacher path
  RegimeConfig lm = tiny_regime("distill_soft", {700}, 1);
  lm.teacher_source = "large_model";
  lm.teacher_model = tiny_config();
  lm.teacher_model.decoder_layers = 2;
  lm.teacher_model.size_class = "teacher";
  lm.steps = 8;
  TrainedRun lm_run = train(lm, c);
  CHECK(lm_run.teachers.size() == 1);
  CHECK(lm_run.teachers[0].params.config.decoder_layers == 2);
}

TEST_CASE("training: hard labels double the corpus") {
  Corpus c = built_corpus(107, 12);
  EncodedCorpus enc = encode_corpus(c, c.source_vocab, c.target_vocab);

  ModelParams teacher = init_params(tiny_config(), enc.src_vocab_size, enc.tgt_vocab_size,
                                    enc.copy_base, 3);
  Corpus aug = precompute_hard_labels({&teacher}, c, c.source_vocab, c.target_vocab, 3);
  REQUIRE(aug.examples.size() == 2 * c.examples.size());

  int64_t max_id = 0;
  for (const Example& ex : c.examples) max_id = std::max(max_id, ex.id);

  for (size_t i = 0; i < c.examples.size(); ++i) {
    const Example& gold = aug.examples[2 * i];
    const Example& labeled = aug.examples[2 * i + 1];
    CHECK(gold.id == c.examples[i].id);
    CHECK(gold.target_text == c.examples[i].target_text);
    CHECK(labeled.utterance == c.examples[i].utterance);
    CHECK(labeled.id > max_id);

    // the stored label matches a standalone beam rerun bitwise
    std::vector<int> src;
    for (const auto& tok : c.examples[i].utterance) src.push_back(c.source_vocab.lookup(tok));
    DecodeResult rerun = beam_search(teacher, src, c.target_vocab, c.examples[i].utterance, 3);
    CHECK(labeled.target_text == rerun.text);
    CHECK(labeled.has_tree == rerun.parseable);
    if (labeled.has_tree) CHECK(serialize_tree(labeled.gold) == labeled.target_text);
  }

  // ids stay unique
  std::vector<int64_t> ids;
  for (const Example& ex : aug.examples) ids.push_back(ex.id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());

  // the augmented corpus is trainable end to end
  RegimeConfig rc = tiny_regime("distill_hard", {800}, 2);
  rc.steps = 6;
  TrainedRun run = train(rc, c);
  CHECK(run.models.size() == 1);
  CHECK(run.teachers.size() == 2);
}

TEST_CASE("training: a memorizing teacher duplicates gold pairs") {
  Corpus c = built_corpus(109, 5);
  RegimeConfig rc = tiny_regime("baseline", {123});
  rc.steps = 300;
  rc.batch_size = 5;
  TrainedRun run = train(rc, c);

  Corpus aug = precompute_hard_labels({&run.models[0].params}, c, c.source_vocab,
                                      c.target_vocab, 3);
  int duplicated = 0;
  for (size_t i = 0; i < c.examples.size(); ++i)
    if (aug.examples[2 * i + 1].target_text == aug.examples[2 * i].target_text) ++duplicated;
  CHECK(duplicated == static_cast<int>(c.examples.size()));
}

TEST_CASE("training: config validation errors") {
  Corpus c = built_corpus(113, 8);

  CHECK_THROWS_AS(train(tiny_regime("nonsense", {1}), c), ConfigInvalid);
  CHECK_THROWS_AS(train(tiny_regime("baseline", {}), c), ConfigInvalid);
  CHECK_THROWS_AS(train(tiny_regime("baseline", {1}, 2), c), ConfigInvalid);
  CHECK_THROWS_AS(train(tiny_regime("ensemble", {1}, 1), c), ConfigInvalid);
  CHECK_THROWS_AS(train(tiny_regime("codistill", {1}, 1), c), ConfigInvalid);
  CHECK_THROWS_AS(train(tiny_regime("ensemble", {1, 2}, 3), c), ConfigInvalid);

  RegimeConfig neg = tiny_regime("baseline", {1});
  neg.learning_rate = 0.0;
  CHECK_THROWS_AS(train(neg, c), ConfigInvalid);
  neg = tiny_regime("baseline", {1});
  neg.temperature = -1.0;
  CHECK_THROWS_AS(train(neg, c), ConfigInvalid);
  neg = tiny_regime("distill_soft", {1}, 2);
  neg.teacher_source = "oracle";
  CHECK_THROWS_AS(train(neg, c), ConfigInvalid);

  Corpus empty;
  empty.split = Split::Train;
  CHECK_THROWS_AS(train(tiny_regime("baseline", {1}), empty), CorpusEmpty);
}

TEST_CASE("training: regime serialization is stable and seed-sensitive") {
  RegimeConfig a = tiny_regime("codistill", {1, 2}, 2);
  RegimeConfig b = tiny_regime("codistill", {1, 2}, 2);
  CHECK(regime_to_string(a) == regime_to_string(b));
  b.seeds = {1, 3};
  CHECK(regime_to_string(a) != regime_to_string(b));
  b = a;
  b.lambda = 0.5;
  CHECK(regime_to_string(a) != regime_to_string(b));
}

TEST_CASE("training: peers agree more than independent baselines") {
  // paired-seed experiment: same seeds drive a baseline pair and a peer
  // pair; the mutual kd term should raise prediction agreement
  Corpus full = generate_synthetic(131, 180, 0.35);
  Corpus train_c, eval_c;
  train_c.split = Split::Train;
  eval_c.split = Split::Eval;
  for (size_t i = 0; i < full.examples.size(); ++i)
    (i < 120 ? train_c : eval_c).examples.push_back(full.examples[i]);
  build_vocab(train_c);
  eval_c.source_vocab = train_c.source_vocab;
  eval_c.target_vocab = train_c.target_vocab;
  EncodedCorpus eval_enc = encode_corpus(eval_c, train_c.source_vocab, train_c.target_vocab);

  int peer_wins = 0, trials = 5;
  double mean_gap = 0;
  for (int trial = 0; trial < trials; ++trial) {
    uint64_t s1 = 3000 + static_cast<uint64_t>(trial) * 17;
    uint64_t s2 = s1 + 9;

    RegimeConfig base = tiny_regime("baseline", {s1});
    base.steps = 80;
    base.batch_size = 16;
    TrainedRun b1 = train(base, train_c);
    base.seeds = {s2};
    TrainedRun b2 = train(base, train_c);
    double base_agr = agreement_of_pair(b1.models[0].params, b2.models[0].params, eval_c, eval_enc);

    RegimeConfig co = tiny_regime("codistill", {s1, s2}, 2);
    co.steps = 80;
    co.batch_size = 16;
    TrainedRun cr = train(co, train_c);
    double peer_agr = agreement_of_pair(cr.models[0].params, cr.models[1].params, eval_c, eval_enc);

    mean_gap += peer_agr - base_agr;
    if (peer_agr >= base_agr) ++peer_wins;
  }
  CHECK(peer_wins >= 3);
  CHECK(mean_gap / trials >= 0.0);
}
