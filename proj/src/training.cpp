#include "jitterlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

namespace jitterlab {

namespace {

constexpr uint64_t kInitStream = 0x11717ULL;
constexpr uint64_t kBatchStream = 0xBA7C4ULL;
constexpr uint64_t kDropStream = 0xD40DULL;
constexpr double kLogFloor = 1e-300;

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string model_config_lines(const std::string& prefix, const ModelConfig& c) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) {
    out += prefix + "." + k + "=" + v + "\n";
  };
  kv("encoder_layers", std::to_string(c.encoder_layers));
  kv("encoder_heads", std::to_string(c.encoder_heads));
  kv("encoder_dim", std::to_string(c.encoder_dim));
  kv("decoder_layers", std::to_string(c.decoder_layers));
  kv("decoder_heads", std::to_string(c.decoder_heads));
  kv("decoder_dim", std::to_string(c.decoder_dim));
  kv("output_embed_dim", std::to_string(c.output_embed_dim));
  kv("dropout", fmt_real(c.dropout));
  kv("max_output_len", std::to_string(c.max_output_len));
  kv("max_src_positions", std::to_string(c.max_src_positions));
  kv("size_class", c.size_class);
  return out;
}

// Epoch-shuffled index stream; a batch that crosses an epoch boundary
// reshuffles mid-draw so every batch has exactly `b` entries.
struct Batcher {
  Rng rng;
  std::vector<int> order;
  size_t pos = 0;

  Batcher(uint64_t seed, int n) : rng(seed), order(static_cast<size_t>(n)) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
  }
  std::vector<int> next(int b) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(b));
    while (static_cast<int>(out.size()) < b) {
      if (pos == order.size()) {
        rng.shuffle(order);
        pos = 0;
      }
      out.push_back(order[pos++]);
    }
    return out;
  }
};

Tensor eval_logits(const ModelParams& p, const std::vector<const EncodedExample*>& batch) {
  Graph g(false);
  BatchForward bf = forward_batch(g, p, batch, false, nullptr);
  return g.val(bf.logits);
}

// Teacher rows for a batch: one teacher passes its logits straight through;
// several teachers become the uniform probability mixture re-expressed as
// log-probabilities.
Tensor teacher_rows_for_batch(const std::vector<const ModelParams*>& teachers,
                              const std::vector<const EncodedExample*>& batch) {
  if (teachers.size() == 1) return eval_logits(*teachers[0], batch);
  Tensor acc;
  for (size_t k = 0; k < teachers.size(); ++k) {
    Tensor z = eval_logits(*teachers[k], batch);
    Tensor pr = softmax_temperature_rows(z, 1.0);
    if (k == 0) {
      acc = std::move(pr);
    } else {
      if (!acc.same_shape(pr)) throw VocabMismatch("teacher logit shapes disagree");
      for (size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += pr.values[i];
    }
  }
  const real inv_k = real(1) / static_cast<real>(teachers.size());
  for (auto& v : acc.values)
    v = static_cast<real>(std::log(std::max(static_cast<double>(v) * inv_k, kLogFloor)));
  return acc;
}

struct TrainTask {
  const ModelConfig* config;
  const EncodedCorpus* data;
  uint64_t seed;
  int steps;
  int batch_size;
  double lr;
  double lambda;
  double temperature;
  std::vector<const ModelParams*> teachers;  // empty: plain NLL
};

TrainedModel train_single(const TrainTask& t) {
  TrainedModel out;
  out.seed = t.seed;
  out.params = init_params(*t.config, t.data->src_vocab_size, t.data->tgt_vocab_size,
                           t.data->copy_base, derive_seed(t.seed, kInitStream));
  OptimizerState opt;
  opt.cfg.lr = t.lr;
  Batcher batcher(derive_seed(t.seed, kBatchStream), static_cast<int>(t.data->examples.size()));
  Rng drop_rng(derive_seed(t.seed, kDropStream));

  for (int step = 0; step < t.steps; ++step) {
    std::vector<const EncodedExample*> batch;
    for (int i : batcher.next(t.batch_size)) batch.push_back(&t.data->examples[i]);

    Graph g(true);
    BatchForward bf = forward_batch(g, out.params, batch, true, &drop_rng);
    int nll = g.nll_rows(bf.logits, bf.targets);
    int loss = nll;
    if (!t.teachers.empty()) {
      int kd = g.soft_ce_rows(bf.logits, teacher_rows_for_batch(t.teachers, batch),
                              t.temperature);
      loss = g.add(g.scale(nll, t.lambda), kd);
    }
    out.loss_curve.push_back(static_cast<double>(g.val(loss).values[0]));
    g.backward(loss);

    std::map<std::string, Tensor> grads;
    for (const auto& [name, node] : bf.param_nodes) grads.emplace(name, g.grad(node));
    adam_step(opt, out.params.tensors, grads);
  }
  out.wall_steps = t.steps;
  return out;
}

void check_peer_compatible(const ModelParams& a, const ModelParams& b) {
  const ModelConfig &x = a.config, &y = b.config;
  bool same_config = x.encoder_layers == y.encoder_layers && x.encoder_heads == y.encoder_heads &&
                     x.encoder_dim == y.encoder_dim && x.decoder_layers == y.decoder_layers &&
                     x.decoder_heads == y.decoder_heads && x.decoder_dim == y.decoder_dim &&
                     x.output_embed_dim == y.output_embed_dim &&
                     x.max_output_len == y.max_output_len &&
                     x.max_src_positions == y.max_src_positions && x.dropout == y.dropout;
  if (!same_config) throw PeerConfigMismatch("peer architectures differ");
  if (a.src_vocab_size != b.src_vocab_size || a.tgt_vocab_size != b.tgt_vocab_size ||
      a.copy_base != b.copy_base || a.copy_count != b.copy_count)
    throw PeerConfigMismatch("peer vocabulary geometry differs");
}

}  // namespace

void RegimeConfig::validate() const {
  static const std::vector<std::string> kMethods = {"baseline", "ensemble", "distill_soft",
                                                    "distill_hard", "codistill"};
  if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end())
    throw ConfigInvalid("unknown method '" + method + "'");
  if (seeds.empty()) throw ConfigInvalid("seed list is empty");
  if (steps < 1) throw ConfigInvalid("steps must be >= 1");
  if (batch_size < 1) throw ConfigInvalid("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigInvalid("learning_rate must be > 0");
  if (lambda < 0.0) throw ConfigInvalid("lambda must be >= 0");
  if (temperature <= 0.0) throw ConfigInvalid("temperature must be > 0");
  if (burn_in_steps < 0) throw ConfigInvalid("burn_in_steps must be >= 0");
  if (teacher_beam_width < 1) throw ConfigInvalid("teacher_beam_width must be >= 1");

  if (method == "baseline" && k != 1) throw ConfigInvalid("baseline uses k=1");
  if ((method == "ensemble" || method == "codistill") && k < 2)
    throw ConfigInvalid(method + " needs k >= 2");
  if (method == "distill_soft" || method == "distill_hard") {
    if (teacher_source != "ensemble" && teacher_source != "large_model")
      throw ConfigInvalid("teacher_source must be ensemble or large_model");
    if (teacher_source == "ensemble" && k < 2)
      throw ConfigInvalid("ensemble teacher needs k >= 2");
    teacher_model.validate();
  }
  if (seeds.size() != 1 && static_cast<int>(seeds.size()) != k)
    throw ConfigInvalid("seed list must have 1 or k entries");
  model.validate();
}

uint64_t RegimeConfig::seed_for_member(int index) const {
  if (static_cast<int>(seeds.size()) == k) return seeds[static_cast<size_t>(index)];
  return seeds.at(0) + static_cast<uint64_t>(index);
}

std::string regime_to_string(const RegimeConfig& rc) {
  std::string out;
  out += "method=" + rc.method + "\n";
  out += "k=" + std::to_string(rc.k) + "\n";
  out += "lambda=" + fmt_real(rc.lambda) + "\n";
  out += "temperature=" + fmt_real(rc.temperature) + "\n";
  out += "teacher_source=" + rc.teacher_source + "\n";
  out += "burn_in_steps=" + std::to_string(rc.burn_in_steps) + "\n";
  out += "seeds=";
  for (size_t i = 0; i < rc.seeds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(rc.seeds[i]);
  }
  out += "\n";
  out += "steps=" + std::to_string(rc.steps) + "\n";
  out += "batch_size=" + std::to_string(rc.batch_size) + "\n";
  out += "learning_rate=" + fmt_real(rc.learning_rate) + "\n";
  out += "teacher_beam_width=" + std::to_string(rc.teacher_beam_width) + "\n";
  out += model_config_lines("model", rc.model);
  out += model_config_lines("teacher_model", rc.teacher_model);
  return out;
}

double nll_loss(const std::vector<StepDistribution>& dists, const std::vector<int>& gold_targets) {
  if (dists.size() != gold_targets.size())
    throw LengthMismatch(std::to_string(dists.size()) + " distributions vs " +
                         std::to_string(gold_targets.size()) + " targets");
  if (dists.empty()) throw LengthMismatch("no timesteps");
  double acc = 0;
  for (size_t i = 0; i < dists.size(); ++i) {
    Tensor p = softmax_temperature(dists[i].logits, 1.0);
    int y = gold_targets[i];
    if (y < 0 || y >= static_cast<int>(p.values.size()))
      throw UnknownSymbol("gold id " + std::to_string(y));
    acc += -std::log(std::max(static_cast<double>(p.values[static_cast<size_t>(y)]), kLogFloor));
  }
  return acc / static_cast<double>(dists.size());
}

StepDistribution ensemble_distribution(const std::vector<StepDistribution>& member_dists) {
  if (member_dists.size() < 2) throw ConfigInvalid("ensemble mixture needs K >= 2 members");
  const size_t v = member_dists[0].logits.values.size();
  std::vector<double> mean(v, 0.0);
  for (const StepDistribution& m : member_dists) {
    if (m.logits.values.size() != v)
      throw VocabMismatch("member vocabulary sizes differ: " + std::to_string(v) + " vs " +
                          std::to_string(m.logits.values.size()));
    Tensor p = softmax_temperature(m.logits, 1.0);
    for (size_t i = 0; i < v; ++i) mean[i] += static_cast<double>(p.values[i]);
  }
  StepDistribution out;
  out.t = member_dists[0].t;
  out.logits = Tensor({static_cast<int>(v)});
  const double inv_k = 1.0 / static_cast<double>(member_dists.size());
  for (size_t i = 0; i < v; ++i)
    out.logits.values[i] = static_cast<real>(std::log(std::max(mean[i] * inv_k, kLogFloor)));
  return out;
}

double kd_loss(const std::vector<StepDistribution>& teacher_dists,
               const std::vector<StepDistribution>& student_dists, double temperature) {
  if (teacher_dists.size() != student_dists.size())
    throw LengthMismatch(std::to_string(teacher_dists.size()) + " teacher vs " +
                         std::to_string(student_dists.size()) + " student steps");
  if (teacher_dists.empty()) throw LengthMismatch("no timesteps");
  double acc = 0;
  for (size_t i = 0; i < teacher_dists.size(); ++i) {
    if (teacher_dists[i].logits.values.size() != student_dists[i].logits.values.size())
      throw VocabMismatch("teacher/student vocabulary sizes differ");
    Tensor q = softmax_temperature(teacher_dists[i].logits, temperature);
    Tensor p = softmax_temperature(student_dists[i].logits, temperature);
    acc += static_cast<double>(cross_entropy(q, p));
  }
  return (acc / static_cast<double>(teacher_dists.size())) * temperature * temperature;
}

double student_loss(const ModelParams& student, const std::vector<const ModelParams*>& teachers,
                    const EncodedExample& ex, double lambda, double temperature) {
  if (teachers.empty()) throw ConfigInvalid("student_loss needs at least one teacher");
  for (const ModelParams* t : teachers)
    if (t->tgt_vocab_size != student.tgt_vocab_size)
      throw VocabMismatch("teacher and student target vocabularies differ");

  std::vector<StepDistribution> s = forward_teacher_forced(student, ex.src, ex.tgt);
  std::vector<StepDistribution> teacher_steps;
  if (teachers.size() == 1) {
    teacher_steps = forward_teacher_forced(*teachers[0], ex.src, ex.tgt);
  } else {
    std::vector<std::vector<StepDistribution>> members;
    for (const ModelParams* t : teachers) members.push_back(forward_teacher_forced(*t, ex.src, ex.tgt));
    for (size_t step = 0; step < members[0].size(); ++step) {
      std::vector<StepDistribution> at_step;
      for (const auto& m : members) at_step.push_back(m[step]);
      teacher_steps.push_back(ensemble_distribution(at_step));
    }
  }

  std::vector<int> gold = ex.tgt;
  gold.push_back(Vocab::kEos);
  return lambda * nll_loss(s, gold) + kd_loss(teacher_steps, s, temperature);
}

Corpus precompute_hard_labels(const std::vector<const ModelParams*>& teachers,
                              const Corpus& train, const Vocab& source_vocab,
                              const Vocab& target_vocab, int beam_width) {
  if (teachers.empty()) throw ConfigInvalid("hard labels need at least one teacher");
  Corpus out;
  out.split = train.split;
  out.source_vocab = source_vocab;
  out.target_vocab = target_vocab;
  out.examples.reserve(train.examples.size() * 2);

  int64_t max_id = 0;
  for (const Example& ex : train.examples) max_id = std::max(max_id, ex.id);

  for (size_t i = 0; i < train.examples.size(); ++i) {
    const Example& ex = train.examples[i];
    out.examples.push_back(ex);

    std::vector<int> src;
    src.reserve(ex.utterance.size());
    for (const auto& tok : ex.utterance) src.push_back(source_vocab.lookup(tok));

    DecodeResult dr;
    if (teachers.size() == 1) {
      dr = beam_search(*teachers[0], src, target_vocab, ex.utterance, beam_width);
    } else {
      std::vector<std::unique_ptr<StepScorer>> members;
      for (const ModelParams* t : teachers)
        members.push_back(std::make_unique<ModelScorer>(*t, src));
      EnsembleScorer ens(std::move(members));
      BeamResult br = beam_search_scorer(ens, beam_width,
                                         teachers[0]->config.max_output_len, Vocab::kEos);
      dr = detokenize(br.symbols, br.truncated, target_vocab, ex.utterance);
    }

    Example labeled;
    labeled.id = max_id + 1 + static_cast<int64_t>(i);
    labeled.utterance = ex.utterance;
    labeled.target_text = dr.text;
    if (dr.parseable) {
      labeled.gold = *parse_tree(dr.text).tree;
      labeled.has_tree = true;
    } else {
      labeled.has_tree = false;
    }
    out.examples.push_back(std::move(labeled));
  }
  return out;
}

void codistill_step(CodistillState& st,
                    const std::vector<std::vector<const EncodedExample*>>& batches, double lambda,
                    double temperature, int burn_in_steps) {
  const size_t kp = st.peers.size();
  if (kp < 2) throw PeerConfigMismatch("co-distillation needs at least 2 peers");
  if (batches.size() != kp || st.opts.size() != kp || st.dropout_rngs.size() != kp)
    throw PeerConfigMismatch("peer state arity disagrees");
  for (size_t k = 1; k < kp; ++k) check_peer_compatible(st.peers[0], st.peers[k]);
  if (st.loss_curves.size() != kp) st.loss_curves.assign(kp, {});

  const bool kd_active = st.step + 1 > static_cast<int64_t>(burn_in_steps);

  // pre-update teacher signals: peer j's eval-mode distributions on peer k's
  // batch, captured before anyone updates
  std::vector<std::vector<Tensor>> teacher_rows(kp, std::vector<Tensor>(kp));
  if (kd_active) {
    for (size_t j = 0; j < kp; ++j)
      for (size_t k = 0; k < kp; ++k)
        if (j != k) teacher_rows[j][k] = eval_logits(st.peers[j], batches[k]);
  }

  std::vector<std::map<std::string, Tensor>> grads(kp);
  for (size_t k = 0; k < kp; ++k) {
    Graph g(true);
    BatchForward bf = forward_batch(g, st.peers[k], batches[k], true, &st.dropout_rngs[k]);
    int nll = g.nll_rows(bf.logits, bf.targets);
    int loss = nll;
    if (kd_active) {
      loss = g.scale(nll, lambda);
      for (size_t j = 0; j < kp; ++j) {
        if (j == k) continue;
        loss = g.add(loss, g.soft_ce_rows(bf.logits, teacher_rows[j][k], temperature));
      }
    }
    st.loss_curves[k].push_back(static_cast<double>(g.val(loss).values[0]));
    g.backward(loss);
    for (const auto& [name, node] : bf.param_nodes) grads[k].emplace(name, g.grad(node));
  }
  for (size_t k = 0; k < kp; ++k) adam_step(st.opts[k], st.peers[k].tensors, grads[k]);
  st.step += 1;
}

TrainedRun train(const RegimeConfig& rc, const Corpus& train_corpus) {
  rc.validate();
  if (train_corpus.examples.empty()) throw CorpusEmpty();

  const Corpus* cp = &train_corpus;
  Corpus local;
  if (train_corpus.source_vocab.size() == 0) {
    local = train_corpus;
    build_vocab(local);
    cp = &local;
  }
  EncodedCorpus enc = encode_corpus(*cp, cp->source_vocab, cp->target_vocab);

  TrainedRun run;
  run.config = rc;
  run.corpus_fingerprint = corpus_fingerprint(*cp);
  uint64_t h = fnv1a_str(regime_to_string(rc));
  run.config_hash = fnv1a(&run.corpus_fingerprint, sizeof(run.corpus_fingerprint), h);

  auto base_task = [&](uint64_t seed) {
    TrainTask t;
    t.config = &rc.model;
    t.data = &enc;
    t.seed = seed;
    t.steps = rc.steps;
    t.batch_size = rc.batch_size;
    t.lr = rc.learning_rate;
    t.lambda = rc.lambda;
    t.temperature = rc.temperature;
    return t;
  };

  auto train_teachers = [&]() {
    std::vector<TrainedModel> teachers;
    if (rc.teacher_source == "large_model") {
      TrainTask t = base_task(rc.seeds.at(0) + 1);
      t.config = &rc.teacher_model;
      teachers.push_back(train_single(t));
    } else {
      for (int i = 0; i < rc.k; ++i) {
        TrainTask t = base_task(rc.seeds.at(0) + 1 + static_cast<uint64_t>(i));
        teachers.push_back(train_single(t));
      }
    }
    return teachers;
  };

  if (rc.method == "baseline") {
    run.models.push_back(train_single(base_task(rc.seed_for_member(0))));
  } else if (rc.method == "ensemble") {
    for (int i = 0; i < rc.k; ++i)
      run.models.push_back(train_single(base_task(rc.seed_for_member(i))));
  } else if (rc.method == "distill_soft") {
    run.teachers = train_teachers();
    TrainTask t = base_task(rc.seeds.at(0));
    std::vector<const ModelParams*> tp;
    for (const TrainedModel& m : run.teachers) tp.push_back(&m.params);
    t.teachers = tp;
    run.models.push_back(train_single(t));
  } else if (rc.method == "distill_hard") {
    run.teachers = train_teachers();
    std::vector<const ModelParams*> tp;
    for (const TrainedModel& m : run.teachers) tp.push_back(&m.params);
    Corpus augmented =
        precompute_hard_labels(tp, *cp, cp->source_vocab, cp->target_vocab, rc.teacher_beam_width);
    EncodedCorpus enc2 = encode_corpus(augmented, cp->source_vocab, cp->target_vocab);
    TrainTask t = base_task(rc.seeds.at(0));
    t.data = &enc2;
    run.models.push_back(train_single(t));
  } else {  // codistill
    CodistillState st;
    std::vector<Batcher> batchers;
    for (int i = 0; i < rc.k; ++i) {
      uint64_t seed = rc.seed_for_member(i);
      st.peers.push_back(init_params(rc.model, enc.src_vocab_size, enc.tgt_vocab_size,
                                     enc.copy_base, derive_seed(seed, kInitStream)));
      OptimizerState opt;
      opt.cfg.lr = rc.learning_rate;
      st.opts.push_back(std::move(opt));
      st.dropout_rngs.emplace_back(derive_seed(seed, kDropStream));
      batchers.emplace_back(derive_seed(seed, kBatchStream),
                            static_cast<int>(enc.examples.size()));
    }
    for (int step = 0; step < rc.steps; ++step) {
      std::vector<std::vector<const EncodedExample*>> batches(static_cast<size_t>(rc.k));
      for (int i = 0; i < rc.k; ++i)
        for (int idx : batchers[static_cast<size_t>(i)].next(rc.batch_size))
          batches[static_cast<size_t>(i)].push_back(&enc.examples[idx]);
      codistill_step(st, batches, rc.lambda, rc.temperature, rc.burn_in_steps);
    }
    for (int i = 0; i < rc.k; ++i) {
      TrainedModel m;
      m.params = std::move(st.peers[static_cast<size_t>(i)]);
      m.seed = rc.seed_for_member(i);
      m.loss_curve = std::move(st.loss_curves[static_cast<size_t>(i)]);
      m.wall_steps = rc.steps;
      run.models.push_back(std::move(m));
    }
  }
  return run;
}

}  // namespace jitterlab
