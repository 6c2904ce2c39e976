#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jitterlab/dataset.hpp"
#include "jitterlab/model.hpp"
#include "jitterlab/numerics.hpp"

namespace jitterlab {

struct LengthMismatch : std::runtime_error {
  explicit LengthMismatch(const std::string& what)
      : std::runtime_error("LengthMismatch: " + what) {}
};
struct VocabMismatch : std::runtime_error {
  explicit VocabMismatch(const std::string& what) : std::runtime_error("VocabMismatch: " + what) {}
};
struct PeerConfigMismatch : std::runtime_error {
  explicit PeerConfigMismatch(const std::string& what)
      : std::runtime_error("PeerConfigMismatch: " + what) {}
};
struct CorpusEmpty : std::runtime_error {
  CorpusEmpty() : std::runtime_error("CorpusEmpty: no training examples") {}
};

// One training recipe. `seeds` carries the run seed first; regimes that need
// K member/peer seeds use the full list when exactly K are given and
// otherwise derive them as seeds[0] + index. Teacher models in the distill
// regimes seed from seeds[0] + 1 + index, the student from seeds[0].
struct RegimeConfig {
  std::string method = "baseline";  // baseline|ensemble|distill_soft|distill_hard|codistill
  int k = 1;                        // ensemble members / co-distillation peers
  double lambda = 1.0;
  double temperature = 1.0;
  std::string teacher_source = "ensemble";  // ensemble | large_model
  int burn_in_steps = 0;
  std::vector<uint64_t> seeds;
  int steps = 100;
  int batch_size = 16;
  double learning_rate = 4e-5;
  int teacher_beam_width = 3;

  ModelConfig model;
  ModelConfig teacher_model = ModelConfig::teacher_default();

  void validate() const;  // throws ConfigInvalid
  uint64_t seed_for_member(int index) const;
};

// Canonical key=value rendering; also the input to config hashing.
std::string regime_to_string(const RegimeConfig& rc);

struct TrainedModel {
  ModelParams params;
  uint64_t seed = 0;
  std::vector<double> loss_curve;  // recorded total loss per optimizer step
  int64_t wall_steps = 0;
};

struct TrainedRun {
  RegimeConfig config;
  uint64_t corpus_fingerprint = 0;
  uint64_t config_hash = 0;  // binds regime config and corpus fingerprint
  // baseline: 1 model; ensemble: K members; distill: the student; codistill:
  // K peers.
  std::vector<TrainedModel> models;
  // distill regimes keep their trained teacher(s) here
  std::vector<TrainedModel> teachers;
};

// ---- losses over explicit step distributions ----
// These operate on materialized per-step logits and exist as oracles and
// for scoring; the training loop computes the same quantities through the
// graph ops. Batches are ragged, so there are no padding positions.

double nll_loss(const std::vector<StepDistribution>& dists, const std::vector<int>& gold_targets);

// Eq of the uniform mixture: probabilities are averaged elementwise and the
// result is stored back as logits via elementwise log, which is the form a
// distillation teacher consumes.
StepDistribution ensemble_distribution(const std::vector<StepDistribution>& member_dists);

double kd_loss(const std::vector<StepDistribution>& teacher_dists,
               const std::vector<StepDistribution>& student_dists, double temperature);

// lambda * NLL + KD for one example under teacher forcing on gold prefixes.
// One teacher pointer: large-model teacher. Several: ensemble mixture.
double student_loss(const ModelParams& student, const std::vector<const ModelParams*>& teachers,
                    const EncodedExample& ex, double lambda, double temperature);

// Offline hard-label pass: beam-decodes every training utterance with the
// teacher (an ensemble when several are given) and returns a corpus holding,
// for every original example, both the gold pair and the teacher-prediction
// pair, in that order (2n examples). Unparseable teacher outputs are kept as
// raw target strings.
Corpus precompute_hard_labels(const std::vector<const ModelParams*>& teachers,
                              const Corpus& train, const Vocab& source_vocab,
                              const Vocab& target_vocab, int beam_width = 3);

// ---- co-distillation ----

struct CodistillState {
  std::vector<ModelParams> peers;
  std::vector<OptimizerState> opts;
  std::vector<Rng> dropout_rngs;
  std::vector<std::vector<double>> loss_curves;  // per peer, per step
  int64_t step = 0;                              // completed steps
};

// One synchronous step of Eq.-4-style mutual distillation: every peer k
// optimizes lambda*NLL + sum_{j != k} KD against peer j's pre-update
// teacher-forced distributions (treated as constants). The KD terms switch
// on once the 1-based step number exceeds burn_in_steps; before that the
// update is plain NLL and is bit-identical to an independent baseline step.
// `batches` holds one batch per peer (peers draw from their own schedules).
void codistill_step(CodistillState& st,
                    const std::vector<std::vector<const EncodedExample*>>& batches, double lambda,
                    double temperature, int burn_in_steps);

// ---- the shared entry point ----

// Trains the regime end to end on `train_corpus` (vocabularies are built on
// a copy when absent). Deterministic in the seed list.
TrainedRun train(const RegimeConfig& rc, const Corpus& train_corpus);

}  // namespace jitterlab
