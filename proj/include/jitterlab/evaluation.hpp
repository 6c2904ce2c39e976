#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jitterlab/dataset.hpp"
#include "jitterlab/model.hpp"
#include "jitterlab/training.hpp"

namespace jitterlab {

struct IdMismatch : std::runtime_error {
  explicit IdMismatch(const std::string& detail) : std::runtime_error("IdMismatch: " + detail) {}
};

struct SingleRun : std::runtime_error {
  SingleRun() : std::runtime_error("SingleRun: agreement needs at least two runs") {}
};

// Predictions of one trained model over an eval corpus, keyed by example id.
struct PredictionSet {
  uint64_t seed = 0;
  std::map<int64_t, std::string> predictions;
};

// Relative parameter cost of a regime, baseline = 1x. Starred factors in the
// labels mark work that can run in parallel.
struct ResourceLedger {
  double training_mult = 1.0;
  double inference_mult = 1.0;
  bool training_parallel = false;
  bool inference_parallel = false;
  std::string training_label = "1x";
  std::string inference_label = "1x";
};

struct MetricsReport {
  double em_mean = 0.0;
  double em_std = 0.0;  // population std over the run-level EM values
  double agr = 0.0;
  int n_runs = 0;
  std::vector<double> per_run_em;
  // id -> all runs emitted the same string, in ascending id order
  std::vector<std::pair<int64_t, bool>> example_agreement;
  ResourceLedger ledger;
};

// The string an exact match is judged against: the canonical serialization
// when a tree exists, the raw target text otherwise.
std::string gold_string(const Example& ex);

// Percent of examples whose predicted string equals the gold string.
double exact_match(const PredictionSet& preds, const Corpus& gold);

// Percent of examples where all runs emitted the same string. Gold unused.
double agreement(const std::vector<PredictionSet>& runs);

MetricsReport aggregate(const std::vector<PredictionSet>& runs, const Corpus& gold);

ResourceLedger resource_ledger(const RegimeConfig& rc, int64_t student_params,
                               int64_t teacher_params);

// Decode every example of `corpus` with one model. Width 1 decodes greedily.
PredictionSet predict_corpus(const ModelParams& p, const Corpus& corpus, const Vocab& src_vocab,
                             const Vocab& tgt_vocab, int beam_width = 1);

// Rows (id, run 0 prediction, run 1 prediction, ...) for every example the
// runs disagree on, in ascending id order.
std::vector<std::vector<std::string>> disagreement_rows(const std::vector<PredictionSet>& runs);
void write_disagreements(const std::string& path, const std::vector<PredictionSet>& runs);

}  // namespace jitterlab
