#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jitterlab/dataset.hpp"
#include "jitterlab/evaluation.hpp"
#include "jitterlab/training.hpp"

namespace jitterlab {

struct ManifestError : std::runtime_error {
  explicit ManifestError(const std::string& detail)
      : std::runtime_error("ManifestError: " + detail) {}
};

// Flat key-value file with optional [section] headers and # comments.
// Entries before the first header land in a section with an empty name.
struct KvSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const;
  std::string get(const std::string& key) const;  // throws ManifestError when absent
  std::string get_or(const std::string& key, const std::string& fallback) const;
};

struct KvFile {
  std::vector<KvSection> sections;

  const KvSection* find(const std::string& name) const;
  const KvSection& get(const std::string& name) const;
};

KvFile parse_kv_text(const std::string& text, const std::string& origin);
KvFile parse_kv_file(const std::string& path);

// Regime configs round-trip through the same flat format.
RegimeConfig regime_from_section(const KvSection& s);
RegimeConfig load_regime_config(const std::string& path);

struct ExperimentManifest {
  // corpus: synthetic generation or files on disk
  std::string corpus_kind = "synthetic";
  uint64_t grammar_seed = 7;
  int train_n = 2000;
  int eval_n = 500;
  double ambiguity = 0.3;
  std::string train_path;
  std::string eval_path;

  std::vector<double> noise_levels;
  uint64_t noise_seed = 99;

  int reps = 5;
  uint64_t seed_base = 1000;
  uint64_t seed_stride = 100;
  int beam = 1;
  int jobs = 1;
  std::string out_dir;

  std::vector<std::string> regime_names;
  std::map<std::string, RegimeConfig> regimes;

  std::string text;  // verbatim file contents, copied into the output tree

  void validate() const;
};

ExperimentManifest parse_manifest(const std::string& path);

// Seeds handed to rep `rep` of a regime: a single base seed spaced by
// seed_stride so that derived member and teacher seeds never collide
// across reps.
uint64_t rep_seed(const ExperimentManifest& m, int rep);

// Prediction file: "id\tprediction" header plus one row per example.
void write_predictions(const std::string& path, const PredictionSet& preds);
PredictionSet read_predictions(const std::string& path);

// Decode an eval corpus with whatever a finished run should predict with:
// the single model for baseline and distillation, the uniform mixture for
// an ensemble, peer 0 for co-distillation.
PredictionSet predict_for_run(const TrainedRun& run, const Corpus& eval_corpus,
                              const Vocab& src_vocab, const Vocab& tgt_vocab, int beam_width);

// Writes regime.cfg, run_meta.txt, model_<i>.jlck, loss_<i>.csv and
// preds.tsv into `dir` (created if needed).
void write_run_dir(const std::string& dir, const TrainedRun& run, const RegimeConfig& rc,
                   const PredictionSet& preds, const Vocab& src_vocab, const Vocab& tgt_vocab,
                   const std::string& corpus_rel, const std::string& extra_meta);

// Runs the full grid and writes the report. Returns the output directory.
std::string run_experiment(const ExperimentManifest& m);

// Rebuilds report/ inside an experiment output tree from the manifest copy
// and the per-run prediction files.
void build_report(const std::string& out_dir);

}  // namespace jitterlab
