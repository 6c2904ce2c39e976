#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "jitterlab/autodiff.hpp"
#include "jitterlab/dataset.hpp"
#include "jitterlab/tensor.hpp"

namespace jitterlab {

struct ConfigInvalid : std::runtime_error {
  explicit ConfigInvalid(const std::string& what) : std::runtime_error("ConfigInvalid: " + what) {}
};
struct TargetTooLong : std::runtime_error {
  explicit TargetTooLong(const std::string& what) : std::runtime_error("TargetTooLong: " + what) {}
};
struct UnknownSymbol : std::runtime_error {
  explicit UnknownSymbol(const std::string& what) : std::runtime_error("UnknownSymbol: " + what) {}
};
struct ZeroWidth : std::runtime_error {
  ZeroWidth() : std::runtime_error("ZeroWidth: beam width must be >= 1") {}
};

struct ModelConfig {
  int encoder_layers = 2;
  int encoder_heads = 2;
  int encoder_dim = 128;
  int decoder_layers = 4;
  int decoder_heads = 2;
  int decoder_dim = 128;
  int output_embed_dim = 128;
  double dropout = 0.0316;
  int max_output_len = 51;
  int max_src_positions = 64;
  std::string size_class = "student";

  // The large-model teacher keeps the same architecture family, scaled up.
  static ModelConfig teacher_default() {
    ModelConfig c;
    c.encoder_layers = 6;
    c.encoder_heads = 4;
    c.encoder_dim = 256;
    c.decoder_layers = 6;
    c.decoder_heads = 4;
    c.decoder_dim = 256;
    c.output_embed_dim = 128;
    c.size_class = "teacher";
    return c;
  }

  void validate() const;
};

// All weight tensors keyed by layer path, plus the vocabulary geometry they
// were built for.
struct ModelParams {
  ModelConfig config;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  int copy_base = 0;
  int copy_count = 0;
  std::map<std::string, Tensor> tensors;
};

ModelParams init_params(const ModelConfig& cfg, int src_vocab_size, int tgt_vocab_size,
                        int copy_base, uint64_t seed);

int64_t count_parameters(const ModelParams& p);

uint64_t params_fingerprint(const ModelParams& p);

// ---- teacher-forced forward ----

struct StepDistribution {
  Tensor logits;  // [tgt_vocab_size]
  int t = 0;
};

// Ragged batch: examples are concatenated row-wise, no padding.
struct BatchForward {
  int logits = -1;                // graph node, [sum_i (T_i+1), V]
  std::vector<int> row_offset;    // per-example first row
  std::vector<int> rows;          // per-example row count (T_i + 1)
  std::vector<int> targets;       // gold next-symbol per row (tgt followed by EOS)
  // graph leaf id of every parameter tensor, for gradient readback
  std::map<std::string, int> param_nodes;
};

// Builds the full teacher-forced forward for a batch inside `g`. When
// `training` is true, dropout is applied at the three sites using
// `dropout_rng`. Throws TargetTooLong / UnknownSymbol.
BatchForward forward_batch(Graph& g, const ModelParams& p,
                           const std::vector<const EncodedExample*>& batch, bool training,
                           Rng* dropout_rng);

// Single-example convenience wrapper: per-timestep logits, no gradients.
std::vector<StepDistribution> forward_teacher_forced(const ModelParams& p,
                                                     const std::vector<int>& src_ids,
                                                     const std::vector<int>& tgt_ids);

// ---- step scorers and decoding ----

// Anything that can map an emitted prefix to a next-symbol probability
// distribution: a model bound to one utterance, an ensemble of them, or a toy
// machine in tests.
struct StepScorer {
  virtual ~StepScorer() = default;
  virtual int vocab_size() const = 0;
  virtual std::vector<double> next_probs(const std::vector<int>& prefix) = 0;
};

// Model bound to one utterance; the encoder runs once at construction.
class ModelScorer : public StepScorer {
 public:
  ModelScorer(const ModelParams& p, const std::vector<int>& src_ids);
  int vocab_size() const override { return params_.tgt_vocab_size; }
  std::vector<double> next_probs(const std::vector<int>& prefix) override;

 private:
  const ModelParams& params_;
  std::vector<int> src_ids_;
  Tensor enc_out_;    // [S, enc_dim]
  Tensor enc_proj_;   // [S, output_embed_dim]
};

// Uniform mixture of per-step member probabilities.
class EnsembleScorer : public StepScorer {
 public:
  explicit EnsembleScorer(std::vector<std::unique_ptr<StepScorer>> members);
  int vocab_size() const override;
  std::vector<double> next_probs(const std::vector<int>& prefix) override;

 private:
  std::vector<std::unique_ptr<StepScorer>> members_;
};

struct BeamResult {
  std::vector<int> symbols;  // emitted ids, end symbol excluded
  double log_prob = 0.0;
  bool truncated = false;
};

BeamResult greedy_decode_scorer(StepScorer& scorer, int max_len, int eos_id);
BeamResult beam_search_scorer(StepScorer& scorer, int width, int max_len, int eos_id);

// ---- model-level decoding with detokenization ----

struct DecodeResult {
  std::vector<int> symbols;
  std::string text;        // canonical serialization, or the raw joined string
  bool parseable = false;
  bool truncated = false;
};

DecodeResult detokenize(const std::vector<int>& symbols, bool truncated, const Vocab& tgt_vocab,
                        const std::vector<std::string>& utterance);

DecodeResult greedy_decode(const ModelParams& p, const std::vector<int>& src_ids,
                           const Vocab& tgt_vocab, const std::vector<std::string>& utterance);

DecodeResult beam_search(const ModelParams& p, const std::vector<int>& src_ids,
                         const Vocab& tgt_vocab, const std::vector<std::string>& utterance,
                         int width);

}  // namespace jitterlab
