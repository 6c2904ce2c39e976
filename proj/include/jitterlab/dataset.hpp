#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "jitterlab/top_format.hpp"

namespace jitterlab {

enum class Split { Train, Eval, Test };

const char* split_name(Split s);

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// One (utterance, parse) pair. `target_text` is the canonical serialization
// of `gold` when a tree exists; hard-distillation teachers can also produce
// raw unparseable target strings, kept here verbatim with has_tree=false.
struct Example {
  int64_t id = 0;
  std::vector<std::string> utterance;
  ParseTree gold;
  bool has_tree = true;
  std::string target_text;
};

// Token or output-symbol table. Index 0 is padding, 1 unknown, 2/3 are the
// sequence start/end symbols.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  std::vector<std::string> symbols;
  std::unordered_map<std::string, int> index;
  // Target vocabularies append copy-position symbols COPY_0..COPY_{L-1};
  // copy_base is the index of COPY_0 (-1 for source vocabularies).
  int copy_base = -1;
  int copy_count = 0;

  int size() const { return static_cast<int>(symbols.size()); }
  int lookup(const std::string& s) const {
    auto it = index.find(s);
    return it == index.end() ? kUnk : it->second;
  }
  bool is_copy(int id) const { return copy_base >= 0 && id >= copy_base && id < copy_base + copy_count; }
  int copy_position(int id) const { return id - copy_base; }
  int copy_symbol(int position) const { return copy_base + position; }

  void add(const std::string& s) {
    if (index.emplace(s, size()).second) symbols.push_back(s);
  }
};

struct Corpus {
  Split split = Split::Train;
  std::vector<Example> examples;
  Vocab source_vocab;
  Vocab target_vocab;

  size_t size() const { return examples.size(); }
};

// Warnings collected while loading: skipped lines and gold-order flags.
struct LoadReport {
  struct Item {
    int line_no;
    std::string message;
  };
  std::vector<Item> skipped;        // lines whose parse failed (with the error)
  std::vector<Item> order_flags;    // trees whose leaves mismatch the utterance
};

// Reads a TOP-style TSV: the last two tab-separated fields of each line are
// the tokenized utterance and the bracketed parse. Lines failing parse_tree
// are skipped and reported. Throws DataError for a missing file, a line with
// fewer than two fields, or an empty result.
Corpus load_tsv(const std::string& path, Split split, LoadReport* report = nullptr);

// Writes `utterance \t parse` lines in canonical serialization.
void save_tsv(const Corpus& c, const std::string& path);

struct NoiseConfig {
  double swap_fraction = 0.0;  // X in [0, 1]
  uint64_t seed = 0;
};

// Label-swap noise: computes the empirical distribution of intent labels over
// all intent occurrences, resamples exactly round(X * occurrences) of them
// (chosen uniformly without replacement) from that distribution, then repeats
// the whole process independently for slot labels. Structure, spans and
// tokens are untouched. Deterministic in cfg.seed.
Corpus inject_noise(const Corpus& c, const NoiseConfig& cfg);

// Fills source_vocab from train tokens and target_vocab from the label/
// bracket symbols plus COPY_0..COPY_{L-1} for L = longest train utterance.
void build_vocab(Corpus& c);

void write_vocab(const Vocab& v, const std::string& path);

// Stable content hash over split, examples and vocabularies.
uint64_t corpus_fingerprint(const Corpus& c);

// ---- encoded form used by the model/training modules ----

struct EncodedExample {
  int64_t id = 0;
  std::vector<int> src;  // source token ids
  std::vector<int> tgt;  // output symbol ids (no BOS/EOS)
};

struct EncodedCorpus {
  std::vector<EncodedExample> examples;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;  // includes copy symbols
  int copy_base = 0;
  int copy_count = 0;
  int max_src_len = 0;
};

// Target text -> symbol ids. Leaf tokens become copy symbols pointing at
// their source position (first unused match, scanning left to right);
// bracket/label symbols use the target vocabulary; anything else is UNK.
std::vector<int> encode_target(const std::vector<std::string>& utterance,
                               const std::string& target_text, const Vocab& target_vocab);

EncodedCorpus encode_corpus(const Corpus& c, const Vocab& source_vocab, const Vocab& target_vocab);

// ---- synthetic corpus generation ----

// Deterministic template-grammar sampler (10 intents, 14 slots). `ambiguity`
// is the fraction of examples drawn from surface forms that two distinct
// intents can both generate; those examples pick one of the two gold trees
// at random and are the controlled source of disagreement pressure.
Corpus generate_synthetic(uint64_t grammar_seed, int n, double ambiguity);

}  // namespace jitterlab
