#include "jitterlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "jitterlab/rng.hpp"

namespace jitterlab {

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Eval: return "eval";
    case Split::Test: return "test";
  }
  return "?";
}

namespace {

std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> tokenize_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

Corpus load_tsv(const std::string& path, Split split, LoadReport* report) {
  std::ifstream in(path);
  if (!in.is_open()) throw DataError("FileNotFound: " + path);

  Corpus c;
  c.split = split;
  std::string line;
  int line_no = 0;
  int64_t next_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_on(line, '\t');
    if (fields.size() < 2) {
      throw DataError("MalformedLine at line " + std::to_string(line_no) +
                      ": need at least 2 tab-separated fields");
    }
    // TOP releases prepend the raw utterance; the last two fields are the
    // tokenized utterance and the parse.
    const std::string& utt_field = fields[fields.size() - 2];
    const std::string& parse_field = fields[fields.size() - 1];

    ParseResult pr = parse_tree(parse_field);
    if (!pr.ok()) {
      if (report) {
        report->skipped.push_back({line_no, std::string(parse_error_name(pr.error->kind)) +
                                                ": " + pr.error->detail});
      }
      continue;
    }
    Example ex;
    ex.id = next_id++;
    ex.utterance = tokenize_ws(utt_field);
    ex.gold = std::move(*pr.tree);
    ex.gold.source_tokens = ex.utterance;
    ex.target_text = serialize_tree(ex.gold);
    if (report && leaf_tokens(ex.gold.root) != ex.utterance) {
      report->order_flags.push_back({line_no, "tree leaves differ from utterance tokens"});
    }
    c.examples.push_back(std::move(ex));
  }
  if (c.examples.empty()) throw DataError("EmptyCorpus: " + path);
  return c;
}

void save_tsv(const Corpus& c, const std::string& path) {
  std::ofstream out(path);
  if (!out.is_open()) throw DataError("cannot write " + path);
  for (const auto& ex : c.examples) {
    for (size_t i = 0; i < ex.utterance.size(); ++i) {
      if (i) out << ' ';
      out << ex.utterance[i];
    }
    out << '\t' << ex.target_text << '\n';
  }
}

namespace {

// Collects mutable pointers to every node of one kind, pre-order.
void collect_nodes(ParseNode& n, NodeKind kind, std::vector<ParseNode*>& out) {
  if (n.kind == kind) out.push_back(&n);
  for (auto& c : n.children) {
    if (c.is_node()) collect_nodes(c.node.front(), kind, out);
  }
}

void swap_labels(Corpus& c, NodeKind kind, double x, Rng& rng) {
  std::vector<ParseNode*> occurrences;
  for (auto& ex : c.examples) {
    if (!ex.has_tree) continue;
    collect_nodes(ex.gold.root, kind, occurrences);
  }
  const size_t m = occurrences.size();
  if (m == 0) return;

  // Empirical label distribution over occurrences, fixed before any swap.
  std::map<std::string, size_t> counts;
  for (const ParseNode* n : occurrences) counts[n->label]++;
  std::vector<std::string> labels;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& [label, cnt] : counts) {
    labels.push_back(label);
    acc += static_cast<double>(cnt) / static_cast<double>(m);
    cumulative.push_back(acc);
  }
  cumulative.back() = 1.0;

  const size_t k = static_cast<size_t>(std::llround(x * static_cast<double>(m)));
  // Partial Fisher-Yates: first k entries are a uniform sample w/o replacement.
  std::vector<size_t> order(m);
  for (size_t i = 0; i < m; ++i) order[i] = i;
  for (size_t i = 0; i < k && i < m; ++i) {
    size_t j = i + rng.below(m - i);
    std::swap(order[i], order[j]);
  }
  std::vector<size_t> selected(order.begin(), order.begin() + std::min(k, m));
  std::sort(selected.begin(), selected.end());  // seed-stable draw order

  for (size_t idx : selected) {
    double u = rng.uniform();
    size_t pick = std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    if (pick >= labels.size()) pick = labels.size() - 1;
    occurrences[idx]->label = labels[pick];
  }
}

}  // namespace

Corpus inject_noise(const Corpus& c, const NoiseConfig& cfg) {
  if (c.split != Split::Train) throw DataError("NotTrainSplit: noise is only injected into train data");
  if (cfg.swap_fraction < 0.0 || cfg.swap_fraction > 1.0) {
    throw DataError("swap fraction must be in [0,1]");
  }
  Corpus out = c;
  if (cfg.swap_fraction == 0.0) return out;

  Rng intent_rng(derive_seed(cfg.seed, 1));
  Rng slot_rng(derive_seed(cfg.seed, 2));
  swap_labels(out, NodeKind::Intent, cfg.swap_fraction, intent_rng);
  swap_labels(out, NodeKind::Slot, cfg.swap_fraction, slot_rng);

  for (auto& ex : out.examples) {
    if (ex.has_tree) ex.target_text = serialize_tree(ex.gold);
  }
  return out;
}

void build_vocab(Corpus& c) {
  if (c.split != Split::Train) throw DataError("vocabularies are built from the train split only");

  std::set<std::string> tokens;
  std::set<std::string> open_symbols;
  size_t max_len = 0;
  for (const auto& ex : c.examples) {
    max_len = std::max(max_len, ex.utterance.size());
    for (const auto& t : ex.utterance) tokens.insert(t);
    if (!ex.has_tree) continue;
    LabelOccurrences occ = collect_labels(ex.gold);
    for (const auto& l : occ.intents) open_symbols.insert("[in:" + l);
    for (const auto& l : occ.slots) open_symbols.insert("[sl:" + l);
  }

  Vocab src;
  src.symbols = {"<pad>", "<unk>", "<bos>", "<eos>"};
  for (int i = 0; i < 4; ++i) src.index[src.symbols[i]] = i;
  for (const auto& t : tokens) src.add(t);

  Vocab tgt;
  tgt.symbols = {"<pad>", "<unk>", "<bos>", "<eos>"};
  for (int i = 0; i < 4; ++i) tgt.index[tgt.symbols[i]] = i;
  tgt.add("]");
  for (const auto& s : open_symbols) tgt.add(s);
  tgt.copy_base = tgt.size();
  tgt.copy_count = static_cast<int>(max_len);
  for (int i = 0; i < tgt.copy_count; ++i) tgt.add("COPY_" + std::to_string(i));

  c.source_vocab = std::move(src);
  c.target_vocab = std::move(tgt);
}

void write_vocab(const Vocab& v, const std::string& path) {
  std::ofstream out(path);
  if (!out.is_open()) throw DataError("cannot write " + path);
  for (const auto& s : v.symbols) out << s << '\n';
}

uint64_t corpus_fingerprint(const Corpus& c) {
  uint64_t h = fnv1a_str(split_name(c.split));
  for (const auto& ex : c.examples) {
    h = fnv1a(&ex.id, sizeof(ex.id), h);
    for (const auto& t : ex.utterance) h = fnv1a_str(t, h);
    h = fnv1a_str(ex.target_text, h);
  }
  for (const auto& s : c.source_vocab.symbols) h = fnv1a_str(s, h);
  for (const auto& s : c.target_vocab.symbols) h = fnv1a_str(s, h);
  return h;
}

std::vector<int> encode_target(const std::vector<std::string>& utterance,
                               const std::string& target_text, const Vocab& target_vocab) {
  std::vector<int> out;
  std::istringstream is(target_text);
  std::string tok;
  size_t cursor = 0;  // next source position to try for a copy match
  while (is >> tok) {
    auto it = target_vocab.index.find(tok);
    if (it != target_vocab.index.end() && !target_vocab.is_copy(it->second)) {
      out.push_back(it->second);
      continue;
    }
    // Leaf token: map to a copy position, preferring the first match at or
    // after the previous one so repeated words keep source order.
    int pos = -1;
    for (size_t i = cursor; i < utterance.size(); ++i) {
      if (utterance[i] == tok) {
        pos = static_cast<int>(i);
        break;
      }
    }
    if (pos < 0) {
      for (size_t i = 0; i < utterance.size(); ++i) {
        if (utterance[i] == tok) {
          pos = static_cast<int>(i);
          break;
        }
      }
    }
    if (pos >= 0 && pos < target_vocab.copy_count) {
      out.push_back(target_vocab.copy_symbol(pos));
      cursor = static_cast<size_t>(pos) + 1;
    } else {
      out.push_back(Vocab::kUnk);
    }
  }
  return out;
}

EncodedCorpus encode_corpus(const Corpus& c, const Vocab& source_vocab, const Vocab& target_vocab) {
  EncodedCorpus e;
  e.src_vocab_size = source_vocab.size();
  e.tgt_vocab_size = target_vocab.size();
  e.copy_base = target_vocab.copy_base;
  e.copy_count = target_vocab.copy_count;
  e.examples.reserve(c.examples.size());
  for (const auto& ex : c.examples) {
    EncodedExample ee;
    ee.id = ex.id;
    ee.src.reserve(ex.utterance.size());
    for (const auto& t : ex.utterance) ee.src.push_back(source_vocab.lookup(t));
    ee.tgt = encode_target(ex.utterance, ex.target_text, target_vocab);
    e.max_src_len = std::max(e.max_src_len, static_cast<int>(ee.src.size()));
    e.examples.push_back(std::move(ee));
  }
  return e;
}

}  // namespace jitterlab
