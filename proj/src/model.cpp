#include "jitterlab/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "jitterlab/numerics.hpp"

namespace jitterlab {

void ModelConfig::validate() const {
  if (encoder_layers < 1 || decoder_layers < 1) throw ConfigInvalid("layer counts must be >= 1");
  if (encoder_heads < 1 || decoder_heads < 1) throw ConfigInvalid("head counts must be >= 1");
  if (encoder_dim % encoder_heads != 0)
    throw ConfigInvalid("encoder_dim not divisible by encoder_heads");
  if (decoder_dim % decoder_heads != 0)
    throw ConfigInvalid("decoder_dim not divisible by decoder_heads");
  if (output_embed_dim < 1) throw ConfigInvalid("output_embed_dim must be >= 1");
  if (max_output_len < 1) throw ConfigInvalid("max_output_len must be >= 1");
  if (max_src_positions < 1) throw ConfigInvalid("max_src_positions must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigInvalid("dropout must be in [0,1)");
  if (size_class != "student" && size_class != "teacher")
    throw ConfigInvalid("size_class must be student or teacher");
}

namespace {

constexpr real kMaskValue = real(-1e30);

struct ShapedName {
  std::string name;
  std::vector<int> shape;
  enum Kind { Weight, Zero, One } kind;
};

std::vector<ShapedName> parameter_plan(const ModelConfig& c, int src_vocab, int tgt_vocab,
                                       int copy_base) {
  std::vector<ShapedName> plan;
  auto W = [&](const std::string& n, std::vector<int> s) {
    plan.push_back({n, std::move(s), ShapedName::Weight});
  };
  auto B = [&](const std::string& n, std::vector<int> s) {
    plan.push_back({n, std::move(s), ShapedName::Zero});
  };
  auto G = [&](const std::string& n, std::vector<int> s) {
    plan.push_back({n, std::move(s), ShapedName::One});
  };

  const int de = c.encoder_dim, dd = c.decoder_dim, e = c.output_embed_dim;
  W("enc.embed", {src_vocab, de});
  W("enc.pos", {c.max_src_positions, de});
  for (int l = 0; l < c.encoder_layers; ++l) {
    std::string p = "enc.L" + std::to_string(l) + ".";
    G(p + "ln1.g", {de});
    B(p + "ln1.b", {de});
    for (const char* m : {"wq", "wk", "wv", "wo"}) W(p + "self." + m, {de, de});
    for (const char* m : {"bq", "bk", "bv", "bo"}) B(p + "self." + m, {de});
    G(p + "ln2.g", {de});
    B(p + "ln2.b", {de});
    W(p + "mlp.w1", {de, 2 * de});
    B(p + "mlp.b1", {2 * de});
    W(p + "mlp.w2", {2 * de, de});
    B(p + "mlp.b2", {de});
  }
  G("enc.ln_f.g", {de});
  B("enc.ln_f.b", {de});

  W("dec.embed", {tgt_vocab, dd});
  W("dec.pos", {c.max_output_len + 1, dd});
  for (int l = 0; l < c.decoder_layers; ++l) {
    std::string p = "dec.L" + std::to_string(l) + ".";
    G(p + "ln1.g", {dd});
    B(p + "ln1.b", {dd});
    for (const char* m : {"wq", "wo"}) W(p + "self." + m, {dd, dd});
    for (const char* m : {"wk", "wv"}) W(p + "self." + m, {dd, dd});
    for (const char* m : {"bq", "bk", "bv", "bo"}) B(p + "self." + m, {dd});
    G(p + "ln2.g", {dd});
    B(p + "ln2.b", {dd});
    W(p + "cross.wq", {dd, dd});
    W(p + "cross.wk", {de, dd});
    W(p + "cross.wv", {de, dd});
    W(p + "cross.wo", {dd, dd});
    for (const char* m : {"bq", "bk", "bv", "bo"}) B(p + "cross." + m, {dd});
    G(p + "ln3.g", {dd});
    B(p + "ln3.b", {dd});
    W(p + "mlp.w1", {dd, 2 * dd});
    B(p + "mlp.b1", {2 * dd});
    W(p + "mlp.w2", {2 * dd, dd});
    B(p + "mlp.b2", {dd});
  }
  G("dec.ln_f.g", {dd});
  B("dec.ln_f.b", {dd});

  W("out.w", {dd, e});
  B("out.b", {e});
  W("out.emb", {copy_base, e});
  W("out.copy_w", {de, e});
  return plan;
}

Tensor causal_penalty(int t) {
  Tensor m({t, t});
  for (int i = 0; i < t; ++i)
    for (int j = i + 1; j < t; ++j) m.at(i, j) = kMaskValue;
  return m;
}

// Per-graph parameter leaf cache.
struct ParamGraph {
  Graph& g;
  const ModelParams& p;
  std::map<std::string, int> ids;

  int operator()(const std::string& name) {
    auto it = ids.find(name);
    if (it != ids.end()) return it->second;
    auto pt = p.tensors.find(name);
    if (pt == p.tensors.end()) throw ConfigInvalid("missing parameter " + name);
    int id = g.leaf_ref(&pt->second, true);
    ids.emplace(name, id);
    return id;
  }
};

struct AttnRange {
  int q_off, q_len, kv_off, kv_len;
};

int attention(Graph& g, ParamGraph& P, const std::string& prefix, int q_in, int kv_in,
              const std::vector<AttnRange>& ranges, int heads, int model_dim, bool causal) {
  int q = g.add_bias(g.matmul(q_in, P(prefix + ".wq")), P(prefix + ".bq"));
  int k = g.add_bias(g.matmul(kv_in, P(prefix + ".wk")), P(prefix + ".bk"));
  int v = g.add_bias(g.matmul(kv_in, P(prefix + ".wv")), P(prefix + ".bv"));
  const int dk = model_dim / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<int> per_example;
  per_example.reserve(ranges.size());
  for (const AttnRange& r : ranges) {
    int qe = g.slice_rows(q, r.q_off, r.q_off + r.q_len);
    int ke = g.slice_rows(k, r.kv_off, r.kv_off + r.kv_len);
    int ve = g.slice_rows(v, r.kv_off, r.kv_off + r.kv_len);
    std::vector<int> head_out;
    head_out.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      int qh = g.slice_cols(qe, h * dk, (h + 1) * dk);
      int kh = g.slice_cols(ke, h * dk, (h + 1) * dk);
      int vh = g.slice_cols(ve, h * dk, (h + 1) * dk);
      int scores = g.scale(g.matmul_nt(qh, kh), inv_sqrt_dk);
      if (causal) scores = g.add(scores, g.leaf(causal_penalty(r.q_len)));
      head_out.push_back(g.matmul(g.softmax_rows(scores), vh));
    }
    per_example.push_back(heads == 1 ? head_out[0] : g.concat_cols(head_out));
  }
  int ctx = per_example.size() == 1 ? per_example[0] : g.concat_rows(per_example);
  return g.add_bias(g.matmul(ctx, P(prefix + ".wo")), P(prefix + ".bo"));
}

int mlp_block(Graph& g, ParamGraph& P, const std::string& prefix, int x) {
  int h = g.relu(g.add_bias(g.matmul(x, P(prefix + ".w1")), P(prefix + ".b1")));
  return g.add_bias(g.matmul(h, P(prefix + ".w2")), P(prefix + ".b2"));
}

int maybe_dropout(Graph& g, int x, const ModelParams& p, bool training, Rng* rng) {
  if (!training || p.config.dropout <= 0.0) return x;
  return g.dropout(x, p.config.dropout, *rng);
}

// Encoder over concatenated source rows. Dropout sites: input embeddings and
// the post-encoder contextual embeddings.
int run_encoder(Graph& g, ParamGraph& P, const ModelParams& p,
                const std::vector<std::vector<int>>& src_batch, std::vector<int>& offsets,
                bool training, Rng* rng) {
  const ModelConfig& c = p.config;
  std::vector<int> ids, pos;
  offsets.clear();
  for (const auto& src : src_batch) {
    offsets.push_back(static_cast<int>(ids.size()));
    for (size_t i = 0; i < src.size(); ++i) {
      ids.push_back(src[i]);
      pos.push_back(std::min(static_cast<int>(i), c.max_src_positions - 1));
    }
  }
  int x = g.add(g.embedding(P("enc.embed"), ids), g.embedding(P("enc.pos"), pos));
  x = maybe_dropout(g, x, p, training, rng);

  std::vector<AttnRange> ranges;
  for (size_t e = 0; e < src_batch.size(); ++e) {
    int off = offsets[e], len = static_cast<int>(src_batch[e].size());
    ranges.push_back({off, len, off, len});
  }
  for (int l = 0; l < c.encoder_layers; ++l) {
    std::string lp = "enc.L" + std::to_string(l);
    int h = g.layer_norm(x, P(lp + ".ln1.g"), P(lp + ".ln1.b"));
    x = g.add(x, attention(g, P, lp + ".self", h, h, ranges, c.encoder_heads, c.encoder_dim,
                           /*causal=*/false));
    int h2 = g.layer_norm(x, P(lp + ".ln2.g"), P(lp + ".ln2.b"));
    x = g.add(x, mlp_block(g, P, lp + ".mlp", h2));
  }
  x = g.layer_norm(x, P("enc.ln_f.g"), P("enc.ln_f.b"));
  return maybe_dropout(g, x, p, training, rng);
}

// Decoder over concatenated BOS-prefixed rows against encoder node `enc_out`.
// Dropout sites: input embeddings and pre-softmax output embeddings.
int run_decoder(Graph& g, ParamGraph& P, const ModelParams& p,
                const std::vector<std::vector<int>>& dec_inputs, int enc_out,
                const std::vector<int>& enc_offsets, const std::vector<int>& enc_lens,
                bool training, Rng* rng) {
  const ModelConfig& c = p.config;
  std::vector<int> ids, pos, offsets;
  for (const auto& rows : dec_inputs) {
    offsets.push_back(static_cast<int>(ids.size()));
    for (size_t t = 0; t < rows.size(); ++t) {
      ids.push_back(rows[t]);
      pos.push_back(std::min(static_cast<int>(t), c.max_output_len));
    }
  }
  int x = g.add(g.embedding(P("dec.embed"), ids), g.embedding(P("dec.pos"), pos));
  x = maybe_dropout(g, x, p, training, rng);

  std::vector<AttnRange> self_ranges, cross_ranges;
  for (size_t e = 0; e < dec_inputs.size(); ++e) {
    int off = offsets[e], len = static_cast<int>(dec_inputs[e].size());
    self_ranges.push_back({off, len, off, len});
    cross_ranges.push_back({off, len, enc_offsets[e], enc_lens[e]});
  }
  for (int l = 0; l < c.decoder_layers; ++l) {
    std::string lp = "dec.L" + std::to_string(l);
    int h = g.layer_norm(x, P(lp + ".ln1.g"), P(lp + ".ln1.b"));
    x = g.add(x, attention(g, P, lp + ".self", h, h, self_ranges, c.decoder_heads, c.decoder_dim,
                           /*causal=*/true));
    int h2 = g.layer_norm(x, P(lp + ".ln2.g"), P(lp + ".ln2.b"));
    x = g.add(x, attention(g, P, lp + ".cross", h2, enc_out, cross_ranges, c.decoder_heads,
                           c.decoder_dim, /*causal=*/false));
    int h3 = g.layer_norm(x, P(lp + ".ln3.g"), P(lp + ".ln3.b"));
    x = g.add(x, mlp_block(g, P, lp + ".mlp", h3));
  }
  x = g.layer_norm(x, P("dec.ln_f.g"), P("dec.ln_f.b"));

  // Unified output head: label logits from the output embedding table, copy
  // logits from projected encoder states, positions past the source masked.
  int o = g.add_bias(g.matmul(x, P("out.w")), P("out.b"));
  o = maybe_dropout(g, o, p, training, rng);
  int label_logits = g.matmul_nt(o, P("out.emb"));
  int enc_proj = g.matmul(enc_out, P("out.copy_w"));

  std::vector<int> copy_blocks;
  for (size_t e = 0; e < dec_inputs.size(); ++e) {
    int oe = g.slice_rows(o, offsets[e], offsets[e] + static_cast<int>(dec_inputs[e].size()));
    // source positions past the copy window have no output symbol to land on
    int span = std::min(enc_lens[e], p.copy_count);
    int pe = g.slice_rows(enc_proj, enc_offsets[e], enc_offsets[e] + span);
    copy_blocks.push_back(g.pad_cols(g.matmul_nt(oe, pe), p.copy_count, kMaskValue));
  }
  int copy_logits = copy_blocks.size() == 1 ? copy_blocks[0] : g.concat_rows(copy_blocks);
  return g.concat_cols({label_logits, copy_logits});
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, int src_vocab_size, int tgt_vocab_size,
                        int copy_base, uint64_t seed) {
  cfg.validate();
  if (src_vocab_size < 5 || tgt_vocab_size < 5) throw ConfigInvalid("vocabulary too small");
  if (copy_base < 4 || copy_base > tgt_vocab_size) throw ConfigInvalid("copy_base out of range");

  ModelParams p;
  p.config = cfg;
  p.src_vocab_size = src_vocab_size;
  p.tgt_vocab_size = tgt_vocab_size;
  p.copy_base = copy_base;
  p.copy_count = tgt_vocab_size - copy_base;

  Rng rng(derive_seed(seed, 0x9a9aULL));
  for (const auto& item : parameter_plan(cfg, src_vocab_size, tgt_vocab_size, copy_base)) {
    Tensor t(item.shape);
    switch (item.kind) {
      case ShapedName::Weight:
        for (auto& v : t.values) v = static_cast<real>(rng.normal(0.0, 0.02));
        break;
      case ShapedName::Zero:
        break;
      case ShapedName::One:
        for (auto& v : t.values) v = real(1);
        break;
    }
    p.tensors.emplace(item.name, std::move(t));
  }
  return p;
}

int64_t count_parameters(const ModelParams& p) {
  int64_t n = 0;
  for (const auto& [name, t] : p.tensors) n += t.numel();
  return n;
}

uint64_t params_fingerprint(const ModelParams& p) {
  uint64_t h = fnv1a_str(p.config.size_class);
  for (const auto& [name, t] : p.tensors) {
    h = fnv1a_str(name, h);
    for (int d : t.shape) h = fnv1a(&d, sizeof(d), h);
    h = fnv1a(t.values.data(), t.values.size() * sizeof(real), h);
  }
  return h;
}

BatchForward forward_batch(Graph& g, const ModelParams& p,
                           const std::vector<const EncodedExample*>& batch, bool training,
                           Rng* dropout_rng) {
  if (batch.empty()) throw ConfigInvalid("empty batch");
  if (training && p.config.dropout > 0.0 && dropout_rng == nullptr)
    throw ConfigInvalid("training forward needs a dropout rng");
  std::vector<std::vector<int>> src_batch, dec_inputs;
  BatchForward out;
  int row = 0;
  for (const EncodedExample* ex : batch) {
    if (ex->src.empty()) throw UnknownSymbol("empty source sequence");
    for (int id : ex->src)
      if (id < 0 || id >= p.src_vocab_size)
        throw UnknownSymbol("source id " + std::to_string(id));
    if (static_cast<int>(ex->tgt.size()) > p.config.max_output_len)
      throw TargetTooLong(std::to_string(ex->tgt.size()) + " > " +
                          std::to_string(p.config.max_output_len));
    for (int id : ex->tgt)
      if (id < 0 || id >= p.tgt_vocab_size)
        throw UnknownSymbol("target id " + std::to_string(id));

    src_batch.push_back(ex->src);
    std::vector<int> dec = {Vocab::kBos};
    dec.insert(dec.end(), ex->tgt.begin(), ex->tgt.end());
    out.row_offset.push_back(row);
    out.rows.push_back(static_cast<int>(dec.size()));
    row += static_cast<int>(dec.size());
    dec_inputs.push_back(std::move(dec));
    for (int id : ex->tgt) out.targets.push_back(id);
    out.targets.push_back(Vocab::kEos);
  }

  ParamGraph P{g, p, {}};
  std::vector<int> enc_offsets;
  int enc = run_encoder(g, P, p, src_batch, enc_offsets, training, dropout_rng);
  std::vector<int> enc_lens;
  for (const auto& s : src_batch) enc_lens.push_back(static_cast<int>(s.size()));
  out.logits = run_decoder(g, P, p, dec_inputs, enc, enc_offsets, enc_lens, training, dropout_rng);
  out.param_nodes = std::move(P.ids);
  return out;
}

std::vector<StepDistribution> forward_teacher_forced(const ModelParams& p,
                                                     const std::vector<int>& src_ids,
                                                     const std::vector<int>& tgt_ids) {
  EncodedExample ex;
  ex.src = src_ids;
  ex.tgt = tgt_ids;
  Graph g(false);
  BatchForward bf = forward_batch(g, p, {&ex}, false, nullptr);
  const Tensor& logits = g.val(bf.logits);
  std::vector<StepDistribution> steps;
  for (int t = 0; t < bf.rows[0]; ++t) {
    StepDistribution sd;
    sd.t = t;
    sd.logits = Tensor({p.tgt_vocab_size});
    for (int v = 0; v < p.tgt_vocab_size; ++v) sd.logits.values[v] = logits.at(t, v);
    steps.push_back(std::move(sd));
  }
  return steps;
}

ModelScorer::ModelScorer(const ModelParams& p, const std::vector<int>& src_ids)
    : params_(p), src_ids_(src_ids) {
  Graph g(false);
  ParamGraph P{g, p, {}};
  std::vector<int> offsets;
  int enc = run_encoder(g, P, p, {src_ids_}, offsets, false, nullptr);
  int proj = g.matmul(enc, P("out.copy_w"));
  enc_out_ = g.val(enc);
  enc_proj_ = g.val(proj);
}

std::vector<double> ModelScorer::next_probs(const std::vector<int>& prefix) {
  Graph g(false);
  ParamGraph P{g, params_, {}};
  std::vector<int> dec = {Vocab::kBos};
  dec.insert(dec.end(), prefix.begin(), prefix.end());
  const int t_rows = static_cast<int>(dec.size());

  int enc = g.leaf(enc_out_);
  int logits = run_decoder(g, P, params_, {dec}, enc, {0},
                           {static_cast<int>(src_ids_.size())}, false, nullptr);
  const Tensor& z = g.val(logits);
  const int v = params_.tgt_vocab_size;

  // softmax of the last row, in doubles regardless of the tensor width
  std::vector<double> probs(v);
  double zmax = -1e300;
  for (int j = 0; j < v; ++j) zmax = std::max(zmax, static_cast<double>(z.at(t_rows - 1, j)));
  double sum = 0;
  for (int j = 0; j < v; ++j) {
    double e = std::exp(static_cast<double>(z.at(t_rows - 1, j)) - zmax);
    probs[j] = e;
    sum += e;
  }
  for (int j = 0; j < v; ++j) probs[j] /= sum;
  return probs;
}

EnsembleScorer::EnsembleScorer(std::vector<std::unique_ptr<StepScorer>> members)
    : members_(std::move(members)) {
  if (members_.size() < 2) throw ConfigInvalid("ensemble needs at least 2 members");
  for (const auto& m : members_)
    if (m->vocab_size() != members_[0]->vocab_size())
      throw ConfigInvalid("VocabMismatch across ensemble members");
}

int EnsembleScorer::vocab_size() const { return members_[0]->vocab_size(); }

std::vector<double> EnsembleScorer::next_probs(const std::vector<int>& prefix) {
  std::vector<double> mix(static_cast<size_t>(vocab_size()), 0.0);
  for (auto& m : members_) {
    std::vector<double> p = m->next_probs(prefix);
    for (size_t i = 0; i < mix.size(); ++i) mix[i] += p[i];
  }
  const double inv_k = 1.0 / static_cast<double>(members_.size());
  for (auto& v : mix) v *= inv_k;
  return mix;
}

BeamResult greedy_decode_scorer(StepScorer& scorer, int max_len, int eos_id) {
  BeamResult r;
  std::vector<int> prefix;
  for (int t = 0; t < max_len; ++t) {
    std::vector<double> p = scorer.next_probs(prefix);
    int best = 0;
    for (int j = 1; j < static_cast<int>(p.size()); ++j)
      if (p[j] > p[best]) best = j;
    r.log_prob += std::log(std::max(p[best], 1e-300));
    if (best == eos_id) return r;
    prefix.push_back(best);
    r.symbols.push_back(best);
  }
  r.truncated = true;
  return r;
}

namespace {

struct Beam {
  std::vector<int> symbols;
  double log_prob = 0.0;
  bool finished = false;
  bool truncated = false;
};

bool beam_better(const Beam& a, const Beam& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.symbols < b.symbols;  // ties: lexicographically smaller sequence
}

}  // namespace

BeamResult beam_search_scorer(StepScorer& scorer, int width, int max_len, int eos_id) {
  if (width < 1) throw ZeroWidth();
  const int v = scorer.vocab_size();
  std::vector<Beam> beams = {Beam{}};

  for (int t = 0; t < max_len; ++t) {
    bool any_open = false;
    for (const Beam& b : beams) any_open = any_open || !b.finished;
    if (!any_open) break;

    std::vector<Beam> candidates;
    for (Beam& b : beams) {
      if (b.finished) {
        candidates.push_back(std::move(b));
        continue;
      }
      std::vector<double> p = scorer.next_probs(b.symbols);
      for (int j = 0; j < v; ++j) {
        Beam nb;
        nb.symbols = b.symbols;
        nb.log_prob = b.log_prob + std::log(std::max(p[j], 1e-300));
        if (j == eos_id) {
          nb.finished = true;
        } else {
          nb.symbols.push_back(j);
        }
        candidates.push_back(std::move(nb));
      }
    }
    std::sort(candidates.begin(), candidates.end(), beam_better);
    if (static_cast<int>(candidates.size()) > width) candidates.resize(width);
    beams = std::move(candidates);
  }

  for (Beam& b : beams) {
    if (!b.finished) {
      b.finished = true;
      b.truncated = true;
    }
  }
  std::sort(beams.begin(), beams.end(), beam_better);
  BeamResult r;
  r.symbols = beams[0].symbols;
  r.log_prob = beams[0].log_prob;
  r.truncated = beams[0].truncated;
  return r;
}

DecodeResult detokenize(const std::vector<int>& symbols, bool truncated, const Vocab& tgt_vocab,
                        const std::vector<std::string>& utterance) {
  DecodeResult out;
  out.symbols = symbols;
  out.truncated = truncated;
  std::string joined;
  bool resolved = true;
  for (size_t i = 0; i < symbols.size(); ++i) {
    if (i) joined += ' ';
    int id = symbols[i];
    if (tgt_vocab.is_copy(id)) {
      int pos = tgt_vocab.copy_position(id);
      if (pos < static_cast<int>(utterance.size())) {
        joined += utterance[pos];
      } else {
        joined += "<bad-copy>";
        resolved = false;
      }
    } else if (id >= 0 && id < tgt_vocab.size()) {
      joined += tgt_vocab.symbols[id];
    } else {
      joined += "<bad-symbol>";
      resolved = false;
    }
  }
  ParseResult pr = parse_tree(joined);
  if (pr.ok() && !truncated && resolved) {
    out.parseable = true;
    out.text = serialize_tree(*pr.tree);
  } else {
    out.parseable = false;
    out.text = joined;
  }
  return out;
}

DecodeResult greedy_decode(const ModelParams& p, const std::vector<int>& src_ids,
                           const Vocab& tgt_vocab, const std::vector<std::string>& utterance) {
  ModelScorer scorer(p, src_ids);
  BeamResult br = greedy_decode_scorer(scorer, p.config.max_output_len, Vocab::kEos);
  return detokenize(br.symbols, br.truncated, tgt_vocab, utterance);
}

DecodeResult beam_search(const ModelParams& p, const std::vector<int>& src_ids,
                         const Vocab& tgt_vocab, const std::vector<std::string>& utterance,
                         int width) {
  ModelScorer scorer(p, src_ids);
  BeamResult br = beam_search_scorer(scorer, width, p.config.max_output_len, Vocab::kEos);
  return detokenize(br.symbols, br.truncated, tgt_vocab, utterance);
}

}  // namespace jitterlab
