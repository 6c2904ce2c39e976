#include "jitterlab/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "jitterlab/top_format.hpp"

namespace jitterlab {

namespace {

void check_same_ids(const PredictionSet& a, const PredictionSet& b) {
  if (a.predictions.size() != b.predictions.size())
    throw IdMismatch("runs cover different numbers of examples");
  auto ia = a.predictions.begin();
  auto ib = b.predictions.begin();
  for (; ia != a.predictions.end(); ++ia, ++ib)
    if (ia->first != ib->first)
      throw IdMismatch("runs cover different example ids");
}

std::string fmt_mult(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string gold_string(const Example& ex) {
  return ex.has_tree ? serialize_tree(ex.gold) : ex.target_text;
}

double exact_match(const PredictionSet& preds, const Corpus& gold) {
  if (gold.examples.empty()) throw IdMismatch("corpus has no examples");
  if (preds.predictions.size() != gold.examples.size())
    throw IdMismatch("prediction set covers " + std::to_string(preds.predictions.size()) +
                     " examples, corpus has " + std::to_string(gold.examples.size()));
  int hits = 0;
  for (const Example& ex : gold.examples) {
    auto it = preds.predictions.find(ex.id);
    if (it == preds.predictions.end())
      throw IdMismatch("no prediction for example " + std::to_string(ex.id));
    if (it->second == gold_string(ex)) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gold.examples.size());
}

double agreement(const std::vector<PredictionSet>& runs) {
  if (runs.size() < 2) throw SingleRun();
  for (size_t r = 1; r < runs.size(); ++r) check_same_ids(runs[0], runs[r]);
  if (runs[0].predictions.empty()) throw IdMismatch("runs cover no examples");

  int unanimous = 0;
  for (const auto& [id, first] : runs[0].predictions) {
    bool all_same = true;
    for (size_t r = 1; r < runs.size() && all_same; ++r)
      all_same = runs[r].predictions.at(id) == first;
    if (all_same) ++unanimous;
  }
  return 100.0 * static_cast<double>(unanimous) /
         static_cast<double>(runs[0].predictions.size());
}

MetricsReport aggregate(const std::vector<PredictionSet>& runs, const Corpus& gold) {
  MetricsReport rep;
  rep.agr = agreement(runs);
  rep.n_runs = static_cast<int>(runs.size());

  double sum = 0, sum_sq = 0;
  for (const PredictionSet& run : runs) {
    double em = exact_match(run, gold);
    rep.per_run_em.push_back(em);
    sum += em;
    sum_sq += em * em;
  }
  double n = static_cast<double>(runs.size());
  rep.em_mean = sum / n;
  rep.em_std = std::sqrt(std::max(0.0, sum_sq / n - rep.em_mean * rep.em_mean));

  for (const auto& [id, first] : runs[0].predictions) {
    bool all_same = true;
    for (size_t r = 1; r < runs.size() && all_same; ++r)
      all_same = runs[r].predictions.at(id) == first;
    rep.example_agreement.emplace_back(id, all_same);
  }
  return rep;
}

ResourceLedger resource_ledger(const RegimeConfig& rc, int64_t student_params,
                               int64_t teacher_params) {
  ResourceLedger l;
  double k = static_cast<double>(rc.k);
  if (rc.method == "baseline") {
    return l;
  }
  if (rc.method == "ensemble") {
    l.training_mult = k;
    l.inference_mult = k;
    l.training_parallel = true;
    l.inference_parallel = true;
    l.training_label = fmt_mult(k) + "*x";
    l.inference_label = l.training_label;
    return l;
  }
  if (rc.method == "codistill") {
    l.training_mult = k;
    l.training_parallel = true;
    l.training_label = fmt_mult(k) + "*x";
    return l;
  }
  // soft and hard distillation cost the same: the teacher plus one student
  if (rc.teacher_source == "large_model") {
    double p = static_cast<double>(teacher_params) / static_cast<double>(student_params);
    l.training_mult = p + 1.0;
    l.training_label = "(" + fmt_mult(p) + "+1)x";
  } else {
    l.training_mult = k + 1.0;
    l.training_parallel = true;  // the teacher members; the student stays sequential
    l.training_label = "(" + fmt_mult(k) + "*+1)x";
  }
  return l;
}

PredictionSet predict_corpus(const ModelParams& p, const Corpus& corpus, const Vocab& src_vocab,
                             const Vocab& tgt_vocab, int beam_width) {
  if (beam_width < 1) throw ZeroWidth();
  PredictionSet out;
  for (const Example& ex : corpus.examples) {
    std::vector<int> src;
    src.reserve(ex.utterance.size());
    for (const std::string& tok : ex.utterance) src.push_back(src_vocab.lookup(tok));
    DecodeResult dr = beam_width == 1 ? greedy_decode(p, src, tgt_vocab, ex.utterance)
                                      : beam_search(p, src, tgt_vocab, ex.utterance, beam_width);
    out.predictions[ex.id] = dr.text;
  }
  return out;
}

std::vector<std::vector<std::string>> disagreement_rows(const std::vector<PredictionSet>& runs) {
  if (runs.size() < 2) throw SingleRun();
  for (size_t r = 1; r < runs.size(); ++r) check_same_ids(runs[0], runs[r]);

  std::vector<std::vector<std::string>> rows;
  for (const auto& [id, first] : runs[0].predictions) {
    bool all_same = true;
    for (size_t r = 1; r < runs.size() && all_same; ++r)
      all_same = runs[r].predictions.at(id) == first;
    if (all_same) continue;
    std::vector<std::string> row = {std::to_string(id)};
    for (const PredictionSet& run : runs) row.push_back(run.predictions.at(id));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_disagreements(const std::string& path, const std::vector<PredictionSet>& runs) {
  std::vector<std::vector<std::string>> rows = disagreement_rows(runs);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "id";
  for (const PredictionSet& run : runs) out << "\trun_" << run.seed;
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << '\t';
      out << row[i];
    }
    out << "\n";
  }
}

}  // namespace jitterlab
