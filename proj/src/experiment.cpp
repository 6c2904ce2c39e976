#include "jitterlab/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <thread>

#include "jitterlab/checkpoint.hpp"
#include "jitterlab/model.hpp"

namespace fs = std::filesystem;

namespace jitterlab {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int64_t to_int(const std::string& v, const std::string& ctx) {
  try {
    size_t used = 0;
    int64_t x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ManifestError(ctx + ": expected an integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& v, const std::string& ctx) {
  try {
    size_t used = 0;
    uint64_t x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ManifestError(ctx + ": expected an unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& ctx) {
  try {
    size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ManifestError(ctx + ": expected a number, got '" + v + "'");
  }
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string hex64(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string noise_tag(double level) { return fmt2(level); }

std::string seeds_csv(const std::vector<uint64_t>& seeds) {
  std::string out;
  for (size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(seeds[i]);
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

std::string pad_to(const std::string& s, size_t width) {
  std::string out = s;
  while (out.size() < width) out += ' ';
  return out;
}

void apply_model_key(ModelConfig& mc, const std::string& key, const std::string& value,
                     const std::string& ctx) {
  if (key == "encoder_layers") mc.encoder_layers = static_cast<int>(to_int(value, ctx));
  else if (key == "encoder_heads") mc.encoder_heads = static_cast<int>(to_int(value, ctx));
  else if (key == "encoder_dim") mc.encoder_dim = static_cast<int>(to_int(value, ctx));
  else if (key == "decoder_layers") mc.decoder_layers = static_cast<int>(to_int(value, ctx));
  else if (key == "decoder_heads") mc.decoder_heads = static_cast<int>(to_int(value, ctx));
  else if (key == "decoder_dim") mc.decoder_dim = static_cast<int>(to_int(value, ctx));
  else if (key == "output_embed_dim") mc.output_embed_dim = static_cast<int>(to_int(value, ctx));
  else if (key == "dropout") mc.dropout = to_double(value, ctx);
  else if (key == "max_output_len") mc.max_output_len = static_cast<int>(to_int(value, ctx));
  else if (key == "max_src_positions") mc.max_src_positions = static_cast<int>(to_int(value, ctx));
  else if (key == "size_class") mc.size_class = value;
  else throw ManifestError(ctx + ": unknown model key '" + key + "'");
}

// Runs tasks over a small worker pool; jobs <= 1 stays strictly sequential.
void run_tasks(int jobs, std::vector<std::function<void()>>& tasks) {
  if (jobs <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks.size());
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  size_t n = std::min<size_t>(static_cast<size_t>(jobs), tasks.size());
  std::vector<std::thread> pool;
  for (size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

const std::string* KvSection::find(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return &v;
  return nullptr;
}

std::string KvSection::get(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw ManifestError("section [" + name + "] is missing key '" + key + "'");
  return *v;
}

std::string KvSection::get_or(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

const KvSection* KvFile::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

const KvSection& KvFile::get(const std::string& name) const {
  const KvSection* s = find(name);
  if (!s) throw ManifestError("missing section [" + name + "]");
  return *s;
}

KvFile parse_kv_text(const std::string& text, const std::string& origin) {
  KvFile file;
  KvSection* current = nullptr;
  std::stringstream ss(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ManifestError(where + ": unterminated section header");
      std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw ManifestError(where + ": empty section name");
      file.sections.push_back({name, {}});
      current = &file.sections.back();
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ManifestError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ManifestError(where + ": empty key");
    if (!current) {
      file.sections.push_back({"", {}});
      current = &file.sections.back();
    }
    if (current->find(key)) throw ManifestError(where + ": duplicate key '" + key + "'");
    current->entries.emplace_back(key, value);
  }
  return file;
}

KvFile parse_kv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("FileNotFound: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str(), path);
}

RegimeConfig regime_from_section(const KvSection& s) {
  RegimeConfig rc;
  std::string ctx = s.name.empty() ? "regime config" : "section [" + s.name + "]";
  for (const auto& [key, value] : s.entries) {
    std::string where = ctx + " key '" + key + "'";
    if (key == "method") rc.method = value;
    else if (key == "k") rc.k = static_cast<int>(to_int(value, where));
    else if (key == "lambda") rc.lambda = to_double(value, where);
    else if (key == "temperature") rc.temperature = to_double(value, where);
    else if (key == "teacher_source") rc.teacher_source = value;
    else if (key == "burn_in_steps") rc.burn_in_steps = static_cast<int>(to_int(value, where));
    else if (key == "seeds") {
      rc.seeds.clear();
      for (const std::string& item : split_list(value)) rc.seeds.push_back(to_u64(item, where));
    } else if (key == "steps") rc.steps = static_cast<int>(to_int(value, where));
    else if (key == "batch_size") rc.batch_size = static_cast<int>(to_int(value, where));
    else if (key == "learning_rate") rc.learning_rate = to_double(value, where);
    else if (key == "teacher_beam_width") rc.teacher_beam_width = static_cast<int>(to_int(value, where));
    else if (key.rfind("model.", 0) == 0) apply_model_key(rc.model, key.substr(6), value, where);
    else if (key.rfind("teacher_model.", 0) == 0)
      apply_model_key(rc.teacher_model, key.substr(14), value, where);
    else throw ManifestError(ctx + ": unknown regime key '" + key + "'");
  }
  return rc;
}

RegimeConfig load_regime_config(const std::string& path) {
  KvFile kv = parse_kv_file(path);
  if (kv.sections.size() != 1 || !kv.sections[0].name.empty())
    throw ManifestError(path + ": a regime config is a flat key = value file without sections");
  return regime_from_section(kv.sections[0]);
}

void ExperimentManifest::validate() const {
  if (corpus_kind != "synthetic" && corpus_kind != "files")
    throw ManifestError("corpus kind must be 'synthetic' or 'files', got '" + corpus_kind + "'");
  if (corpus_kind == "synthetic") {
    if (train_n < 1 || eval_n < 1) throw ManifestError("train_n and eval_n must be at least 1");
    if (ambiguity < 0.0 || ambiguity > 1.0) throw ManifestError("ambiguity must be in [0, 1]");
  } else {
    if (train_path.empty() || eval_path.empty())
      throw ManifestError("corpus kind 'files' needs train_path and eval_path");
  }
  if (noise_levels.empty()) throw ManifestError("noise levels list is empty");
  for (double x : noise_levels)
    if (x < 0.0 || x > 1.0) throw ManifestError("noise level " + fmtg(x) + " is outside [0, 1]");
  if (reps < 2) throw ManifestError("reps must be at least 2 to measure agreement");
  if (beam < 1) throw ManifestError("beam must be at least 1");
  if (jobs < 1) throw ManifestError("jobs must be at least 1");
  if (out_dir.empty()) throw ManifestError("output dir is empty");
  if (regime_names.empty()) throw ManifestError("no [regime ...] sections found");

  int max_k = 1;
  for (const std::string& name : regime_names) {
    RegimeConfig rc = regimes.at(name);
    rc.seeds = {seed_base};
    try {
      rc.validate();
    } catch (const std::exception& e) {
      throw ManifestError("regime '" + name + "': " + e.what());
    }
    max_k = std::max(max_k, rc.k);
  }
  // derived member and teacher seeds for one rep span [base, base + k], so
  // the stride has to clear that block
  if (seed_stride < static_cast<uint64_t>(max_k) + 2)
    throw ManifestError("seed_stride must be at least max regime k + 2 = " +
                        std::to_string(max_k + 2));
}

ExperimentManifest parse_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("FileNotFound: " + path);
  std::stringstream buf;
  buf << in.rdbuf();

  ExperimentManifest m;
  m.text = buf.str();
  KvFile kv = parse_kv_text(m.text, path);

  if (const KvSection* c = kv.find("corpus")) {
    m.corpus_kind = c->get_or("kind", "synthetic");
    m.grammar_seed = to_u64(c->get_or("seed", "7"), "[corpus] seed");
    m.train_n = static_cast<int>(to_int(c->get_or("train_n", "2000"), "[corpus] train_n"));
    m.eval_n = static_cast<int>(to_int(c->get_or("eval_n", "500"), "[corpus] eval_n"));
    m.ambiguity = to_double(c->get_or("ambiguity", "0.3"), "[corpus] ambiguity");
    m.train_path = c->get_or("train_path", "");
    m.eval_path = c->get_or("eval_path", "");
  }

  const KvSection& noise = kv.get("noise");
  for (const std::string& item : split_list(noise.get("levels")))
    m.noise_levels.push_back(to_double(item, "[noise] levels"));
  m.noise_seed = to_u64(noise.get_or("seed", "99"), "[noise] seed");

  const KvSection& exp = kv.get("experiment");
  m.reps = static_cast<int>(to_int(exp.get_or("reps", "5"), "[experiment] reps"));
  m.seed_base = to_u64(exp.get_or("seed_base", "1000"), "[experiment] seed_base");
  m.seed_stride = to_u64(exp.get_or("seed_stride", "100"), "[experiment] seed_stride");
  m.beam = static_cast<int>(to_int(exp.get_or("beam", "1"), "[experiment] beam"));
  m.jobs = static_cast<int>(to_int(exp.get_or("jobs", "1"), "[experiment] jobs"));
  m.out_dir = exp.get("out");

  for (const KvSection& s : kv.sections) {
    if (s.name.rfind("regime ", 0) != 0) continue;
    std::string name = trim(s.name.substr(7));
    if (name.empty()) throw ManifestError("empty regime name in [" + s.name + "]");
    if (m.regimes.count(name)) throw ManifestError("duplicate regime '" + name + "'");
    if (s.find("seeds"))
      throw ManifestError("regime '" + name + "' sets seeds; the experiment assigns them");
    m.regime_names.push_back(name);
    m.regimes.emplace(name, regime_from_section(s));
  }

  m.validate();
  return m;
}

uint64_t rep_seed(const ExperimentManifest& m, int rep) {
  return m.seed_base + static_cast<uint64_t>(rep) * m.seed_stride;
}

void write_predictions(const std::string& path, const PredictionSet& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "id\tprediction\n";
  for (const auto& [id, text] : preds.predictions) out << id << '\t' << text << '\n';
}

PredictionSet read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("FileNotFound: " + path);
  PredictionSet out;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "id\tprediction")
    throw DataError("MalformedLine: " + path + " does not start with an id\\tprediction header");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("MalformedLine at line " + std::to_string(line_no) + " of " + path);
    int64_t id = to_int(line.substr(0, tab), path + " id column");
    std::string text = line.substr(tab + 1);
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (out.predictions.count(id))
      throw DataError("duplicate id " + std::to_string(id) + " in " + path);
    out.predictions[id] = text;
  }
  return out;
}

PredictionSet predict_for_run(const TrainedRun& run, const Corpus& eval_corpus,
                              const Vocab& src_vocab, const Vocab& tgt_vocab, int beam_width) {
  if (run.models.empty()) throw ConfigInvalid("run has no trained models");
  if (run.config.method != "ensemble" || run.models.size() == 1)
    return predict_corpus(run.models[0].params, eval_corpus, src_vocab, tgt_vocab, beam_width);

  if (beam_width < 1) throw ZeroWidth();
  PredictionSet out;
  int max_len = run.models[0].params.config.max_output_len;
  for (const Example& ex : eval_corpus.examples) {
    std::vector<int> src;
    src.reserve(ex.utterance.size());
    for (const std::string& tok : ex.utterance) src.push_back(src_vocab.lookup(tok));
    std::vector<std::unique_ptr<StepScorer>> members;
    for (const TrainedModel& m : run.models)
      members.push_back(std::make_unique<ModelScorer>(m.params, src));
    EnsembleScorer composite(std::move(members));
    BeamResult br = beam_width == 1
                        ? greedy_decode_scorer(composite, max_len, Vocab::kEos)
                        : beam_search_scorer(composite, beam_width, max_len, Vocab::kEos);
    out.predictions[ex.id] = detokenize(br.symbols, br.truncated, tgt_vocab, ex.utterance).text;
  }
  return out;
}

void write_run_dir(const std::string& dir, const TrainedRun& run, const RegimeConfig& rc,
                   const PredictionSet& preds, const Vocab& src_vocab, const Vocab& tgt_vocab,
                   const std::string& corpus_rel, const std::string& extra_meta) {
  fs::create_directories(dir);
  write_text_file(dir + "/regime.cfg", regime_to_string(rc));

  std::string model_list;
  for (size_t i = 0; i < run.models.size(); ++i) {
    std::string base = "model_" + std::to_string(i);
    ModelCheckpoint ck{run.models[i].params, src_vocab, tgt_vocab};
    save_model_checkpoint(ck, dir + "/" + base + ".jlck");

    std::string csv = "step,loss\n";
    const std::vector<double>& curve = run.models[i].loss_curve;
    for (size_t s = 0; s < curve.size(); ++s) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", s, curve[s]);
      csv += buf;
    }
    write_text_file(dir + "/loss_" + std::to_string(i) + ".csv", csv);
    if (i) model_list += ",";
    model_list += base + ".jlck";
  }
  write_predictions(dir + "/preds.tsv", preds);

  int64_t student_params = count_parameters(run.models[0].params);
  int64_t teacher_params =
      run.teachers.empty() ? student_params : count_parameters(run.teachers[0].params);
  std::string meta = extra_meta;
  meta += "seeds = " + seeds_csv(rc.seeds) + "\n";
  meta += "corpus = " + corpus_rel + "\n";
  meta += "corpus_fingerprint = " + hex64(run.corpus_fingerprint) + "\n";
  meta += "config_hash = " + hex64(run.config_hash) + "\n";
  meta += "models = " + model_list + "\n";
  meta += "student_params = " + std::to_string(student_params) + "\n";
  meta += "teacher_params = " + std::to_string(teacher_params) + "\n";
  meta += "format = 1\n";
  write_text_file(dir + "/run_meta.txt", meta);
}

std::string run_experiment(const ExperimentManifest& m) {
  m.validate();
  const std::string out = m.out_dir;
  fs::create_directories(out + "/data");
  fs::create_directories(out + "/runs");
  write_text_file(out + "/manifest.cfg", m.text);

  Corpus train_c, eval_c;
  if (m.corpus_kind == "synthetic") {
    Corpus full = generate_synthetic(m.grammar_seed, m.train_n + m.eval_n, m.ambiguity);
    train_c.split = Split::Train;
    eval_c.split = Split::Eval;
    for (int i = 0; i < m.train_n; ++i) train_c.examples.push_back(full.examples[static_cast<size_t>(i)]);
    for (int i = m.train_n; i < m.train_n + m.eval_n; ++i)
      eval_c.examples.push_back(full.examples[static_cast<size_t>(i)]);
    // renumber each split from 0 so a reload of the saved tsv yields the same ids
    for (size_t i = 0; i < train_c.examples.size(); ++i) train_c.examples[i].id = static_cast<int64_t>(i);
    for (size_t i = 0; i < eval_c.examples.size(); ++i) eval_c.examples[i].id = static_cast<int64_t>(i);
  } else {
    train_c = load_tsv(m.train_path, Split::Train);
    eval_c = load_tsv(m.eval_path, Split::Eval);
  }
  build_vocab(train_c);
  eval_c.source_vocab = train_c.source_vocab;
  eval_c.target_vocab = train_c.target_vocab;

  save_tsv(train_c, out + "/data/train.tsv");
  save_tsv(eval_c, out + "/data/eval.tsv");
  write_vocab(train_c.source_vocab, out + "/data/source.vocab");
  write_vocab(train_c.target_vocab, out + "/data/target.vocab");
  {
    std::string meta = "kind = " + m.corpus_kind + "\n";
    if (m.corpus_kind == "synthetic") {
      meta += "grammar_seed = " + std::to_string(m.grammar_seed) + "\n";
      meta += "train_n = " + std::to_string(m.train_n) + "\n";
      meta += "eval_n = " + std::to_string(m.eval_n) + "\n";
      meta += "ambiguity = " + fmtg(m.ambiguity) + "\n";
    } else {
      meta += "train_path = " + m.train_path + "\n";
      meta += "eval_path = " + m.eval_path + "\n";
    }
    meta += "train_fingerprint = " + hex64(corpus_fingerprint(train_c)) + "\n";
    meta += "eval_fingerprint = " + hex64(corpus_fingerprint(eval_c)) + "\n";
    meta += "format = 1\n";
    write_text_file(out + "/data/gen_meta.txt", meta);
  }

  // one noisy train corpus per level; vocabularies stay the clean ones
  std::vector<Corpus> noisy;
  for (double level : m.noise_levels) {
    NoiseConfig nc;
    nc.swap_fraction = level;
    nc.seed = m.noise_seed;
    Corpus c = inject_noise(train_c, nc);
    c.source_vocab = train_c.source_vocab;
    c.target_vocab = train_c.target_vocab;
    std::string dir = out + "/data/noise_" + noise_tag(level);
    fs::create_directories(dir);
    save_tsv(c, dir + "/train.tsv");
    std::string meta = "level = " + fmtg(level) + "\n";
    meta += "seed = " + std::to_string(m.noise_seed) + "\n";
    meta += "fingerprint = " + hex64(corpus_fingerprint(c)) + "\n";
    meta += "format = 1\n";
    write_text_file(dir + "/noise_meta.txt", meta);
    noisy.push_back(std::move(c));
  }

  std::vector<std::function<void()>> tasks;
  for (size_t li = 0; li < m.noise_levels.size(); ++li) {
    for (const std::string& name : m.regime_names) {
      for (int rep = 0; rep < m.reps; ++rep) {
        tasks.push_back([&, li, name, rep] {
          RegimeConfig rc = m.regimes.at(name);
          rc.seeds = {rep_seed(m, rep)};
          TrainedRun run = train(rc, noisy[li]);
          rc.seeds = run.config.seeds;  // echo exactly what ran
          PredictionSet preds = predict_for_run(run, eval_c, train_c.source_vocab,
                                                train_c.target_vocab, m.beam);
          preds.seed = rep_seed(m, rep);

          std::string tag = noise_tag(m.noise_levels[li]);
          std::string dir = out + "/runs/noise_" + tag + "/" + name + "/rep_" +
                            std::to_string(rep);
          std::string extra = "regime = " + name + "\n";
          extra += "noise = " + tag + "\n";
          extra += "rep = " + std::to_string(rep) + "\n";
          write_run_dir(dir, run, rc, preds, train_c.source_vocab, train_c.target_vocab,
                        "data/noise_" + tag + "/train.tsv", extra);
        });
      }
    }
  }
  run_tasks(m.jobs, tasks);

  build_report(out);
  return out;
}

void build_report(const std::string& out_dir) {
  ExperimentManifest m = parse_manifest(out_dir + "/manifest.cfg");
  Corpus gold = load_tsv(out_dir + "/data/eval.tsv", Split::Eval);

  fs::create_directories(out_dir + "/report/disagreements");

  struct Cell {
    std::string regime;
    double noise;
    MetricsReport rep;
  };
  std::vector<Cell> cells;
  std::map<std::string, ResourceLedger> ledgers;

  for (const std::string& name : m.regime_names) {
    for (double level : m.noise_levels) {
      std::string tag = noise_tag(level);
      std::string cell_dir = out_dir + "/runs/noise_" + tag + "/" + name;
      std::vector<PredictionSet> runs;
      for (int rep = 0; rep < m.reps; ++rep) {
        PredictionSet ps = read_predictions(cell_dir + "/rep_" + std::to_string(rep) +
                                            "/preds.tsv");
        ps.seed = rep_seed(m, rep);
        runs.push_back(std::move(ps));
      }
      cells.push_back({name, level, aggregate(runs, gold)});
      write_disagreements(out_dir + "/report/disagreements/" + name + "_noise_" + tag + ".tsv",
                          runs);

      if (!ledgers.count(name)) {
        KvFile meta = parse_kv_file(cell_dir + "/rep_0/run_meta.txt");
        const KvSection& s = meta.sections.at(0);
        RegimeConfig rc = load_regime_config(cell_dir + "/rep_0/regime.cfg");
        ledgers.emplace(name, resource_ledger(rc,
                                              to_int(s.get("student_params"), "student_params"),
                                              to_int(s.get("teacher_params"), "teacher_params")));
      }
    }
  }

  // summary, one row per regime x noise level
  std::string csv = "regime,noise,n_runs,em_mean,em_std,agr\n";
  for (const Cell& c : cells)
    csv += c.regime + "," + fmt2(c.noise) + "," + std::to_string(c.rep.n_runs) + "," +
           fmt6(c.rep.em_mean) + "," + fmt6(c.rep.em_std) + "," + fmt6(c.rep.agr) + "\n";
  write_text_file(out_dir + "/report/summary.csv", csv);

  size_t name_w = std::string("regime").size();
  for (const Cell& c : cells) name_w = std::max(name_w, c.regime.size());
  name_w += 2;
  std::string txt =
      "EM and model agreement by regime and training-noise level\n"
      "N = " + std::to_string(m.reps) +
      " runs per cell. EM is the mean +/- population std of exact match\n"
      "over runs; AGR is the percent of eval examples where all runs emit\n"
      "the same string.\n\n";
  txt += pad_to("regime", name_w) + pad_to("noise", 7) + pad_to("EM", 18) + "AGR\n";
  for (const Cell& c : cells) {
    std::string em = fmt2(c.rep.em_mean) + " +/- " + fmt2(c.rep.em_std);
    txt += pad_to(c.regime, name_w) + pad_to(fmt2(c.noise), 7) + pad_to(em, 18) +
           fmt2(c.rep.agr) + "\n";
  }
  write_text_file(out_dir + "/report/summary.txt", txt);

  // resource ledger, one row per regime
  std::string lcsv = "regime,method,training,inference,training_mult,inference_mult\n";
  for (const std::string& name : m.regime_names) {
    const ResourceLedger& l = ledgers.at(name);
    lcsv += name + "," + m.regimes.at(name).method + "," + l.training_label + "," +
            l.inference_label + "," + fmtg(l.training_mult) + "," + fmtg(l.inference_mult) + "\n";
  }
  write_text_file(out_dir + "/report/ledger.csv", lcsv);

  size_t method_w = std::string("method").size();
  for (const std::string& name : m.regime_names)
    method_w = std::max(method_w, m.regimes.at(name).method.size());
  method_w += 2;
  std::string ltxt =
      "Relative parameter cost by regime (baseline = 1x). A * marks a factor\n"
      "whose computations can run in parallel.\n\n";
  ltxt += pad_to("regime", name_w) + pad_to("method", method_w) + pad_to("training", 11) +
          "inference\n";
  for (const std::string& name : m.regime_names) {
    const ResourceLedger& l = ledgers.at(name);
    ltxt += pad_to(name, name_w) + pad_to(m.regimes.at(name).method, method_w) +
            pad_to(l.training_label, 11) + l.inference_label + "\n";
  }
  write_text_file(out_dir + "/report/ledger.txt", ltxt);
}

}  // namespace jitterlab
