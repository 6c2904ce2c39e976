#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "jitterlab/checkpoint.hpp"
#include "jitterlab/dataset.hpp"
#include "jitterlab/evaluation.hpp"
#include "jitterlab/experiment.hpp"
#include "jitterlab/model.hpp"
#include "jitterlab/training.hpp"

namespace fs = std::filesystem;
using namespace jitterlab;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

std::string hex64(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct GenDataArgs {
  uint64_t seed = 7;
  int n = 0;
  double ambiguity = 0.0;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  Corpus c = generate_synthetic(a.seed, a.n, a.ambiguity);
  build_vocab(c);
  fs::create_directories(a.out);
  save_tsv(c, a.out + "/corpus.tsv");
  write_vocab(c.source_vocab, a.out + "/source.vocab");
  write_vocab(c.target_vocab, a.out + "/target.vocab");
  std::string meta = "kind = synthetic\n";
  meta += "seed = " + std::to_string(a.seed) + "\n";
  meta += "n = " + std::to_string(a.n) + "\n";
  char amb[32];
  std::snprintf(amb, sizeof amb, "%g", a.ambiguity);
  meta += "ambiguity = " + std::string(amb) + "\n";
  meta += "fingerprint = " + hex64(corpus_fingerprint(c)) + "\n";
  meta += "format = 1\n";
  write_file(a.out + "/gen_meta.txt", meta);
  std::printf("wrote %d examples to %s\n", a.n, a.out.c_str());
  return 0;
}

struct InjectNoiseArgs {
  std::string in;
  std::string out;
  double noise = 0.0;
  uint64_t seed = 0;
};

int cmd_inject_noise(const InjectNoiseArgs& a) {
  Corpus c = load_tsv(a.in, Split::Train);
  NoiseConfig nc;
  nc.swap_fraction = a.noise;
  nc.seed = a.seed;
  Corpus noisy = inject_noise(c, nc);
  fs::create_directories(a.out);
  save_tsv(noisy, a.out + "/corpus.tsv");
  char lvl[32];
  std::snprintf(lvl, sizeof lvl, "%g", a.noise);
  std::string meta = "source = " + a.in + "\n";
  meta += "level = " + std::string(lvl) + "\n";
  meta += "seed = " + std::to_string(a.seed) + "\n";
  meta += "fingerprint = " + hex64(corpus_fingerprint(noisy)) + "\n";
  meta += "format = 1\n";
  write_file(a.out + "/noise_meta.txt", meta);
  std::printf("wrote noisy corpus to %s\n", a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string eval;
  std::string out;
  int beam = 1;
};

int cmd_train(const TrainArgs& a) {
  RegimeConfig rc = load_regime_config(a.config);
  rc.validate();
  Corpus c = load_tsv(a.data, Split::Train);
  TrainedRun run = train(rc, c);

  // vocabularies the run actually trained with
  Corpus voc = c;
  build_vocab(voc);

  PredictionSet preds;
  if (!a.eval.empty()) {
    Corpus ev = load_tsv(a.eval, Split::Eval);
    preds = predict_for_run(run, ev, voc.source_vocab, voc.target_vocab, a.beam);
    preds.seed = rc.seeds.empty() ? 0 : rc.seeds[0];
  }
  std::string extra = "data = " + a.data + "\n";
  write_run_dir(a.out, run, run.config, preds, voc.source_vocab, voc.target_vocab, a.data,
                extra);
  std::printf("trained %zu model(s) into %s\n", run.models.size(), a.out.c_str());
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string in;
  std::string out;
  int beam = 1;
};

int cmd_predict(const PredictArgs& a) {
  ModelCheckpoint ck = load_model_checkpoint(a.checkpoint);
  Corpus c = load_tsv(a.in, Split::Eval);
  PredictionSet preds = predict_corpus(ck.params, c, ck.source_vocab, ck.target_vocab, a.beam);
  write_predictions(a.out, preds);
  std::printf("wrote %zu predictions to %s\n", preds.predictions.size(), a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string gold;
  std::vector<std::string> preds;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  Corpus gold = load_tsv(a.gold, Split::Eval);
  std::vector<PredictionSet> runs;
  for (size_t i = 0; i < a.preds.size(); ++i) {
    PredictionSet ps = read_predictions(a.preds[i]);
    ps.seed = i;
    runs.push_back(std::move(ps));
  }
  fs::create_directories(a.out);

  if (runs.size() == 1) {
    double em = exact_match(runs[0], gold);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", em);
    write_file(a.out + "/metrics.csv", "n_runs,em_mean,em_std,agr\n1," + std::string(buf) +
                                           ",,\n");
    write_file(a.out + "/metrics.txt",
               "Exact match over 1 run: " + std::string(buf) +
                   "\nAgreement needs at least two prediction files.\n");
    std::printf("em %.2f over 1 run\n", em);
    return 0;
  }

  MetricsReport rep = aggregate(runs, gold);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f\n", rep.n_runs, rep.em_mean, rep.em_std,
                rep.agr);
  write_file(a.out + "/metrics.csv", "n_runs,em_mean,em_std,agr\n" + std::string(buf));

  std::string txt = "Metrics over " + std::to_string(rep.n_runs) + " runs\n";
  std::snprintf(buf, sizeof buf, "EM   %.2f +/- %.2f (population std over runs)\n", rep.em_mean,
                rep.em_std);
  txt += buf;
  std::snprintf(buf, sizeof buf, "AGR  %.2f\n", rep.agr);
  txt += buf;
  txt += "per-run EM:";
  for (double em : rep.per_run_em) {
    std::snprintf(buf, sizeof buf, " %.2f", em);
    txt += buf;
  }
  txt += "\n";
  write_file(a.out + "/metrics.txt", txt);
  write_disagreements(a.out + "/disagreements.tsv", runs);
  std::printf("em %.2f +/- %.2f  agr %.2f over %d runs\n", rep.em_mean, rep.em_std, rep.agr,
              rep.n_runs);
  return 0;
}

struct ExperimentArgs {
  std::string manifest;
  int jobs = 0;  // 0: take the manifest's value
};

int cmd_experiment(const ExperimentArgs& a) {
  ExperimentManifest m = parse_manifest(a.manifest);
  if (a.jobs > 0) m.jobs = a.jobs;
  std::string out = run_experiment(m);
  std::printf("experiment finished, report under %s/report\n", out.c_str());
  return 0;
}

int cmd_report(const std::string& dir) {
  build_report(dir);
  std::printf("report rebuilt under %s/report\n", dir.c_str());
  return 0;
}

constexpr const char* kManifestHelp = R"(Manifest format (flat key = value with [sections]):

  [corpus]
  kind = synthetic        # or: files (with train_path/eval_path)
  seed = 7
  train_n = 2000
  eval_n = 500
  ambiguity = 0.3

  [noise]
  levels = 0, 0.25, 0.50  # train-split label noise per grid column
  seed = 99

  [experiment]
  reps = 5                # trained runs per cell, N of the agreement metric
  seed_base = 1000
  seed_stride = 100       # rep r trains with seed base + r * stride
  beam = 1
  jobs = 1
  out = out/exp

  [regime baseline]       # one section per regime; keys match regime.cfg
  method = baseline
  steps = 2500
  ...

Runs land in out/runs/noise_<level>/<regime>/rep_<r>/, the combined
EM/AGR table and resource ledger in out/report/.)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale lab for measuring retraining jitter of TOP-style semantic parsers"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen_cmd->add_option("--seed", gen.seed, "grammar seed");
  gen_cmd->add_option("--n", gen.n, "number of examples")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--ambiguity", gen.ambiguity, "fraction of ambiguous surface forms")
      ->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  InjectNoiseArgs noise;
  CLI::App* noise_cmd = app.add_subcommand("inject-noise", "resample labels of a train corpus");
  noise_cmd->add_option("--in", noise.in, "input corpus TSV")->required();
  noise_cmd->add_option("--noise", noise.noise, "fraction of label occurrences to resample")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  noise_cmd->add_option("--seed", noise.seed, "noise seed");
  noise_cmd->add_option("--out", noise.out, "output directory")->required();

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train one regime on a corpus");
  train_cmd->add_option("--data", tr.data, "train corpus TSV")->required();
  train_cmd->add_option("--config", tr.config, "regime config file (includes seeds)")->required();
  train_cmd->add_option("--eval", tr.eval, "optional eval TSV, writes preds.tsv");
  train_cmd->add_option("--beam", tr.beam, "beam width for --eval predictions")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", tr.out, "output run directory")->required();

  PredictArgs pr;
  CLI::App* pred_cmd = app.add_subcommand("predict", "decode a TSV with a saved checkpoint");
  pred_cmd->add_option("--checkpoint", pr.checkpoint, "model checkpoint")->required();
  pred_cmd->add_option("--in", pr.in, "input TSV")->required();
  pred_cmd->add_option("--beam", pr.beam, "beam width, 1 decodes greedily")
      ->check(CLI::PositiveNumber);
  pred_cmd->add_option("--out", pr.out, "output predictions TSV")->required();

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score prediction files against gold");
  eval_cmd->add_option("--gold", ev.gold, "gold corpus TSV")->required();
  eval_cmd->add_option("--pred", ev.preds, "prediction TSV (repeat for multiple runs)")
      ->required();
  eval_cmd->add_option("--out", ev.out, "output directory")->required();

  ExperimentArgs ex;
  CLI::App* exp_cmd = app.add_subcommand("experiment", "run a full noise x regime grid");
  exp_cmd->add_option("--manifest", ex.manifest, "experiment manifest")->required();
  exp_cmd->add_option("--jobs", ex.jobs, "override the manifest worker count")
      ->check(CLI::PositiveNumber);
  exp_cmd->footer(kManifestHelp);

  std::string report_dir;
  CLI::App* report_cmd =
      app.add_subcommand("report", "rebuild report/ from an experiment output tree");
  report_cmd->add_option("--dir", report_dir, "experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (noise_cmd->parsed()) return cmd_inject_noise(noise);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (pred_cmd->parsed()) return cmd_predict(pr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (exp_cmd->parsed()) return cmd_experiment(ex);
    if (report_cmd->parsed()) return cmd_report(report_dir);
  } catch (const ManifestError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const ConfigInvalid& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const IdMismatch& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const SingleRun& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const CorpusEmpty& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "training failure: %s\n", e.what());
    return 3;
  }
  return 1;
}
