#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  std::string cmd = std::string(JITTERLAB_BIN) + " " + args + " 2>&1";
  CmdResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 256> buf;
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  int status = pclose(pipe);
  if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
  return r;
}

fs::path scratch(const std::string& name) {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "jitterlab_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  fs::path dir = root / name;
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

bool files_equal(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

// relative path -> bytes, for whole-tree comparison
std::vector<std::pair<std::string, std::string>> dir_snapshot(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> snap;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    snap.emplace_back(fs::relative(entry.path(), root).string(), slurp(entry.path()));
  }
  std::sort(snap.begin(), snap.end());
  return snap;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

const char* kTinyRegime =
    "method = baseline\n"
    "seeds = 42\n"
    "steps = 30\n"
    "batch_size = 8\n"
    "learning_rate = 0.003\n"
    "model.encoder_layers = 1\n"
    "model.encoder_heads = 2\n"
    "model.encoder_dim = 16\n"
    "model.decoder_layers = 1\n"
    "model.decoder_heads = 2\n"
    "model.decoder_dim = 16\n"
    "model.output_embed_dim = 12\n"
    "model.max_src_positions = 16\n";

}  // namespace

TEST_CASE("cli: gen-data is deterministic and validates its flags") {
  fs::path dir = scratch("gen");
  CmdResult a = run_cli("gen-data --seed 11 --n 40 --ambiguity 0.3 --out " + (dir / "a").string());
  REQUIRE(a.code == 0);
  CmdResult b = run_cli("gen-data --seed 11 --n 40 --ambiguity 0.3 --out " + (dir / "b").string());
  REQUIRE(b.code == 0);
  CHECK(dir_snapshot(dir / "a") == dir_snapshot(dir / "b"));
  CHECK(fs::exists(dir / "a" / "corpus.tsv"));
  CHECK(fs::exists(dir / "a" / "source.vocab"));
  CHECK(fs::exists(dir / "a" / "target.vocab"));
  CHECK(fs::exists(dir / "a" / "gen_meta.txt"));

  CmdResult other_seed =
      run_cli("gen-data --seed 12 --n 40 --ambiguity 0.3 --out " + (dir / "c").string());
  REQUIRE(other_seed.code == 0);
  CHECK_FALSE(files_equal(dir / "a" / "corpus.tsv", dir / "c" / "corpus.tsv"));

  CHECK(run_cli("gen-data --seed 1 --n 0 --out " + (dir / "z").string()).code == 1);
  CHECK(run_cli("gen-data --seed 1 --n 10 --ambiguity 1.5 --out " + (dir / "z").string()).code == 1);
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("no-such-subcommand").code == 1);
}

TEST_CASE("cli: inject-noise at zero is the identity") {
  fs::path dir = scratch("noise");
  REQUIRE(run_cli("gen-data --seed 3 --n 40 --ambiguity 0.3 --out " + (dir / "gd").string()).code == 0);
  std::string corpus = (dir / "gd" / "corpus.tsv").string();

  REQUIRE(run_cli("inject-noise --in " + corpus + " --noise 0 --seed 5 --out " + (dir / "n0").string()).code == 0);
  CHECK(files_equal(corpus, dir / "n0" / "corpus.tsv"));

  REQUIRE(run_cli("inject-noise --in " + corpus + " --noise 0.5 --seed 5 --out " + (dir / "n5").string()).code == 0);
  CHECK_FALSE(files_equal(corpus, dir / "n5" / "corpus.tsv"));

  CHECK(run_cli("inject-noise --in " + corpus + " --noise 2 --seed 1 --out " + (dir / "z").string()).code == 1);
  CmdResult missing =
      run_cli("inject-noise --in " + (dir / "gone.tsv").string() + " --noise 0.1 --seed 1 --out " + (dir / "z").string());
  CHECK(missing.code == 2);
  CHECK(missing.output.find((dir / "gone.tsv").string()) != std::string::npos);
}

TEST_CASE("cli: train writes a self-describing run directory") {
  fs::path dir = scratch("train");
  REQUIRE(run_cli("gen-data --seed 3 --n 40 --ambiguity 0.3 --out " + (dir / "gd").string()).code == 0);
  std::string corpus = (dir / "gd" / "corpus.tsv").string();
  spit(dir / "regime.cfg", kTinyRegime);

  CmdResult tr = run_cli("train --data " + corpus + " --config " + (dir / "regime.cfg").string() +
                         " --out " + (dir / "run").string());
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(dir / "run" / "model_0.jlck"));
  CHECK(fs::exists(dir / "run" / "loss_0.csv"));
  CHECK(fs::exists(dir / "run" / "regime.cfg"));
  std::string meta = slurp(dir / "run" / "run_meta.txt");
  CHECK(meta.find("seeds = 42") != std::string::npos);
  CHECK(meta.find("config_hash = ") != std::string::npos);
  CHECK(meta.find("corpus_fingerprint = ") != std::string::npos);

  CmdResult missing = run_cli("train --data " + (dir / "gone.tsv").string() + " --config " +
                              (dir / "regime.cfg").string() + " --out " + (dir / "z").string());
  CHECK(missing.code == 2);

  spit(dir / "bad.cfg", "method = baseline\nseeds = 42\nsteps = 0\n");
  CHECK(run_cli("train --data " + corpus + " --config " + (dir / "bad.cfg").string() + " --out " +
                (dir / "z").string())
            .code == 1);
}

TEST_CASE("cli: predict with beam 1 matches the greedy default") {
  fs::path dir = scratch("predict");
  REQUIRE(run_cli("gen-data --seed 3 --n 40 --ambiguity 0.3 --out " + (dir / "gd").string()).code == 0);
  std::string corpus = (dir / "gd" / "corpus.tsv").string();
  spit(dir / "regime.cfg", kTinyRegime);
  REQUIRE(run_cli("train --data " + corpus + " --config " + (dir / "regime.cfg").string() +
                  " --out " + (dir / "run").string())
              .code == 0);
  std::string ckpt = (dir / "run" / "model_0.jlck").string();

  REQUIRE(run_cli("predict --checkpoint " + ckpt + " --in " + corpus + " --out " + (dir / "p_default.tsv").string()).code == 0);
  REQUIRE(run_cli("predict --checkpoint " + ckpt + " --in " + corpus + " --beam 1 --out " + (dir / "p_b1.tsv").string()).code == 0);
  CHECK(files_equal(dir / "p_default.tsv", dir / "p_b1.tsv"));

  REQUIRE(run_cli("predict --checkpoint " + ckpt + " --in " + corpus + " --beam 3 --out " + (dir / "p_b3.tsv").string()).code == 0);
  CHECK(lines_of(slurp(dir / "p_b3.tsv")).size() == 41);  // header + one row per example

  spit(dir / "truncated.jlck", slurp(dir / "run" / "model_0.jlck").substr(0, 90));
  CHECK(run_cli("predict --checkpoint " + (dir / "truncated.jlck").string() + " --in " + corpus +
                " --out " + (dir / "z.tsv").string())
            .code == 2);
  CHECK(run_cli("predict --checkpoint " + ckpt + " --in " + corpus + " --beam 0 --out " +
                (dir / "z.tsv").string())
            .code == 1);
}

TEST_CASE("cli: an overfit model reproduces its training parses") {
  fs::path dir = scratch("overfit");
  std::string gold =
      "[in:get_weather will i need [sl:weather_attribute snow tires ] [sl:date_time this afternoon ] ]";
  spit(dir / "corpus.tsv",
       "will i need snow tires this afternoon\t" + gold + "\n" +
           "how do i get to boston\t[in:get_directions how do i get to [sl:destination boston ] ]\n" +
           "remind me at ten\t[in:create_alarm remind me at [sl:date_time ten ] ]\n" +
           "play some jazz\t[in:play_music play some [sl:music_genre jazz ] ]\n");
  spit(dir / "regime.cfg",
       "method = baseline\n"
       "seeds = 9\n"
       "steps = 500\n"
       "batch_size = 4\n"
       "learning_rate = 0.003\n"
       "model.encoder_layers = 1\n"
       "model.encoder_heads = 2\n"
       "model.encoder_dim = 16\n"
       "model.decoder_layers = 1\n"
       "model.decoder_heads = 2\n"
       "model.decoder_dim = 16\n"
       "model.output_embed_dim = 12\n"
       "model.max_src_positions = 16\n");
  REQUIRE(run_cli("train --data " + (dir / "corpus.tsv").string() + " --config " +
                  (dir / "regime.cfg").string() + " --out " + (dir / "run").string())
              .code == 0);
  REQUIRE(run_cli("predict --checkpoint " + (dir / "run" / "model_0.jlck").string() + " --in " +
                  (dir / "corpus.tsv").string() + " --out " + (dir / "preds.tsv").string())
              .code == 0);
  std::vector<std::string> preds = lines_of(slurp(dir / "preds.tsv"));
  REQUIRE(preds.size() == 5);
  CHECK(preds[1] == "0\t" + gold);
}

TEST_CASE("cli: eval scores prediction sets against gold") {
  fs::path dir = scratch("eval");
  spit(dir / "gold.tsv",
       "a b\t[in:x a b ]\n"
       "c d\t[in:y c d ]\n"
       "e f\t[in:z e f ]\n");
  spit(dir / "p1.tsv",
       "id\tprediction\n"
       "0\t[in:x a b ]\n"
       "1\t[in:y c d ]\n"
       "2\t[in:q e ]\n");
  spit(dir / "p2.tsv",
       "id\tprediction\n"
       "0\t[in:x a b ]\n"
       "1\t[in:w c ]\n"
       "2\t[in:q e ]\n");

  CmdResult ev = run_cli("eval --gold " + (dir / "gold.tsv").string() + " --pred " +
                         (dir / "p1.tsv").string() + " --pred " + (dir / "p2.tsv").string() +
                         " --out " + (dir / "out").string());
  REQUIRE(ev.code == 0);
  std::vector<std::string> csv = lines_of(slurp(dir / "out" / "metrics.csv"));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == "n_runs,em_mean,em_std,agr");
  // run EMs are 2/3 and 1/3; runs agree on examples 0 and 2
  CHECK(csv[1] == "2,50.000000,16.666667,66.666667");
  CHECK(fs::exists(dir / "out" / "disagreements.tsv"));
  std::vector<std::string> dis = lines_of(slurp(dir / "out" / "disagreements.tsv"));
  REQUIRE(dis.size() == 2);
  CHECK(dis[1] == "1\t[in:y c d ]\t[in:w c ]");

  CmdResult single = run_cli("eval --gold " + (dir / "gold.tsv").string() + " --pred " +
                             (dir / "p1.tsv").string() + " --out " + (dir / "single").string());
  REQUIRE(single.code == 0);
  CHECK(slurp(dir / "single" / "metrics.csv").find("66.666667") != std::string::npos);
}

TEST_CASE("cli: experiment reruns byte-identically and report rebuilds the same tables") {
  fs::path dir = scratch("experiment");
  auto manifest_text = [&](const std::string& out) {
    return std::string("[corpus]\n") +
           "kind = synthetic\n"
           "grammar_seed = 7\n"
           "train_n = 30\n"
           "eval_n = 15\n"
           "ambiguity = 0.3\n"
           "\n[noise]\n"
           "levels = 0, 0.25\n"
           "seed = 99\n"
           "\n[experiment]\n"
           "reps = 2\n"
           "seed_base = 1000\n"
           "seed_stride = 100\n"
           "beam = 1\n"
           "jobs = 1\n"
           "out = " + out + "\n"
           "\n[regime base]\n"
           "method = baseline\n"
           "steps = 20\n"
           "batch_size = 8\n"
           "learning_rate = 0.003\n"
           "model.encoder_layers = 1\n"
           "model.encoder_heads = 2\n"
           "model.encoder_dim = 16\n"
           "model.decoder_layers = 1\n"
           "model.decoder_heads = 2\n"
           "model.decoder_dim = 16\n"
           "model.output_embed_dim = 12\n"
           "model.max_src_positions = 16\n";
  };
  spit(dir / "m1.cfg", manifest_text((dir / "run_a").string()));
  spit(dir / "m2.cfg", manifest_text((dir / "run_b").string()));

  REQUIRE(run_cli("experiment --manifest " + (dir / "m1.cfg").string()).code == 0);
  REQUIRE(run_cli("experiment --manifest " + (dir / "m2.cfg").string()).code == 0);
  CHECK(dir_snapshot(dir / "run_a" / "report") == dir_snapshot(dir / "run_b" / "report"));
  CHECK(dir_snapshot(dir / "run_a" / "runs") == dir_snapshot(dir / "run_b" / "runs"));
  CHECK(dir_snapshot(dir / "run_a" / "data") == dir_snapshot(dir / "run_b" / "data"));

  auto before = dir_snapshot(dir / "run_b" / "report");
  fs::remove_all(dir / "run_b" / "report");
  REQUIRE(run_cli("report --dir " + (dir / "run_b").string()).code == 0);
  CHECK(dir_snapshot(dir / "run_b" / "report") == before);

  std::string summary = slurp(dir / "run_a" / "report" / "summary.csv");
  CHECK(summary.find("regime,noise,n_runs,em_mean,em_std,agr") != std::string::npos);
  CHECK(summary.find("base,0.00,2,") != std::string::npos);
  CHECK(summary.find("base,0.25,2,") != std::string::npos);
  std::string ledger = slurp(dir / "run_a" / "report" / "ledger.csv");
  CHECK(ledger.find("base,baseline,1x,1x,1,1") != std::string::npos);

  spit(dir / "bad.cfg", "not a manifest\n");
  CHECK(run_cli("experiment --manifest " + (dir / "bad.cfg").string()).code == 1);
  CHECK(run_cli("report --dir " + (dir / "nowhere").string()).code == 2);
}
