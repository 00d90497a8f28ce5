#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taco/taco.hpp"

using namespace taco;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path p = fs::temp_directory_path() /
                     ("taco_cli_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path base = fs::temp_directory_path() /
                        ("taco_cli_io_" + std::to_string(::getpid()) + "_" +
                         std::to_string(counter++));
  const fs::path out_file = base.string() + ".out";
  const fs::path err_file = base.string() + ".err";
  const std::string cmd = std::string(TACO_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::string run_shell(const std::string& cmd) {
  static int counter = 0;
  const fs::path out_file = fs::temp_directory_path() /
                            ("taco_sh_" + std::to_string(::getpid()) + "_" +
                             std::to_string(counter++) + ".out");
  REQUIRE(std::system((cmd + " > " + out_file.string()).c_str()) == 0);
  return slurp(out_file);
}

std::string fixture(const std::string& name) {
  return std::string(TACO_FIXTURE_DIR) + "/" + name;
}

// Ring corpus over e0..e7: +1 and +2 chords train, +3 chords held out.
std::string ring_train_tsv() {
  std::ostringstream out;
  for (int i = 0; i < 8; ++i)
    out << "e" << i << "\tr" << (i % 2) << "\te" << (i + 1) % 8 << "\n";
  for (int i = 0; i < 8; ++i)
    out << "e" << i << "\tr" << ((i + 1) % 2) << "\te" << (i + 2) % 8 << "\n";
  return out.str();
}

std::string ring_val_tsv() {
  std::ostringstream out;
  for (int i = 0; i < 4; ++i) out << "e" << i << "\tr0\te" << (i + 3) % 8 << "\n";
  return out.str();
}

std::string ring_test_tsv() {
  std::ostringstream out;
  for (int i = 4; i < 8; ++i) out << "e" << i << "\tr1\te" << (i + 3) % 8 << "\n";
  return out.str();
}

}  // namespace

TEST_CASE("cli ingest summarizes the graph and echoes the resolved config") {
  const fs::path work = fresh_dir("ingest");
  write_file(work / "train.tsv", ring_train_tsv());
  const fs::path out = work / "run";

  const CliResult r = run_cli("ingest --triples " + (work / "train.tsv").string() +
                              " --out " + out.string());
  INFO(r.err);
  CHECK(r.code == 0);

  const json summary = json::parse(slurp(out / "summary.json"));
  CHECK(summary["num_entities"] == 8);
  CHECK(summary["num_relations"] == 2);
  CHECK(summary["num_triples"] == 16);
  REQUIRE(summary["files"].size() == 1);

  const json echo = json::parse(slurp(out / "config.json"));
  CHECK(echo["command"] == "ingest");
  CHECK(echo["prng"] == kPrngName);
  CHECK(echo["options"]["out"] == out.string());
  CHECK(r.out.find("num_triples") != std::string::npos);
}

TEST_CASE("cli ingest shares the first file's relation vocabulary") {
  const fs::path work = fresh_dir("ingest_multi");
  write_file(work / "train.tsv", ring_train_tsv());
  write_file(work / "extra.tsv", "e0\tr0\te8\n");
  const fs::path out = work / "run";

  const CliResult ok = run_cli("ingest --triples " + (work / "train.tsv").string() + " " +
                               (work / "extra.tsv").string() + " --out " + out.string());
  INFO(ok.err);
  CHECK(ok.code == 0);
  const json summary = json::parse(slurp(out / "summary.json"));
  REQUIRE(summary["files"].size() == 2);
  CHECK(summary["files"][1]["num_entities"] == 9);  // e8 appended to the open vocabulary
  CHECK(summary["files"][1]["num_triples"] == 1);

  write_file(work / "badrel.tsv", "e0\trX\te1\n");
  const CliResult bad = run_cli("ingest --triples " + (work / "train.tsv").string() + " " +
                                (work / "badrel.tsv").string() + " --out " +
                                (work / "run2").string());
  CHECK(bad.code != 0);
  CHECK(bad.err.find("line 1") != std::string::npos);
  CHECK(bad.err.find("rX") != std::string::npos);
}

TEST_CASE("cli ingest reports parse errors with line numbers") {
  const fs::path work = fresh_dir("ingest_bad");
  write_file(work / "bad.tsv", "e0\tr0\te1\nbroken line\n");
  const CliResult r = run_cli("ingest --triples " + (work / "bad.tsv").string() + " --out " +
                              (work / "run").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("cli extract reproduces the committed fixture subgraphs") {
  const KnowledgeGraph g = ingest_tsv(fixture("chain_sidebranch.tsv"));
  const std::size_t idx = g.num_triples() - 1;

  const struct {
    const char* mode;
    const char* stem;
  } cases[] = {{"enclosing", "chain_sidebranch_enclosing_k2.json"},
               {"ccn", "chain_sidebranch_ccn_k2.json"},
               {"ccn+", "chain_sidebranch_ccnplus_k2.json"}};
  for (const auto& c : cases) {
    const fs::path out = fresh_dir("extract");
    const CliResult r = run_cli("extract --triples " + fixture("chain_sidebranch.tsv") +
                                " --index " + std::to_string(idx) + " --mode '" + c.mode +
                                "' --k 2 --feature-width 32 --out " + out.string());
    INFO(c.mode << ": " << r.err);
    CHECK(r.code == 0);
    const fs::path produced =
        out / ("sub_" + std::to_string(idx) + "_" + c.mode + "_k2.json");
    CHECK(json::parse(slurp(produced)) == json::parse(slurp(fixture(c.stem))));
  }
}

TEST_CASE("cli extract with an empty selector writes only the config echo") {
  const fs::path out = fresh_dir("extract_empty");
  const CliResult r = run_cli("extract --triples " + fixture("chain_sidebranch.tsv") +
                              " --out " + out.string());
  INFO(r.err);
  CHECK(r.code == 0);
  bool saw_sub = false;
  for (const auto& entry : fs::directory_iterator(out))
    if (entry.path().filename().string().rfind("sub_", 0) == 0) saw_sub = true;
  CHECK_FALSE(saw_sub);
  CHECK(fs::exists(out / "config.json"));
}

TEST_CASE("cli extract rejects an out-of-range triple index") {
  const fs::path out = fresh_dir("extract_oob");
  const CliResult r = run_cli("extract --triples " + fixture("chain_sidebranch.tsv") +
                              " --index 9999 --out " + out.string());
  CHECK(r.code != 0);
  CHECK(r.err.find("out of range") != std::string::npos);
}

TEST_CASE("cli stats writes the table and is thread-count invariant") {
  const fs::path out1 = fresh_dir("stats1");
  const CliResult r1 = run_cli("stats --triples " + fixture("chain_sidebranch.tsv") +
                               " --k 2 --split test --threads 1 --out " + out1.string());
  INFO(r1.err);
  CHECK(r1.code == 0);
  const std::string csv = slurp(out1 / "stats.csv");
  CHECK(csv.rfind("split,k,triple_count,", 0) == 0);
  CHECK(slurp(out1 / "stats.txt").find("Num=2") != std::string::npos);
  CHECK(r1.out.find("Num=2") != std::string::npos);

  const fs::path out2 = fresh_dir("stats4");
  const CliResult r4 = run_cli("stats --triples " + fixture("chain_sidebranch.tsv") +
                               " --k 2 --split test --threads 4 --out " + out2.string());
  CHECK(r4.code == 0);
  CHECK(slurp(out2 / "stats.csv") == csv);
}

TEST_CASE("cli train writes a loadable checkpoint and reruns reproducibly") {
  const fs::path work = fresh_dir("train");
  write_file(work / "train.tsv", ring_train_tsv());
  write_file(work / "val.tsv", ring_val_tsv());
  const std::string common = "train --train " + (work / "train.tsv").string() + " --val " +
                             (work / "val.tsv").string() +
                             " --score-mode relation-only --extraction ccn --k 2 --d 4"
                             " --epochs 3 --batch-size 4 --seed 7 --out ";

  const fs::path run1 = work / "run1";
  const CliResult r1 = run_cli(common + run1.string());
  INFO(r1.err);
  CHECK(r1.code == 0);

  const Checkpoint ckpt = load_checkpoint((run1 / "checkpoint.json").string());
  CHECK(ckpt.mode == ScoreMode::kRelationOnly);
  CHECK(ckpt.hops == 2);
  CHECK(ckpt.seed == 7);
  CHECK(ckpt.params.dims.d == 4);
  const std::string log1 = slurp(run1 / "training_log.csv");
  CHECK(log1.rfind("epoch,train_loss,val_loss,learning_rate\n", 0) == 0);

  const fs::path run2 = work / "run2";
  CHECK(run_cli(common + run2.string()).code == 0);
  CHECK(slurp(run2 / "checkpoint.json") == slurp(run1 / "checkpoint.json"));
  CHECK(slurp(run2 / "training_log.csv") == log1);

  const fs::path run3 = work / "run3";
  const std::string other = common;
  CHECK(run_cli(other.substr(0, other.find("--seed 7")) + "--seed 8 --out " +
                run3.string())
            .code == 0);
  CHECK(slurp(run3 / "training_log.csv") != log1);
}

TEST_CASE("cli eval reports metrics and hashes the checkpoint like git") {
  const fs::path work = fresh_dir("eval");
  write_file(work / "train.tsv", ring_train_tsv());
  write_file(work / "val.tsv", ring_val_tsv());
  write_file(work / "test.tsv", ring_test_tsv());
  const fs::path run = work / "run";
  REQUIRE(run_cli("train --train " + (work / "train.tsv").string() + " --val " +
                  (work / "val.tsv").string() +
                  " --score-mode relation-only --extraction ccn --k 2 --d 4 --epochs 2"
                  " --batch-size 4 --seed 7 --out " +
                  run.string())
              .code == 0);
  const std::string ckpt = (run / "checkpoint.json").string();

  const fs::path ev1 = work / "ev1";
  const CliResult r = run_cli("eval --graph " + (work / "train.tsv").string() + " --test " +
                              (work / "test.tsv").string() + " --checkpoint " + ckpt +
                              " --rank-negatives 3 --class-negatives 1 --seeds 1 2 --out " +
                              ev1.string());
  INFO(r.err);
  CHECK(r.code == 0);

  json rep = json::parse(slurp(ev1 / "report.json"));
  CHECK(rep["num_test_triples"] == 4);
  CHECK(rep["per_seed"].size() == 2);
  const std::string hash = rep["checkpoint_hash"];
  REQUIRE(hash.size() == 40);
  CHECK(hash.find_first_not_of("0123456789abcdef") == std::string::npos);
  std::string expected = run_shell("git hash-object " + ckpt);
  while (!expected.empty() && (expected.back() == '\n' || expected.back() == '\r'))
    expected.pop_back();
  CHECK(hash == expected);
  CHECK(slurp(ev1 / "report.csv").rfind("num_test_triples,auc_pr,", 0) == 0);

  const fs::path ev2 = work / "ev2";
  REQUIRE(run_cli("eval --graph " + (work / "train.tsv").string() + " --test " +
                  (work / "test.tsv").string() + " --checkpoint " + ckpt +
                  " --rank-negatives 3 --class-negatives 1 --seeds 1 2 --threads 4 --out " +
                  ev2.string())
              .code == 0);
  json rep2 = json::parse(slurp(ev2 / "report.json"));
  rep.erase("config");
  rep2.erase("config");
  CHECK(rep == rep2);
}

TEST_CASE("cli eval requires an existing checkpoint") {
  const fs::path work = fresh_dir("eval_missing");
  write_file(work / "train.tsv", ring_train_tsv());
  write_file(work / "test.tsv", ring_test_tsv());
  const CliResult r = run_cli("eval --graph " + (work / "train.tsv").string() + " --test " +
                              (work / "test.tsv").string() + " --checkpoint " +
                              (work / "missing.json").string() + " --out " +
                              (work / "ev").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("cannot read") != std::string::npos);
}

TEST_CASE("cli baseline-freq evaluates without a checkpoint") {
  const fs::path work = fresh_dir("baseline");
  write_file(work / "train.tsv", ring_train_tsv());
  write_file(work / "test.tsv", ring_test_tsv());
  const fs::path out = work / "run";
  const CliResult r = run_cli("baseline-freq --graph " + (work / "train.tsv").string() +
                              " --test " + (work / "test.tsv").string() +
                              " --rank-negatives 3 --class-negatives 1 --seeds 1 --out " +
                              out.string());
  INFO(r.err);
  CHECK(r.code == 0);
  const json rep = json::parse(slurp(out / "report.json"));
  CHECK(rep["checkpoint_hash"] == "");
  CHECK(rep["num_test_triples"] == 4);
  const json echo = json::parse(slurp(out / "config.json"));
  CHECK(echo["command"] == "baseline-freq");
  CHECK(echo["options"]["scorer"] == "frequency-baseline");
}

TEST_CASE("cli config file supplies values and flags override them") {
  const fs::path work = fresh_dir("config");
  write_file(work / "cfg.ini", "[stats]\nk=3\nsplit=from_config\n");

  const fs::path out1 = work / "run1";
  const CliResult r1 = run_cli("--config " + (work / "cfg.ini").string() + " stats --triples " +
                               fixture("chain_sidebranch.tsv") + " --out " + out1.string());
  INFO(r1.err);
  CHECK(r1.code == 0);
  const json echo1 = json::parse(slurp(out1 / "config.json"));
  CHECK(echo1["options"]["k"] == 3);
  CHECK(echo1["options"]["split"] == "from_config");

  const fs::path out2 = work / "run2";
  const CliResult r2 = run_cli("--config " + (work / "cfg.ini").string() + " stats --triples " +
                               fixture("chain_sidebranch.tsv") + " --k 2 --out " +
                               out2.string());
  CHECK(r2.code == 0);
  const json echo2 = json::parse(slurp(out2 / "config.json"));
  CHECK(echo2["options"]["k"] == 2);
  CHECK(echo2["options"]["split"] == "from_config");
}

TEST_CASE("cli rejects unknown config keys") {
  const fs::path work = fresh_dir("config_bad");
  write_file(work / "cfg.ini", "[stats]\nbogus=1\n");
  const CliResult r = run_cli("--config " + (work / "cfg.ini").string() + " stats --triples " +
                              fixture("chain_sidebranch.tsv") + " --out " +
                              (work / "run").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("bogus") != std::string::npos);
}
