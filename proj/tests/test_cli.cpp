// Integration tests driving the installed CLI binary. The binary path comes
// from the build system through DPS_CLI_PATH.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = DPS_CLI_PATH;

struct Workdir {
  fs::path root;
  Workdir() {
    root = fs::temp_directory_path() / ("dps_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workdir() { fs::remove_all(root); }
  std::string operator/(const std::string& sub) const { return (root / sub).string(); }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

int run_capture(const std::string& args, std::string& output, const Workdir& wd) {
  const std::string log = wd / "cmd_output.txt";
  const std::string cmd = kCli + " " + args + " > " + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  output = ss.str();
  return rc;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string data_flags(const Workdir& wd, const std::string& data) {
  return "--data " + (wd / data) + " --divisor 1 --seed 5";
}

std::string train_flags(const Workdir& wd, const std::string& data) {
  return data_flags(wd, data) +
         " --d-model 8 --d-time 4 --neighbors 4 --batch-size 64 "
         "--layers 1 --heads 1 --dropout 0 --lr 0.01 --max-epochs 2";
}

}  // namespace

TEST_CASE("cli: synth is byte-identical per seed; pipeline runs end to end") {
  Workdir wd;
  const std::string synth_args =
      "synth --nodes 50 --edges 800 --communities 4 --decay 0.05 --seed 7";
  REQUIRE(run(synth_args + " --out " + (wd / "s1")) == 0);
  REQUIRE(run(synth_args + " --out " + (wd / "s2")) == 0);
  CHECK(slurp(wd / "s1/synth.txt") == slurp(wd / "s2/synth.txt"));

  // Different seed differs.
  REQUIRE(run("synth --nodes 50 --edges 800 --communities 4 --decay 0.05 --seed 8 --out " +
              (wd / "s3")) == 0);
  CHECK(slurp(wd / "s1/synth.txt") != slurp(wd / "s3/synth.txt"));

  fs::copy(wd / "s1/synth.txt", wd / "data.txt");

  REQUIRE(run("fit-tds " + data_flags(wd, "data.txt") + " --out " + (wd / "tds")) == 0);
  CHECK(fs::exists(wd / "tds/tds.ckpt.json"));
  CHECK(fs::exists(wd / "tds/tds_rates.txt"));

  REQUIRE(run("pretrain-gas " + train_flags(wd, "data.txt") + " --out " + (wd / "gas")) == 0);
  CHECK(fs::exists(wd / "gas/gas.ckpt.json"));

  REQUIRE(run("train " + train_flags(wd, "data.txt") + " --tds " + (wd / "tds/tds.ckpt.json") +
              " --gas " + (wd / "gas/gas.ckpt.json") + " --out " + (wd / "run")) == 0);
  CHECK(fs::exists(wd / "run/dps.ckpt.json"));
  CHECK(fs::exists(wd / "run/train_report.json"));
  CHECK(fs::exists(wd / "run/train_config.json"));

  // metrics.csv carries the spec header.
  const std::string metrics = slurp(wd / "run/metrics.csv");
  CHECK(metrics.rfind("command,dataset,mode,accuracy,auc,epochs,seed", 0) == 0);

  // evaluate on the saved checkpoint reproduces the in-run test metrics.
  std::string eval_out;
  REQUIRE(run_capture("evaluate " + data_flags(wd, "data.txt") + " --model " +
                          (wd / "run/dps.ckpt.json") + " --out " + (wd / "eval"),
                      eval_out, wd) == 0);
  const json train_report = json::parse(slurp(wd / "run/train_report.json"));
  const json eval_report = json::parse(slurp(wd / "eval/evaluate_report.json"));
  CHECK(train_report.at("auc").get<double>() == eval_report.at("auc").get<double>());
  CHECK(train_report.at("accuracy").get<double>() == eval_report.at("accuracy").get<double>());

  // embed writes one row per requested pair.
  REQUIRE(run("embed " + data_flags(wd, "data.txt") + " --model " +
              (wd / "run/dps.ckpt.json") + " --at 0:100 --at 3:500 --out " + (wd / "emb")) == 0);
  const std::string emb = slurp(wd / "emb/embeddings.csv");
  CHECK(emb.rfind("node_id,t,h_1", 0) == 0);
  CHECK(std::count(emb.begin(), emb.end(), '\n') == 3);  // header + 2 rows
}

TEST_CASE("cli: ingest summary, config reproducibility and error paths") {
  Workdir wd;
  {
    std::ofstream data(wd / "raw.txt");
    data << "a b 100\nb c 200\na c 250\nc a 300\nb a 350\na b 400\n";
  }
  std::string out;
  REQUIRE(run_capture("ingest --data " + (wd / "raw.txt") + " --out " + (wd / "ing"), out,
                      wd) == 0);
  const json summary = json::parse(slurp(wd / "ing/ingest_summary.json"));
  CHECK(summary.at("nodes") == 3);
  CHECK(summary.at("edges") == 6);
  CHECK(summary.at("density").get<double>() == doctest::Approx(2.0 * 6 / (3.0 * 2)));
  // Pairs {a,b} and {a,c} repeat: edges 4, 5, 6 of 6 -> 0.5.
  CHECK(summary.at("repetition").get<double>() == doctest::Approx(0.5));
  CHECK(fs::exists(wd / "ing/dataset.txt"));

  // Resolved configs are themselves valid --config inputs.
  REQUIRE(run("synth --nodes 30 --edges 300 --communities 2 --decay 0.05 --seed 3 --out " +
              (wd / "s")) == 0);
  REQUIRE(run("fit-tds --data " + (wd / "s/synth.txt") + " --divisor 1 --seed 9 --out " +
              (wd / "t1")) == 0);
  REQUIRE(run("fit-tds --config " + (wd / "t1/fit-tds_config.json") + " --data " +
              (wd / "s/synth.txt") + " --divisor 1 --out " + (wd / "t2")) == 0);
  CHECK(slurp(wd / "t1/tds.ckpt.json") == slurp(wd / "t2/tds.ckpt.json"));

  // Unknown config keys are rejected.
  {
    std::ofstream bad(wd / "bad.json");
    bad << "{\"learningrate\": 0.1}\n";
  }
  std::string err;
  CHECK(run_capture("fit-tds --config " + (wd / "bad.json") + " --data " + (wd / "s/synth.txt") +
                        " --out " + (wd / "t3"),
                    err, wd) != 0);
  CHECK(err.find("unknown key") != std::string::npos);

  // Missing files give a nonzero exit and a message on stderr.
  CHECK(run_capture("ingest --data " + (wd / "nope.txt") + " --out " + (wd / "x"), err, wd) != 0);
  CHECK(err.find("error") != std::string::npos);
  CHECK(run_capture("evaluate --data " + (wd / "s/synth.txt") + " --divisor 1 --model " +
                        (wd / "missing.ckpt") + " --out " + (wd / "x2"),
                    err, wd) != 0);
}

TEST_CASE("cli: gradcheck passes and reports per-op lines") {
  Workdir wd;
  std::string out;
  REQUIRE(run_capture("gradcheck --out " + (wd / "gc"), out, wd) == 0);
  CHECK(out.find("[PASS] end_to_end_dps") != std::string::npos);
  CHECK(out.find("[FAIL]") == std::string::npos);
}
