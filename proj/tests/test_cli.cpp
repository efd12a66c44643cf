#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "ibcaan/cli.hpp"
#include "ibcaan/dataset.hpp"
#include "ibcaan/eer.hpp"

using namespace ibcaan;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"ibcaan"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

// Run with std::cout captured.
std::pair<int, std::string> run_cli_capture(
    const std::vector<std::string>& args) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  const int code = run_cli(args);
  std::cout.rdbuf(old);
  return {code, captured.str()};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// Small dataset + config pair shared by the CLI cases.
struct CliFixture {
  TempDir dir{"ibcaan_cli_fixture"};
  std::string data_path;
  std::string config_path;

  CliFixture() {
    data_path = (dir.path / "data.tsv").string();
    write_file(dir.path / "spec.json",
               R"({"input_dim": 8, "n_train_attacks": 2, "n_test_attacks": 1,
                   "samples": [96, 24, 24, 24], "s_shared": 1.0,
                   "s_attack": 3.0, "delta": 0.5, "seed": 3})");
    REQUIRE(run_cli({"gen-data", "--spec",
                     (dir.path / "spec.json").string(), "--out",
                     data_path}) == 0);
    config_path = (dir.path / "config.json").string();
    write_file(dir.path / "config.json",
               R"({"variant": "IB_CAAN", "epochs": 2, "topk": 1,
                   "batch_size": 16, "seed": 5,
                   "dims": {"hidden": 12, "z_dim": 4}})");
  }
};

}  // namespace

TEST_CASE("gen-data builds a loadable dataset") {
  TempDir dir("ibcaan_cli_gen");
  const std::string out = (dir.path / "default.tsv").string();
  CHECK(run_cli({"gen-data", "--out", out}) == 0);
  const Dataset ds = read_dataset(out);
  CHECK(ds.examples.size() == 7000);
  CHECK(ds.spec.input_dim == 20);
}

TEST_CASE("train writes reports, checkpoints and scores") {
  CliFixture fixture;
  TempDir outdir("ibcaan_cli_train");
  CHECK(run_cli({"train", "--data", fixture.data_path, "--outdir",
                 outdir.path.string(), "--config", fixture.config_path}) == 0);
  CHECK(std::filesystem::exists(outdir.path / "report.json"));
  CHECK(std::filesystem::exists(outdir.path / "averaged.json"));
  CHECK(std::filesystem::exists(outdir.path / "scores_test_unseen.tsv"));

  SUBCASE("the report echoes the resolved config") {
    const std::string report = slurp(outdir.path / "report.json");
    CHECK(report.find("\"variant\": \"IB_CAAN\"") != std::string::npos);
    CHECK(report.find("\"seed\": 5") != std::string::npos);
    // dims pinned from the dataset
    CHECK(report.find("\"input_dim\": 8") != std::string::npos);
    CHECK(report.find("\"n_attacks\": 2") != std::string::npos);
  }
  SUBCASE("a second identical run reproduces the report byte for byte") {
    TempDir outdir2("ibcaan_cli_train2");
    CHECK(run_cli({"train", "--data", fixture.data_path, "--outdir",
                   outdir2.path.string(), "--config",
                   fixture.config_path}) == 0);
    CHECK(slurp(outdir.path / "report.json") ==
          slurp(outdir2.path / "report.json"));
  }
  SUBCASE("report renders as a table") {
    const auto [code, text] =
        run_cli_capture({"report", (outdir.path / "report.json").string()});
    CHECK(code == 0);
    CHECK(text.find("epoch") != std::string::npos);
    CHECK(text.find("val_EER") != std::string::npos);
    CHECK(text.find("test_unseen") != std::string::npos);
  }
  SUBCASE("eval on the averaged checkpoint prints the split table") {
    const auto [code, text] = run_cli_capture(
        {"eval", "--checkpoint", (outdir.path / "averaged.json").string(),
         "--data", fixture.data_path});
    CHECK(code == 0);
    CHECK(text.find("test_unseen") != std::string::npos);
    CHECK(text.find('%') != std::string::npos);
  }
}

TEST_CASE("IBCAAN_SEED environment variable overrides the config seed") {
  CliFixture fixture;
  TempDir outdir("ibcaan_cli_envseed");
  setenv("IBCAAN_SEED", "123", 1);
  const int code = run_cli({"train", "--data", fixture.data_path, "--outdir",
                            outdir.path.string(), "--config",
                            fixture.config_path});
  unsetenv("IBCAAN_SEED");
  CHECK(code == 0);
  CHECK(slurp(outdir.path / "report.json").find("\"seed\": 123") !=
        std::string::npos);
}

TEST_CASE("eval --scores prints the EER of a score file") {
  TempDir dir("ibcaan_cli_scores");
  const std::string path = (dir.path / "toy.tsv").string();
  write_scores({{"a", 0.9, 0}, {"b", 0.8, 0}, {"c", 0.1, 1}, {"d", 0.2, 1}},
               path);
  const auto [code, text] = run_cli_capture({"eval", "--scores", path});
  CHECK(code == 0);
  CHECK(text.find("EER 0.00%") != std::string::npos);
}

TEST_CASE("ablate produces the five-row grid summary") {
  CliFixture fixture;
  TempDir outdir("ibcaan_cli_ablate");
  write_file(outdir.path / "config.json",
             R"({"variant": "IB_CAAN", "epochs": 1, "topk": 1,
                 "batch_size": 16, "seed": 0,
                 "dims": {"hidden": 8, "z_dim": 3}})");
  const auto [code, text] = run_cli_capture(
      {"ablate", "--data", fixture.data_path, "--outdir",
       outdir.path.string(), "--config",
       (outdir.path / "config.json").string(), "--seeds", "1"});
  CHECK(code == 0);
  for (const char* row :
       {"IB-CAAN", "w/o IB", "w/o CAAN", "IB-DANN", "ERM", "AVG"}) {
    CHECK(text.find(row) != std::string::npos);
  }
  CHECK(std::filesystem::exists(outdir.path / "ablate.json"));
  CHECK(std::filesystem::exists(outdir.path / "IB_CAAN_seed0" /
                                "report.json"));
  CHECK(std::filesystem::exists(outdir.path / "ERM_seed0" / "report.json"));
}

TEST_CASE("CLI exit codes") {
  SUBCASE("unknown flags are usage errors") {
    CHECK(run_cli_capture({"train", "--bogus"}).first == 1);
    CHECK(run_cli_capture({"no-such-command"}).first == 1);
    CHECK(run_cli_capture({}).first == 1);
  }
  SUBCASE("missing files are data errors") {
    TempDir dir("ibcaan_cli_errors");
    CHECK(run_cli({"train", "--data", (dir.path / "absent.tsv").string(),
                   "--outdir", (dir.path / "out").string()}) == 2);
    CHECK(run_cli({"eval", "--scores",
                   (dir.path / "absent.tsv").string()}) == 2);
  }
  SUBCASE("mismatched config dims are data errors") {
    CliFixture fixture;
    TempDir outdir("ibcaan_cli_mismatch");
    write_file(outdir.path / "bad.json",
               R"({"dims": {"input_dim": 11}, "epochs": 1, "topk": 1})");
    CHECK(run_cli({"train", "--data", fixture.data_path, "--outdir",
                   outdir.path.string(), "--config",
                   (outdir.path / "bad.json").string()}) == 2);
  }
  SUBCASE("eval without inputs is a usage error") {
    CHECK(run_cli_capture({"eval"}).first == 1);
  }
  SUBCASE("--help exits cleanly") {
    CHECK(run_cli_capture({"--help"}).first == 0);
  }
}
