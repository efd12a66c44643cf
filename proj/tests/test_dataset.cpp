#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "ibcaan/dataset.hpp"
#include "ibcaan/eer.hpp"
#include "ibcaan/errors.hpp"

using namespace ibcaan;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

// Phi(x) for the closed-form separability bound.
double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path((std::filesystem::temp_directory_path() / name).string()) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("generated cue directions are orthonormal") {
  const Dataset ds = generate_dataset(SyntheticSpec{});
  std::vector<const std::vector<double>*> dirs = {&ds.shared_cue,
                                                  &ds.shift_dir};
  for (const auto& v : ds.attack_cues) dirs.push_back(&v);
  REQUIRE(dirs.size() == 7);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    CHECK(std::fabs(dot(*dirs[i], *dirs[i]) - 1.0) < 1e-10);
    for (std::size_t j = i + 1; j < dirs.size(); ++j) {
      CHECK(std::fabs(dot(*dirs[i], *dirs[j])) < 1e-10);
    }
  }
}

TEST_CASE("split structure of the default dataset") {
  const Dataset ds = generate_dataset(SyntheticSpec{});
  CHECK(ds.examples.size() == 7000);
  std::map<Split, std::size_t> counts;
  std::map<int, std::size_t> train_attacks;
  for (const Example& ex : ds.examples) {
    ++counts[ex.split];
    CHECK((ex.attack < 0) == (ex.y == 0));
    if (ex.split == Split::kTrain || ex.split == Split::kVal) {
      CHECK(ex.attack < static_cast<int>(ds.spec.n_train_attacks));
    }
    if (ex.split == Split::kTestUnseen && ex.y == 1) {
      CHECK(ex.attack >= static_cast<int>(ds.spec.n_train_attacks));
    }
    if (ex.split == Split::kTrain && ex.y == 1) ++train_attacks[ex.attack];
  }
  CHECK(counts[Split::kTrain] == 4000);
  CHECK(counts[Split::kVal] == 1000);
  CHECK(counts[Split::kTestSeen] == 1000);
  CHECK(counts[Split::kTestUnseen] == 1000);

  // attack labels near-uniform over the training attacks (within 5%)
  const double expected = 2000.0 / 3.0;
  REQUIRE(train_attacks.size() == 3);
  for (const auto& [attack, count] : train_attacks) {
    CHECK(std::fabs(static_cast<double>(count) - expected) <
          0.05 * expected);
  }
}

TEST_CASE("spoof-minus-bonafide mean projects onto the shared cue") {
  const Dataset ds = generate_dataset(SyntheticSpec{});
  double spoof_sum = 0.0, bona_sum = 0.0;
  std::size_t n_spoof = 0, n_bona = 0;
  for (const Example& ex : ds.examples) {
    if (ex.split != Split::kTrain) continue;
    const double proj = dot(ex.x, ds.shared_cue);
    if (ex.y == 1) {
      spoof_sum += proj;
      ++n_spoof;
    } else {
      bona_sum += proj;
      ++n_bona;
    }
  }
  const double gap = spoof_sum / n_spoof - bona_sum / n_bona;
  const double stderr_gap = std::sqrt(1.0 / n_spoof + 1.0 / n_bona);
  CHECK(std::fabs(gap - ds.spec.s_shared) < 3.0 * stderr_gap);
}

TEST_CASE("shared-cue detector hits the Gaussian overlap bound") {
  // On unseen attacks only the shared cue carries label signal, so scoring
  // by -<u, x> is the best linear rule there; two unit-variance Gaussians
  // s_shared apart overlap at EER = Phi(-s_shared / 2).
  SyntheticSpec spec;
  spec.samples = {2, 2, 2, 100000};
  spec.seed = 5;
  const Dataset ds = generate_dataset(spec);
  std::vector<ScoreRecord> records;
  std::size_t i = 0;
  for (const Example& ex : ds.examples) {
    if (ex.split != Split::kTestUnseen) continue;
    records.push_back({"t" + std::to_string(i++), -dot(ex.x, ds.shared_cue),
                       ex.y});
  }
  const double closed_form = std_normal_cdf(-spec.s_shared / 2.0);
  CHECK(std::fabs(compute_eer(records) - closed_form) < 0.01);
}

TEST_CASE("degenerate specs are rejected") {
  SUBCASE("input_dim too small for the direction set") {
    SyntheticSpec spec;
    spec.input_dim = 5;  // needs 1 + 3 + 2 + 1 = 7
    CHECK_THROWS_AS(generate_dataset(spec), DataError);
  }
  SUBCASE("shortcut cue must dominate the shared cue") {
    SyntheticSpec spec;
    spec.s_attack = 0.5;
    CHECK_THROWS_AS(generate_dataset(spec), DataError);
    spec.s_attack = 3.0;
    spec.s_shared = 0.0;
    CHECK_THROWS_AS(generate_dataset(spec), DataError);
  }
  SUBCASE("zero training attacks rejected") {
    SyntheticSpec spec;
    spec.n_train_attacks = 0;
    CHECK_THROWS_AS(generate_dataset(spec), DataError);
  }
}

TEST_CASE("no-shift no-new-attacks spec reproduces the train distribution") {
  SyntheticSpec spec;
  spec.delta = 0.0;
  spec.n_test_attacks = 0;
  spec.samples = {4000, 100, 100, 4000};
  const Dataset ds = generate_dataset(spec);
  double unseen_mean = 0.0, train_mean = 0.0;
  std::size_t n_unseen = 0, n_train = 0;
  for (const Example& ex : ds.examples) {
    if (ex.y == 1) {
      CHECK(ex.attack < static_cast<int>(spec.n_train_attacks));
    }
    const double proj = dot(ex.x, ds.shift_dir);
    if (ex.split == Split::kTestUnseen) {
      unseen_mean += proj;
      ++n_unseen;
    }
    if (ex.split == Split::kTrain) {
      train_mean += proj;
      ++n_train;
    }
  }
  unseen_mean /= n_unseen;
  train_mean /= n_train;
  CHECK(std::fabs(unseen_mean - train_mean) <
        4.0 * std::sqrt(1.0 / n_unseen + 1.0 / n_train));
}

TEST_CASE("dataset file round-trip and determinism") {
  SyntheticSpec spec;
  spec.samples = {40, 10, 10, 10};
  spec.seed = 9;
  const Dataset ds = generate_dataset(spec);
  TempFile f1("ibcaan_ds_a.tsv"), f2("ibcaan_ds_b.tsv"),
      f3("ibcaan_ds_c.tsv");

  write_dataset(ds, f1.path);
  write_dataset(generate_dataset(spec), f2.path);
  CHECK(slurp(f1.path) == slurp(f2.path));  // same spec+seed, same bytes

  const Dataset loaded = read_dataset(f1.path);
  CHECK(loaded.spec == ds.spec);
  CHECK(loaded.shared_cue == ds.shared_cue);
  CHECK(loaded.attack_cues == ds.attack_cues);
  CHECK(loaded.shift_dir == ds.shift_dir);
  REQUIRE(loaded.examples.size() == ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    CHECK(loaded.examples[i].x == ds.examples[i].x);  // bitwise floats
    CHECK(loaded.examples[i].y == ds.examples[i].y);
    CHECK(loaded.examples[i].attack == ds.examples[i].attack);
    CHECK(loaded.examples[i].split == ds.examples[i].split);
  }
  write_dataset(loaded, f3.path);
  CHECK(slurp(f1.path) == slurp(f3.path));
}

TEST_CASE("malformed dataset files report the offending line") {
  SyntheticSpec spec;
  spec.samples = {10, 4, 4, 4};
  const Dataset ds = generate_dataset(spec);
  TempFile good("ibcaan_ds_good.tsv");
  write_dataset(ds, good.path);
  const std::string content = slurp(good.path);

  SUBCASE("truncated row") {
    TempFile bad("ibcaan_ds_trunc.tsv");
    std::ofstream out(bad.path);
    // cut the 5th line (first data row is line 3) down to two fields
    std::istringstream lines(content);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      ++n;
      if (n == 5) {
        out << "train\t0\n";
      } else {
        out << line << "\n";
      }
    }
    out.close();
    try {
      read_dataset(bad.path);
      FAIL("expected parse error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":5:") != std::string::npos);
    }
  }
  SUBCASE("row count disagrees with the header") {
    TempFile bad("ibcaan_ds_short.tsv");
    std::ofstream out(bad.path);
    std::istringstream lines(content);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      ++n;
      if (n == 7) continue;  // drop one data row
      out << line << "\n";
    }
    out.close();
    CHECK_THROWS_AS(read_dataset(bad.path), DataError);
  }
  SUBCASE("bad float field") {
    TempFile bad("ibcaan_ds_float.tsv");
    std::ofstream out(bad.path);
    std::istringstream lines(content);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      ++n;
      if (n == 4) {
        const std::size_t tab = line.rfind('\t');
        out << line.substr(0, tab + 1) << "not_a_number\n";
      } else {
        out << line << "\n";
      }
    }
    out.close();
    try {
      read_dataset(bad.path);
      FAIL("expected parse error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":4:") != std::string::npos);
    }
  }
  SUBCASE("missing format tag") {
    TempFile bad("ibcaan_ds_tag.tsv");
    std::ofstream out(bad.path);
    out << "garbage\n" << content;
    out.close();
    CHECK_THROWS_AS(read_dataset(bad.path), DataError);
  }
}
