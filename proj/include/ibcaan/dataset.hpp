#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ibcaan {

enum class Split { kTrain, kVal, kTestSeen, kTestUnseen };

std::string to_string(Split s);
Split split_from_string(const std::string& name);
const std::array<Split, 4>& all_splits();

// Linear-Gaussian benchmark with two controlled shifts. Bonafide rows are
// pure nuisance noise; spoof rows add a shared detection cue (strength
// s_shared along direction u) plus a per-attack cue (strength s_attack
// along direction v_k). Train/val draw nuisance around 0; both test splits
// shift it by delta along a direction w orthogonal to every cue (covariate
// shift), and test_unseen swaps in attack directions never seen in training
// (concept shift). s_attack > s_shared makes the attack-specific cue the
// tempting shortcut.
struct SyntheticSpec {
  std::size_t input_dim = 20;
  std::size_t n_train_attacks = 3;
  std::size_t n_test_attacks = 2;
  // train, val, test_seen, test_unseen
  std::array<std::size_t, 4> samples = {4000, 1000, 1000, 1000};
  double s_shared = 1.0;
  double s_attack = 3.0;
  // Large enough to push saturating units off their training range, so the
  // shift measurably punishes nuisance-sensitive encoders.
  double delta = 6.0;
  std::uint64_t seed = 0;

  bool operator==(const SyntheticSpec&) const = default;
};

struct Example {
  std::vector<double> x;
  int y = 0;        // 0 bonafide, 1 spoof
  int attack = -1;  // attack index, -1 for bonafide
  Split split = Split::kTrain;
};

struct Dataset {
  SyntheticSpec spec;
  std::vector<double> shared_cue;               // u
  std::vector<std::vector<double>> attack_cues; // v_0 .. v_{K+K'-1}
  std::vector<double> shift_dir;                // w
  std::vector<Example> examples;

  std::vector<std::size_t> split_indices(Split s) const;
};


// Deterministic generation from spec.seed; the same spec yields the same
// dataset (and file bytes) every time. Errors if input_dim cannot host the
// 1 + K + K' + 1 mutually orthonormal directions, or the cue strengths
// violate s_attack > s_shared > 0. With n_test_attacks == 0 the unseen
// split falls back to the training attack set.
Dataset generate_dataset(const SyntheticSpec& spec);

// Text format: a format-tag line, a '#' header line carrying the JSON spec
// and cue vectors, then one row per example as tab-separated
//   split  y  attack(or '-')  x_0 .. x_{d-1}
// with floats at 17 significant digits (lossless round-trip).
void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace ibcaan
