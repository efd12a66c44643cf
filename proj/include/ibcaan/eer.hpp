#pragma once

#include <string>
#include <vector>

namespace ibcaan {

struct ScoreRecord {
  std::string trial_id;
  double score = 0.0;  // higher = more bonafide
  int label = 0;       // 0 bonafide, 1 spoof
};

// Equal error rate in [0, 1]. Definition (bit-reproducible): sweep the
// threshold t over every distinct score; FAR(t) is the fraction of spoof
// trials with score >= t and FRR(t) the fraction of bonafide trials with
// score < t; the answer is (FAR + FRR) / 2 at the t minimizing |FAR - FRR|,
// ties broken by the smaller FAR + FRR. All comparisons use exact integer
// counts. Needs at least one record of each label.
double compute_eer(const std::vector<ScoreRecord>& records);

// TSV rows: trial_id, score (17 significant digits), label
// ("bonafide" / "spoof"). Round-trips losslessly. Duplicate trial ids and
// malformed lines are errors (with line numbers); so is an empty file.
void write_scores(const std::vector<ScoreRecord>& records,
                  const std::string& path);
std::vector<ScoreRecord> read_scores(const std::string& path);

}  // namespace ibcaan
