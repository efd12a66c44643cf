#include "ibcaan/eer.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "ibcaan/errors.hpp"

namespace ibcaan {

double compute_eer(const std::vector<ScoreRecord>& records) {
  std::vector<double> bona, spoof;
  for (const ScoreRecord& r : records) {
    (r.label == 0 ? bona : spoof).push_back(r.score);
  }
  if (bona.empty() || spoof.empty()) {
    throw std::invalid_argument(
        "compute_eer: need at least one record of each label");
  }
  std::sort(bona.begin(), bona.end());
  std::sort(spoof.begin(), spoof.end());

  std::vector<double> thresholds;
  thresholds.reserve(records.size());
  thresholds.insert(thresholds.end(), bona.begin(), bona.end());
  thresholds.insert(thresholds.end(), spoof.begin(), spoof.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  // Error rates over a common denominator nb*ns so the selection is exact.
  const std::int64_t nb = static_cast<std::int64_t>(bona.size());
  const std::int64_t ns = static_cast<std::int64_t>(spoof.size());
  std::int64_t best_diff = -1, best_sum = 0;
  for (double t : thresholds) {
    const std::int64_t far_count =
        ns - (std::lower_bound(spoof.begin(), spoof.end(), t) -
              spoof.begin());  // spoof scores >= t
    const std::int64_t frr_count =
        std::lower_bound(bona.begin(), bona.end(), t) -
        bona.begin();  // bonafide scores < t
    const std::int64_t far_scaled = far_count * nb;
    const std::int64_t frr_scaled = frr_count * ns;
    const std::int64_t diff = std::abs(far_scaled - frr_scaled);
    const std::int64_t sum = far_scaled + frr_scaled;
    if (best_diff < 0 || diff < best_diff ||
        (diff == best_diff && sum < best_sum)) {
      best_diff = diff;
      best_sum = sum;
    }
  }
  return static_cast<double>(best_sum) / (2.0 * static_cast<double>(nb * ns));
}

void write_scores(const std::vector<ScoreRecord>& records,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write score file " + path);
  char buffer[64];
  for (const ScoreRecord& r : records) {
    std::snprintf(buffer, sizeof(buffer), "%.17g", r.score);
    out << r.trial_id << "\t" << buffer << "\t"
        << (r.label == 0 ? "bonafide" : "spoof") << "\n";
  }
  if (!out) throw DataError("failed while writing score file " + path);
}

std::vector<ScoreRecord> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file " + path);
  std::vector<ScoreRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    ScoreRecord r;
    std::string score_field, label_field;
    if (!(row >> r.trial_id >> score_field >> label_field)) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": expected 'trial_id<TAB>score<TAB>label'");
    }
    try {
      std::size_t used = 0;
      r.score = std::stod(score_field, &used);
      if (used != score_field.size()) throw std::invalid_argument(score_field);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad score '" +
                      score_field + "'");
    }
    if (label_field == "bonafide") {
      r.label = 0;
    } else if (label_field == "spoof") {
      r.label = 1;
    } else {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad label '" +
                      label_field + "' (expected bonafide or spoof)");
    }
    if (!seen.insert(r.trial_id).second) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": duplicate trial id '" + r.trial_id + "'");
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw DataError(path + ": no records");
  return records;
}

}  // namespace ibcaan
