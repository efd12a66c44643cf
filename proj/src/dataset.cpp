#include "ibcaan/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ibcaan/errors.hpp"
#include "ibcaan/rng.hpp"

namespace ibcaan {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kFormatTag = "# ibcaan-dataset-v1";

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Gram-Schmidt against the rows already in `basis`.
std::vector<double> draw_orthonormal(std::size_t dim,
                                     const std::vector<std::vector<double>>& basis,
                                     Rng& rng) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  for (const auto& u : basis) {
    const double proj = dot(v, u);
    for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * u[i];
  }
  double norm = std::sqrt(dot(v, v));
  if (norm < 1e-8) {
    throw std::runtime_error("generate_dataset: degenerate direction draw");
  }
  for (double& x : v) x /= norm;
  return v;
}

void validate_spec(const SyntheticSpec& spec) {
  if (!(spec.s_attack > spec.s_shared && spec.s_shared > 0.0)) {
    throw DataError("dataset spec: need s_attack > s_shared > 0, got " +
                    std::to_string(spec.s_attack) + " and " +
                    std::to_string(spec.s_shared));
  }
  if (spec.n_train_attacks == 0) {
    throw DataError("dataset spec: need at least one training attack");
  }
  const std::size_t directions =
      1 + spec.n_train_attacks + spec.n_test_attacks + 1;
  if (spec.input_dim < directions) {
    throw DataError("dataset spec: input_dim " +
                    std::to_string(spec.input_dim) + " too small to host " +
                    std::to_string(directions) + " orthonormal directions");
  }
  for (std::size_t n : spec.samples) {
    if (n < 2) {
      throw DataError("dataset spec: every split needs at least 2 samples");
    }
  }
  if (spec.delta < 0.0) {
    throw DataError("dataset spec: delta must be nonnegative");
  }
}

ordered_json spec_to_json(const SyntheticSpec& spec) {
  return ordered_json{{"input_dim", spec.input_dim},
                      {"n_train_attacks", spec.n_train_attacks},
                      {"n_test_attacks", spec.n_test_attacks},
                      {"samples", spec.samples},
                      {"s_shared", spec.s_shared},
                      {"s_attack", spec.s_attack},
                      {"delta", spec.delta},
                      {"seed", spec.seed}};
}

SyntheticSpec spec_from_json(const ordered_json& j) {
  SyntheticSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.n_train_attacks = j.at("n_train_attacks").get<std::size_t>();
  spec.n_test_attacks = j.at("n_test_attacks").get<std::size_t>();
  const auto samples = j.at("samples").get<std::vector<std::size_t>>();
  if (samples.size() != 4) {
    throw DataError("dataset spec: 'samples' must list 4 split sizes");
  }
  std::copy(samples.begin(), samples.end(), spec.samples.begin());
  spec.s_shared = j.at("s_shared").get<double>();
  spec.s_attack = j.at("s_attack").get<double>();
  spec.delta = j.at("delta").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTestSeen: return "test_seen";
    case Split::kTestUnseen: return "test_unseen";
  }
  throw std::logic_error("to_string: bad split");
}

Split split_from_string(const std::string& name) {
  for (Split s : all_splits()) {
    if (to_string(s) == name) return s;
  }
  throw DataError("unknown split '" + name + "'");
}

const std::array<Split, 4>& all_splits() {
  static const std::array<Split, 4> kAll = {Split::kTrain, Split::kVal,
                                            Split::kTestSeen,
                                            Split::kTestUnseen};
  return kAll;
}


std::vector<std::size_t> Dataset::split_indices(Split s) const {
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].split == s) indices.push_back(i);
  }
  return indices;
}

Dataset generate_dataset(const SyntheticSpec& spec) {
  validate_spec(spec);
  Rng rng(spec.seed);

  Dataset ds;
  ds.spec = spec;
  const std::size_t d = spec.input_dim;
  const std::size_t total_attacks = spec.n_train_attacks + spec.n_test_attacks;

  std::vector<std::vector<double>> basis;
  ds.shared_cue = draw_orthonormal(d, basis, rng);
  basis.push_back(ds.shared_cue);
  for (std::size_t k = 0; k < total_attacks; ++k) {
    ds.attack_cues.push_back(draw_orthonormal(d, basis, rng));
    basis.push_back(ds.attack_cues.back());
  }
  ds.shift_dir = draw_orthonormal(d, basis, rng);

  // Attack menu per split; the unseen split uses the held-out attacks.
  std::vector<int> train_menu, unseen_menu;
  for (std::size_t k = 0; k < spec.n_train_attacks; ++k) {
    train_menu.push_back(static_cast<int>(k));
  }
  if (spec.n_test_attacks > 0) {
    for (std::size_t k = 0; k < spec.n_test_attacks; ++k) {
      unseen_menu.push_back(static_cast<int>(spec.n_train_attacks + k));
    }
  } else {
    unseen_menu = train_menu;
  }

  for (std::size_t si = 0; si < all_splits().size(); ++si) {
    const Split split = all_splits()[si];
    const bool shifted =
        (split == Split::kTestSeen || split == Split::kTestUnseen);
    const std::vector<int>& menu =
        (split == Split::kTestUnseen) ? unseen_menu : train_menu;
    std::size_t spoof_count = 0;
    for (std::size_t i = 0; i < spec.samples[si]; ++i) {
      Example ex;
      ex.split = split;
      ex.y = static_cast<int>(i % 2);  // alternate bonafide / spoof
      ex.x.resize(d);
      for (std::size_t j = 0; j < d; ++j) {
        ex.x[j] = rng.normal();
        if (shifted) ex.x[j] += spec.delta * ds.shift_dir[j];
      }
      if (ex.y == 1) {
        ex.attack = menu[spoof_count % menu.size()];
        ++spoof_count;
        const auto& v = ds.attack_cues[static_cast<std::size_t>(ex.attack)];
        for (std::size_t j = 0; j < d; ++j) {
          ex.x[j] += spec.s_shared * ds.shared_cue[j] + spec.s_attack * v[j];
        }
      }
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file " + path);

  ordered_json header;
  header["spec"] = spec_to_json(dataset.spec);
  header["cues"] = {{"shared", dataset.shared_cue},
                    {"attacks", dataset.attack_cues},
                    {"shift", dataset.shift_dir}};
  out << kFormatTag << "\n";
  out << "# " << header.dump() << "\n";

  for (const Example& ex : dataset.examples) {
    out << to_string(ex.split) << "\t" << ex.y << "\t";
    if (ex.attack < 0) {
      out << "-";
    } else {
      out << ex.attack;
    }
    for (double v : ex.x) out << "\t" << format_double(v);
    out << "\n";
  }
  if (!out) throw DataError("failed while writing dataset file " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path);

  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };

  if (!next_line() || line != kFormatTag) {
    throw DataError(path + ":1: missing format tag '" +
                    std::string(kFormatTag) + "'");
  }
  if (!next_line() || line.size() < 2 || line[0] != '#') {
    throw DataError(path + ":2: missing JSON header line");
  }

  Dataset ds;
  try {
    const ordered_json header = ordered_json::parse(line.substr(1));
    ds.spec = spec_from_json(header.at("spec"));
    const auto& cues = header.at("cues");
    ds.shared_cue = cues.at("shared").get<std::vector<double>>();
    ds.attack_cues =
        cues.at("attacks").get<std::vector<std::vector<double>>>();
    ds.shift_dir = cues.at("shift").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ":2: bad header JSON: " + e.what());
  }

  const std::size_t d = ds.spec.input_dim;
  std::array<std::size_t, 4> split_counts = {0, 0, 0, 0};
  while (next_line()) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string split_name, y_field, attack_field;
    if (!(row >> split_name >> y_field >> attack_field)) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": truncated row");
    }
    Example ex;
    try {
      ex.split = split_from_string(split_name);
    } catch (const DataError&) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": unknown split '" + split_name + "'");
    }
    if (y_field == "0") {
      ex.y = 0;
    } else if (y_field == "1") {
      ex.y = 1;
    } else {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": label must be 0 or 1, got '" + y_field + "'");
    }
    if (attack_field == "-") {
      ex.attack = -1;
    } else {
      try {
        ex.attack = std::stoi(attack_field);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": bad attack field '" + attack_field + "'");
      }
    }
    if ((ex.attack < 0) != (ex.y == 0)) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": attack field inconsistent with label");
    }
    ex.x.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      std::string field;
      if (!(row >> field)) {
        throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(d) + " feature values");
      }
      try {
        std::size_t used = 0;
        ex.x[j] = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": bad float '" + field + "'");
      }
    }
    std::string extra;
    if (row >> extra) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": trailing fields after " + std::to_string(d) +
                      " feature values");
    }
    ++split_counts[static_cast<std::size_t>(ex.split)];
    ds.examples.push_back(std::move(ex));
  }

  for (std::size_t si = 0; si < 4; ++si) {
    if (split_counts[si] != ds.spec.samples[si]) {
      throw DataError(path + ": split '" + to_string(all_splits()[si]) +
                      "' has " + std::to_string(split_counts[si]) +
                      " rows but the header promises " +
                      std::to_string(ds.spec.samples[si]));
    }
  }
  return ds;
}

}  // namespace ibcaan
