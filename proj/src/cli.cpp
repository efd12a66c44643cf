#include "ibcaan/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ibcaan/dataset.hpp"
#include "ibcaan/eer.hpp"
#include "ibcaan/errors.hpp"
#include "ibcaan/model.hpp"
#include "ibcaan/trainer.hpp"

namespace ibcaan {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string percent(double fraction) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f%%", 100.0 * fraction);
  return buffer;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

// Left-aligned first column, right-aligned numeric columns.
void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) widths[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(widths[c])) << row[c];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(widths[c]))
            << row[c];
      }
    }
    out << "\n";
  };
  emit(header);
  for (const auto& row : rows) emit(row);
}

std::uint64_t parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw DataError("bad seed value '" + text + "'");
  }
}

void apply_env_seed(TrainConfig& config) {
  if (const char* env = std::getenv("IBCAAN_SEED")) {
    config.seed = parse_seed(env);
  }
}

struct TrainCliOptions {
  std::string data_path;
  std::string outdir;
  std::string config_path;
  std::string preset;
  std::string variant;
  std::int64_t seed = -1;
};

// Resolve preset/config-file/flag layers and pin the model dims to the
// dataset. Explicit dims in the config must agree with the data.
TrainConfig resolve_config(const TrainCliOptions& opts,
                           const Dataset& dataset) {
  TrainConfig config;
  bool explicit_input_dim = false, explicit_attacks = false;
  if (!opts.config_path.empty()) {
    const std::string text = read_text_file(opts.config_path);
    config = config_from_json(text);
    try {
      const ordered_json j = ordered_json::parse(text);
      if (j.contains("dims")) {
        explicit_input_dim = j.at("dims").contains("input_dim");
        explicit_attacks = j.at("dims").contains("n_attacks");
      }
    } catch (const nlohmann::json::exception&) {
      // config_from_json already rejected malformed JSON
    }
  } else if (!opts.preset.empty()) {
    config = preset_by_name(opts.preset);
  }
  if (!opts.variant.empty()) {
    config.variant = variant_from_string(opts.variant);
  }
  if (opts.seed >= 0) config.seed = static_cast<std::uint64_t>(opts.seed);
  apply_env_seed(config);

  if (explicit_input_dim &&
      config.dims.input_dim != dataset.spec.input_dim) {
    throw DataError("config input_dim " +
                    std::to_string(config.dims.input_dim) +
                    " does not match dataset input_dim " +
                    std::to_string(dataset.spec.input_dim));
  }
  if (explicit_attacks &&
      config.dims.n_attacks != dataset.spec.n_train_attacks) {
    throw DataError("config n_attacks " +
                    std::to_string(config.dims.n_attacks) +
                    " does not match dataset training attacks " +
                    std::to_string(dataset.spec.n_train_attacks));
  }
  config.dims.input_dim = dataset.spec.input_dim;
  config.dims.n_attacks = dataset.spec.n_train_attacks;
  config.validate();
  return config;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path) {
  SyntheticSpec spec;
  if (!spec_path.empty()) {
    const ordered_json j = [&] {
      try {
        return ordered_json::parse(read_text_file(spec_path));
      } catch (const nlohmann::json::exception& e) {
        throw DataError("bad spec JSON in " + spec_path + ": " + e.what());
      }
    }();
    if (j.contains("input_dim")) {
      spec.input_dim = j.at("input_dim").get<std::size_t>();
    }
    if (j.contains("n_train_attacks")) {
      spec.n_train_attacks = j.at("n_train_attacks").get<std::size_t>();
    }
    if (j.contains("n_test_attacks")) {
      spec.n_test_attacks = j.at("n_test_attacks").get<std::size_t>();
    }
    if (j.contains("samples")) {
      const auto samples = j.at("samples").get<std::vector<std::size_t>>();
      if (samples.size() != 4) {
        throw DataError("spec 'samples' must list 4 split sizes");
      }
      std::copy(samples.begin(), samples.end(), spec.samples.begin());
    }
    if (j.contains("s_shared")) spec.s_shared = j.at("s_shared").get<double>();
    if (j.contains("s_attack")) spec.s_attack = j.at("s_attack").get<double>();
    if (j.contains("delta")) spec.delta = j.at("delta").get<double>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  }
  const Dataset dataset = generate_dataset(spec);
  write_dataset(dataset, out_path);
  std::cout << "wrote " << dataset.examples.size() << " examples to "
            << out_path << "\n";
  return 0;
}

int cmd_train(const TrainCliOptions& opts) {
  const Dataset dataset = read_dataset(opts.data_path);
  const TrainConfig config = resolve_config(opts, dataset);
  const ExperimentReport report =
      run_experiment(config, dataset, opts.data_path, opts.outdir);

  std::cout << "variant " << to_string(config.variant) << ", seed "
            << config.seed << ", " << config.epochs << " epochs, "
            << report.total_steps << " steps\n";
  for (Split split : all_splits()) {
    std::cout << "  " << to_string(split) << " EER "
              << percent(report.final_eer.at(to_string(split))) << "\n";
  }
  std::cout << "report: "
            << (std::filesystem::path(opts.outdir) / "report.json").string()
            << "\n";
  return 0;
}

int cmd_eval_scores(const std::string& scores_path) {
  const auto records = read_scores(scores_path);
  std::cout << "EER " << percent(compute_eer(records)) << "\n";
  return 0;
}

int cmd_eval_checkpoint(const std::string& checkpoint_path,
                        const std::string& data_path) {
  const auto [params, meta] = load_checkpoint(checkpoint_path);
  const Dataset dataset = read_dataset(data_path);
  if (params.dims.input_dim != dataset.spec.input_dim) {
    throw DataError("checkpoint input_dim " +
                    std::to_string(params.dims.input_dim) +
                    " does not match dataset input_dim " +
                    std::to_string(dataset.spec.input_dim));
  }
  std::vector<std::vector<std::string>> rows;
  for (Split split : all_splits()) {
    rows.push_back({to_string(split),
                    percent(compute_eer(score_split(params, dataset, split)))});
  }
  print_table(std::cout, {"split", "EER"}, rows);
  return 0;
}

int cmd_ablate(const TrainCliOptions& opts, std::size_t n_seeds) {
  if (n_seeds == 0) throw DataError("ablate: need at least one seed");
  const Dataset dataset = read_dataset(opts.data_path);
  const TrainConfig base = resolve_config(opts, dataset);
  std::filesystem::create_directories(opts.outdir);

  ordered_json doc;
  doc["format"] = "ibcaan-ablate-v1";
  doc["dataset"] = opts.data_path;
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < n_seeds; ++k) seeds.push_back(base.seed + k);
  doc["seeds"] = seeds;
  ordered_json json_rows = ordered_json::array();

  std::vector<std::vector<std::string>> table;
  for (Variant variant : all_variants()) {
    TrainConfig config = base;
    config.variant = variant;
    std::map<std::string, double> split_sums;
    ordered_json per_seed = ordered_json::object();
    for (std::uint64_t seed : seeds) {
      config.seed = seed;
      const std::string outdir =
          (std::filesystem::path(opts.outdir) /
           (to_string(variant) + "_seed" + std::to_string(seed)))
              .string();
      const ExperimentReport report =
          run_experiment(config, dataset, opts.data_path, outdir);
      ordered_json seed_eer = ordered_json::object();
      for (const auto& [split, eer] : report.final_eer) {
        split_sums[split] += eer;
        seed_eer[split] = eer;
      }
      per_seed[std::to_string(seed)] = std::move(seed_eer);
      std::cout << to_string(variant) << " seed " << seed << ": test_unseen "
                << percent(report.final_eer.at("test_unseen")) << "\n";
    }

    ordered_json mean_eer = ordered_json::object();
    std::vector<std::string> row{ablation_label(variant)};
    double avg = 0.0;
    for (Split split : all_splits()) {
      const double mean =
          split_sums.at(to_string(split)) / static_cast<double>(n_seeds);
      mean_eer[to_string(split)] = mean;
      avg += mean;
      row.push_back(percent(mean));
    }
    avg /= static_cast<double>(all_splits().size());
    mean_eer["AVG"] = avg;
    row.push_back(percent(avg));
    table.push_back(std::move(row));

    json_rows.push_back({{"variant", to_string(variant)},
                         {"label", ablation_label(variant)},
                         {"per_seed", std::move(per_seed)},
                         {"mean", std::move(mean_eer)}});
  }
  doc["rows"] = std::move(json_rows);

  const std::string summary_path =
      (std::filesystem::path(opts.outdir) / "ablate.json").string();
  std::ofstream out(summary_path);
  if (!out) throw DataError("cannot write " + summary_path);
  out << doc.dump(2) << "\n";

  std::cout << "\n";
  print_table(std::cout,
              {"Configuration", "train", "val", "test_seen", "test_unseen",
               "AVG"},
              table);
  std::cout << "\nsummary: " << summary_path << "\n";
  return 0;
}

int cmd_report(const std::string& report_path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_text_file(report_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad report JSON in " + report_path + ": " + e.what());
  }
  if (j.value("format", "") != "ibcaan-report-v1") {
    throw DataError(report_path + ": not an ibcaan report file");
  }
  const auto& config = j.at("config");
  std::cout << "variant " << config.at("variant").get<std::string>()
            << ", seed " << config.at("seed").get<std::uint64_t>() << ", beta "
            << config.at("beta").get<double>() << ", alpha "
            << config.at("alpha").get<double>() << "\n\n";

  std::vector<std::vector<std::string>> epoch_rows;
  auto cell = [](const ordered_json& value) -> std::string {
    if (value.is_null()) return "-";
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.4f", value.get<double>());
    return buffer;
  };
  for (const auto& e : j.at("epochs")) {
    epoch_rows.push_back({std::to_string(e.at("epoch").get<std::size_t>()),
                          cell(e.at("l_c")), cell(e.at("l_z")),
                          cell(e.at("l_d")),
                          percent(e.at("val_eer").get<double>())});
  }
  print_table(std::cout, {"epoch", "l_c", "l_z", "l_d", "val_EER"},
              epoch_rows);

  std::cout << "\ncheckpoints kept:\n";
  for (const auto& c : j.at("checkpoints")) {
    std::cout << "  epoch " << c.at("epoch").get<std::size_t>() << "  val EER "
              << percent(c.at("val_eer").get<double>()) << "  "
              << c.at("file").get<std::string>() << "\n";
  }

  std::cout << "\nfinal EER (averaged model):\n";
  std::vector<std::vector<std::string>> final_rows;
  for (const auto& [split, eer] : j.at("final_eer").items()) {
    final_rows.push_back({split, percent(eer.get<double>())});
  }
  print_table(std::cout, {"split", "EER"}, final_rows);
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"information-bottleneck + confidence-aware adversarial "
               "training on a synthetic distribution-shift benchmark"};
  app.require_subcommand(1);

  // gen-data
  std::string spec_path, gen_out;
  CLI::App* gen = app.add_subcommand("gen-data",
                                     "generate a synthetic benchmark dataset");
  gen->add_option("--spec", spec_path, "spec JSON file (defaults built in)");
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // train
  TrainCliOptions train_opts;
  CLI::App* train = app.add_subcommand("train", "train one model variant");
  train->add_option("--data", train_opts.data_path, "dataset file")
      ->required();
  train->add_option("--outdir", train_opts.outdir, "output directory")
      ->required();
  CLI::Option* train_config =
      train->add_option("--config", train_opts.config_path,
                        "train config JSON");
  train->add_option("--preset", train_opts.preset,
                    "config preset: desk, paper-xlsr, paper-rawbmamba")
      ->excludes(train_config);
  train->add_option("--variant", train_opts.variant,
                    "ERM, IB_ONLY, CAAN_ONLY, IB_DANN or IB_CAAN");
  train->add_option("--seed", train_opts.seed, "RNG seed override");

  // eval
  std::string eval_checkpoint, eval_data, eval_scores;
  CLI::App* eval = app.add_subcommand("eval",
                                      "compute EER from a checkpoint or a "
                                      "score file");
  CLI::Option* eval_ckpt_opt =
      eval->add_option("--checkpoint", eval_checkpoint, "checkpoint JSON");
  CLI::Option* eval_data_opt =
      eval->add_option("--data", eval_data, "dataset file");
  CLI::Option* eval_scores_opt =
      eval->add_option("--scores", eval_scores, "score TSV file");
  eval_ckpt_opt->needs(eval_data_opt);
  eval_scores_opt->excludes(eval_ckpt_opt);

  // ablate
  TrainCliOptions ablate_opts;
  std::size_t ablate_seeds = 3;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "run the five-variant grid over several seeds");
  ablate->add_option("--data", ablate_opts.data_path, "dataset file")
      ->required();
  ablate->add_option("--outdir", ablate_opts.outdir, "output directory")
      ->required();
  CLI::Option* ablate_config = ablate->add_option(
      "--config", ablate_opts.config_path, "base train config JSON");
  ablate->add_option("--preset", ablate_opts.preset, "base config preset")
      ->excludes(ablate_config);
  ablate->add_option("--seed", ablate_opts.seed, "base seed");
  ablate->add_option("--seeds", ablate_seeds, "number of seeds (default 3)");

  // report
  std::string report_path;
  CLI::App* report = app.add_subcommand("report",
                                        "render a report JSON as a table");
  report->add_option("report", report_path, "report.json path")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(spec_path, gen_out);
    if (train->parsed()) return cmd_train(train_opts);
    if (eval->parsed()) {
      if (!eval_scores.empty()) return cmd_eval_scores(eval_scores);
      if (!eval_checkpoint.empty()) {
        return cmd_eval_checkpoint(eval_checkpoint, eval_data);
      }
      std::cerr << "eval: need --checkpoint with --data, or --scores\n";
      return 1;
    }
    if (ablate->parsed()) return cmd_ablate(ablate_opts, ablate_seeds);
    if (report->parsed()) return cmd_report(report_path);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ibcaan
