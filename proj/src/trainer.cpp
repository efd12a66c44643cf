#include "ibcaan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "ibcaan/errors.hpp"

namespace ibcaan {

namespace {

using ordered_json = nlohmann::ordered_json;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& rows) {
  const std::size_t d = dataset.spec.input_dim;
  Batch batch;
  std::vector<double> values;
  values.reserve(rows.size() * d);
  for (std::size_t r : rows) {
    const Example& ex = dataset.examples[r];
    values.insert(values.end(), ex.x.begin(), ex.x.end());
    batch.labels.push_back(ex.y);
    batch.attacks.push_back(ex.attack);
  }
  batch.x = Tensor({rows.size(), d}, std::move(values));
  return batch;
}

void require_both_classes(const Dataset& dataset, Split split,
                          const char* what) {
  bool has_bona = false, has_spoof = false;
  for (const Example& ex : dataset.examples) {
    if (ex.split != split) continue;
    (ex.y == 0 ? has_bona : has_spoof) = true;
    if (has_bona && has_spoof) return;
  }
  throw std::invalid_argument(std::string(what) + ": split '" +
                              to_string(split) +
                              "' does not contain both classes");
}

ordered_json dims_to_json(const Dims& dims) {
  return ordered_json{{"input_dim", dims.input_dim},
                      {"hidden", dims.hidden},
                      {"z_dim", dims.z_dim},
                      {"n_attacks", dims.n_attacks}};
}

ordered_json config_to_ordered_json(const TrainConfig& config) {
  ordered_json j;
  j["variant"] = to_string(config.variant);
  j["beta"] = config.beta;
  j["alpha"] = config.alpha;
  j["lr"] = config.lr;
  j["adam_beta1"] = config.adam_beta1;
  j["adam_beta2"] = config.adam_beta2;
  j["adam_eps"] = config.adam_eps;
  j["weight_decay"] = config.weight_decay;
  j["batch_size"] = config.batch_size;
  j["epochs"] = config.epochs;
  j["seed"] = config.seed;
  j["topk"] = config.topk;
  j["dims"] = dims_to_json(config.dims);
  if (config.class_weights) {
    j["class_weights"] = {config.class_weights->first,
                          config.class_weights->second};
  } else {
    j["class_weights"] = nullptr;
  }
  return j;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (batch_size < 1) {
    throw std::invalid_argument("config: batch_size must be >= 1");
  }
  if (topk < 1 || topk > epochs) {
    throw std::invalid_argument("config: need 1 <= topk <= epochs");
  }
  if (beta < 0.0 || alpha < 0.0 || lr < 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("config: rates and weights must be >= 0");
  }
  if (class_weights &&
      (class_weights->first <= 0.0 || class_weights->second <= 0.0)) {
    throw std::invalid_argument("config: class weights must be positive");
  }
}

AdamConfig TrainConfig::adam() const {
  return AdamConfig{lr, adam_beta1, adam_beta2, adam_eps, weight_decay};
}

TrainConfig desk_preset() { return TrainConfig{}; }

TrainConfig paper_xlsr_preset() {
  TrainConfig c;
  c.lr = 1e-6;
  c.weight_decay = 1e-4;
  c.adam_beta2 = 0.999;
  c.batch_size = 12;
  c.beta = 0.001;
  c.alpha = 0.5;
  return c;
}

TrainConfig paper_rawbmamba_preset() {
  TrainConfig c;
  c.lr = 1e-5;
  c.weight_decay = 1e-4;
  c.adam_beta2 = 0.98;
  c.batch_size = 32;
  c.beta = 0.001;
  c.alpha = 1.0;
  return c;
}

TrainConfig preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper-xlsr") return paper_xlsr_preset();
  if (name == "paper-rawbmamba") return paper_rawbmamba_preset();
  throw DataError("unknown preset '" + name +
                  "' (expected desk, paper-xlsr or paper-rawbmamba)");
}

std::string config_to_json(const TrainConfig& config) {
  return config_to_ordered_json(config).dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad config JSON: ") + e.what());
  }
  TrainConfig config = preset_by_name(j.value("preset", "desk"));
  if (j.contains("variant")) {
    config.variant = variant_from_string(j.at("variant").get<std::string>());
  }
  if (j.contains("beta")) config.beta = j.at("beta").get<double>();
  if (j.contains("alpha")) config.alpha = j.at("alpha").get<double>();
  if (j.contains("lr")) config.lr = j.at("lr").get<double>();
  if (j.contains("adam_beta1")) {
    config.adam_beta1 = j.at("adam_beta1").get<double>();
  }
  if (j.contains("adam_beta2")) {
    config.adam_beta2 = j.at("adam_beta2").get<double>();
  }
  if (j.contains("adam_eps")) config.adam_eps = j.at("adam_eps").get<double>();
  if (j.contains("weight_decay")) {
    config.weight_decay = j.at("weight_decay").get<double>();
  }
  if (j.contains("batch_size")) {
    config.batch_size = j.at("batch_size").get<std::size_t>();
  }
  if (j.contains("epochs")) config.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("topk")) config.topk = j.at("topk").get<std::size_t>();
  if (j.contains("dims")) {
    const auto& jd = j.at("dims");
    if (jd.contains("input_dim")) {
      config.dims.input_dim = jd.at("input_dim").get<std::size_t>();
    }
    if (jd.contains("hidden")) {
      config.dims.hidden = jd.at("hidden").get<std::size_t>();
    }
    if (jd.contains("z_dim")) {
      config.dims.z_dim = jd.at("z_dim").get<std::size_t>();
    }
    if (jd.contains("n_attacks")) {
      config.dims.n_attacks = jd.at("n_attacks").get<std::size_t>();
    }
  }
  if (j.contains("class_weights") && !j.at("class_weights").is_null()) {
    const auto w = j.at("class_weights").get<std::vector<double>>();
    if (w.size() != 2) {
      throw DataError("config: class_weights must be [bonafide, spoof]");
    }
    config.class_weights = std::make_pair(w[0], w[1]);
  }
  return config;
}

std::string config_hash(const TrainConfig& config) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a(config_to_ordered_json(config).dump())));
  return buffer;
}

CheckpointSet::CheckpointSet(std::size_t capacity, std::string dir,
                             std::string hash)
    : capacity_(capacity), dir_(std::move(dir)), hash_(std::move(hash)) {
  if (capacity_ == 0) {
    throw std::invalid_argument("CheckpointSet: capacity must be >= 1");
  }
}

bool CheckpointSet::add(std::size_t epoch, double val_eer,
                        const ModelParams& params) {
  char name[64];
  std::snprintf(name, sizeof(name), "ckpt_epoch_%03zu.json", epoch);
  Entry entry{epoch, val_eer,
              (std::filesystem::path(dir_) / name).string(), params};

  auto pos = std::lower_bound(
      entries_.begin(), entries_.end(), entry,
      [](const Entry& a, const Entry& b) {
        return a.val_eer != b.val_eer ? a.val_eer < b.val_eer
                                      : a.epoch < b.epoch;
      });
  const bool fits = entries_.size() < capacity_ || pos != entries_.end();
  if (!fits) return false;

  save_checkpoint(entry.file, params,
                  CheckpointMeta{params.variant, hash_, epoch, val_eer});
  entries_.insert(pos, std::move(entry));
  if (entries_.size() > capacity_) {
    std::filesystem::remove(entries_.back().file);
    entries_.pop_back();
  }
  return true;
}

std::pair<double, double> default_class_weights(const Dataset& dataset) {
  std::size_t n_bona = 0, n_spoof = 0;
  for (const Example& ex : dataset.examples) {
    if (ex.split != Split::kTrain) continue;
    (ex.y == 0 ? n_bona : n_spoof) += 1;
  }
  if (n_bona == 0 || n_spoof == 0) {
    throw std::invalid_argument(
        "class weights: training split does not contain both classes");
  }
  // Inverse class frequency, normalized so the two weights sum to 2.
  const double total = static_cast<double>(n_bona + n_spoof);
  const double w_bona = 2.0 * static_cast<double>(n_spoof) / total;
  const double w_spoof = 2.0 * static_cast<double>(n_bona) / total;
  return {w_bona, w_spoof};
}

EpochStats train_epoch(ModelParams& params, AdamState& state,
                       const Dataset& dataset, const TrainConfig& config,
                       std::pair<double, double> class_weights,
                       std::size_t total_steps, std::size_t& global_step,
                       Rng& rng) {
  require_both_classes(dataset, Split::kTrain, "train_epoch");
  std::vector<std::size_t> order = dataset.split_indices(Split::kTrain);
  rng.shuffle(order);

  EpochStats stats;
  double sum_l_c = 0.0, sum_l_z = 0.0, sum_l_d = 0.0;
  std::size_t batches = 0, kl_batches = 0, adv_batches = 0;

  Tape tape;
  for (std::size_t start = 0; start < order.size();
       start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const std::vector<std::size_t> rows(order.begin() + start,
                                        order.begin() + end);
    const Batch batch = make_batch(dataset, rows);
    const double progress = total_steps == 0
                                ? 0.0
                                : static_cast<double>(global_step) /
                                      static_cast<double>(total_steps);
    const double lambda =
        variant_has_adversary(config.variant) ? grl_lambda(progress) : 0.0;

    tape.reset();
    ForwardOutput out =
        model_forward(tape, params, batch, lambda, &rng, Mode::kTrain);

    const Tensor l_c =
        weighted_bce(tape, out.logit, batch.labels, class_weights);
    std::optional<Tensor> l_z;
    if (variant_has_kl(config.variant)) {
      l_z = kl_std_normal(tape, out.latent.mu, out.latent.sigma);
    }
    std::optional<Tensor> l_d;
    if (out.attack_logits) {
      l_d = ce_multiclass(tape, *out.attack_logits, out.spoof_attacks);
    }
    const TotalLoss loss = total_loss(tape, config.variant, l_c, l_z, l_d,
                                      config.beta, config.alpha);
    tape.backward(loss.value);
    adam_step(params, tape, state, config.adam());
    ++global_step;

    ++batches;
    sum_l_c += loss.breakdown.l_c;
    if (loss.breakdown.l_z) {
      sum_l_z += *loss.breakdown.l_z;
      ++kl_batches;
    }
    if (loss.breakdown.l_d) {
      sum_l_d += *loss.breakdown.l_d;
      ++adv_batches;
    }
  }

  stats.l_c = sum_l_c / static_cast<double>(batches);
  if (kl_batches > 0) stats.l_z = sum_l_z / static_cast<double>(kl_batches);
  if (adv_batches > 0) stats.l_d = sum_l_d / static_cast<double>(adv_batches);
  return stats;
}

std::vector<ScoreRecord> score_split(const ModelParams& params,
                                     const Dataset& dataset, Split split) {
  const std::vector<std::size_t> rows = dataset.split_indices(split);
  if (rows.empty()) {
    throw std::invalid_argument("score_split: split '" + to_string(split) +
                                "' is empty");
  }
  const Batch batch = make_batch(dataset, rows);
  Tape tape;
  ModelParams scratch = params;  // eval mode leaves parameters untouched
  const ForwardOutput out =
      model_forward(tape, scratch, batch, 0.0, nullptr, Mode::kEval);
  std::vector<ScoreRecord> records;
  records.reserve(rows.size());
  char trial[64];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(trial, sizeof(trial), "%s-%06zu", to_string(split).c_str(),
                  rows[i]);
    // The logit is spoof evidence (sigmoid(logit) targets y = 1); detection
    // scores are bonafide-positive, so the sign flips here.
    records.push_back(
        {trial, -out.logit.at(i, 0), dataset.examples[rows[i]].y});
  }
  return records;
}

double validate(const ModelParams& params, const Dataset& dataset,
                Split split) {
  require_both_classes(dataset, split, "validate");
  return compute_eer(score_split(params, dataset, split));
}

ModelParams average_checkpoints(const std::vector<ModelParams>& checkpoints) {
  if (checkpoints.empty()) {
    throw std::invalid_argument("average_checkpoints: empty checkpoint list");
  }
  ModelParams mean = checkpoints.front();
  std::vector<std::string> names;
  std::vector<Tensor*> mean_tensors;
  mean.for_each([&](const std::string& n, Tensor& t) {
    names.push_back(n);
    mean_tensors.push_back(&t);
  });
  for (std::size_t k = 1; k < checkpoints.size(); ++k) {
    const double inv = 1.0 / static_cast<double>(k + 1);
    std::vector<const Tensor*> other_tensors;
    checkpoints[k].for_each([&](const std::string&, const Tensor& t) {
      other_tensors.push_back(&t);
    });
    for (std::size_t p = 0; p < mean_tensors.size(); ++p) {
      Tensor& m = *mean_tensors[p];
      const Tensor& o = *other_tensors[p];
      if (!same_shape(m, o)) {
        throw std::invalid_argument(
            "average_checkpoints: shape mismatch for " + names[p] + ", " +
            shape_str(m.shape()) + " vs " + shape_str(o.shape()));
      }
      for (std::size_t i = 0; i < m.numel(); ++i) {
        m.data[i] += (o.data[i] - m.data[i]) * inv;
      }
    }
  }
  return mean;
}

ExperimentReport run_experiment(const TrainConfig& config,
                                const Dataset& dataset,
                                const std::string& dataset_path,
                                const std::string& outdir) {
  config.validate();
  require_both_classes(dataset, Split::kTrain, "run_experiment");
  require_both_classes(dataset, Split::kVal, "run_experiment");
  std::filesystem::create_directories(outdir);

  ExperimentReport report;
  report.config = config;
  report.hash = config_hash(config);
  report.dataset_path = dataset_path;
  report.class_weights = config.class_weights
                             ? *config.class_weights
                             : default_class_weights(dataset);

  const std::size_t n_train = dataset.split_indices(Split::kTrain).size();
  const std::size_t steps_per_epoch =
      (n_train + config.batch_size - 1) / config.batch_size;
  report.total_steps = steps_per_epoch * config.epochs;

  Rng rng(config.seed);
  ModelParams params = init_params(config.dims, config.variant, rng);
  AdamState state;
  CheckpointSet checkpoints(config.topk, outdir, report.hash);

  std::size_t global_step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochStats stats =
        train_epoch(params, state, dataset, config, report.class_weights,
                    report.total_steps, global_step, rng);
    stats.epoch = epoch;
    stats.val_eer = validate(params, dataset, Split::kVal);
    checkpoints.add(epoch, stats.val_eer, params);
    report.epochs.push_back(stats);
  }

  for (const auto& entry : checkpoints.entries()) {
    report.checkpoints.emplace_back(
        entry.epoch, entry.val_eer,
        std::filesystem::path(entry.file).filename().string());
  }

  std::vector<ModelParams> kept;
  for (const auto& entry : checkpoints.entries()) kept.push_back(entry.params);
  const ModelParams averaged = average_checkpoints(kept);

  report.averaged_checkpoint = "averaged.json";
  save_checkpoint((std::filesystem::path(outdir) / "averaged.json").string(),
                  averaged,
                  CheckpointMeta{config.variant, report.hash, config.epochs,
                                 0.0});

  for (Split split : all_splits()) {
    const auto records = score_split(averaged, dataset, split);
    write_scores(records, (std::filesystem::path(outdir) /
                           ("scores_" + to_string(split) + ".tsv"))
                              .string());
    report.final_eer[to_string(split)] = compute_eer(records);
  }

  std::ofstream out(std::filesystem::path(outdir) / "report.json");
  if (!out) throw DataError("cannot write report file in " + outdir);
  out << report_to_json(report) << "\n";
  if (!out) throw DataError("failed while writing report file in " + outdir);
  return report;
}

std::string report_to_json(const ExperimentReport& report) {
  ordered_json j;
  j["format"] = "ibcaan-report-v1";
  j["config"] = config_to_ordered_json(report.config);
  j["config_hash"] = report.hash;
  j["dataset"] = report.dataset_path;
  j["class_weights"] = {report.class_weights.first,
                        report.class_weights.second};
  j["total_steps"] = report.total_steps;
  ordered_json epochs = ordered_json::array();
  for (const EpochStats& e : report.epochs) {
    ordered_json entry;
    entry["epoch"] = e.epoch;
    entry["l_c"] = e.l_c;
    entry["l_z"] = e.l_z ? ordered_json(*e.l_z) : ordered_json(nullptr);
    entry["l_d"] = e.l_d ? ordered_json(*e.l_d) : ordered_json(nullptr);
    entry["val_eer"] = e.val_eer;
    epochs.push_back(std::move(entry));
  }
  j["epochs"] = std::move(epochs);
  ordered_json ckpts = ordered_json::array();
  for (const auto& [epoch, eer, file] : report.checkpoints) {
    ckpts.push_back({{"epoch", epoch}, {"val_eer", eer}, {"file", file}});
  }
  j["checkpoints"] = std::move(ckpts);
  j["averaged_checkpoint"] = report.averaged_checkpoint;
  ordered_json final_eer = ordered_json::object();
  for (Split split : all_splits()) {
    const auto it = report.final_eer.find(to_string(split));
    if (it != report.final_eer.end()) final_eer[it->first] = it->second;
  }
  j["final_eer"] = std::move(final_eer);
  return j.dump(2);
}

}  // namespace ibcaan
