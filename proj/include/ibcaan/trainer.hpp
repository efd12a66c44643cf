#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ibcaan/dataset.hpp"
#include "ibcaan/eer.hpp"
#include "ibcaan/losses.hpp"
#include "ibcaan/model.hpp"
#include "ibcaan/optim.hpp"
#include "ibcaan/rng.hpp"

namespace ibcaan {

struct TrainConfig {
  Variant variant = Variant::kIbCaan;
  double beta = 0.02;
  double alpha = 0.5;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t topk = 5;
  Dims dims;
  // (bonafide, spoof); when absent, inverse class frequency of the training
  // split normalized to sum to 2.
  std::optional<std::pair<double, double>> class_weights;

  void validate() const;
  AdamConfig adam() const;
};

// Desk-scale defaults (the values above). The paper-style presets mirror
// published settings for full-size speech backbones; with this toy MLP they
// train far too slowly to be useful and exist only for completeness.
TrainConfig desk_preset();
TrainConfig paper_xlsr_preset();
TrainConfig paper_rawbmamba_preset();
TrainConfig preset_by_name(const std::string& name);

// Resolved-config JSON (defaults filled in) and its FNV-1a hash, used to
// stamp checkpoints and reports.
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);
std::string config_hash(const TrainConfig& config);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double l_c = 0.0;       // batch means
  std::optional<double> l_z;
  std::optional<double> l_d;  // mean over batches that had spoof rows
  double val_eer = 0.0;
};

// Keeps the best `capacity` checkpoints by validation EER (ascending, ties
// to the earlier epoch). Files live under `dir`; an entry evicted from the
// set has its file deleted.
class CheckpointSet {
 public:
  struct Entry {
    std::size_t epoch;
    double val_eer;
    std::string file;
    ModelParams params;
  };

  CheckpointSet(std::size_t capacity, std::string dir, std::string hash);
  bool add(std::size_t epoch, double val_eer, const ModelParams& params);
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::string dir_;
  std::string hash_;
  std::vector<Entry> entries_;
};

std::pair<double, double> default_class_weights(const Dataset& dataset);

// One pass over the shuffled training split: per batch the reversal scale
// comes from the global-step schedule, the variant's loss terms are
// combined, back-propagated, and one Adam step applied. Batches without
// spoof rows contribute no adversarial term.
EpochStats train_epoch(ModelParams& params, AdamState& state,
                       const Dataset& dataset, const TrainConfig& config,
                       std::pair<double, double> class_weights,
                       std::size_t total_steps, std::size_t& global_step,
                       Rng& rng);

// Deterministic eval-mode scores for one split.
std::vector<ScoreRecord> score_split(const ModelParams& params,
                                     const Dataset& dataset, Split split);
double validate(const ModelParams& params, const Dataset& dataset,
                Split split);

// Parameter-wise arithmetic mean; the incremental form keeps averaging a
// list of identical checkpoints exact.
ModelParams average_checkpoints(const std::vector<ModelParams>& checkpoints);

struct ExperimentReport {
  TrainConfig config;
  std::string hash;
  std::string dataset_path;
  std::pair<double, double> class_weights;
  std::size_t total_steps = 0;
  std::vector<EpochStats> epochs;
  std::vector<std::tuple<std::size_t, double, std::string>> checkpoints;
  std::map<std::string, double> final_eer;  // keyed by split name
  std::string averaged_checkpoint;
};

// Full pipeline: train, validate per epoch, keep the top-k checkpoints,
// average them, score every split with the averaged model, and write
// report.json plus per-split score files into outdir. Reruns with the same
// config and dataset produce byte-identical files.
ExperimentReport run_experiment(const TrainConfig& config,
                                const Dataset& dataset,
                                const std::string& dataset_path,
                                const std::string& outdir);

std::string report_to_json(const ExperimentReport& report);

}  // namespace ibcaan
