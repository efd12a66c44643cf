#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ibcaan/tape.hpp"
#include "ibcaan/tensor.hpp"

namespace ibcaan {

class Rng;

// Training variants. kErm and kCaanOnly use the deterministic mu-path
// (no latent sampling, no KL term); kIbDann drops the confidence input
// to the attack discriminator but is otherwise kIbCaan.
enum class Variant { kErm, kIbOnly, kCaanOnly, kIbDann, kIbCaan };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);
const std::vector<Variant>& all_variants();

bool variant_samples_latent(Variant v);
bool variant_has_kl(Variant v);
bool variant_has_adversary(Variant v);
bool variant_uses_confidence(Variant v);

// Presentation label used in ablation tables.
std::string ablation_label(Variant v);

struct Dims {
  std::size_t input_dim = 20;
  std::size_t hidden = 64;
  std::size_t z_dim = 16;
  std::size_t n_attacks = 3;

  bool operator==(const Dims&) const = default;
};

struct LinearLayer {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
};

// All four parameter groups: feature-extractor backbone, the variational
// encoder trunk with its mu/sigma heads, the single-logit classifier, and
// the attack discriminator. Layer widths:
//   input_dim -> hidden -> hidden -> (encoder) hidden -> z_dim (mu, sigma)
//   z_dim -> 1 (classifier); disc_input -> hidden -> n_attacks
// where disc_input is z_dim + 1 when the discriminator sees the classifier
// confidence and z_dim otherwise.
struct ModelParams {
  Dims dims;
  Variant variant = Variant::kIbCaan;

  LinearLayer backbone1;
  LinearLayer backbone2;
  LinearLayer encoder;
  LinearLayer mu_head;
  LinearLayer sigma_head;
  LinearLayer classifier;
  LinearLayer disc1;
  LinearLayer disc2;

  std::size_t disc_input_dim() const;

  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(
      const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

// Fan-in-scaled uniform init: w ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
// biases zero. The sigma head uses half that scale and a bias of
// softplus^-1(1) = ln(e - 1), keeping the initial sigma close to 1.
ModelParams init_params(const Dims& dims, Variant variant, Rng& rng);

struct LatentSample {
  Tensor mu;       // [batch, z_dim]
  Tensor sigma;    // [batch, z_dim], strictly positive
  Tensor epsilon;  // [batch, z_dim]
  Tensor z;        // mu + sigma (.) epsilon
};

struct ForwardOutput {
  LatentSample latent;
  Tensor logit;       // [batch, 1]
  Tensor confidence;  // sigmoid(logit), in (0, 1)
  std::optional<Tensor> attack_logits;  // [n_spoof, n_attacks]
  std::vector<std::size_t> spoof_rows;
  std::vector<int> spoof_attacks;  // aligned with attack_logits rows
};

struct Batch {
  Tensor x;                 // [batch, input_dim]
  std::vector<int> labels;  // 0 bonafide, 1 spoof
  std::vector<int> attacks; // attack index, -1 for bonafide rows
};

enum class Mode { kTrain, kEval };

Tensor encode(Tape& tape, const ModelParams& params, const Tensor& x);

// mu = mu_head(e), sigma = softplus(sigma_head(e)) + 1e-6 with
// e = tanh(encoder(h)). When stochastic, epsilon is drawn standard normal
// and z = mu + sigma (.) epsilon; otherwise epsilon = 0 and z = mu.
LatentSample vib_forward(Tape& tape, const ModelParams& params,
                         const Tensor& h, Rng* rng, bool stochastic);

// Single logit per row; higher = more bonafide.
Tensor classify(Tape& tape, const ModelParams& params, const Tensor& z);

// Attack logits for spoof-row latents. Inputs pass through the reversal
// layer with scale lambda; confidence_s, when given, must be row-aligned
// with z_s. The alpha loss weight is applied by the caller, not here.
Tensor discriminate(Tape& tape, const ModelParams& params, const Tensor& z_s,
                    const Tensor* confidence_s, double lambda);

// Full forward pass for one batch. Train mode watches the parameters on
// the tape; eval mode records nothing, samples nothing, and never touches
// the discriminator. The confidence fed to the discriminator treats the
// classifier weights as constants, so the adversarial loss deposits no
// gradient in them.
ForwardOutput model_forward(Tape& tape, ModelParams& params,
                            const Batch& batch, double lambda, Rng* rng,
                            Mode mode);

// Checkpoint files: JSON with variant, config hash, epoch, validation EER,
// dims, and one {shape, data} entry per named parameter tensor.
struct CheckpointMeta {
  Variant variant = Variant::kIbCaan;
  std::string config_hash;
  std::size_t epoch = 0;
  double val_eer = 0.0;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta);
std::pair<ModelParams, CheckpointMeta> load_checkpoint(
    const std::string& path);

}  // namespace ibcaan
