#include "ibcaan/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "ibcaan/errors.hpp"
#include "ibcaan/rng.hpp"

namespace ibcaan {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kSigmaFloor = 1e-6;

Tensor uniform_weights(std::size_t fan_in, std::size_t fan_out, double gain,
                       Rng& rng) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(fan_in * fan_out);
  for (double& v : values) v = (2.0 * rng.uniform() - 1.0) * bound;
  return Tensor({fan_in, fan_out}, std::move(values), true);
}

LinearLayer make_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng,
                        double gain = 1.0, double bias_value = 0.0) {
  LinearLayer layer;
  layer.w = uniform_weights(fan_in, fan_out, gain, rng);
  layer.b = Tensor({fan_out}, std::vector<double>(fan_out, bias_value), true);
  return layer;
}

Tensor linear(Tape& tape, const LinearLayer& layer, const Tensor& x) {
  return tape.add(tape.matmul(x, layer.w), layer.b);
}

// Same affine map but with the layer treated as a constant: gradients flow
// to x only.
Tensor linear_const(Tape& tape, const LinearLayer& layer, const Tensor& x) {
  return tape.add(tape.matmul(x, layer.w.detached()), layer.b.detached());
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kErm: return "ERM";
    case Variant::kIbOnly: return "IB_ONLY";
    case Variant::kCaanOnly: return "CAAN_ONLY";
    case Variant::kIbDann: return "IB_DANN";
    case Variant::kIbCaan: return "IB_CAAN";
  }
  throw std::logic_error("to_string: bad variant");
}

Variant variant_from_string(const std::string& name) {
  for (Variant v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  throw DataError("unknown variant '" + name +
                  "' (expected ERM, IB_ONLY, CAAN_ONLY, IB_DANN or IB_CAAN)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> kAll = {
      Variant::kIbCaan, Variant::kCaanOnly, Variant::kIbOnly,
      Variant::kIbDann, Variant::kErm};
  return kAll;
}

bool variant_samples_latent(Variant v) {
  return v == Variant::kIbOnly || v == Variant::kIbDann ||
         v == Variant::kIbCaan;
}

bool variant_has_kl(Variant v) { return variant_samples_latent(v); }

bool variant_has_adversary(Variant v) {
  return v == Variant::kCaanOnly || v == Variant::kIbDann ||
         v == Variant::kIbCaan;
}

bool variant_uses_confidence(Variant v) {
  return v == Variant::kCaanOnly || v == Variant::kIbCaan;
}

std::string ablation_label(Variant v) {
  switch (v) {
    case Variant::kIbCaan: return "IB-CAAN";
    case Variant::kCaanOnly: return "w/o IB";
    case Variant::kIbOnly: return "w/o CAAN";
    case Variant::kIbDann: return "IB-DANN";
    case Variant::kErm: return "ERM";
  }
  throw std::logic_error("ablation_label: bad variant");
}

std::size_t ModelParams::disc_input_dim() const {
  return dims.z_dim + (variant_uses_confidence(variant) ? 1 : 0);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("backbone1.w", backbone1.w);
  fn("backbone1.b", backbone1.b);
  fn("backbone2.w", backbone2.w);
  fn("backbone2.b", backbone2.b);
  fn("encoder.w", encoder.w);
  fn("encoder.b", encoder.b);
  fn("mu_head.w", mu_head.w);
  fn("mu_head.b", mu_head.b);
  fn("sigma_head.w", sigma_head.w);
  fn("sigma_head.b", sigma_head.b);
  fn("classifier.w", classifier.w);
  fn("classifier.b", classifier.b);
  fn("disc1.w", disc1.w);
  fn("disc1.b", disc1.b);
  fn("disc2.w", disc2.w);
  fn("disc2.b", disc2.b);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each(
      [&fn](const std::string& name, Tensor& t) {
        fn(name, static_cast<const Tensor&>(t));
      });
}

ModelParams init_params(const Dims& dims, Variant variant, Rng& rng) {
  if (dims.input_dim == 0 || dims.hidden == 0 || dims.z_dim == 0 ||
      dims.n_attacks == 0) {
    throw std::invalid_argument("init_params: all dims must be positive");
  }
  ModelParams p;
  p.dims = dims;
  p.variant = variant;
  p.backbone1 = make_linear(dims.input_dim, dims.hidden, rng);
  p.backbone2 = make_linear(dims.hidden, dims.hidden, rng);
  p.encoder = make_linear(dims.hidden, dims.hidden, rng);
  p.mu_head = make_linear(dims.hidden, dims.z_dim, rng);
  // Half-scale weights plus softplus^-1(1) bias keep the initial sigma
  // within a narrow band around 1 for any input.
  p.sigma_head = make_linear(dims.hidden, dims.z_dim, rng, 0.5,
                             std::log(std::exp(1.0) - 1.0));
  p.classifier = make_linear(dims.z_dim, 1, rng);
  p.disc1 = make_linear(p.disc_input_dim(), dims.hidden, rng);
  p.disc2 = make_linear(dims.hidden, dims.n_attacks, rng);
  return p;
}

Tensor encode(Tape& tape, const ModelParams& params, const Tensor& x) {
  Tensor h = tape.tanh(linear(tape, params.backbone1, x));
  return tape.tanh(linear(tape, params.backbone2, h));
}

LatentSample vib_forward(Tape& tape, const ModelParams& params,
                         const Tensor& h, Rng* rng, bool stochastic) {
  const Tensor e = tape.tanh(linear(tape, params.encoder, h));
  LatentSample s;
  s.mu = linear(tape, params.mu_head, e);
  s.sigma = tape.add_scalar(tape.softplus(linear(tape, params.sigma_head, e)),
                            kSigmaFloor);
  if (stochastic) {
    if (rng == nullptr) {
      throw std::invalid_argument("vib_forward: stochastic pass needs an rng");
    }
    s.epsilon = sample_standard_normal(*rng, {h.rows(), params.dims.z_dim});
    s.z = tape.add(s.mu, tape.mul(s.sigma, s.epsilon));
  } else {
    s.epsilon = Tensor::zeros({h.rows(), params.dims.z_dim});
    s.z = s.mu;
  }
  return s;
}

Tensor classify(Tape& tape, const ModelParams& params, const Tensor& z) {
  return linear(tape, params.classifier, z);
}

Tensor discriminate(Tape& tape, const ModelParams& params, const Tensor& z_s,
                    const Tensor* confidence_s, double lambda) {
  if (confidence_s != nullptr && confidence_s->rows() != z_s.rows()) {
    throw std::invalid_argument(
        "discriminate: confidence rows " +
        std::to_string(confidence_s->rows()) + " misaligned with latents " +
        std::to_string(z_s.rows()));
  }
  const bool wants_confidence = variant_uses_confidence(params.variant);
  if (wants_confidence != (confidence_s != nullptr)) {
    throw std::invalid_argument(
        "discriminate: confidence input does not match variant " +
        to_string(params.variant));
  }
  Tensor input = tape.grad_reverse(z_s, lambda);
  if (confidence_s != nullptr) {
    input = tape.concat_last_dim(input,
                                 tape.grad_reverse(*confidence_s, lambda));
  }
  Tensor hidden = tape.tanh(linear(tape, params.disc1, input));
  return linear(tape, params.disc2, hidden);
}

ForwardOutput model_forward(Tape& tape, ModelParams& params,
                            const Batch& batch, double lambda, Rng* rng,
                            Mode mode) {
  if (batch.labels.size() != batch.x.rows() ||
      batch.attacks.size() != batch.x.rows()) {
    throw std::invalid_argument("model_forward: batch rows misaligned");
  }
  const bool train = (mode == Mode::kTrain);
  if (train) {
    params.for_each([&tape](const std::string&, Tensor& t) { tape.watch(t); });
  }
  const bool stochastic = train && variant_samples_latent(params.variant);

  ForwardOutput out;
  const Tensor h = encode(tape, params, batch.x);
  out.latent = vib_forward(tape, params, h, rng, stochastic);
  out.logit = classify(tape, params, out.latent.z);
  out.confidence = tape.sigmoid(out.logit);

  if (train && variant_has_adversary(params.variant)) {
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      if (batch.labels[i] == 1) {
        out.spoof_rows.push_back(i);
        out.spoof_attacks.push_back(batch.attacks[i]);
      }
    }
    if (!out.spoof_rows.empty()) {
      const Tensor z_s = tape.select_rows(out.latent.z, out.spoof_rows);
      if (variant_uses_confidence(params.variant)) {
        // The classifier acts as a fixed confidence scorer here; only z_s
        // receives gradient through this path.
        const Tensor conf_s =
            tape.sigmoid(linear_const(tape, params.classifier, z_s));
        out.attack_logits = discriminate(tape, params, z_s, &conf_s, lambda);
      } else {
        out.attack_logits = discriminate(tape, params, z_s, nullptr, lambda);
      }
    }
  }
  return out;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta) {
  ordered_json doc;
  doc["format"] = "ibcaan-checkpoint-v1";
  doc["variant"] = to_string(params.variant);
  doc["config_hash"] = meta.config_hash;
  doc["epoch"] = meta.epoch;
  doc["val_eer"] = meta.val_eer;
  doc["dims"] = {{"input_dim", params.dims.input_dim},
                 {"hidden", params.dims.hidden},
                 {"z_dim", params.dims.z_dim},
                 {"n_attacks", params.dims.n_attacks}};
  ordered_json tensors = ordered_json::object();
  params.for_each([&tensors](const std::string& name, const Tensor& t) {
    tensors[name] = {{"shape", t.shape()}, {"data", t.data}};
  });
  doc["params"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint file " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw DataError("failed while writing checkpoint file " + path);
}

std::pair<ModelParams, CheckpointMeta> load_checkpoint(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint file " + path);
  ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
  if (doc.value("format", "") != "ibcaan-checkpoint-v1") {
    throw DataError("checkpoint " + path + ": unknown format tag");
  }
  CheckpointMeta meta;
  meta.variant = variant_from_string(doc.at("variant").get<std::string>());
  meta.config_hash = doc.value("config_hash", "");
  meta.epoch = doc.at("epoch").get<std::size_t>();
  meta.val_eer = doc.at("val_eer").get<double>();

  Dims dims;
  const auto& jd = doc.at("dims");
  dims.input_dim = jd.at("input_dim").get<std::size_t>();
  dims.hidden = jd.at("hidden").get<std::size_t>();
  dims.z_dim = jd.at("z_dim").get<std::size_t>();
  dims.n_attacks = jd.at("n_attacks").get<std::size_t>();

  Rng scratch(0);
  ModelParams params = init_params(dims, meta.variant, scratch);
  const auto& jp = doc.at("params");
  params.for_each([&jp, &path](const std::string& name, Tensor& t) {
    if (!jp.contains(name)) {
      throw DataError("checkpoint " + path + ": missing parameter " + name);
    }
    const auto& entry = jp.at(name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    auto values = entry.at("data").get<std::vector<double>>();
    if (shape != t.shape()) {
      throw DataError("checkpoint " + path + ": parameter " + name +
                      " has shape " + shape_str(shape) + ", expected " +
                      shape_str(t.shape()));
    }
    t = Tensor(shape, std::move(values), true);
  });
  return {std::move(params), std::move(meta)};
}

}  // namespace ibcaan
