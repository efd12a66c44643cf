#include "ibcaan/losses.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ibcaan {

Tensor weighted_bce(Tape& tape, const Tensor& logit,
                    const std::vector<int>& labels,
                    std::pair<double, double> weights) {
  if (logit.rank() != 2 || logit.cols() != 1) {
    throw std::invalid_argument("weighted_bce: logit must be [n, 1], got " +
                                shape_str(logit.shape()));
  }
  const std::size_t n = logit.rows();
  if (n == 0) throw std::invalid_argument("weighted_bce: empty batch");
  if (labels.size() != n) {
    throw std::invalid_argument("weighted_bce: labels misaligned with logits");
  }
  if (weights.first <= 0.0 || weights.second <= 0.0) {
    throw std::invalid_argument("weighted_bce: class weights must be positive");
  }
  // -y log s(l) - (1-y) log(1-s(l)) == softplus((1-2y) l)
  std::vector<double> sign(n), weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("weighted_bce: labels must be 0 or 1");
    }
    sign[i] = 1.0 - 2.0 * labels[i];
    weight[i] = labels[i] == 0 ? weights.first : weights.second;
  }
  const Tensor sign_t({n, 1}, std::move(sign));
  const Tensor weight_t({n, 1}, std::move(weight));
  return tape.mean(tape.mul(weight_t, tape.softplus(tape.mul(sign_t, logit))));
}

Tensor ce_multiclass(Tape& tape, const Tensor& attack_logits,
                     const std::vector<int>& labels) {
  if (attack_logits.rank() != 2) {
    throw std::invalid_argument("ce_multiclass: logits must be [n, K], got " +
                                shape_str(attack_logits.shape()));
  }
  const std::size_t n = attack_logits.rows();
  const std::size_t k = attack_logits.cols();
  if (n == 0) throw std::invalid_argument("ce_multiclass: empty batch");
  if (labels.size() != n) {
    throw std::invalid_argument("ce_multiclass: labels misaligned");
  }
  std::vector<double> one_hot(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::invalid_argument("ce_multiclass: label " +
                                  std::to_string(labels[i]) +
                                  " out of range [0, " + std::to_string(k) +
                                  ")");
    }
    one_hot[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  const Tensor one_hot_t({n, k}, std::move(one_hot));
  const Tensor lse = tape.logsumexp_rows(attack_logits);
  const Tensor picked = tape.sum(tape.mul(attack_logits, one_hot_t), 1);
  return tape.mean(tape.sub(lse, picked));
}

Tensor kl_std_normal(Tape& tape, const Tensor& mu, const Tensor& sigma) {
  if (!same_shape(mu, sigma) || mu.rank() != 2) {
    throw std::invalid_argument("kl_std_normal: mu " + shape_str(mu.shape()) +
                                " and sigma " + shape_str(sigma.shape()) +
                                " must be matching [n, d]");
  }
  for (double s : sigma.data) {
    if (!(s > 0.0)) {
      throw std::invalid_argument("kl_std_normal: sigma must be positive");
    }
  }
  const Tensor square_terms =
      tape.add(tape.mul(mu, mu), tape.mul(sigma, sigma));
  const Tensor log_term = tape.mul_scalar(tape.log(sigma), -2.0);
  const Tensor integrand =
      tape.add_scalar(tape.add(square_terms, log_term), -1.0);
  return tape.mul_scalar(tape.mean(tape.sum(integrand, 1)), 0.5);
}

double grl_lambda(double p) {
  if (p < 0.0 || p > 1.0) {
    std::fprintf(stderr,
                 "warning: grl_lambda progress %.6f outside [0, 1]; clamped\n",
                 p);
    p = p < 0.0 ? 0.0 : 1.0;
  }
  return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0;
}

TotalLoss total_loss(Tape& tape, Variant variant, const Tensor& l_c,
                     const std::optional<Tensor>& l_z,
                     const std::optional<Tensor>& l_d, double beta,
                     double alpha) {
  if (beta < 0.0 || alpha < 0.0) {
    throw std::invalid_argument("total_loss: beta and alpha must be >= 0");
  }
  if (l_z.has_value() != variant_has_kl(variant)) {
    throw std::invalid_argument("total_loss: KL term presence contradicts " +
                                to_string(variant));
  }
  if (l_d.has_value() && !variant_has_adversary(variant)) {
    throw std::invalid_argument(
        "total_loss: adversarial term not part of " + to_string(variant));
  }
  TotalLoss result;
  result.breakdown.l_c = l_c.value();
  result.breakdown.beta = variant_has_kl(variant) ? beta : 0.0;
  result.breakdown.alpha = variant_has_adversary(variant) ? alpha : 0.0;
  result.value = l_c;
  if (l_z) {
    result.breakdown.l_z = l_z->value();
    result.value = tape.add(result.value, tape.mul_scalar(*l_z, beta));
  }
  if (l_d) {
    result.breakdown.l_d = l_d->value();
    result.value = tape.add(result.value, tape.mul_scalar(*l_d, alpha));
  }
  result.breakdown.total = result.value.value();
  return result;
}

}  // namespace ibcaan
