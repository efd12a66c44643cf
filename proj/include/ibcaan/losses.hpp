#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ibcaan/model.hpp"
#include "ibcaan/tape.hpp"
#include "ibcaan/tensor.hpp"

namespace ibcaan {

// Scalar view of one batch objective. total = l_c + beta*l_z + alpha*l_d,
// evaluated in that order; absent terms contribute zero.
struct LossBreakdown {
  double l_c = 0.0;
  std::optional<double> l_z;
  std::optional<double> l_d;
  double total = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
};

// Mean over the batch of w_y * [-y log s(l) - (1-y) log(1-s(l))] on the
// single logit, computed in the softplus form so large |logit| stays finite.
Tensor weighted_bce(Tape& tape, const Tensor& logit,
                    const std::vector<int>& labels,
                    std::pair<double, double> weights);

// Mean negative log-softmax of the true class over [n, K] logits.
Tensor ce_multiclass(Tape& tape, const Tensor& attack_logits,
                     const std::vector<int>& labels);

// Closed-form KL from N(mu, diag(sigma^2)) to N(0, I): per example
// 0.5 * sum_d (mu^2 + sigma^2 - 2 ln sigma - 1), averaged over the batch.
Tensor kl_std_normal(Tape& tape, const Tensor& mu, const Tensor& sigma);

// Reversal-scale schedule 2 / (1 + exp(-10 p)) - 1 on progress p in [0, 1];
// out-of-range p is clamped with a warning on stderr.
double grl_lambda(double p);

struct TotalLoss {
  Tensor value;  // scalar on the tape
  LossBreakdown breakdown;
};

// Combines the terms the variant prescribes. ERM takes l_c alone and
// ignores beta/alpha; the adversarial variants accept a missing l_d (batch
// without spoof rows). Passing a term the variant excludes is an error.
TotalLoss total_loss(Tape& tape, Variant variant, const Tensor& l_c,
                     const std::optional<Tensor>& l_z,
                     const std::optional<Tensor>& l_d, double beta,
                     double alpha);

}  // namespace ibcaan
