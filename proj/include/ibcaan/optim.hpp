#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ibcaan/model.hpp"
#include "ibcaan/tape.hpp"

namespace ibcaan {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled: applied to the parameter, not the gradient
};

struct AdamState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::map<std::string, Moments> moments;
  std::uint64_t step = 0;
};

// Adam update with decoupled weight decay for one named tensor:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2  (bias-corrected)
//   p <- p - lr * m^ / (sqrt(v^) + eps) - lr * weight_decay * p
// A non-finite gradient aborts with a diagnostic naming the parameter.
void adam_update_tensor(const std::string& name, Tensor& t,
                        const std::vector<double>& grad,
                        AdamState::Moments& moments, const AdamConfig& config,
                        std::uint64_t step);

// One Adam step over every named parameter; gradients are read from the
// tape (zero for unreachable leaves).
void adam_step(ModelParams& params, const Tape& tape, AdamState& state,
               const AdamConfig& config);

}  // namespace ibcaan
