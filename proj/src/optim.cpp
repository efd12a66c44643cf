#include "ibcaan/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ibcaan {

void adam_update_tensor(const std::string& name, Tensor& t,
                        const std::vector<double>& grad,
                        AdamState::Moments& moments, const AdamConfig& config,
                        std::uint64_t step) {
  if (grad.size() != t.numel()) {
    throw std::invalid_argument("adam: gradient size mismatch for " + name);
  }
  if (moments.m.empty()) {
    moments.m.assign(t.numel(), 0.0);
    moments.v.assign(t.numel(), 0.0);
  }
  if (moments.m.size() != t.numel()) {
    throw std::invalid_argument("adam: state size mismatch for " + name);
  }
  const double bias1 = 1.0 - std::pow(config.beta1, step);
  const double bias2 = 1.0 - std::pow(config.beta2, step);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double g = grad[i];
    if (!std::isfinite(g)) {
      throw std::runtime_error("adam: non-finite gradient for parameter '" +
                               name + "'");
    }
    moments.m[i] = config.beta1 * moments.m[i] + (1.0 - config.beta1) * g;
    moments.v[i] = config.beta2 * moments.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = moments.m[i] / bias1;
    const double v_hat = moments.v[i] / bias2;
    const double prev = t.data[i];
    t.data[i] = prev - config.lr * m_hat / (std::sqrt(v_hat) + config.eps) -
                config.lr * config.weight_decay * prev;
  }
}

void adam_step(ModelParams& params, const Tape& tape, AdamState& state,
               const AdamConfig& config) {
  ++state.step;
  params.for_each([&](const std::string& name, Tensor& t) {
    adam_update_tensor(name, t, tape.grad(t), state.moments[name], config,
                       state.step);
  });
}

}  // namespace ibcaan
