#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ibcaan/rng.hpp"
#include "ibcaan/tensor.hpp"

namespace ibcaan::testing {

// Scalar function of a flat parameter vector, rebuilt per evaluation.
using ScalarFn = std::function<double(const std::vector<double>&)>;

inline double central_difference(const ScalarFn& fn,
                                 std::vector<double> values, std::size_t i,
                                 double step = 1e-5) {
  values[i] += step;
  const double hi = fn(values);
  values[i] -= 2.0 * step;
  const double lo = fn(values);
  return (hi - lo) / (2.0 * step);
}

// |a - n| <= tol * max(1, |a|, |n|): relative for gradients of order one or
// larger, absolute near zero.
inline bool grad_close(double analytic, double numeric, double tol = 1e-4) {
  const double scale =
      std::max(1.0, std::max(std::fabs(analytic), std::fabs(numeric)));
  return std::fabs(analytic - numeric) <= tol * scale;
}

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape,
                            double low = -2.0, double high = 2.0) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> values(n);
  for (double& v : values) v = low + (high - low) * rng.uniform();
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace ibcaan::testing
