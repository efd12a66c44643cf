#include "ibcaan/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ibcaan/rng.hpp"

namespace ibcaan {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

#ifndef NDEBUG
void check_finite(const std::vector<double>& values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("non-finite value produced by ") +
                               op);
    }
  }
}
#define IBCAAN_CHECK_FINITE(values, op) check_finite(values, op)
#else
#define IBCAAN_CHECK_FINITE(values, op) ((void)0)
#endif

// Shapes equal, or b is a rank-1 vector broadcast over the rows of a.
enum class BinaryLayout { kSame, kRowBroadcast };

BinaryLayout binary_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (same_shape(a, b)) return BinaryLayout::kSame;
  if (a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.cols()) {
    return BinaryLayout::kRowBroadcast;
  }
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
}

}  // namespace

int Tape::alloc_node(std::size_t numel) {
  check_writable();
  node_size_.push_back(numel);
  return static_cast<int>(node_size_.size()) - 1;
}

void Tape::record(BackwardFn fn) { ops_.push_back(std::move(fn)); }

void Tape::check_writable() const {
  if (backward_run_) {
    throw std::logic_error(
        "tape: graph already back-propagated; reset() before recording again");
  }
}

Tensor& Tape::watch(Tensor& t) {
  if (!t.requires_grad) {
    throw std::invalid_argument("watch: tensor does not require gradients");
  }
  t.node = alloc_node(t.numel());
  return t;
}

Tensor Tape::unary_op(const Tensor& x, std::vector<double> out_data,
                      std::function<double(double, std::size_t)> dfn) {
  Tensor out(x.shape(), std::move(out_data));
  if (x.node < 0) return out;
  out.node = alloc_node(out.numel());
  out.requires_grad = true;
  const int xn = x.node;
  const int on = out.node;
  record([xn, on, dfn = std::move(dfn)](GradBuffers& g) {
    const auto& go = g[on];
    auto& gx = g[xn];
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += dfn(go[i], i);
  });
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const BinaryLayout layout = binary_layout(a, b, "add");
  std::vector<double> out(a.numel());
  if (layout == BinaryLayout::kSame) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] + b.data[i];
  } else {
    const std::size_t cols = a.cols();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = a.data[i] + b.data[i % cols];
  }
  IBCAAN_CHECK_FINITE(out, "add");
  Tensor result(a.shape(), std::move(out));
  if (a.node < 0 && b.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int an = a.node, bn = b.node, on = result.node;
  const std::size_t cols = (layout == BinaryLayout::kRowBroadcast) ? a.cols() : 0;
  record([an, bn, on, cols](GradBuffers& g) {
    const auto& go = g[on];
    if (an >= 0) {
      auto& ga = g[an];
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (bn >= 0) {
      auto& gb = g[bn];
      if (cols == 0) {
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      } else {
        for (std::size_t i = 0; i < go.size(); ++i) gb[i % cols] += go[i];
      }
    }
  });
  return result;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const BinaryLayout layout = binary_layout(a, b, "sub");
  std::vector<double> out(a.numel());
  if (layout == BinaryLayout::kSame) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] - b.data[i];
  } else {
    const std::size_t cols = a.cols();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = a.data[i] - b.data[i % cols];
  }
  IBCAAN_CHECK_FINITE(out, "sub");
  Tensor result(a.shape(), std::move(out));
  if (a.node < 0 && b.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int an = a.node, bn = b.node, on = result.node;
  const std::size_t cols = (layout == BinaryLayout::kRowBroadcast) ? a.cols() : 0;
  record([an, bn, on, cols](GradBuffers& g) {
    const auto& go = g[on];
    if (an >= 0) {
      auto& ga = g[an];
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (bn >= 0) {
      auto& gb = g[bn];
      if (cols == 0) {
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      } else {
        for (std::size_t i = 0; i < go.size(); ++i) gb[i % cols] -= go[i];
      }
    }
  });
  return result;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const BinaryLayout layout = binary_layout(a, b, "mul");
  std::vector<double> out(a.numel());
  if (layout == BinaryLayout::kSame) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] * b.data[i];
  } else {
    const std::size_t cols = a.cols();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = a.data[i] * b.data[i % cols];
  }
  IBCAAN_CHECK_FINITE(out, "mul");
  Tensor result(a.shape(), std::move(out));
  if (a.node < 0 && b.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int an = a.node, bn = b.node, on = result.node;
  const std::size_t cols = (layout == BinaryLayout::kRowBroadcast) ? a.cols() : 0;
  record([an, bn, on, cols, av = a.data, bv = b.data](GradBuffers& g) {
    const auto& go = g[on];
    if (an >= 0) {
      auto& ga = g[an];
      if (cols == 0) {
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
      } else {
        for (std::size_t i = 0; i < go.size(); ++i)
          ga[i] += go[i] * bv[i % cols];
      }
    }
    if (bn >= 0) {
      auto& gb = g[bn];
      if (cols == 0) {
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
      } else {
        for (std::size_t i = 0; i < go.size(); ++i)
          gb[i % cols] += go[i] * av[i];
      }
    }
  });
  return result;
}

Tensor Tape::neg(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -x.data[i];
  return unary_op(x, std::move(out),
                  [](double up, std::size_t) { return -up; });
}

Tensor Tape::add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data[i] + c;
  IBCAAN_CHECK_FINITE(out, "add_scalar");
  return unary_op(x, std::move(out),
                  [](double up, std::size_t) { return up; });
}

Tensor Tape::mul_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data[i] * c;
  IBCAAN_CHECK_FINITE(out, "mul_scalar");
  return unary_op(x, std::move(out),
                  [c](double up, std::size_t) { return up * c; });
}

Tensor Tape::exp(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data[i]);
  IBCAAN_CHECK_FINITE(out, "exp");
  std::vector<double> saved = out;
  return unary_op(x, std::move(out),
                  [ov = std::move(saved)](double up, std::size_t i) {
                    return up * ov[i];
                  });
}

Tensor Tape::log(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x.data[i]);
  IBCAAN_CHECK_FINITE(out, "log");
  return unary_op(x, std::move(out), [xv = x.data](double up, std::size_t i) {
    return up / xv[i];
  });
}

Tensor Tape::tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data[i]);
  std::vector<double> saved = out;
  return unary_op(x, std::move(out),
                  [ov = std::move(saved)](double up, std::size_t i) {
                    return up * (1.0 - ov[i] * ov[i]);
                  });
}

Tensor Tape::sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = stable_sigmoid(x.data[i]);
  std::vector<double> saved = out;
  return unary_op(x, std::move(out),
                  [ov = std::move(saved)](double up, std::size_t i) {
                    return up * ov[i] * (1.0 - ov[i]);
                  });
}

Tensor Tape::softplus(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = stable_softplus(x.data[i]);
  IBCAAN_CHECK_FINITE(out, "softplus");
  return unary_op(x, std::move(out), [xv = x.data](double up, std::size_t i) {
    return up * stable_sigmoid(xv[i]);
  });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: dimension mismatch " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.data[i * k + p];
      for (std::size_t j = 0; j < n; ++j) {
        out[i * n + j] += av * b.data[p * n + j];
      }
    }
  }
  IBCAAN_CHECK_FINITE(out, "matmul");
  Tensor result({m, n}, std::move(out));
  if (a.node < 0 && b.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int an = a.node, bn = b.node, on = result.node;
  record([an, bn, on, m, k, n, av = a.data, bv = b.data](GradBuffers& g) {
    const auto& go = g[on];
    if (an >= 0) {
      auto& ga = g[an];  // dA = G . B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = go[i * n + j];
          for (std::size_t p = 0; p < k; ++p) {
            ga[i * k + p] += gv * bv[p * n + j];
          }
        }
      }
    }
    if (bn >= 0) {
      auto& gb = g[bn];  // dB = A^T . G
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double avv = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) {
            gb[p * n + j] += avv * go[i * n + j];
          }
        }
      }
    }
  });
  return result;
}

Tensor Tape::concat_last_dim(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1 || a.rank() > 2) {
    throw std::invalid_argument("concat_last_dim: incompatible shapes " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  std::size_t rows = 1, p = 0, q = 0;
  if (a.rank() == 1) {
    p = a.shape()[0];
    q = b.shape()[0];
  } else {
    if (a.rows() != b.rows()) {
      throw std::invalid_argument(
          "concat_last_dim: leading dimensions differ, " +
          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    rows = a.rows();
    p = a.cols();
    q = b.cols();
  }
  std::vector<double> out(rows * (p + q));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data.begin() + r * p, p, out.begin() + r * (p + q));
    std::copy_n(b.data.begin() + r * q, q, out.begin() + r * (p + q) + p);
  }
  std::vector<std::size_t> shape =
      (a.rank() == 1) ? std::vector<std::size_t>{p + q}
                      : std::vector<std::size_t>{rows, p + q};
  Tensor result(std::move(shape), std::move(out));
  if (a.node < 0 && b.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int an = a.node, bn = b.node, on = result.node;
  record([an, bn, on, rows, p, q](GradBuffers& g) {
    const auto& go = g[on];
    for (std::size_t r = 0; r < rows; ++r) {
      if (an >= 0) {
        auto& ga = g[an];
        for (std::size_t j = 0; j < p; ++j)
          ga[r * p + j] += go[r * (p + q) + j];
      }
      if (bn >= 0) {
        auto& gb = g[bn];
        for (std::size_t j = 0; j < q; ++j)
          gb[r * q + j] += go[r * (p + q) + p + j];
      }
    }
  });
  return result;
}

Tensor Tape::select_rows(const Tensor& x,
                         const std::vector<std::size_t>& rows) {
  if (x.rank() != 2) {
    throw std::invalid_argument("select_rows: need rank-2 input, got " +
                                shape_str(x.shape()));
  }
  const std::size_t cols = x.cols();
  for (std::size_t r : rows) {
    if (r >= x.rows()) {
      throw std::invalid_argument("select_rows: row " + std::to_string(r) +
                                  " out of range for " + shape_str(x.shape()));
    }
  }
  std::vector<double> out(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data.begin() + rows[i] * cols, cols, out.begin() + i * cols);
  }
  Tensor result({rows.size(), cols}, std::move(out));
  if (x.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int xn = x.node, on = result.node;
  record([xn, on, cols, rows](GradBuffers& g) {
    const auto& go = g[on];
    auto& gx = g[xn];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        gx[rows[i] * cols + j] += go[i * cols + j];
      }
    }
  });
  return result;
}

Tensor Tape::logsumexp_rows(const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("logsumexp_rows: need rank-2 input, got " +
                                shape_str(x.shape()));
  }
  const std::size_t n = x.rows(), k = x.cols();
  if (k == 0) {
    throw std::invalid_argument("logsumexp_rows: zero-width rows");
  }
  std::vector<double> out(n);
  std::vector<double> softmax(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double m = x.data[i * k];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, x.data[i * k + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      softmax[i * k + j] = std::exp(x.data[i * k + j] - m);
      s += softmax[i * k + j];
    }
    out[i] = m + std::log(s);
    for (std::size_t j = 0; j < k; ++j) softmax[i * k + j] /= s;
  }
  IBCAAN_CHECK_FINITE(out, "logsumexp_rows");
  Tensor result({n}, std::move(out));
  if (x.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int xn = x.node, on = result.node;
  record([xn, on, n, k, sm = std::move(softmax)](GradBuffers& g) {
    const auto& go = g[on];
    auto& gx = g[xn];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        gx[i * k + j] += go[i] * sm[i * k + j];
      }
    }
  });
  return result;
}

Tensor Tape::sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data) total += v;
  Tensor result = Tensor::scalar(total);
  if (x.node < 0) return result;
  result.node = alloc_node(1);
  result.requires_grad = true;
  const int xn = x.node, on = result.node;
  const std::size_t numel = x.numel();
  record([xn, on, numel](GradBuffers& g) {
    const double up = g[on][0];
    auto& gx = g[xn];
    for (std::size_t i = 0; i < numel; ++i) gx[i] += up;
  });
  return result;
}

Tensor Tape::mean(const Tensor& x) {
  if (x.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  double total = 0.0;
  for (double v : x.data) total += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  Tensor result = Tensor::scalar(total * inv);
  if (x.node < 0) return result;
  result.node = alloc_node(1);
  result.requires_grad = true;
  const int xn = x.node, on = result.node;
  const std::size_t numel = x.numel();
  record([xn, on, numel, inv](GradBuffers& g) {
    const double up = g[on][0] * inv;
    auto& gx = g[xn];
    for (std::size_t i = 0; i < numel; ++i) gx[i] += up;
  });
  return result;
}

Tensor Tape::sum(const Tensor& x, std::size_t axis) {
  if (x.rank() != 2 || axis > 1) {
    throw std::invalid_argument("sum: invalid axis " + std::to_string(axis) +
                                " for shape " + shape_str(x.shape()));
  }
  const std::size_t n = x.rows(), k = x.cols();
  const std::size_t out_len = (axis == 0) ? k : n;
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      out[axis == 0 ? j : i] += x.data[i * k + j];
    }
  }
  Tensor result({out_len}, std::move(out));
  if (x.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int xn = x.node, on = result.node;
  record([xn, on, n, k, axis](GradBuffers& g) {
    const auto& go = g[on];
    auto& gx = g[xn];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        gx[i * k + j] += go[axis == 0 ? j : i];
      }
    }
  });
  return result;
}

Tensor Tape::mean(const Tensor& x, std::size_t axis) {
  if (x.rank() != 2 || axis > 1) {
    throw std::invalid_argument("mean: invalid axis " + std::to_string(axis) +
                                " for shape " + shape_str(x.shape()));
  }
  const std::size_t denom = (axis == 0) ? x.rows() : x.cols();
  if (denom == 0) throw std::invalid_argument("mean: empty axis");
  Tensor total = sum(x, axis);
  return mul_scalar(total, 1.0 / static_cast<double>(denom));
}

Tensor Tape::grad_reverse(const Tensor& x, double lambda) {
  if (lambda < 0.0) {
    throw std::invalid_argument("grad_reverse: negative lambda " +
                                std::to_string(lambda));
  }
  Tensor result(x.shape(), x.data);  // forward pass is the identity
  if (x.node < 0) return result;
  result.node = alloc_node(result.numel());
  result.requires_grad = true;
  const int xn = x.node, on = result.node;
  record([xn, on, lambda](GradBuffers& g) {
    const auto& go = g[on];
    auto& gx = g[xn];
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += -lambda * go[i];
  });
  return result;
}

void Tape::backward(const Tensor& scalar_loss) {
  if (backward_run_) {
    throw std::logic_error("backward: already run on this tape; reset() and "
                           "re-record the graph first");
  }
  if (scalar_loss.numel() != 1) {
    throw std::invalid_argument("backward: loss has shape " +
                                shape_str(scalar_loss.shape()) +
                                ", expected a scalar");
  }
  if (scalar_loss.node < 0 ||
      scalar_loss.node >= static_cast<int>(node_size_.size())) {
    throw std::invalid_argument("backward: loss is not recorded on this tape");
  }
  grads_.resize(node_size_.size());
  for (std::size_t i = 0; i < node_size_.size(); ++i) {
    grads_[i].assign(node_size_[i], 0.0);
  }
  grads_[scalar_loss.node][0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    (*it)(grads_);
  }
  backward_run_ = true;
}

const std::vector<double>& Tape::grad(const Tensor& t) const {
  if (!backward_run_) {
    throw std::logic_error("grad: backward has not been run on this tape");
  }
  if (t.node < 0 || t.node >= static_cast<int>(grads_.size())) {
    throw std::invalid_argument("grad: tensor is not on this tape");
  }
  return grads_[t.node];
}

void Tape::reset() {
  node_size_.clear();
  ops_.clear();
  grads_.clear();
  backward_run_ = false;
}

Tensor sample_standard_normal(Rng& rng, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = rng.normal();
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace ibcaan
