#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ibcaan/tensor.hpp"

namespace ibcaan {

class Rng;

// Reverse-mode tape over dense float64 tensors (define-by-run).
//
// Lifecycle: watch() the gradient-tracked leaves, build the graph with the
// op methods, call backward() on a scalar exactly once, then read gradients
// with grad(). reset() starts a fresh graph; node handles from earlier
// graphs are invalid after that. A tape belongs to one thread / one run.
//
// Ops record a backward rule only when some input is on the tape; inputs
// with node == -1 are constants and receive no gradient. Broadcasting is
// limited to the bias pattern: a rank-1 [n] operand against the rows of a
// rank-2 [m, n] operand (second operand only).
class Tape {
 public:
  // Registers a leaf; t must have requires_grad set. Assigns a fresh node.
  Tensor& watch(Tensor& t);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor neg(const Tensor& x);
  Tensor add_scalar(const Tensor& x, double c);
  Tensor mul_scalar(const Tensor& x, double c);
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor softplus(const Tensor& x);

  // [m, k] x [k, n] -> [m, n]
  Tensor matmul(const Tensor& a, const Tensor& b);

  // Rank-1 [p] + [q] -> [p+q]; rank-2 [n, p] + [n, q] -> [n, p+q].
  Tensor concat_last_dim(const Tensor& a, const Tensor& b);

  // Row gather from a rank-2 tensor; backward scatter-adds.
  Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows);

  // Stable log(sum(exp(row))) over the last dim of a rank-2 tensor -> [n].
  Tensor logsumexp_rows(const Tensor& x);

  // Full reductions produce a rank-0 scalar; axis reductions need rank 2.
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor sum(const Tensor& x, std::size_t axis);
  Tensor mean(const Tensor& x, std::size_t axis);

  // Identity forward (bit-exact); backward emits -lambda * upstream.
  Tensor grad_reverse(const Tensor& x, double lambda);

  // Accumulates d(loss)/d(node) for every node; watched leaves that the
  // loss does not reach keep zero gradients. One call per graph.
  void backward(const Tensor& scalar_loss);
  bool backward_run() const { return backward_run_; }

  // Gradient of a watched or recorded tensor, valid after backward().
  const std::vector<double>& grad(const Tensor& t) const;

  void reset();
  std::size_t num_ops() const { return ops_.size(); }
  std::size_t num_nodes() const { return node_size_.size(); }

 private:
  using GradBuffers = std::vector<std::vector<double>>;
  using BackwardFn = std::function<void(GradBuffers&)>;

  int alloc_node(std::size_t numel);
  void record(BackwardFn fn);
  void check_writable() const;
  Tensor unary_op(const Tensor& x, std::vector<double> out_data,
                  std::function<double(double upstream, std::size_t i)> dfn);

  std::vector<std::size_t> node_size_;
  std::vector<BackwardFn> ops_;  // recorded in topological order
  GradBuffers grads_;
  bool backward_run_ = false;
};

// Standard normal draws shaped as a tensor; never tape-recorded (constant
// with respect to every parameter).
Tensor sample_standard_normal(Rng& rng, std::vector<std::size_t> shape);

}  // namespace ibcaan
