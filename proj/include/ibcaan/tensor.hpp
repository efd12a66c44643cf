#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ibcaan {

// Dense row-major float64 tensor. Rank 0 (empty shape) is a scalar with one
// element. `node` is the handle assigned by the tape that most recently
// watched or produced this value; -1 means not recorded.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values,
         bool requires_grad = false);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data.size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;

  // Scalar fetch; requires numel() == 1.
  double value() const;
  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  // Same values, detached from any tape (no gradient flows through it).
  Tensor detached() const;

  std::vector<double> data;
  bool requires_grad = false;
  int node = -1;

 private:
  std::vector<std::size_t> shape_;
};

std::string shape_str(const std::vector<std::size_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace ibcaan
