#include "ibcaan/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace ibcaan {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values,
               bool requires_grad)
    : data(std::move(values)),
      requires_grad(requires_grad),
      shape_(std::move(shape)) {
  if (shape_numel(shape_) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape_) +
                                " does not match " +
                                std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return full(std::move(shape), 0.0);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::vector<double> values(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows(): tensor is not rank 2");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols(): tensor is not rank 2");
  return shape_[1];
}

double Tensor::value() const {
  if (numel() != 1) {
    throw std::invalid_argument("value(): tensor of shape " +
                                shape_str(shape_) + " is not a scalar");
  }
  return data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data[r * cols() + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data[r * cols() + c];
}

Tensor Tensor::detached() const {
  return Tensor(shape_, data, false);
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

}  // namespace ibcaan
