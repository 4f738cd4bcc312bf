#include "scp/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "scp/error.hpp"

namespace scp {

std::size_t Shape::numel() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t Shape::rows() const {
  if (dims.size() <= 1) return 1;
  return numel() / dims.back();
}

std::size_t Shape::cols() const { return dims.empty() ? 1 : dims.back(); }

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_.numel(), 0.0) {
  for (auto d : shape_.dims) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_.str());
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_.dims) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_.str());
  }
  if (data_.size() != shape_.numel()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
  }
}

std::span<double> Tensor::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

std::span<const double> Tensor::grad() const {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() {
  if (grad_.size() == data_.size()) {
    std::fill(grad_.begin(), grad_.end(), 0.0);
  } else {
    grad_.assign(data_.size(), 0.0);
  }
}

void Tensor::reshape(Shape shape) {
  if (shape.numel() != data_.size()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  shape_ = std::move(shape);
}

}  // namespace scp
