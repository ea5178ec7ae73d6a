#include "recon/nn/tensor.hpp"

#include <cmath>

#include "recon/errors.hpp"

namespace recon::nn {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  t.data.assign(shape_numel(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t;
  t.data.assign(shape_numel(shape), value);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size())
    throw DimensionError("tensor data does not match shape " + shape_str(shape));
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

int Tensor::dim(int i) const {
  if (i < 0 || i >= ndim())
    throw DimensionError("tensor axis " + std::to_string(i) +
                         " out of range for shape " + shape_str(shape));
  return shape[static_cast<std::size_t>(i)];
}

double Tensor::scalar_value() const {
  if (size() != 1)
    throw DimensionError("scalar_value on tensor of shape " + shape_str(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace recon::nn
