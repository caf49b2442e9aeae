#include "flowcast/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowcast {

long shape_product(const std::vector<long>& shape) {
  long n = 1;
  for (long d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
  for (long d : shape_) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension in " + shape_str(shape_));
  }
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<long> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = value;
  return t;
}

Tensor Tensor::from_data(std::vector<long> shape, std::vector<double> values) {
  if (shape_product(shape) != static_cast<long>(values.size())) {
    throw std::invalid_argument("Tensor: " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

bool Tensor::has_nan() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return true;
  }
  return false;
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

std::string Tensor::shape_str(const std::vector<long>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

}  // namespace flowcast
