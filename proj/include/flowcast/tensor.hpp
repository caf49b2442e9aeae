#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowcast {

/// Dense row-major tensor of doubles. Shapes are immutable after
/// construction; reshaping returns a new tensor sharing no storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape);

  static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<long> shape, double value);
  static Tensor from_data(std::vector<long> shape, std::vector<double> values);
  static Tensor scalar(double value);

  long rank() const { return static_cast<long>(shape_.size()); }
  long dim(long i) const { return shape_[static_cast<size_t>(i)]; }
  long size() const { return static_cast<long>(data_.size()); }
  const std::vector<long>& shape() const { return shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  double operator[](long i) const { return data_[static_cast<size_t>(i)]; }

  // Indexed access for the common low ranks.
  double& at(long i, long j) { return data_[static_cast<size_t>(i * dim(1) + j)]; }
  double at(long i, long j) const { return data_[static_cast<size_t>(i * dim(1) + j)]; }
  double& at(long i, long j, long k) {
    return data_[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
  }
  double at(long i, long j, long k) const {
    return data_[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool has_nan() const;

  std::string shape_str() const;
  static std::string shape_str(const std::vector<long>& shape);

 private:
  std::vector<long> shape_;
  std::vector<double> data_;
};

long shape_product(const std::vector<long>& shape);

}  // namespace flowcast
