#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace camloc {

/// Dense n-dimensional float64 array, row-major. Carries images, feature
/// maps, weights and CAMs throughout the library.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(count(shape_)), 0.0);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = value;
    return t;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<double> data) {
    if (count(shape) != static_cast<std::int64_t>(data.size()))
      throw std::invalid_argument("Tensor::from_data: shape/product mismatch (" +
                                  shape_string(shape) + " vs " + std::to_string(data.size()) +
                                  " values)");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& operator()(int a) { return data_[idx1(a)]; }
  double operator()(int a) const { return data_[idx1(a)]; }
  double& operator()(int a, int b) { return data_[idx2(a, b)]; }
  double operator()(int a, int b) const { return data_[idx2(a, b)]; }
  double& operator()(int a, int b, int c) { return data_[idx3(a, b, c)]; }
  double operator()(int a, int b, int c) const { return data_[idx3(a, b, c)]; }
  double& operator()(int a, int b, int c, int d) { return data_[idx4(a, b, c, d)]; }
  double operator()(int a, int b, int c, int d) const { return data_[idx4(a, b, c, d)]; }

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension in " + shape_string(shape));
      n *= d;
    }
    return n;
  }

  static std::string shape_string(const std::vector<int>& shape);
  std::string shape_string() const { return shape_string(shape_); }

 private:
  std::size_t idx1(int a) const { return static_cast<std::size_t>(a); }
  std::size_t idx2(int a, int b) const {
    return static_cast<std::size_t>(a) * shape_[1] + b;
  }
  std::size_t idx3(int a, int b, int c) const {
    return (static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c;
  }
  std::size_t idx4(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace camloc
