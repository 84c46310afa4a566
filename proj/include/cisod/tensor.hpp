#ifndef CISOD_TENSOR_HPP_
#define CISOD_TENSOR_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cisod/rng.hpp"

namespace cisod {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);

// Dense row-major double tensor. Double precision everywhere: the numerical
// contracts (finite-difference agreement, exact loss identities) are written
// against it, and desk-scale workloads do not need float speed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, double fill);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
  static Tensor rand(Shape shape, Rng& rng);  // uniform [0,1)

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return numel_; }
  bool empty() const { return numel_ == 0; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // NCHW accessors
  double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double& at(std::int64_t b, std::int64_t r, std::int64_t c) {
    return data_[static_cast<std::size_t>((b * shape_[1] + r) * shape_[2] + c)];
  }
  double at(std::int64_t b, std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>((b * shape_[1] + r) * shape_[2] + c)];
  }
  double& at(std::int64_t r, std::int64_t c) {
    return data_[static_cast<std::size_t>(r * shape_[1] + c)];
  }
  double at(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * shape_[1] + c)];
  }

  Tensor reshaped(Shape new_shape) const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double sum() const;
  double mean() const;
  double min() const;
  double max() const;
  double abs_max() const;
  bool all_finite() const;

  void fill(double v);
  void add_(const Tensor& o);  // in place, same shape
  void scale_(double s);

 private:
  Shape shape_;
  std::int64_t numel_ = 0;
  std::vector<double> data_;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace cisod

#endif  // CISOD_TENSOR_HPP_
