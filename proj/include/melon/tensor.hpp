#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace melon {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major tensor of 64-bit floats. Everything in this project is
// double precision; desk-scale sizes make the memory cost irrelevant and
// keep finite-difference checks meaningful.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // 2-D helpers.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return {data_.data(), data_.size()}; }
  std::span<const double> span() const { return {data_.data(), data_.size()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  // Value of a single-element tensor.
  double scalar_value() const;

  // Throws NumericError if any entry is NaN/Inf. `what` names the producer.
  void require_finite(const char* what) const;

  // When checked mode is on, tensors constructed from data are validated
  // finite. On by default.
  static void set_checked(bool on);
  static bool checked();

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace melon
