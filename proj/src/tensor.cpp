#include "melon/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "melon/error.hpp"

namespace melon {

namespace {
std::atomic<bool> g_checked{true};
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw NumericError("tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }
  if (g_checked.load(std::memory_order_relaxed)) require_finite("tensor construction");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_.assign(shape_numel(t.shape_), v);
  if (g_checked.load(std::memory_order_relaxed) && !std::isfinite(v)) {
    throw NumericError("tensor: non-finite fill value");
  }
  return t;
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw NumericError("tensor: rows() on shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw NumericError("tensor: cols() on shape " + shape_str(shape_));
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw NumericError("tensor: scalar_value() on shape " + shape_str(shape_));
  }
  return data_[0];
}

void Tensor::require_finite(const char* what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite entry in tensor " +
                         shape_str(shape_));
    }
  }
}

void Tensor::set_checked(bool on) { g_checked.store(on, std::memory_order_relaxed); }
bool Tensor::checked() { return g_checked.load(std::memory_order_relaxed); }

}  // namespace melon
