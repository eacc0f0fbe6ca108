#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pms/numerics/errors.hpp"

#ifndef PMS_CHECK_FINITE
#ifdef NDEBUG
#define PMS_CHECK_FINITE 0
#else
#define PMS_CHECK_FINITE 1
#endif
#endif

namespace pms {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& dims) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) out << (i ? "x" : "") << dims[i];
  out << ']';
  return out.str();
}

inline std::size_t shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

/// Dense row-major array of doubles.
///
/// Construction validates that the dims describe the value count and that
/// every value is finite. Arithmetic operators are elementwise and require
/// identical shapes.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape dims, std::vector<double> values, bool requires_grad = false)
      : dims_(std::move(dims)), values_(std::move(values)), requires_grad_(requires_grad) {
    for (std::size_t d : dims_) {
      if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_string(dims_));
    }
    if (shape_size(dims_) != values_.size()) {
      throw DimensionError("tensor dims " + shape_string(dims_) + " do not match " +
                           std::to_string(values_.size()) + " values");
    }
    if (!all_finite(values_)) throw NumericError("non-finite value in tensor " + shape_string(dims_));
  }

  static Tensor zeros(Shape dims) { return filled(std::move(dims), 0.0); }

  static Tensor filled(Shape dims, double value) {
    const std::size_t n = shape_size(dims);
    return Tensor(std::move(dims), std::vector<double>(n, value));
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  /// Skips the finiteness scan outside debug builds; used for op results.
  static Tensor unchecked(Shape dims, std::vector<double> values) {
    Tensor t;
    t.dims_ = std::move(dims);
    t.values_ = std::move(values);
#if PMS_CHECK_FINITE
    if (!all_finite(t.values_)) throw NumericError("operation produced a non-finite value in " + shape_string(t.dims_));
#endif
    return t;
  }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  bool empty() const noexcept { return values_.empty(); }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double at(std::size_t row, std::size_t col) const { return values_[row * dims_.back() + col]; }
  double& at(std::size_t row, std::size_t col) { return values_[row * dims_.back() + col]; }

  double item() const {
    if (values_.size() != 1) throw DimensionError("item() on tensor " + shape_string(dims_));
    return values_[0];
  }

  /// Same values under new dims with equal element count.
  Tensor reshaped(Shape dims) const {
    if (shape_size(dims) != values_.size()) {
      throw DimensionError("cannot reshape " + shape_string(dims_) + " to " + shape_string(dims));
    }
    Tensor t = *this;
    t.dims_ = std::move(dims);
    return t;
  }

  Tensor& operator+=(const Tensor& rhs) {
    require_same_shape(rhs, "+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += rhs.values_[i];
    return *this;
  }

  Tensor& operator-=(const Tensor& rhs) {
    require_same_shape(rhs, "-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= rhs.values_[i];
    return *this;
  }

  Tensor& operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
  }

  friend Tensor operator+(Tensor lhs, const Tensor& rhs) { return lhs += rhs; }
  friend Tensor operator-(Tensor lhs, const Tensor& rhs) { return lhs -= rhs; }
  friend Tensor operator*(double c, Tensor t) { return t *= c; }
  friend Tensor operator*(Tensor t, double c) { return t *= c; }

  /// Bitwise value equality including dims.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.values_ == b.values_;
  }

  void require_same_shape(const Tensor& other, const char* op) const {
    if (dims_ != other.dims_) {
      throw DimensionError(std::string("shape mismatch in ") + op + ": " + shape_string(dims_) + " vs " +
                           shape_string(other.dims_));
    }
  }

 private:
  Shape dims_;
  std::vector<double> values_;
  bool requires_grad_ = false;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace pms
