// Dense row-major tensor used by every numeric module.
//
// The scalar type is fixed per build: float64 for the test/gradient-check
// library, float32 for the training library (MTDM_REAL_FLOAT32).

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtdm {

#ifdef MTDM_REAL_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Thrown when operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a forward value becomes NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor scalar(Real v) { return Tensor({}, std::vector<Real>{v}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor vector(std::initializer_list<Real> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  /// Leading dimension (1 for scalars).
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  /// Product of trailing dimensions.
  std::size_t cols() const { return rows() == 0 ? 0 : size() / rows(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<const Real> row(std::size_t r) const { return values().subspan(r * cols(), cols()); }
  std::span<Real> row(std::size_t r) { return values().subspan(r * cols(), cols()); }

  Real item() const;
  bool all_finite() const;
  void fill(Real v);
  /// Same data, new shape; numel must agree.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// Largest |a-b| over elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mtdm
