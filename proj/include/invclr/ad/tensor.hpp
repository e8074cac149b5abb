// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace invclr::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t num_elements(const Shape& shape);

/// Raised when operand shapes do not conform to an operation's rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles. An empty shape denotes a scalar.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  /// Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

namespace kernels {

/// NumPy broadcasting of two shapes; throws ShapeError if incompatible.
Shape broadcast_shapes(const Shape& a, const Shape& b);

enum class Binary { kAdd, kSub, kMul, kDiv };
Tensor binary(Binary op, const Tensor& a, const Tensor& b);

/// Expands `t` to `shape` following broadcasting rules.
Tensor broadcast_to(const Tensor& t, const Shape& shape);

/// Sums `t` down to `shape`, the adjoint of broadcast_to.
Tensor sum_to(const Tensor& t, const Shape& shape);

/// Reduces over `axis` (or everything when nullopt).
Tensor reduce_sum(const Tensor& t, std::optional<int> axis, bool keepdim);

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);
Tensor transpose(const Tensor& t);

Tensor scale(const Tensor& t, double s);
Tensor add(const Tensor& a, const Tensor& b);  // same-shape fast path
void add_inplace(Tensor& acc, const Tensor& t);

Tensor slice(const Tensor& t, int axis, std::size_t begin, std::size_t end);
Tensor concat(std::span<const Tensor* const> parts, int axis);

/// Resolves a possibly negative axis against `rank`.
std::size_t normalize_axis(int axis, std::size_t rank);

}  // namespace kernels
}  // namespace invclr::ad
