// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/ad/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace invclr::ad {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(num_elements(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor extents must be positive: " + to_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor extents must be positive: " + to_string(shape_));
  }
  if (data_.size() != num_elements(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank mismatch for shape " + to_string(shape_));
  }
  std::size_t off = 0;
  std::size_t k = 0;
  for (auto i : index) {
    if (i >= shape_[k]) throw std::out_of_range("tensor index out of range");
    off = off * shape_[k] + i;
    ++k;
  }
  return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() requires a single-element tensor, got " + to_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (num_elements(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Strides of `in` expressed over the broadcast output shape (0 on broadcast axes).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t lead = out.size() - in.size();
  for (std::size_t k = in.size(); k-- > 0;) {
    strides[lead + k] = in[k] == 1 ? 0 : stride;
    stride *= in[k];
  }
  return strides;
}

template <typename F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, F&& f) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  if (b.size() == 1) {
    Tensor out(broadcast_shapes(a.shape(), b.shape()));
    const double bv = b[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], bv);
    return out;
  }
  if (a.size() == 1) {
    Tensor out(broadcast_shapes(a.shape(), b.shape()));
    const double av = a[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av, b[i]);
    return out;
  }
  const Shape shape = broadcast_shapes(a.shape(), b.shape());
  Tensor out(shape);
  const auto sa = broadcast_strides(a.shape(), shape);
  const auto sb = broadcast_strides(b.shape(), shape);
  const std::size_t rank = shape.size();
  const std::size_t inner = shape[rank - 1];
  const std::size_t ia = sa[rank - 1];
  const std::size_t ib = sb[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t o = 0; o < out.size(); o += inner) {
    for (std::size_t j = 0; j < inner; ++j) out[o + j] = f(a[oa + j * ia], b[ob + j * ib]);
    // Advance the odometer over all but the innermost axis.
    for (std::size_t k = rank - 1; k-- > 0;) {
      ++idx[k];
      oa += sa[k];
      ob += sb[k];
      if (idx[k] < shape[k]) break;
      oa -= sa[k] * shape[k];
      ob -= sb[k] * shape[k];
      idx[k] = 0;
    }
  }
  return out;
}

}  // namespace

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < rank - a.size() ? 1 : a[k - (rank - a.size())];
    const std::size_t db = k < rank - b.size() ? 1 : b[k - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) +
                       " are not broadcast-compatible");
    }
    out[k] = std::max(da, db);
  }
  return out;
}

Tensor binary(Binary op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case Binary::kAdd:
      return broadcast_apply(a, b, [](double x, double y) { return x + y; });
    case Binary::kSub:
      return broadcast_apply(a, b, [](double x, double y) { return x - y; });
    case Binary::kMul:
      return broadcast_apply(a, b, [](double x, double y) { return x * y; });
    case Binary::kDiv:
      return broadcast_apply(a, b, [](double x, double y) { return x / y; });
  }
  throw std::logic_error("unreachable");
}

Tensor broadcast_to(const Tensor& t, const Shape& shape) {
  if (t.shape() == shape) return t;
  if (broadcast_shapes(t.shape(), shape) != shape) {
    throw ShapeError("cannot broadcast " + to_string(t.shape()) + " to " + to_string(shape));
  }
  return broadcast_apply(t, Tensor(shape), [](double x, double) { return x; });
}

Tensor sum_to(const Tensor& t, const Shape& shape) {
  if (t.shape() == shape) return t;
  if (num_elements(shape) == 1) {
    double s = 0.0;
    for (double v : t.data()) s += v;
    return Tensor(shape, std::vector<double>{s});
  }
  const Shape& full = t.shape();
  if (broadcast_shapes(shape, full) != full) {
    throw ShapeError("cannot reduce " + to_string(full) + " to " + to_string(shape));
  }
  Tensor out(shape);
  const auto so = broadcast_strides(shape, full);
  const std::size_t rank = full.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oo = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    out[oo] += t[i];
    for (std::size_t k = rank; k-- > 0;) {
      ++idx[k];
      oo += so[k];
      if (idx[k] < full[k]) break;
      oo -= so[k] * full[k];
      idx[k] = 0;
    }
  }
  return out;
}

Tensor reduce_sum(const Tensor& t, std::optional<int> axis, bool keepdim) {
  if (!axis) {
    double s = 0.0;
    for (double v : t.data()) s += v;
    if (keepdim) return Tensor(Shape(t.rank(), 1), std::vector<double>{s});
    return Tensor::scalar(s);
  }
  const std::size_t ax = normalize_axis(*axis, t.rank());
  const Shape& in = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < ax; ++k) outer *= in[k];
  for (std::size_t k = ax + 1; k < in.size(); ++k) inner *= in[k];
  const std::size_t n = in[ax];
  Shape out_shape = in;
  if (keepdim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* src = t.data().data() + (o * n + j) * inner;
      double* dst = out.data().data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::size_t ka = transpose_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw ShapeError("matmul inner extents differ: " + to_string(a.shape()) +
                     (transpose_a ? "^T" : "") + " x " + to_string(b.shape()) +
                     (transpose_b ? "^T" : ""));
  }
  Tensor out(Shape{m, n});
  const auto ea = ConstMap(a.data().data(), static_cast<Eigen::Index>(a.dim(0)),
                           static_cast<Eigen::Index>(a.dim(1)));
  const auto eb = ConstMap(b.data().data(), static_cast<Eigen::Index>(b.dim(0)),
                           static_cast<Eigen::Index>(b.dim(1)));
  auto eo = MutMap(out.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (transpose_a && transpose_b) {
    eo.noalias() = ea.transpose() * eb.transpose();
  } else if (transpose_a) {
    eo.noalias() = ea.transpose() * eb;
  } else if (transpose_b) {
    eo.noalias() = ea * eb.transpose();
  } else {
    eo.noalias() = ea * eb;
  }
  return out;
}

Tensor transpose(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("transpose expects rank 2, got " + to_string(t.shape()));
  const std::size_t r = t.dim(0), c = t.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = t[i * c + j];
  }
  return out;
}

Tensor scale(const Tensor& t, double s) {
  Tensor out = t;
  for (double& v : out.data()) v *= s;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return binary(Binary::kAdd, a, b);
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& acc, const Tensor& t) {
  if (acc.shape() != t.shape()) {
    throw ShapeError("accumulate shape mismatch " + to_string(acc.shape()) + " vs " +
                     to_string(t.shape()));
  }
  auto dst = acc.data();
  auto src = t.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor slice(const Tensor& t, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, t.rank());
  const Shape& in = t.shape();
  if (begin >= end || end > in[ax]) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range on axis " + std::to_string(ax) + " of " + to_string(in));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < ax; ++k) outer *= in[k];
  for (std::size_t k = ax + 1; k < in.size(); ++k) inner *= in[k];
  Shape out_shape = in;
  out_shape[ax] = end - begin;
  Tensor out(out_shape);
  const std::size_t width = (end - begin) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = t.data().data() + (o * in[ax] + begin) * inner;
    std::copy(src, src + width, out.data().data() + o * width);
  }
  return out;
}

Tensor concat(std::span<const Tensor* const> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0]->shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const Tensor* p : parts) {
    const Shape& s = p->shape();
    bool ok = s.size() == first.size();
    for (std::size_t k = 0; ok && k < s.size(); ++k) ok = k == ax || s[k] == first[k];
    if (!ok) {
      throw ShapeError("concat shape mismatch: " + to_string(first) + " vs " + to_string(s));
    }
    out_shape[ax] += s[ax];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < ax; ++k) outer *= first[k];
  for (std::size_t k = ax + 1; k < first.size(); ++k) inner *= first[k];
  Tensor out(out_shape);
  double* dst = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (const Tensor* p : parts) {
      const std::size_t width = p->shape()[ax] * inner;
      const double* src = p->data().data() + o * width;
      dst = std::copy(src, src + width, dst);
    }
  }
  return out;
}

}  // namespace kernels
}  // namespace invclr::ad
