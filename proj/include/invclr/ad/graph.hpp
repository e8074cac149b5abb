// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "invclr/ad/tensor.hpp"

namespace invclr::ad {

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kMatmul,
  kTranspose,
  kRelu,
  kSin,
  kCos,
  kExp,
  kLog,
  kSquare,
  kSqrt,
  kClamp01,
  kSum,
  kMean,
  kL2Norm,
  kLogSumExp,
  kDot,
  kConcat,
  kSlice,
  kReshape,
  kBroadcast,
  kCustom,
};

const char* op_name(OpKind kind);

/// Per-op parameters. Reductions use `axis` (nullopt reduces everything).
struct OpAttrs {
  std::optional<int> axis;
  bool keepdim = false;
  Shape shape;  // reshape / broadcast target
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Var;

/// A differentiable primitive defined outside the built-in op set.
///
/// The tangent it produces is treated as a constant by the graph, so
/// forward-over-reverse composition does not differentiate through the
/// op's own Jacobian. This is sufficient when the op only sees data that
/// does not depend on trainable parameters.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual const char* name() const = 0;
  virtual Tensor forward(std::span<const Tensor* const> inputs) = 0;
  virtual std::vector<Tensor> vjp(std::span<const Tensor* const> inputs, const Tensor& output,
                                  const Tensor& grad_output) const = 0;
  /// `tangents[i]` is null when input i carries no tangent.
  virtual Tensor jvp(std::span<const Tensor* const> inputs, const Tensor& output,
                     std::span<const Tensor* const> tangents) const = 0;
};

struct Node {
  Tensor value;
  OpKind kind = OpKind::kLeaf;
  std::vector<Var> parents;
  OpAttrs attrs;
  std::shared_ptr<CustomOp> custom;
  bool requires_grad = false;
  std::string name;  // set for named parameter leaves
  std::uint64_t id = 0;
};

/// Handle to an immutable graph node. Graphs are freed when the last handle
/// to their root goes away.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Node& node() const { return *node_; }
  const Node* get() const { return node_.get(); }
  bool requires_grad() const { return node_->requires_grad; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<const Node> node_;
};

// Leaves.
Var constant(Tensor value);
Var constant(double value);
/// A leaf that gradients flow to. `name` may be empty.
Var variable(Tensor value, std::string name = {});

/// Generic entry point: builds a node of `kind` over `inputs`.
Var forward_op(OpKind kind, std::vector<Var> inputs, OpAttrs attrs = {});
Var custom_op(std::shared_ptr<CustomOp> op, std::vector<Var> inputs);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var relu(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var clamp01(const Var& a);
Var sum(const Var& a, std::optional<int> axis = std::nullopt, bool keepdim = false);
Var mean(const Var& a, std::optional<int> axis = std::nullopt, bool keepdim = false);
Var l2norm(const Var& a, std::optional<int> axis = std::nullopt, bool keepdim = false);
Var logsumexp(const Var& a, std::optional<int> axis = std::nullopt, bool keepdim = false);
Var dot(const Var& a, const Var& b);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& a, int axis, std::size_t begin, std::size_t end);
Var reshape(const Var& a, Shape shape);
Var broadcast_to(const Var& a, Shape shape);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

/// Nodes reachable from `root`, parents before children.
std::vector<const Node*> topological_order(const Var& root);

/// Result of a reverse pass: gradients of a scalar root keyed by node.
class Gradients {
 public:
  /// Gradient with respect to `v`; zeros when `v` is unreachable.
  Tensor wrt(const Var& v) const;
  const Tensor* find(const Node* n) const;

 private:
  friend Gradients backward(const Var& root);
  std::unordered_map<const Node*, Tensor> grads_;
};

/// Reverse-mode gradient of a scalar-shaped `root`.
Gradients backward(const Var& root);

/// Forward-mode propagation over an already-built graph. `seeds` pairs input
/// nodes with tangent nodes of the same shape; the tangent of `output` is
/// returned as a graph node, so it can itself be differentiated by
/// backward(). Returns a zero constant when no seed reaches `output`.
Var tangent_of(const Var& output, const std::vector<std::pair<Var, Var>>& seeds);

}  // namespace invclr::ad
