// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/ad/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace invclr::ad {

namespace k = kernels;

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kRelu: return "relu";
    case OpKind::kSin: return "sin";
    case OpKind::kCos: return "cos";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kClamp01: return "clamp01";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kL2Norm: return "l2norm";
    case OpKind::kLogSumExp: return "logsumexp";
    case OpKind::kDot: return "dot";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kReshape: return "reshape";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kCustom: return "custom";
  }
  return "?";
}

namespace {

std::atomic<std::uint64_t> g_next_id{1};

std::size_t arity(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kMatmul:
    case OpKind::kDot:
      return 2;
    case OpKind::kConcat:
    case OpKind::kCustom:
    case OpKind::kLeaf:
      return 0;  // variable
    default:
      return 1;
  }
}

template <typename F>
Tensor map(const Tensor& a, F&& f) {
  Tensor out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F&& f) {
  Tensor out = a;
  auto o = out.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(o[i], bv[i]);
  return out;
}

// Shape of a reduction result with the reduced axis kept as extent 1.
Shape keepdim_shape(const Shape& in, std::optional<int> axis) {
  if (!axis) return Shape(in.size(), 1);
  Shape s = in;
  s[k::normalize_axis(*axis, in.size())] = 1;
  return s;
}

std::size_t reduced_count(const Shape& in, std::optional<int> axis) {
  if (!axis) return num_elements(in);
  return in[k::normalize_axis(*axis, in.size())];
}

Tensor reduce_out(const Tensor& t, const OpAttrs& at) {
  return k::reduce_sum(t, at.axis, at.keepdim);
}

// Expands a reduction result (or its gradient) back over the input shape.
Tensor expand_reduced(const Tensor& r, const Shape& in, std::optional<int> axis) {
  return k::broadcast_to(r.reshaped(keepdim_shape(in, axis)), in);
}

Tensor compute_forward(OpKind kind, const std::vector<Var>& in, const OpAttrs& at) {
  auto v = [&](std::size_t i) -> const Tensor& { return in[i].value(); };
  switch (kind) {
    case OpKind::kAdd: return k::binary(k::Binary::kAdd, v(0), v(1));
    case OpKind::kSub: return k::binary(k::Binary::kSub, v(0), v(1));
    case OpKind::kMul: return k::binary(k::Binary::kMul, v(0), v(1));
    case OpKind::kDiv: return k::binary(k::Binary::kDiv, v(0), v(1));
    case OpKind::kNeg: return map(v(0), [](double x) { return -x; });
    case OpKind::kMatmul: return k::matmul(v(0), v(1));
    case OpKind::kTranspose: return k::transpose(v(0));
    case OpKind::kRelu: return map(v(0), [](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::kSin: return map(v(0), [](double x) { return std::sin(x); });
    case OpKind::kCos: return map(v(0), [](double x) { return std::cos(x); });
    case OpKind::kExp: return map(v(0), [](double x) { return std::exp(x); });
    case OpKind::kLog:
      for (double x : v(0).data()) {
        if (!(x > 0.0)) throw std::domain_error("log of non-positive input " + std::to_string(x));
      }
      return map(v(0), [](double x) { return std::log(x); });
    case OpKind::kSquare: return map(v(0), [](double x) { return x * x; });
    case OpKind::kSqrt:
      for (double x : v(0).data()) {
        if (x < 0.0) throw std::domain_error("sqrt of negative input " + std::to_string(x));
      }
      return map(v(0), [](double x) { return std::sqrt(x); });
    case OpKind::kClamp01: return map(v(0), [](double x) { return std::clamp(x, 0.0, 1.0); });
    case OpKind::kSum: return reduce_out(v(0), at);
    case OpKind::kMean:
      return k::scale(reduce_out(v(0), at), 1.0 / static_cast<double>(reduced_count(v(0).shape(), at.axis)));
    case OpKind::kL2Norm:
      return map(reduce_out(map(v(0), [](double x) { return x * x; }), at),
                 [](double x) { return std::sqrt(x); });
    case OpKind::kLogSumExp: {
      const Tensor& a = v(0);
      Shape ks = keepdim_shape(a.shape(), at.axis);
      // Per-slice maximum for stabilization.
      Tensor mx(ks, -std::numeric_limits<double>::infinity());
      if (!at.axis) {
        for (double x : a.data()) mx[0] = std::max(mx[0], x);
      } else {
        const std::size_t ax = k::normalize_axis(*at.axis, a.rank());
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < ax; ++i) outer *= a.shape()[i];
        for (std::size_t i = ax + 1; i < a.rank(); ++i) inner *= a.shape()[i];
        const std::size_t n = a.shape()[ax];
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < inner; ++i) {
              double& m = mx[o * inner + i];
              m = std::max(m, a[(o * n + j) * inner + i]);
            }
          }
        }
      }
      Tensor shifted = k::binary(k::Binary::kSub, a, mx);
      for (double& x : shifted.data()) x = std::exp(x);
      Tensor s = k::reduce_sum(shifted, at.axis, true);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::log(s[i]) + mx[i];
      if (at.keepdim) return s;
      if (!at.axis) return Tensor::scalar(s[0]);
      Shape out = a.shape();
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(k::normalize_axis(*at.axis, a.rank())));
      return s.reshaped(out);
    }
    case OpKind::kDot: {
      if (v(0).shape() != v(1).shape()) {
        throw ShapeError("dot operands differ: " + to_string(v(0).shape()) + " vs " +
                         to_string(v(1).shape()));
      }
      double s = 0.0;
      for (std::size_t i = 0; i < v(0).size(); ++i) s += v(0)[i] * v(1)[i];
      return Tensor::scalar(s);
    }
    case OpKind::kConcat: {
      std::vector<const Tensor*> parts;
      parts.reserve(in.size());
      for (const auto& p : in) parts.push_back(&p.value());
      return k::concat(parts, *at.axis);
    }
    case OpKind::kSlice: return k::slice(v(0), *at.axis, at.begin, at.end);
    case OpKind::kReshape: return v(0).reshaped(at.shape);
    case OpKind::kBroadcast: return k::broadcast_to(v(0), at.shape);
    case OpKind::kLeaf:
    case OpKind::kCustom:
      break;
  }
  throw std::logic_error(std::string("no forward rule for ") + op_name(kind));
}

Var make_node(OpKind kind, std::vector<Var> parents, OpAttrs attrs, Tensor value,
              std::shared_ptr<CustomOp> custom = nullptr) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->kind = kind;
  node->attrs = std::move(attrs);
  node->custom = std::move(custom);
  node->requires_grad =
      std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  node->parents = std::move(parents);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return Var(std::move(node));
}

Tensor relu_mask(const Tensor& a) {
  return map(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_mask(const Tensor& a) {
  return map(a, [](double x) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; });
}

// Vector-Jacobian products for the built-in ops. Returns one entry per
// parent; entries for parents that do not require gradients may be empty.
std::vector<std::optional<Tensor>> vjp(const Node& n, const Tensor& g) {
  const auto& P = n.parents;
  auto want = [&](std::size_t i) { return P[i].requires_grad(); };
  auto pv = [&](std::size_t i) -> const Tensor& { return P[i].value(); };
  std::vector<std::optional<Tensor>> out(P.size());
  switch (n.kind) {
    case OpKind::kAdd:
      if (want(0)) out[0] = k::sum_to(g, pv(0).shape());
      if (want(1)) out[1] = k::sum_to(g, pv(1).shape());
      break;
    case OpKind::kSub:
      if (want(0)) out[0] = k::sum_to(g, pv(0).shape());
      if (want(1)) out[1] = k::scale(k::sum_to(g, pv(1).shape()), -1.0);
      break;
    case OpKind::kMul:
      if (want(0)) out[0] = k::sum_to(k::binary(k::Binary::kMul, g, pv(1)), pv(0).shape());
      if (want(1)) out[1] = k::sum_to(k::binary(k::Binary::kMul, g, pv(0)), pv(1).shape());
      break;
    case OpKind::kDiv:
      if (want(0)) out[0] = k::sum_to(k::binary(k::Binary::kDiv, g, pv(1)), pv(0).shape());
      if (want(1)) {
        Tensor t = k::binary(k::Binary::kMul, g, n.value);
        t = k::binary(k::Binary::kDiv, t, pv(1));
        out[1] = k::scale(k::sum_to(t, pv(1).shape()), -1.0);
      }
      break;
    case OpKind::kNeg:
      out[0] = k::scale(g, -1.0);
      break;
    case OpKind::kMatmul:
      if (want(0)) out[0] = k::matmul(g, pv(1), false, true);
      if (want(1)) out[1] = k::matmul(pv(0), g, true, false);
      break;
    case OpKind::kTranspose:
      out[0] = k::transpose(g);
      break;
    case OpKind::kRelu:
      out[0] = zip(g, pv(0), [](double gi, double x) { return x > 0.0 ? gi : 0.0; });
      break;
    case OpKind::kSin:
      out[0] = zip(g, pv(0), [](double gi, double x) { return gi * std::cos(x); });
      break;
    case OpKind::kCos:
      out[0] = zip(g, pv(0), [](double gi, double x) { return -gi * std::sin(x); });
      break;
    case OpKind::kExp:
      out[0] = zip(g, n.value, [](double gi, double y) { return gi * y; });
      break;
    case OpKind::kLog:
      out[0] = zip(g, pv(0), [](double gi, double x) { return gi / x; });
      break;
    case OpKind::kSquare:
      out[0] = zip(g, pv(0), [](double gi, double x) { return 2.0 * gi * x; });
      break;
    case OpKind::kSqrt:
      out[0] = zip(g, n.value, [](double gi, double y) { return gi / (2.0 * y); });
      break;
    case OpKind::kClamp01:
      out[0] = zip(g, pv(0), [](double gi, double x) { return (x > 0.0 && x < 1.0) ? gi : 0.0; });
      break;
    case OpKind::kSum:
      out[0] = expand_reduced(g, pv(0).shape(), n.attrs.axis);
      break;
    case OpKind::kMean:
      out[0] = k::scale(expand_reduced(g, pv(0).shape(), n.attrs.axis),
                        1.0 / static_cast<double>(reduced_count(pv(0).shape(), n.attrs.axis)));
      break;
    case OpKind::kL2Norm: {
      const Shape& s = pv(0).shape();
      Tensor ge = expand_reduced(g, s, n.attrs.axis);
      Tensor ne = expand_reduced(n.value, s, n.attrs.axis);
      Tensor r = pv(0);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = ne[i] > 0.0 ? ge[i] * r[i] / ne[i] : 0.0;
      out[0] = std::move(r);
      break;
    }
    case OpKind::kLogSumExp: {
      const Shape& s = pv(0).shape();
      Tensor ge = expand_reduced(g, s, n.attrs.axis);
      Tensor le = expand_reduced(n.value, s, n.attrs.axis);
      Tensor r = pv(0);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = ge[i] * std::exp(r[i] - le[i]);
      out[0] = std::move(r);
      break;
    }
    case OpKind::kDot: {
      const double gs = g.item();
      if (want(0)) out[0] = k::scale(pv(1), gs);
      if (want(1)) out[1] = k::scale(pv(0), gs);
      break;
    }
    case OpKind::kConcat: {
      const std::size_t ax = k::normalize_axis(*n.attrs.axis, n.value.rank());
      std::size_t begin = 0;
      for (std::size_t i = 0; i < P.size(); ++i) {
        const std::size_t w = pv(i).shape()[ax];
        if (want(i)) out[i] = k::slice(g, static_cast<int>(ax), begin, begin + w);
        begin += w;
      }
      break;
    }
    case OpKind::kSlice: {
      const Shape& s = pv(0).shape();
      const std::size_t ax = k::normalize_axis(*n.attrs.axis, s.size());
      std::size_t outer = 1, inner = 1;
      for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
      for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
      Tensor r(s);
      const std::size_t w = (n.attrs.end - n.attrs.begin) * inner;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = g.data().data() + o * w;
        std::copy(src, src + w, r.data().data() + (o * s[ax] + n.attrs.begin) * inner);
      }
      out[0] = std::move(r);
      break;
    }
    case OpKind::kReshape:
      out[0] = g.reshaped(pv(0).shape());
      break;
    case OpKind::kBroadcast:
      out[0] = k::sum_to(g, pv(0).shape());
      break;
    case OpKind::kCustom: {
      std::vector<const Tensor*> ins;
      for (const auto& p : P) ins.push_back(&p.value());
      auto gs = n.custom->vjp(ins, n.value, g);
      for (std::size_t i = 0; i < P.size(); ++i) {
        if (want(i)) out[i] = std::move(gs.at(i));
      }
      break;
    }
    case OpKind::kLeaf:
      break;
  }
  return out;
}

Var broadcast_if_needed(const Var& t, const Shape& shape) {
  return t.shape() == shape ? t : broadcast_to(t, shape);
}

// Tangent of node `self` given its parents' tangents (null Var = no tangent).
Var tangent_rule(const Var& self, const std::vector<Var>& tp) {
  const Node& n = self.node();
  const auto& P = n.parents;
  const Shape& out_shape = self.shape();
  auto has = [&](std::size_t i) { return static_cast<bool>(tp[i]); };
  switch (n.kind) {
    case OpKind::kAdd:
      if (has(0) && has(1)) return broadcast_if_needed(tp[0] + tp[1], out_shape);
      return broadcast_if_needed(has(0) ? tp[0] : tp[1], out_shape);
    case OpKind::kSub:
      if (has(0) && has(1)) return broadcast_if_needed(tp[0] - tp[1], out_shape);
      return has(0) ? broadcast_if_needed(tp[0], out_shape)
                    : broadcast_if_needed(neg(tp[1]), out_shape);
    case OpKind::kMul: {
      Var r;
      if (has(0)) r = tp[0] * P[1];
      if (has(1)) r = r ? r + P[0] * tp[1] : P[0] * tp[1];
      return broadcast_if_needed(r, out_shape);
    }
    case OpKind::kDiv: {
      Var num;
      if (has(0)) num = tp[0];
      if (has(1)) num = num ? num - self * tp[1] : neg(self * tp[1]);
      return broadcast_if_needed(num / P[1], out_shape);
    }
    case OpKind::kNeg: return neg(tp[0]);
    case OpKind::kMatmul: {
      Var r;
      if (has(0)) r = matmul(tp[0], P[1]);
      if (has(1)) r = r ? r + matmul(P[0], tp[1]) : matmul(P[0], tp[1]);
      return r;
    }
    case OpKind::kTranspose: return transpose(tp[0]);
    case OpKind::kRelu: return tp[0] * constant(relu_mask(P[0].value()));
    case OpKind::kSin: return tp[0] * cos(P[0]);
    case OpKind::kCos: return neg(tp[0] * sin(P[0]));
    case OpKind::kExp: return tp[0] * self;
    case OpKind::kLog: return tp[0] / P[0];
    case OpKind::kSquare: return scale(tp[0] * P[0], 2.0);
    case OpKind::kSqrt: return scale(tp[0] / self, 0.5);
    case OpKind::kClamp01: return tp[0] * constant(clamp_mask(P[0].value()));
    case OpKind::kSum: return sum(tp[0], n.attrs.axis, n.attrs.keepdim);
    case OpKind::kMean: return mean(tp[0], n.attrs.axis, n.attrs.keepdim);
    case OpKind::kL2Norm:
      return sum(P[0] * tp[0], n.attrs.axis, n.attrs.keepdim) / self;
    case OpKind::kLogSumExp: {
      Var lse = reshape(self, keepdim_shape(P[0].shape(), n.attrs.axis));
      Var softmax = exp(P[0] - lse);
      return sum(softmax * tp[0], n.attrs.axis, n.attrs.keepdim);
    }
    case OpKind::kDot: {
      Var r;
      if (has(0)) r = dot(tp[0], P[1]);
      if (has(1)) r = r ? r + dot(P[0], tp[1]) : dot(P[0], tp[1]);
      return r;
    }
    case OpKind::kConcat: {
      std::vector<Var> parts;
      parts.reserve(P.size());
      for (std::size_t i = 0; i < P.size(); ++i) {
        parts.push_back(has(i) ? tp[i] : constant(Tensor::zeros(P[i].shape())));
      }
      return concat(parts, *n.attrs.axis);
    }
    case OpKind::kSlice: return slice(tp[0], *n.attrs.axis, n.attrs.begin, n.attrs.end);
    case OpKind::kReshape: return reshape(tp[0], n.attrs.shape);
    case OpKind::kBroadcast: return broadcast_to(tp[0], n.attrs.shape);
    case OpKind::kCustom: {
      std::vector<const Tensor*> ins;
      std::vector<const Tensor*> tans;
      for (std::size_t i = 0; i < P.size(); ++i) {
        ins.push_back(&P[i].value());
        tans.push_back(has(i) ? &tp[i].value() : nullptr);
      }
      return constant(n.custom->jvp(ins, n.value, tans));
    }
    case OpKind::kLeaf:
      break;
  }
  throw std::logic_error(std::string("no tangent rule for ") + op_name(n.kind));
}

std::vector<Var> topo_vars(const Var& root) {
  std::vector<Var> order;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS: (var, next parent index).
  std::vector<std::pair<Var, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [v, next] = stack.back();
    const auto& parents = v.node().parents;
    if (next < parents.size()) {
      const Var& p = parents[next++];
      if (visited.insert(p.get()).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(v);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

Var constant(Tensor value) { return make_node(OpKind::kLeaf, {}, {}, std::move(value)); }
Var constant(double value) { return constant(Tensor::scalar(value)); }

Var variable(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return Var(std::move(node));
}

Var forward_op(OpKind kind, std::vector<Var> inputs, OpAttrs attrs) {
  if (kind == OpKind::kLeaf || kind == OpKind::kCustom) {
    throw std::invalid_argument(std::string("forward_op cannot build ") + op_name(kind));
  }
  const std::size_t want = arity(kind);
  if (want != 0 && inputs.size() != want) {
    throw std::invalid_argument(std::string(op_name(kind)) + " expects " + std::to_string(want) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  if (inputs.empty()) throw std::invalid_argument(std::string(op_name(kind)) + " needs inputs");
  for (const auto& v : inputs) {
    if (!v) throw std::invalid_argument(std::string(op_name(kind)) + " given a null input");
  }
  if ((kind == OpKind::kConcat || kind == OpKind::kSlice) && !attrs.axis) {
    throw std::invalid_argument(std::string(op_name(kind)) + " requires an axis");
  }
  Tensor value = compute_forward(kind, inputs, attrs);
  return make_node(kind, std::move(inputs), std::move(attrs), std::move(value));
}

Var custom_op(std::shared_ptr<CustomOp> op, std::vector<Var> inputs) {
  std::vector<const Tensor*> ins;
  ins.reserve(inputs.size());
  for (const auto& v : inputs) ins.push_back(&v.value());
  Tensor value = op->forward(ins);
  return make_node(OpKind::kCustom, std::move(inputs), {}, std::move(value), std::move(op));
}

Var add(const Var& a, const Var& b) { return forward_op(OpKind::kAdd, {a, b}); }
Var sub(const Var& a, const Var& b) { return forward_op(OpKind::kSub, {a, b}); }
Var mul(const Var& a, const Var& b) { return forward_op(OpKind::kMul, {a, b}); }
Var div(const Var& a, const Var& b) { return forward_op(OpKind::kDiv, {a, b}); }
Var neg(const Var& a) { return forward_op(OpKind::kNeg, {a}); }
Var matmul(const Var& a, const Var& b) { return forward_op(OpKind::kMatmul, {a, b}); }
Var transpose(const Var& a) { return forward_op(OpKind::kTranspose, {a}); }
Var relu(const Var& a) { return forward_op(OpKind::kRelu, {a}); }
Var sin(const Var& a) { return forward_op(OpKind::kSin, {a}); }
Var cos(const Var& a) { return forward_op(OpKind::kCos, {a}); }
Var exp(const Var& a) { return forward_op(OpKind::kExp, {a}); }
Var log(const Var& a) { return forward_op(OpKind::kLog, {a}); }
Var square(const Var& a) { return forward_op(OpKind::kSquare, {a}); }
Var sqrt(const Var& a) { return forward_op(OpKind::kSqrt, {a}); }
Var clamp01(const Var& a) { return forward_op(OpKind::kClamp01, {a}); }

Var sum(const Var& a, std::optional<int> axis, bool keepdim) {
  return forward_op(OpKind::kSum, {a}, OpAttrs{.axis = axis, .keepdim = keepdim});
}
Var mean(const Var& a, std::optional<int> axis, bool keepdim) {
  return forward_op(OpKind::kMean, {a}, OpAttrs{.axis = axis, .keepdim = keepdim});
}
Var l2norm(const Var& a, std::optional<int> axis, bool keepdim) {
  return forward_op(OpKind::kL2Norm, {a}, OpAttrs{.axis = axis, .keepdim = keepdim});
}
Var logsumexp(const Var& a, std::optional<int> axis, bool keepdim) {
  return forward_op(OpKind::kLogSumExp, {a}, OpAttrs{.axis = axis, .keepdim = keepdim});
}
Var dot(const Var& a, const Var& b) { return forward_op(OpKind::kDot, {a, b}); }
Var concat(const std::vector<Var>& parts, int axis) {
  return forward_op(OpKind::kConcat, parts, OpAttrs{.axis = axis});
}
Var slice(const Var& a, int axis, std::size_t begin, std::size_t end) {
  return forward_op(OpKind::kSlice, {a}, OpAttrs{.axis = axis, .begin = begin, .end = end});
}
Var reshape(const Var& a, Shape shape) {
  return forward_op(OpKind::kReshape, {a}, OpAttrs{.shape = std::move(shape)});
}
Var broadcast_to(const Var& a, Shape shape) {
  return forward_op(OpKind::kBroadcast, {a}, OpAttrs{.shape = std::move(shape)});
}

Var scale(const Var& a, double s) { return mul(a, constant(s)); }
Var add_scalar(const Var& a, double s) { return add(a, constant(s)); }

std::vector<const Node*> topological_order(const Var& root) {
  std::vector<const Node*> out;
  for (const auto& v : topo_vars(root)) out.push_back(v.get());
  return out;
}

Tensor Gradients::wrt(const Var& v) const {
  if (const Tensor* t = find(v.get())) return *t;
  return Tensor::zeros(v.shape());
}

const Tensor* Gradients::find(const Node* n) const {
  auto it = grads_.find(n);
  return it == grads_.end() ? nullptr : &it->second;
}

Gradients backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward of a null root");
  if (root.value().size() != 1) {
    throw ShapeError("backward requires a scalar root, got shape " + to_string(root.shape()));
  }
  Gradients result;
  if (!root.requires_grad()) return result;
  const auto order = topo_vars(root);
  std::unordered_map<const Node*, Tensor> pending;
  pending.emplace(root.get(), Tensor(root.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node& n = it->node();
    if (!n.requires_grad) continue;
    auto gi = pending.find(&n);
    if (gi == pending.end()) continue;
    if (n.kind == OpKind::kLeaf) {
      result.grads_.emplace(&n, std::move(gi->second));
      pending.erase(gi);
      continue;
    }
    Tensor g = std::move(gi->second);
    pending.erase(gi);
    auto parent_grads = vjp(n, g);
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      if (!parent_grads[i]) continue;
      const Node* p = n.parents[i].get();
      auto [slot, inserted] = pending.try_emplace(p, std::move(*parent_grads[i]));
      if (!inserted) k::add_inplace(slot->second, *parent_grads[i]);
    }
  }
  return result;
}

Var tangent_of(const Var& output, const std::vector<std::pair<Var, Var>>& seeds) {
  std::unordered_map<const Node*, Var> tangents;
  for (const auto& [input, t] : seeds) {
    if (input.shape() != t.shape()) {
      throw ShapeError("tangent shape " + to_string(t.shape()) + " does not match input shape " +
                       to_string(input.shape()));
    }
    tangents[input.get()] = t;
  }
  for (const auto& v : topo_vars(output)) {
    const Node& n = v.node();
    if (n.kind == OpKind::kLeaf || tangents.count(&n)) continue;
    std::vector<Var> tp(n.parents.size());
    bool any = false;
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      auto it = tangents.find(n.parents[i].get());
      if (it != tangents.end()) {
        tp[i] = it->second;
        any = true;
      }
    }
    if (any) tangents.emplace(&n, tangent_rule(v, tp));
  }
  auto it = tangents.find(output.get());
  if (it == tangents.end()) return constant(Tensor::zeros(output.shape()));
  return it->second;
}

}  // namespace invclr::ad
