// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "invclr/ad/graph.hpp"

namespace invclr::ad {

/// Named trainable tensors in insertion order.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t num_scalars() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  /// A store with the same names and shapes, all zeros.
  ParamStore zeros_like() const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Graph leaves for every entry of a ParamStore, valid for one graph build.
class BoundParams {
 public:
  explicit BoundParams(const ParamStore& store);

  const Var& operator[](const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& vars() const { return vars_; }

  /// Gradient of `root` for every bound parameter; zeros where unreachable.
  ParamStore gradients(const Gradients& grads) const;

 private:
  std::vector<std::pair<std::string, Var>> vars_;
};

/// Convenience: bind, then backward(root), returning per-parameter gradients.
ParamStore backward(const Var& root, const BoundParams& params);

}  // namespace invclr::ad
