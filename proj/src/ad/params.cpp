// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/ad/params.hpp"

#include <algorithm>
#include <stdexcept>

namespace invclr::ad {

void ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

Tensor& ParamStore::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [n, t] : entries_) out.add(n, Tensor::zeros(t.shape()));
  return out;
}

BoundParams::BoundParams(const ParamStore& store) {
  vars_.reserve(store.size());
  for (const auto& [n, t] : store) vars_.emplace_back(n, variable(t, n));
}

const Var& BoundParams::operator[](const std::string& name) const {
  for (const auto& [n, v] : vars_) {
    if (n == name) return v;
  }
  throw std::out_of_range("unbound parameter: " + name);
}

ParamStore BoundParams::gradients(const Gradients& grads) const {
  ParamStore out;
  for (const auto& [n, v] : vars_) out.add(n, grads.wrt(v));
  return out;
}

ParamStore backward(const Var& root, const BoundParams& params) {
  return params.gradients(backward(root));
}

}  // namespace invclr::ad
