// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/ad/check.hpp"

#include <algorithm>
#include <cmath>

namespace invclr::ad {

JvpResult jvp(const Program& program, std::span<const Tensor> at,
              std::span<const Tensor> direction) {
  if (at.size() != direction.size()) {
    throw std::invalid_argument("jvp: " + std::to_string(direction.size()) +
                                " directions for " + std::to_string(at.size()) + " inputs");
  }
  std::vector<Var> inputs;
  std::vector<std::pair<Var, Var>> seeds;
  for (std::size_t i = 0; i < at.size(); ++i) {
    if (at[i].shape() != direction[i].shape()) {
      throw ShapeError("jvp: direction " + std::to_string(i) + " has shape " +
                       to_string(direction[i].shape()) + ", input has " +
                       to_string(at[i].shape()));
    }
    inputs.push_back(constant(at[i]));
    seeds.emplace_back(inputs.back(), constant(direction[i]));
  }
  Var value = program(inputs);
  return {value, tangent_of(value, seeds)};
}

std::vector<Tensor> numeric_gradient(const Program& program, std::span<const Tensor> at,
                                     double eps) {
  std::vector<Tensor> point(at.begin(), at.end());
  auto eval = [&] {
    std::vector<Var> in;
    for (const auto& t : point) in.push_back(constant(t));
    return program(in).value().item();
  };
  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < point.size(); ++i) {
    Tensor g(point[i].shape());
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double x0 = point[i][j];
      point[i][j] = x0 + eps;
      const double fp = eval();
      point[i][j] = x0 - eps;
      const double fm = eval();
      point[i][j] = x0;
      g[j] = (fp - fm) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double finite_diff_check(const Program& program, std::span<const Tensor> at, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  std::vector<Var> in;
  for (const auto& t : at) in.push_back(variable(t));
  const Gradients grads = backward(program(in));
  const auto numeric = numeric_gradient(program, at, eps);
  double worst = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Tensor analytic = grads.wrt(in[i]);
    for (std::size_t j = 0; j < analytic.size(); ++j) {
      const double err = std::abs(analytic[j] - numeric[i][j]) / (std::abs(numeric[i][j]) + eps);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace invclr::ad
