// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "invclr/ad/graph.hpp"

namespace invclr::ad {

/// A differentiable function of a list of input nodes.
using Program = std::function<Var(std::span<const Var>)>;

struct JvpResult {
  Var value;
  /// Directional derivative; differentiable with respect to any parameter
  /// leaves the program captured.
  Var derivative;
};

/// Evaluates `program` at `at` and its derivative along `direction`.
JvpResult jvp(const Program& program, std::span<const Tensor> at,
              std::span<const Tensor> direction);

/// Max over coordinates of |autodiff - central difference| / (|central| + eps)
/// for a scalar-valued program, stepping each input coordinate by eps.
double finite_diff_check(const Program& program, std::span<const Tensor> at, double eps);

/// Central-difference gradient of a scalar program, one tensor per input.
std::vector<Tensor> numeric_gradient(const Program& program, std::span<const Tensor> at,
                                     double eps);

}  // namespace invclr::ad
