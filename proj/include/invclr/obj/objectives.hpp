// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>

#include "invclr/ad/graph.hpp"
#include "invclr/rng.hpp"

namespace invclr::obj {

using ad::Tensor;
using ad::Var;

/// A batch-to-batch differentiable map (e.g. the projection head).
using Map = std::function<Var(const Var&)>;

struct SimilarityConfig {
  double tau = 0.5;
  void validate() const;
};

struct RegConfig {
  double lambda = 0.01;
  std::size_t L = 100;
  double clip = 1000.0;
  void validate() const;
};

/// K x K matrix of cosine similarities between rows of a and b, over tau.
/// Throws std::domain_error if any row has zero norm.
Var similarity_matrix(const Var& a, const Var& b, double tau);

/// Row-wise s(z_i, z'_i) for K x d inputs; returns a K vector.
Var similarity(const Var& z, const Var& zp, const Map& head, const SimilarityConfig& cfg);

/// Contrastive loss over K positive pairs (rows of z and zp).
Var infonce(const Var& z, const Var& zp, const Map& head, const SimilarityConfig& cfg);

/// e_i . z_i / |z_i| for each row; z and e are K x d, result has K entries.
Var scalar_projection(const Var& z, const Tensor& e);

/// K x d matrix of independent +-1 entries.
Tensor sample_rademacher(std::size_t k, std::size_t dim, Rng& rng);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;  // across the K outer samples
};

/// Bessel-corrected nested Monte Carlo variance from a K x L matrix of F
/// values (row i holds F at L fresh alphas with x, beta, e fixed).
Estimate condvar_estimate(const Tensor& f);

/// Builds the K x L matrix column by column and applies condvar_estimate.
/// `column(j)` returns F at the j-th inner alpha draw for every outer sample.
Estimate nested_mc_condvar(const std::function<Tensor(std::size_t j)>& column, std::size_t L);

enum class PenaltyRoute {
  /// One tangent per alpha coordinate; directional derivatives follow by
  /// linearity. Cheapest when L exceeds the alpha dimension.
  kBasis,
  /// One tangent per inner sample j (each direction alpha'_j - alpha).
  kPerDirection,
};

struct Penalty {
  Var value;         // the estimator, differentiable in parameters upstream of f
  double raw = 0.0;  // same number as value
};

/// Gradient-penalty estimator
///   (1/K) sum_i (1/2L) sum_j [grad_alpha F_i . (alpha'_ij - alpha_i)]^2
/// where `f` (K entries) was built from the constant node `alpha` (K x A)
/// and `alpha_prime` is K x L x A. Throws std::invalid_argument if f does
/// not depend on alpha through the graph.
Penalty grad_penalty(const Var& f, const Var& alpha, const Tensor& alpha_prime,
                     PenaltyRoute route = PenaltyRoute::kBasis);

struct PenaltyInputs {
  Var alpha;           // K x A linearisation point used to build the first view
  Tensor alpha_prime;  // K x L x A
  Tensor e;            // K x d Rademacher directions
  PenaltyRoute route = PenaltyRoute::kBasis;
};

struct LossParts {
  Var total;
  double infonce = 0.0;
  /// The term multiplied by lambda, (1/LK) sum_ij [.]^2, before clipping.
  /// Empty when lambda is zero and the penalty was skipped.
  std::optional<double> penalty;
  bool clipped = false;
};

/// infonce(z1, z2) + lambda * min(penalty term, clip). z1 must be the
/// representation of the first view rendered at `pen.alpha`.
LossParts full_loss(const Var& z1, const Var& z2, const Map& head, const SimilarityConfig& sim,
                    const RegConfig& reg, const PenaltyInputs& pen);

/// (1 / 2n^2) sum_ij (F_i - F_j)^2, evaluated pairwise.
double pairwise_variance(std::span<const double> f);
/// (1/n) sum_i (F_i - mean)^2.
double population_variance(std::span<const double> f);
/// Mean of e^T S e over all 2^d sign vectors e; d <= 20.
double rademacher_quadratic_mean(const Tensor& sigma);

}  // namespace invclr::obj
