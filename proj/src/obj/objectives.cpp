// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/obj/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace invclr::obj {

namespace {

using ad::Shape;

Var normalize_rows(const Var& a, const char* what) {
  if (a.shape().size() != 2) {
    throw ad::ShapeError(std::string(what) + ": expected K x d, got " +
                         ad::to_string(a.shape()));
  }
  Var norm = ad::l2norm(a, 1, true);
  for (std::size_t i = 0; i < norm.value().size(); ++i) {
    if (norm.value()[i] == 0.0) {
      throw std::domain_error(std::string(what) + ": row " + std::to_string(i) +
                              " has zero norm; cosine similarity is undefined");
    }
  }
  return a / norm;
}

}  // namespace

void SimilarityConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("similarity.tau must be positive");
}

void RegConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("reg.lambda must be >= 0");
  if (L < 1) throw std::invalid_argument("reg.L must be >= 1");
  if (!(clip > 0.0)) throw std::invalid_argument("reg.clip must be positive");
}

Var similarity_matrix(const Var& a, const Var& b, double tau) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[1]) {
    throw ad::ShapeError("similarity_matrix: incompatible shapes " + ad::to_string(a.shape()) +
                         " and " + ad::to_string(b.shape()));
  }
  return ad::scale(ad::matmul(normalize_rows(a, "similarity"),
                              ad::transpose(normalize_rows(b, "similarity"))),
                   1.0 / tau);
}

Var similarity(const Var& z, const Var& zp, const Map& head, const SimilarityConfig& cfg) {
  cfg.validate();
  if (z.shape() != zp.shape()) {
    throw ad::ShapeError("similarity: shapes differ, " + ad::to_string(z.shape()) + " vs " +
                         ad::to_string(zp.shape()));
  }
  Var a = normalize_rows(head(z), "similarity");
  Var b = normalize_rows(head(zp), "similarity");
  return ad::scale(ad::sum(a * b, 1), 1.0 / cfg.tau);
}

Var infonce(const Var& z, const Var& zp, const Map& head, const SimilarityConfig& cfg) {
  cfg.validate();
  if (z.shape() != zp.shape() || z.shape().size() != 2) {
    throw ad::ShapeError("infonce: expected matching K x d inputs, got " +
                         ad::to_string(z.shape()) + " and " + ad::to_string(zp.shape()));
  }
  const std::size_t k = z.shape()[0];
  Var s = similarity_matrix(head(z), head(zp), cfg.tau);
  Tensor eye(Shape{k, k});
  for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
  Var positive = ad::sum(s * ad::constant(eye), 1);
  return ad::mean(ad::logsumexp(s, 1)) - ad::mean(positive);
}

Var scalar_projection(const Var& z, const Tensor& e) {
  if (z.shape() != e.shape()) {
    throw ad::ShapeError("scalar_projection: z is " + ad::to_string(z.shape()) + ", e is " +
                         ad::to_string(e.shape()));
  }
  Var zn = normalize_rows(z, "scalar_projection");
  return ad::sum(zn * ad::constant(e), 1);
}

Tensor sample_rademacher(std::size_t k, std::size_t dim, Rng& rng) {
  Tensor e(Shape{k, dim});
  for (double& v : e.data()) v = rng.rademacher();
  return e;
}

Estimate condvar_estimate(const Tensor& f) {
  if (f.rank() != 2) throw ad::ShapeError("condvar_estimate: expected K x L");
  const std::size_t k = f.dim(0), l = f.dim(1);
  if (l < 2) throw std::invalid_argument("condvar_estimate: need L >= 2 for Bessel's correction");
  std::vector<double> v(k);
  for (std::size_t i = 0; i < k; ++i) {
    // Shifting by the row's first value makes constant rows exactly zero.
    const double x0 = f[i * l];
    double s = 0.0, ss = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      const double dx = f[i * l + j] - x0;
      s += dx;
      ss += dx * dx;
    }
    ss -= s * s / static_cast<double>(l);
    v[i] = ss / static_cast<double>(l - 1);
  }
  Estimate out;
  for (double x : v) out.value += x;
  out.value /= static_cast<double>(k);
  if (k > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.value) * (x - out.value);
    out.std_error = std::sqrt(ss / static_cast<double>(k - 1) / static_cast<double>(k));
  }
  return out;
}

Estimate nested_mc_condvar(const std::function<Tensor(std::size_t j)>& column, std::size_t L) {
  if (L < 2) throw std::invalid_argument("nested_mc_condvar: need L >= 2 for Bessel's correction");
  Tensor first = column(0);
  const std::size_t k = first.size();
  Tensor f(Shape{k, L});
  for (std::size_t j = 0; j < L; ++j) {
    Tensor c = j == 0 ? first : column(j);
    if (c.size() != k) throw ad::ShapeError("nested_mc_condvar: column sizes differ");
    for (std::size_t i = 0; i < k; ++i) f[i * L + j] = c[i];
  }
  return condvar_estimate(f);
}

Penalty grad_penalty(const Var& f, const Var& alpha, const Tensor& alpha_prime,
                     PenaltyRoute route) {
  const Shape& as = alpha.shape();
  if (as.size() != 2 || f.shape() != Shape{as[0]} || alpha_prime.rank() != 3 ||
      alpha_prime.dim(0) != as[0] || alpha_prime.dim(2) != as[1]) {
    throw ad::ShapeError("grad_penalty: need f [K], alpha [K, A], alpha' [K, L, A]; got " +
                         ad::to_string(f.shape()) + ", " + ad::to_string(as) + ", " +
                         ad::to_string(alpha_prime.shape()));
  }
  const auto order = ad::topological_order(f);
  if (std::find(order.begin(), order.end(), alpha.get()) == order.end()) {
    throw std::invalid_argument("grad_penalty: F does not depend on alpha through the graph");
  }
  const std::size_t k = as[0], a = as[1], l = alpha_prime.dim(1);
  Tensor d(alpha_prime.shape());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      for (std::size_t c = 0; c < a; ++c) {
        d[(i * l + j) * a + c] = alpha_prime[(i * l + j) * a + c] - alpha.value()[i * a + c];
      }
    }
  }
  const double norm = 1.0 / (2.0 * static_cast<double>(l) * static_cast<double>(k));
  Var total;
  if (route == PenaltyRoute::kBasis) {
    std::vector<Var> cols;
    for (std::size_t c = 0; c < a; ++c) {
      Tensor basis(Shape{k, a});
      for (std::size_t i = 0; i < k; ++i) basis[i * a + c] = 1.0;
      cols.push_back(ad::reshape(ad::tangent_of(f, {{alpha, ad::constant(std::move(basis))}}),
                                 {k, 1}));
    }
    Var grad = a == 1 ? cols[0] : ad::concat(cols, 1);
    Var dd = ad::sum(ad::reshape(grad, {k, 1, a}) * ad::constant(d), 2);
    total = ad::sum(ad::square(dd));
  } else {
    for (std::size_t j = 0; j < l; ++j) {
      Tensor dj(Shape{k, a});
      for (std::size_t i = 0; i < k; ++i) {
        std::copy_n(d.data().begin() + (i * l + j) * a, a, dj.data().begin() + i * a);
      }
      Var t = ad::sum(ad::square(ad::tangent_of(f, {{alpha, ad::constant(std::move(dj))}})));
      total = j == 0 ? t : total + t;
    }
  }
  Var value = ad::scale(total, norm);
  return {value, value.value().item()};
}

LossParts full_loss(const Var& z1, const Var& z2, const Map& head, const SimilarityConfig& sim,
                    const RegConfig& reg, const PenaltyInputs& pen) {
  reg.validate();
  LossParts out;
  Var info = infonce(z1, z2, head, sim);
  out.infonce = info.value().item();
  if (reg.lambda == 0.0) {
    out.total = info;
    return out;
  }
  Var f = scalar_projection(z1, pen.e);
  Penalty p = grad_penalty(f, pen.alpha, pen.alpha_prime, pen.route);
  // The bracketed term of the final loss is (1/LK) sum [.]^2, twice the
  // per-sample variance estimate.
  Var term = ad::scale(p.value, 2.0);
  out.penalty = term.value().item();
  if (*out.penalty > reg.clip) {
    out.clipped = true;
    term = ad::constant(reg.clip);
  }
  out.total = info + ad::scale(term, reg.lambda);
  return out;
}

double pairwise_variance(std::span<const double> f) {
  const double n = static_cast<double>(f.size());
  double acc = 0.0;
  for (double a : f) {
    for (double b : f) acc += (a - b) * (a - b);
  }
  return acc / (2.0 * n * n);
}

double population_variance(std::span<const double> f) {
  double mean = 0.0;
  for (double x : f) mean += x;
  mean /= static_cast<double>(f.size());
  double acc = 0.0;
  for (double x : f) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(f.size());
}

double rademacher_quadratic_mean(const Tensor& sigma) {
  if (sigma.rank() != 2 || sigma.dim(0) != sigma.dim(1)) {
    throw ad::ShapeError("rademacher_quadratic_mean: expected a square matrix");
  }
  const std::size_t d = sigma.dim(0);
  if (d > 20) throw std::invalid_argument("rademacher_quadratic_mean: d must be <= 20");
  const std::uint64_t count = std::uint64_t{1} << d;
  // Sign products are summed as integers first, so the off-diagonal
  // contributions cancel without rounding.
  std::vector<std::int64_t> c(d * d, 0);
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    for (std::size_t i = 0; i < d; ++i) {
      const int ei = (mask >> i) & 1 ? 1 : -1;
      for (std::size_t j = 0; j < d; ++j) c[i * d + j] += ei * ((mask >> j) & 1 ? 1 : -1);
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d * d; ++i) acc += sigma[i] * static_cast<double>(c[i]);
  return acc / static_cast<double>(count);
}

}  // namespace invclr::obj
