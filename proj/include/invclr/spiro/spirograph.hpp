// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "invclr/ad/graph.hpp"
#include "invclr/rng.hpp"

namespace invclr::spiro {

using ad::Tensor;

inline constexpr std::size_t kNumPoints = 40;
inline constexpr std::size_t kNumFactors = 4;
inline constexpr std::size_t kNumNuisance = 6;

inline constexpr std::array<std::string_view, kNumFactors> kFactorNames = {"m", "b", "sigma",
                                                                            "f_r"};
inline constexpr std::array<std::string_view, kNumNuisance> kNuisanceNames = {
    "h", "f_g", "f_b", "b_r", "b_g", "b_b"};

/// U(low + shift - widen, high + shift + widen).
struct UniformSpec {
  double low = 0.0;
  double high = 1.0;
  double shift = 0.0;
  double widen = 0.0;

  double lo() const { return low + shift - widen; }
  double hi() const { return high + shift + widen; }
  /// Maps u in [0,1) onto the support.
  double at(double u) const { return lo() + u * (hi() - lo()); }
  double mean() const { return 0.5 * (lo() + hi()); }
  double variance() const { return (hi() - lo()) * (hi() - lo()) / 12.0; }
  /// Throws std::invalid_argument unless hi() > lo() and widen >= 0.
  void validate() const;

  friend bool operator==(const UniformSpec&, const UniformSpec&) = default;
};

struct FactorsOfInterest {
  double m = 0, b = 0, sigma = 0, f_r = 0;
  std::array<double, kNumFactors> to_array() const { return {m, b, sigma, f_r}; }
  static FactorsOfInterest from_array(std::span<const double> a);
};

struct Nuisance {
  double h = 0, f_g = 0, f_b = 0, b_r = 0, b_g = 0, b_b = 0;
  std::array<double, kNumNuisance> to_array() const { return {h, f_g, f_b, b_r, b_g, b_b}; }
  static Nuisance from_array(std::span<const double> a);
};

struct SpecTable {
  std::array<UniformSpec, kNumFactors> factors;
  std::array<UniformSpec, kNumNuisance> nuisance;

  static SpecTable defaults();
  /// Index into `nuisance`; throws std::invalid_argument for unknown names.
  static std::size_t nuisance_index(std::string_view name);
  /// Looks up a factor or nuisance spec by field name.
  UniformSpec& spec(std::string_view name);
  const UniformSpec& spec(std::string_view name) const;
  void validate() const;
  /// Mean over nuisance coordinates of the uniform variance.
  double reference_value() const;

  friend bool operator==(const SpecTable&, const SpecTable&) = default;
};

FactorsOfInterest sample_factors(Rng& rng, const SpecTable& specs = SpecTable::defaults());
Nuisance sample_nuisance(Rng& rng, const SpecTable& specs = SpecTable::defaults());
/// Pushes six uniforms through `specs`. Colour fields are clipped to [0,1]
/// so widened specs still yield valid colours.
Nuisance nuisance_from_uniforms(std::span<const double> u, const SpecTable& specs);
std::array<double, kNumNuisance> draw_uniforms(Rng& rng);

struct Point {
  double x = 0, y = 0;
};

/// 40 equally spaced values from 0 to 2*pi inclusive.
std::vector<double> default_ts();
std::vector<Point> hypotrochoid_points(double m, double b, double h, std::span<const double> ts);

struct RenderGrid {
  int resolution = 32;
  double extent = 5.0;

  /// Pixel-centre coordinates, linspace(-extent, extent, resolution).
  std::vector<double> coords() const;
  void validate() const;
  std::size_t pixels() const { return static_cast<std::size_t>(resolution) * resolution; }
};

/// Normalised intensity (H x W, row = v, column = u) of exactly 40 points.
Tensor intensity_field(std::span<const Point> points, const RenderGrid& grid, double sigma);

/// One 3 x H x W image.
Tensor render(const FactorsOfInterest& f, const Nuisance& n, const RenderGrid& grid);

/// Images for a batch: factors K x 4, nuisance K x 6 -> K x 3 x H x W.
Tensor render_batch(const Tensor& factors, const Tensor& nuisance, const RenderGrid& grid);

/// Differentiable batch renderer. With `differentiable` false the analytic
/// Jacobian is skipped and any derivative request throws.
ad::Var render_batch(const ad::Var& factors, const ad::Var& nuisance, const RenderGrid& grid,
                     bool differentiable = true);

struct SpiroDataset {
  std::uint64_t seed = 0;
  SpecTable specs;
  RenderGrid grid;
  Tensor factors;        // n x 4
  Tensor eval_nuisance;  // n x 6

  std::size_t size() const { return factors.dim(0); }
  /// The uniforms behind sample i's evaluation nuisance.
  std::array<double, kNumNuisance> eval_uniforms(std::size_t i) const;
  /// Sample i's evaluation nuisance re-mapped through other specs.
  Tensor eval_nuisance_under(const SpecTable& specs) const;
};

SpiroDataset generate_dataset(std::size_t n, std::uint64_t seed,
                              const SpecTable& specs = SpecTable::defaults(),
                              const RenderGrid& grid = {});

}  // namespace invclr::spiro
