// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "invclr/ad/graph.hpp"
#include "invclr/rng.hpp"
#include "invclr/spiro/spirograph.hpp"

// Differentiable colour distortion. Images are C x H x W or K x C x H x W
// with C = 3; per-image parameters broadcast as K x 1 x 1 x 1 (or scalars).
namespace invclr::colour {

using ad::Tensor;
using ad::Var;

struct ColourParams {
  double a_brt = 1.0;
  double a_con = 1.0;
  double a_sat = 1.0;
  double a_hue = 0.0;
  std::array<double, 4> to_array() const { return {a_brt, a_con, a_sat, a_hue}; }
};

struct DiscreteParams {
  bool apply_jitter = true;
  bool to_grey = false;
};

/// a_brt, a_con, a_sat ~ U(1 - 0.8 S, 1 + 0.8 S); a_hue ~ U(-0.2 S, 0.2 S).
struct StrengthSpec {
  double S = 0.5;
  std::array<spiro::UniformSpec, 4> specs() const;
  /// Mean over the four parameters of the uniform variance.
  double reference_value() const;
};

ColourParams sample_colour_params(Rng& rng, const StrengthSpec& strength = {});
DiscreteParams sample_discrete(Rng& rng, double p_jitter = 0.8, double p_grey = 0.2);

/// 0.299 r + 0.587 g + 0.114 b, keeping a channel axis of extent 1.
Var greyscale(const Var& img);
Var adjust_brightness(const Var& img, const Var& a);
Var adjust_contrast(const Var& img, const Var& a);
Var adjust_saturation(const Var& img, const Var& a);
/// RGB -> YIQ, rotate IQ by 2 pi a_hue, back to RGB. No clipping.
Var rotate_hue(const Var& img, const Var& a_hue);
Var adjust_hue(const Var& img, const Var& a_hue);

/// Batched pipeline: img K x 3 x H x W, params K x 4 (brt, con, sat, hue).
/// Jitter runs brightness, contrast, saturation, hue in that order.
Var colour_distort(const Var& img, const Var& params, const std::vector<DiscreteParams>& dp);

/// Packs per-image parameters into a K x 4 tensor.
Tensor pack(const std::vector<ColourParams>& cps);

}  // namespace invclr::colour
