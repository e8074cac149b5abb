// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/colour/colour.hpp"

#include <numbers>
#include <stdexcept>

namespace invclr::colour {

namespace {

using ad::Shape;

constexpr double kGrey[3] = {0.299, 0.587, 0.114};
constexpr double kToYiq[3][3] = {
    {0.299, 0.587, 0.114},
    {0.5959, -0.2746, -0.3213},
    {0.2115, -0.5227, 0.3112},
};
constexpr double kToRgb[3][3] = {
    {1.0, 0.956, 0.619},
    {1.0, -0.272, -0.647},
    {1.0, -1.106, 1.703},
};

int channel_axis(const Var& img) {
  const auto r = img.shape().size();
  if ((r != 3 && r != 4) || img.shape()[r - 3] != 3) {
    throw ad::ShapeError("colour: expected 3 x H x W or K x 3 x H x W, got " +
                         ad::to_string(img.shape()));
  }
  return static_cast<int>(r - 3);
}

std::array<Var, 3> channels(const Var& img) {
  const int ax = channel_axis(img);
  return {ad::slice(img, ax, 0, 1), ad::slice(img, ax, 1, 2), ad::slice(img, ax, 2, 3)};
}

Var mix(const std::array<Var, 3>& ch, const double (&w)[3]) {
  return ch[0] * w[0] + ch[1] * w[1] + ch[2] * w[2];
}

// x * a + other * (1 - a)
Var blend(const Var& x, const Var& other, const Var& a) {
  return x * a + other * (ad::constant(1.0) - a);
}

// Mean of each image's greyscale, shaped to broadcast against the image.
Var grey_mean(const Var& gs) {
  const Shape& s = gs.shape();
  if (s.size() == 3) return ad::mean(gs);
  const std::size_t k = s[0];
  Var flat = ad::reshape(gs, {k, s[1] * s[2] * s[3]});
  return ad::reshape(ad::mean(flat, 1, true), {k, 1, 1, 1});
}

}  // namespace

std::array<spiro::UniformSpec, 4> StrengthSpec::specs() const {
  if (!(S >= 0.0)) throw std::invalid_argument("colour strength S must be >= 0");
  const spiro::UniformSpec scale{1.0 - 0.8 * S, 1.0 + 0.8 * S};
  return {scale, scale, scale, spiro::UniformSpec{-0.2 * S, 0.2 * S}};
}

double StrengthSpec::reference_value() const {
  double acc = 0.0;
  for (const auto& s : specs()) acc += s.variance();
  return acc / 4.0;
}

ColourParams sample_colour_params(Rng& rng, const StrengthSpec& strength) {
  const auto s = strength.specs();
  ColourParams cp;
  cp.a_brt = s[0].at(rng.uniform());
  cp.a_con = s[1].at(rng.uniform());
  cp.a_sat = s[2].at(rng.uniform());
  cp.a_hue = s[3].at(rng.uniform());
  return cp;
}

DiscreteParams sample_discrete(Rng& rng, double p_jitter, double p_grey) {
  DiscreteParams dp;
  dp.apply_jitter = rng.bernoulli(p_jitter);
  dp.to_grey = rng.bernoulli(p_grey);
  return dp;
}

Var greyscale(const Var& img) { return mix(channels(img), kGrey); }

Var adjust_brightness(const Var& img, const Var& a) {
  channel_axis(img);
  return ad::clamp01(img * a);
}

Var adjust_contrast(const Var& img, const Var& a) {
  return ad::clamp01(blend(img, grey_mean(greyscale(img)), a));
}

Var adjust_saturation(const Var& img, const Var& a) {
  return ad::clamp01(blend(img, greyscale(img), a));
}

Var rotate_hue(const Var& img, const Var& a_hue) {
  const int ax = channel_axis(img);
  const auto ch = channels(img);
  const Var y = mix(ch, kToYiq[0]);
  const Var i = mix(ch, kToYiq[1]);
  const Var q = mix(ch, kToYiq[2]);
  const Var theta = a_hue * (2.0 * std::numbers::pi);
  const Var c = ad::cos(theta), s = ad::sin(theta);
  const Var ir = c * i - s * q;
  const Var qr = s * i + c * q;
  const std::array<Var, 3> yiq = {y, ir, qr};
  return ad::concat({mix(yiq, kToRgb[0]), mix(yiq, kToRgb[1]), mix(yiq, kToRgb[2])}, ax);
}

Var adjust_hue(const Var& img, const Var& a_hue) { return ad::clamp01(rotate_hue(img, a_hue)); }

Var colour_distort(const Var& img, const Var& params, const std::vector<DiscreteParams>& dp) {
  const Shape& s = img.shape();
  if (s.size() != 4 || s[1] != 3) {
    throw ad::ShapeError("colour_distort: expected K x 3 x H x W, got " + ad::to_string(s));
  }
  const std::size_t k = s[0];
  if (params.shape() != Shape{k, 4} || dp.size() != k) {
    throw ad::ShapeError("colour_distort: expected " + std::to_string(k) +
                         " x 4 params and matching switches, got " +
                         ad::to_string(params.shape()));
  }
  auto param = [&](std::size_t j) {
    return ad::reshape(ad::slice(params, 1, j, j + 1), {k, 1, 1, 1});
  };
  Tensor jitter(Shape{k, 1, 1, 1}), grey(Shape{k, 1, 1, 1});
  bool any_jitter = false, any_grey = false;
  for (std::size_t i = 0; i < k; ++i) {
    jitter[i] = dp[i].apply_jitter ? 1.0 : 0.0;
    grey[i] = dp[i].to_grey ? 1.0 : 0.0;
    any_jitter |= dp[i].apply_jitter;
    any_grey |= dp[i].to_grey;
  }
  Var out = img;
  if (any_jitter) {
    Var x = adjust_brightness(img, param(0));
    x = adjust_contrast(x, param(1));
    x = adjust_saturation(x, param(2));
    x = adjust_hue(x, param(3));
    out = blend(x, img, ad::constant(jitter));
  }
  if (any_grey) {
    Var g = ad::broadcast_to(greyscale(out), s);
    out = blend(g, out, ad::constant(grey));
  }
  return out;
}

Tensor pack(const std::vector<ColourParams>& cps) {
  Tensor t(Shape{cps.size(), 4});
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const auto a = cps[i].to_array();
    for (std::size_t j = 0; j < 4; ++j) t[4 * i + j] = a[j];
  }
  return t;
}

}  // namespace invclr::colour
