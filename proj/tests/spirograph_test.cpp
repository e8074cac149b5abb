// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "invclr/ad/check.hpp"
#include "invclr/spiro/spirograph.hpp"

namespace ad = invclr::ad;
namespace spiro = invclr::spiro;
using ad::Shape;
using ad::Tensor;
using ad::Var;
using invclr::Rng;
using invclr::Stream;

namespace {

// 40-digit evaluation of the m=4, b=0.4, h=2 trace.
constexpr double kOracleTrace[40][2] = {
    {4.0, 0.0},
    {3.3595492322950245128, -1.1215823329721085818},
    {1.8165410036754607656, -1.3650420087401942772},
    {0.27389055496421759453, -0.39679897239405331344},
    {-0.3946290894614176716, 1.3624176659094095947},
    {0.12055795582844430956, 2.9916148183429382287},
    {1.3772028539729577117, 3.6313854799834207748},
    {2.4562706496131106657, 3.0083853976967223839},
    {2.5305354531087309967, 1.6002136615472241161},
    {1.3772028539729577117, 0.33945001640879519644},
    {-0.48058326777091914178, 0.038796692258603872461},
    {-2.0904315586396783601, 0.89064965182893321885},
    {-2.6510934089371753063, 2.3486638139459451812},
    {-2.0, 3.4641016151377545871},
    {-0.70845582335784920653, 3.470246146918053763},
    {0.27389055496421759453, 2.2556916605691274961},
    {0.20669271280670154725, 0.4355956646526571859},
    {-0.98257376451154004012, -1.0229676495006143983},
    {-2.6510934089371753063, -1.3914011567957141126},
    {-3.8334735035860683774, -0.62300008228669839089},
    {-3.8334735035860683774, 0.62300008228669839089},
    {-2.6510934089371753063, 1.3914011567957141126},
    {-0.98257376451154004012, 1.0229676495006143983},
    {0.20669271280670154725, -0.4355956646526571859},
    {0.27389055496421759453, -2.2556916605691274961},
    {-0.70845582335784920653, -3.470246146918053763},
    {-2.0, -3.4641016151377545871},
    {-2.6510934089371753063, -2.3486638139459451812},
    {-2.0904315586396783601, -0.89064965182893321885},
    {-0.48058326777091914178, -0.038796692258603872461},
    {1.3772028539729577117, -0.33945001640879519644},
    {2.5305354531087309967, -1.6002136615472241161},
    {2.4562706496131106657, -3.0083853976967223839},
    {1.3772028539729577117, -3.6313854799834207748},
    {0.12055795582844430956, -2.9916148183429382287},
    {-0.3946290894614176716, -1.3624176659094095947},
    {0.27389055496421759453, 0.39679897239405331344},
    {1.8165410036754607656, 1.3650420087401942772},
    {3.3595492322950245128, 1.1215823329721085818},
    {4.0, 0.0},
};

// Direct double loop over pixels and points, no factorisation.
Tensor brute_force_field(const std::vector<spiro::Point>& pts, int res, double extent,
                         double sigma) {
  Tensor r(Shape{static_cast<size_t>(res), static_cast<size_t>(res)});
  double mx = 0.0;
  for (int row = 0; row < res; ++row) {
    const double v = -extent + 2.0 * extent * row / (res - 1);
    for (int col = 0; col < res; ++col) {
      const double u = -extent + 2.0 * extent * col / (res - 1);
      double acc = 0.0;
      for (const auto& p : pts) {
        acc += std::exp((-(u - p.x) * (u - p.x) - (v - p.y) * (v - p.y)) / sigma);
      }
      r.at({size_t(row), size_t(col)}) = acc / 40.0;
      mx = std::max(mx, acc / 40.0);
    }
  }
  for (double& x : r.data()) x /= mx;
  return r;
}

Tensor row(std::initializer_list<double> v) {
  return Tensor(Shape{1, v.size()}, std::vector<double>(v));
}

}  // namespace

TEST(UniformSpecTest, DefaultPenOffsetSupport) {
  const auto specs = spiro::SpecTable::defaults();
  Rng rng(1, Stream::kTest);
  for (int i = 0; i < 10000; ++i) {
    const auto n = spiro::sample_nuisance(rng, specs);
    ASSERT_GE(n.h, 0.5);
    ASSERT_LE(n.h, 2.5);
  }
}

TEST(UniformSpecTest, ShiftAndWidenMoveSupport) {
  spiro::UniformSpec h{0.5, 2.5};
  h.shift = 0.1;
  EXPECT_NEAR(h.lo(), 0.6, 1e-15);
  EXPECT_NEAR(h.hi(), 2.6, 1e-15);
  h.shift = 0.0;
  h.widen = 0.5;
  EXPECT_DOUBLE_EQ(h.lo(), 0.0);
  EXPECT_DOUBLE_EQ(h.hi(), 3.0);
  spiro::UniformSpec bad{0.5, 0.5};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  spiro::UniformSpec shrink{0.0, 1.0, 0.0, -0.6};
  EXPECT_THROW(shrink.validate(), std::invalid_argument);
}

TEST(UniformSpecTest, ShiftedMeanWithinThreeStandardErrors) {
  auto specs = spiro::SpecTable::defaults();
  specs.spec("h").shift = 0.3;
  const int n = 100000;
  Rng rng(2, Stream::kTest);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += spiro::sample_nuisance(rng, specs).h;
  const double se = std::sqrt(specs.spec("h").variance() / n);
  EXPECT_LT(std::abs(acc / n - (1.5 + 0.3)), 3 * se);
}

TEST(UniformSpecTest, ReferenceValue) {
  EXPECT_NEAR(spiro::SpecTable::defaults().reference_value(), 29.0 / 360.0, 1e-15);
}

TEST(HypotrochoidTest, StartsAtOuterRadius) {
  const std::vector<double> t0{0.0};
  for (double m : {2.0, 3.3, 5.0}) {
    for (double h : {0.5, 1.7}) {
      const auto p = spiro::hypotrochoid_points(m, 0.7, h, t0);
      EXPECT_DOUBLE_EQ(p[0].x, m);
      EXPECT_DOUBLE_EQ(p[0].y, 0.0);
    }
  }
}

TEST(HypotrochoidTest, HalfTurn) {
  const std::vector<double> t{std::numbers::pi};
  const auto p = spiro::hypotrochoid_points(4, 0.4, 2, t);
  EXPECT_NEAR(p[0].x, -4.0, 1e-13);
  EXPECT_NEAR(p[0].y, 0.0, 1e-13);
}

TEST(HypotrochoidTest, ZeroInnerRadiusRejected) {
  const auto ts = spiro::default_ts();
  EXPECT_THROW(spiro::hypotrochoid_points(4, 0.0, 2, ts), std::invalid_argument);
}

TEST(HypotrochoidTest, MatchesHighPrecisionTrace) {
  const auto ts = spiro::default_ts();
  ASSERT_EQ(ts.size(), 40u);
  EXPECT_EQ(ts.front(), 0.0);
  EXPECT_EQ(ts.back(), 2 * std::numbers::pi);
  const auto p = spiro::hypotrochoid_points(4, 0.4, 2, ts);
  for (int i = 0; i < 40; ++i) {
    EXPECT_NEAR(p[i].x, kOracleTrace[i][0], 1e-12) << i;
    EXPECT_NEAR(p[i].y, kOracleTrace[i][1], 1e-12) << i;
  }
}

TEST(IntensityTest, CoincidentPointsAtPixelCentre) {
  spiro::RenderGrid grid{9, 4.0};
  const auto c = grid.coords();
  std::vector<spiro::Point> pts(40, spiro::Point{c[6], c[2]});
  // Before normalisation each term is exp(0) = 1, so the raw value is 1.
  Tensor raw_oracle = brute_force_field(pts, 9, 4.0, 0.5);
  Tensor f = spiro::intensity_field(pts, grid, 0.5);
  EXPECT_EQ(f.at({2, 6}), 1.0);
  EXPECT_EQ(raw_oracle.at({2, 6}), 1.0);
}

TEST(IntensityTest, RejectsBadInputs) {
  spiro::RenderGrid grid{8, 5.0};
  std::vector<spiro::Point> pts(40);
  EXPECT_THROW(spiro::intensity_field(pts, grid, 0.0), std::invalid_argument);
  EXPECT_THROW(spiro::intensity_field(pts, grid, -1.0), std::invalid_argument);
  pts.resize(39);
  EXPECT_THROW(spiro::intensity_field(pts, grid, 1.0), std::invalid_argument);
}

TEST(IntensityTest, MatchesBruteForceOracle) {
  const auto pts = spiro::hypotrochoid_points(4, 0.4, 2, spiro::default_ts());
  Tensor f = spiro::intensity_field(pts, {32, 5.0}, 1.0);
  Tensor o = brute_force_field(pts, 32, 5.0, 1.0);
  double worst = 0.0;
  for (size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(f[i] - o[i]));
  EXPECT_LT(worst, 1e-12);
}

TEST(IntensityTest, MaxIsOneAndPermutationInvariant) {
  Rng rng(4, Stream::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = spiro::sample_factors(rng);
    const auto n = spiro::sample_nuisance(rng);
    auto pts = spiro::hypotrochoid_points(f.m, f.b, n.h, spiro::default_ts());
    Tensor a = spiro::intensity_field(pts, {16, 5.0}, f.sigma);
    EXPECT_EQ(*std::max_element(a.data().begin(), a.data().end()), 1.0);
    std::mt19937_64 perm(trial);
    std::shuffle(pts.begin(), pts.end(), perm);
    Tensor b = spiro::intensity_field(pts, {16, 5.0}, f.sigma);
    for (size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-14);
  }
}

TEST(RenderTest, ConvexCombinationOfColours) {
  const spiro::FactorsOfInterest f{4, 0.4, 1.0, 0.9};
  const spiro::Nuisance n{2, 0.8, 0.7, 0.3, 0.4, 0.5};
  const spiro::RenderGrid grid{32, 5.0};
  Tensor img = spiro::render(f, n, grid);
  Tensor inten = spiro::intensity_field(
      spiro::hypotrochoid_points(f.m, f.b, n.h, spiro::default_ts()), grid, f.sigma);
  const double fg[3] = {0.9, 0.8, 0.7}, bg[3] = {0.3, 0.4, 0.5};
  const size_t p = 32 * 32;
  for (size_t ch = 0; ch < 3; ++ch) {
    for (size_t q = 0; q < p; ++q) {
      const double i = inten[q];
      ASSERT_EQ(img[ch * p + q], i * fg[ch] + (1 - i) * bg[ch]);
      if (i == 1.0) {
        ASSERT_EQ(img[ch * p + q], fg[ch]);
      }
      if (i < 1e-13) {
        ASSERT_NEAR(img[ch * p + q], bg[ch], 1e-12);
      }
    }
  }
}

TEST(RenderTest, BackgroundRedDerivativeIsOneMinusIntensity) {
  const spiro::RenderGrid grid{16, 5.0};
  Tensor fac = row({3.1, 0.55, 0.6, 0.7});
  Tensor nui = row({1.2, 0.5, 0.9, 0.2, 0.1, 0.4});
  Var fv = ad::constant(fac), nv = ad::constant(nui);
  Var img = spiro::render_batch(fv, nv, grid);
  Var t = ad::tangent_of(img, {{nv, ad::constant(row({0, 0, 0, 1, 0, 0}))}});
  Tensor inten = spiro::intensity_field(
      spiro::hypotrochoid_points(3.1, 0.55, 1.2, spiro::default_ts()), grid, 0.6);
  const size_t p = 256;
  for (size_t q = 0; q < p; ++q) {
    EXPECT_NEAR(t.value()[q], 1.0 - inten[q], 1e-15);
    EXPECT_EQ(t.value()[p + q], 0.0);
    EXPECT_EQ(t.value()[2 * p + q], 0.0);
  }
}

TEST(RenderTest, PixelsStayInUnitInterval) {
  Rng rng(5, Stream::kTest);
  auto specs = spiro::SpecTable::defaults();
  specs.spec("b_r").widen = 0.4;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor img = spiro::render(spiro::sample_factors(rng), spiro::sample_nuisance(rng, specs),
                               {16, 5.0});
    for (double v : img.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

// Every pixel's gradient with respect to all ten fields versus central
// differences, through a random linear read-out.
TEST(RenderTest, GradientsMatchFiniteDifferences) {
  Rng rng(6, Stream::kTest);
  const spiro::RenderGrid grid{12, 5.0};
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor w(Shape{2, 3, 12, 12});
  for (double& x : w.data()) x = u(gen);
  for (int trial = 0; trial < 8; ++trial) {
    Tensor fac(Shape{2, 4}), nui(Shape{2, 6});
    for (size_t s = 0; s < 2; ++s) {
      const auto f = spiro::sample_factors(rng).to_array();
      auto n = spiro::sample_nuisance(rng).to_array();
      std::copy(f.begin(), f.end(), fac.data().begin() + 4 * s);
      std::copy(n.begin(), n.end(), nui.data().begin() + 6 * s);
    }
    auto program = [&](std::span<const Var> in) {
      return ad::sum(spiro::render_batch(in[0], in[1], grid) * ad::constant(w));
    };
    std::vector<Tensor> at{fac, nui};
    EXPECT_LT(ad::finite_diff_check(program, at, 1e-6), 1e-5) << "trial " << trial;
  }
}

TEST(RenderTest, ForwardAndReverseModesAgree) {
  const spiro::RenderGrid grid{10, 5.0};
  Tensor fac = row({2.7, 0.8, 0.4, 0.5});
  Tensor nui = row({0.9, 0.6, 0.7, 0.1, 0.2, 0.3});
  Tensor dfac = row({0.3, -0.2, 0.1, 0.5});
  Tensor dnui = row({-0.4, 0.2, 0.3, -0.1, 0.6, 0.2});
  Tensor w(Shape{1, 3, 10, 10});
  for (size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.37 * i);
  auto program = [&](std::span<const Var> in) {
    return ad::sum(spiro::render_batch(in[0], in[1], grid) * ad::constant(w));
  };
  auto r = ad::jvp(program, std::vector<Tensor>{fac, nui}, std::vector<Tensor>{dfac, dnui});
  Var fv = ad::variable(fac), nv = ad::variable(nui);
  auto g = ad::backward(program(std::vector<Var>{fv, nv}));
  double expect = 0.0;
  for (size_t i = 0; i < 4; ++i) expect += g.wrt(fv)[i] * dfac[i];
  for (size_t i = 0; i < 6; ++i) expect += g.wrt(nv)[i] * dnui[i];
  EXPECT_NEAR(r.derivative.value().item(), expect, 1e-12);
}

TEST(RenderTest, NonDifferentiableRenderRefusesDerivatives) {
  Var fv = ad::variable(row({2.7, 0.8, 0.4, 0.5}));
  Var nv = ad::constant(row({0.9, 0.6, 0.7, 0.1, 0.2, 0.3}));
  Var img = spiro::render_batch(fv, nv, {8, 5.0}, false);
  EXPECT_THROW(ad::backward(ad::sum(img)), std::logic_error);
}

TEST(RenderTest, BatchRowsAreIndependent) {
  const spiro::RenderGrid grid{8, 5.0};
  Tensor fac(Shape{2, 4}, std::vector<double>{3, 0.5, 0.5, 0.6, 4, 0.9, 0.3, 0.8});
  Tensor nui(Shape{2, 6}, std::vector<double>{1, 0.5, 0.5, 0.1, 0.1, 0.1, 2, 0.9, 0.4, 0.5, 0.2, 0});
  Tensor batch = spiro::render_batch(fac, nui, grid);
  Tensor second = spiro::render(spiro::FactorsOfInterest{4, 0.9, 0.3, 0.8},
                                spiro::Nuisance{2, 0.9, 0.4, 0.5, 0.2, 0}, grid);
  for (size_t i = 0; i < second.size(); ++i) ASSERT_EQ(batch[second.size() + i], second[i]);
}

TEST(DatasetTest, DeterministicPerSeed) {
  auto a = spiro::generate_dataset(5, 42);
  auto b = spiro::generate_dataset(5, 42);
  auto c = spiro::generate_dataset(5, 43);
  EXPECT_EQ(a.factors, b.factors);
  EXPECT_EQ(a.eval_nuisance, b.eval_nuisance);
  EXPECT_NE(a.factors, c.factors);
  EXPECT_EQ(a.size(), 5u);
  EXPECT_THROW(spiro::generate_dataset(0, 1), std::invalid_argument);
}

TEST(DatasetTest, SamplesDoNotDependOnDatasetSize) {
  auto small = spiro::generate_dataset(3, 9);
  auto large = spiro::generate_dataset(50, 9);
  for (size_t i = 0; i < 3 * 4; ++i) EXPECT_EQ(small.factors[i], large.factors[i]);
}

TEST(DatasetTest, EvalNuisanceRemapsUnderUnshiftedSpecsExactly) {
  auto ds = spiro::generate_dataset(20, 3);
  EXPECT_EQ(ds.eval_nuisance_under(ds.specs), ds.eval_nuisance);
  auto shifted = ds.specs;
  shifted.spec("h").shift = 0.1;
  Tensor moved = ds.eval_nuisance_under(shifted);
  for (size_t i = 0; i < 20; ++i) {
    EXPECT_NEAR(moved[i * 6], ds.eval_nuisance[i * 6] + 0.1, 1e-14);
    EXPECT_GE(moved[i * 6], 0.6);
    EXPECT_LE(moved[i * 6], 2.6);
  }
}

TEST(DatasetTest, FactorRanges) {
  auto ds = spiro::generate_dataset(2000, 11);
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto f = spiro::FactorsOfInterest::from_array(ds.factors.data().subspan(4 * i, 4));
    ASSERT_TRUE(f.m >= 2 && f.m <= 5);
    ASSERT_TRUE(f.b >= 0.1 && f.b <= 1.1);
    ASSERT_TRUE(f.sigma >= 0.25 && f.sigma <= 1);
    ASSERT_TRUE(f.f_r >= 0.4 && f.f_r <= 1);
  }
}
