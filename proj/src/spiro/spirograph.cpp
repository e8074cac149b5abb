// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/spiro/spirograph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace invclr::spiro {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ad::Shape;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Curve samples and, optionally, their partials with respect to (m, b, h).
struct Curve {
  RowMat x, y;                 // 40 x 1
  std::array<RowMat, 3> dx, dy;  // per parameter, 40 x 1
};

Curve trace(double m, double b, double h, bool partials) {
  if (b == 0.0) throw std::invalid_argument("hypotrochoid: b must be non-zero");
  const auto ts = default_ts();
  Curve c;
  c.x.resize(kNumPoints, 1);
  c.y.resize(kNumPoints, 1);
  if (partials) {
    for (int k = 0; k < 3; ++k) {
      c.dx[k].resize(kNumPoints, 1);
      c.dy[k].resize(kNumPoints, 1);
    }
  }
  const double r = m - h;
  for (std::size_t i = 0; i < kNumPoints; ++i) {
    const double t = ts[i];
    const double phi = r * t / b;
    const double cp = std::cos(phi), sp = std::sin(phi);
    const double ct = std::cos(t), st = std::sin(t);
    c.x(i) = r * ct + h * cp;
    c.y(i) = r * st - h * sp;
    if (!partials) continue;
    c.dx[0](i) = ct - h * sp * t / b;
    c.dx[1](i) = h * sp * r * t / (b * b);
    c.dx[2](i) = -ct + cp + h * sp * t / b;
    c.dy[0](i) = st - h * cp * t / b;
    c.dy[1](i) = h * cp * r * t / (b * b);
    c.dy[2](i) = -st - sp + h * cp * t / b;
  }
  return c;
}

// Normalised field plus, when requested, its Jacobian with respect to
// (m, b, sigma, h). The Gaussian kernel factorises over u and v, so the
// field is EY^T EX / 40 with 40 x R factor matrices.
struct Field {
  RowMat intensity;             // R x R
  std::array<RowMat, 4> jac;    // R x R each, order m, b, sigma, h
};

Field compute_field(const RowMat& xs, const RowMat& ys, const Curve* curve,
                    const std::vector<double>& coords, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("intensity: sigma must be positive, got " +
                                                  std::to_string(sigma));
  const std::size_t n = xs.rows();
  const std::size_t res = coords.size();
  RowMat ex(n, res), ey(n, res);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < res; ++j) {
      const double du = coords[j] - xs(i), dv = coords[j] - ys(i);
      ex(i, j) = std::exp(-du * du / sigma);
      ey(i, j) = std::exp(-dv * dv / sigma);
    }
  }
  const double w = 1.0 / static_cast<double>(kNumPoints);
  RowMat r = w * (ey.transpose() * ex);

  // First maximum in row-major order.
  Eigen::Index arg = 0;
  for (Eigen::Index p = 1; p < r.size(); ++p) {
    if (r.data()[p] > r.data()[arg]) arg = p;
  }
  const double rmax = r.data()[arg];
  Field out;
  out.intensity = r / rmax;
  out.intensity.data()[arg] = 1.0;
  if (!curve) return out;

  RowMat gx(n, res), gy(n, res), qx(n, res), qy(n, res);
  const double s2 = sigma * sigma;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < res; ++j) {
      const double du = coords[j] - xs(i), dv = coords[j] - ys(i);
      gx(i, j) = ex(i, j) * 2.0 * du / sigma;
      gy(i, j) = ey(i, j) * 2.0 * dv / sigma;
      qx(i, j) = ex(i, j) * du * du / s2;
      qy(i, j) = ey(i, j) * dv * dv / s2;
    }
  }
  std::array<RowMat, 4> dr;
  const int curve_param[4] = {0, 1, -1, 2};  // m, b, (sigma), h
  for (int k = 0; k < 4; ++k) {
    if (curve_param[k] < 0) {
      dr[k] = w * (ey.transpose() * qx + qy.transpose() * ex);
    } else {
      const auto& dxk = curve->dx[curve_param[k]];
      const auto& dyk = curve->dy[curve_param[k]];
      dr[k] = w * (ey.transpose() * (dxk.asDiagonal() * gx) +
                   (dyk.asDiagonal() * gy).transpose() * ex);
    }
    const double da = dr[k].data()[arg];
    out.jac[k] = (dr[k] - out.intensity * da) / rmax;
  }
  return out;
}

void check_colours(const FactorsOfInterest& f, const Nuisance& nu) {
  for (double c : {f.f_r, nu.f_g, nu.f_b, nu.b_r, nu.b_g, nu.b_b}) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw std::invalid_argument("render: colour fields must lie in [0,1], got " +
                                  std::to_string(c));
    }
  }
}

void check_batch(const Tensor& factors, const Tensor& nuisance) {
  if (factors.rank() != 2 || factors.dim(1) != kNumFactors || nuisance.rank() != 2 ||
      nuisance.dim(1) != kNumNuisance || nuisance.dim(0) != factors.dim(0)) {
    throw ad::ShapeError("render_batch: expected K x 4 factors and K x 6 nuisance, got " +
                         ad::to_string(factors.shape()) + " and " +
                         ad::to_string(nuisance.shape()));
  }
}

// Writes c = I * fg + (1 - I) * bg for one sample into out[3 * P].
void compose(const RowMat& intensity, const FactorsOfInterest& f, const Nuisance& nu,
             double* out) {
  const double fg[3] = {f.f_r, nu.f_g, nu.f_b};
  const double bg[3] = {nu.b_r, nu.b_g, nu.b_b};
  const std::size_t p = intensity.size();
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t q = 0; q < p; ++q) {
      const double i = intensity.data()[q];
      out[ch * p + q] = i * fg[ch] + (1.0 - i) * bg[ch];
    }
  }
}

class RenderOp final : public ad::CustomOp {
 public:
  RenderOp(RenderGrid grid, bool differentiable) : grid_(grid), differentiable_(differentiable) {}

  const char* name() const override { return "spiro_render"; }

  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& factors = *in[0];
    const Tensor& nuisance = *in[1];
    check_batch(factors, nuisance);
    const std::size_t k = factors.dim(0);
    const std::size_t p = grid_.pixels();
    const auto coords = grid_.coords();
    Tensor out(Shape{k, 3, static_cast<std::size_t>(grid_.resolution),
                     static_cast<std::size_t>(grid_.resolution)});
    intensity_ = Tensor(Shape{k, p});
    if (differentiable_) jac_ = Tensor(Shape{k, 4, p});
    for (std::size_t s = 0; s < k; ++s) {
      const auto f = FactorsOfInterest::from_array(factors.data().subspan(s * kNumFactors, kNumFactors));
      const auto nu = Nuisance::from_array(nuisance.data().subspan(s * kNumNuisance, kNumNuisance));
      check_colours(f, nu);
      const Curve curve = trace(f.m, f.b, nu.h, differentiable_);
      const Field field = compute_field(curve.x, curve.y, differentiable_ ? &curve : nullptr,
                                        coords, f.sigma);
      std::copy_n(field.intensity.data(), p, intensity_.data().begin() + s * p);
      if (differentiable_) {
        for (int j = 0; j < 4; ++j) {
          std::copy_n(field.jac[j].data(), p, jac_.data().begin() + (s * 4 + j) * p);
        }
      }
      compose(field.intensity, f, nu, out.data().data() + s * 3 * p);
    }
    return out;
  }

  std::vector<Tensor> vjp(std::span<const Tensor* const> in, const Tensor&,
                          const Tensor& grad) const override {
    require_jacobian();
    const Tensor& factors = *in[0];
    const Tensor& nuisance = *in[1];
    const std::size_t k = factors.dim(0);
    const std::size_t p = grid_.pixels();
    Tensor gf(factors.shape()), gn(nuisance.shape());
    for (std::size_t s = 0; s < k; ++s) {
      const double* fs = factors.data().data() + s * kNumFactors;
      const double* ns = nuisance.data().data() + s * kNumNuisance;
      const double fg[3] = {fs[3], ns[1], ns[2]};
      const double bg[3] = {ns[3], ns[4], ns[5]};
      const double* g = grad.data().data() + s * 3 * p;
      const double* i = intensity_.data().data() + s * p;
      double g_fg[3] = {0, 0, 0}, g_bg[3] = {0, 0, 0}, g_par[4] = {0, 0, 0, 0};
      for (std::size_t q = 0; q < p; ++q) {
        double gi = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          const double gc = g[ch * p + q];
          g_fg[ch] += gc * i[q];
          g_bg[ch] += gc * (1.0 - i[q]);
          gi += gc * (fg[ch] - bg[ch]);
        }
        for (int j = 0; j < 4; ++j) g_par[j] += gi * jac_[(s * 4 + j) * p + q];
      }
      double* gfs = gf.data().data() + s * kNumFactors;
      double* gns = gn.data().data() + s * kNumNuisance;
      gfs[0] = g_par[0];
      gfs[1] = g_par[1];
      gfs[2] = g_par[2];
      gfs[3] = g_fg[0];
      gns[0] = g_par[3];
      gns[1] = g_fg[1];
      gns[2] = g_fg[2];
      gns[3] = g_bg[0];
      gns[4] = g_bg[1];
      gns[5] = g_bg[2];
    }
    return {std::move(gf), std::move(gn)};
  }

  Tensor jvp(std::span<const Tensor* const> in, const Tensor& output,
             std::span<const Tensor* const> tangents) const override {
    require_jacobian();
    const Tensor& factors = *in[0];
    const Tensor& nuisance = *in[1];
    const Tensor* tf = tangents[0];
    const Tensor* tn = tangents[1];
    const std::size_t k = factors.dim(0);
    const std::size_t p = grid_.pixels();
    Tensor out(output.shape());
    std::vector<double> di(p);
    for (std::size_t s = 0; s < k; ++s) {
      const double* fs = factors.data().data() + s * kNumFactors;
      const double* ns = nuisance.data().data() + s * kNumNuisance;
      const double* dfs = tf ? tf->data().data() + s * kNumFactors : nullptr;
      const double* dns = tn ? tn->data().data() + s * kNumNuisance : nullptr;
      // Tangent of each parameter in jac order m, b, sigma, h.
      const double dpar[4] = {dfs ? dfs[0] : 0.0, dfs ? dfs[1] : 0.0, dfs ? dfs[2] : 0.0,
                              dns ? dns[0] : 0.0};
      const double fg[3] = {fs[3], ns[1], ns[2]};
      const double bg[3] = {ns[3], ns[4], ns[5]};
      const double dfg[3] = {dfs ? dfs[3] : 0.0, dns ? dns[1] : 0.0, dns ? dns[2] : 0.0};
      const double dbg[3] = {dns ? dns[3] : 0.0, dns ? dns[4] : 0.0, dns ? dns[5] : 0.0};
      const double* i = intensity_.data().data() + s * p;
      std::fill(di.begin(), di.end(), 0.0);
      for (int j = 0; j < 4; ++j) {
        if (dpar[j] == 0.0) continue;
        const double* jr = jac_.data().data() + (s * 4 + j) * p;
        for (std::size_t q = 0; q < p; ++q) di[q] += jr[q] * dpar[j];
      }
      double* o = out.data().data() + s * 3 * p;
      for (int ch = 0; ch < 3; ++ch) {
        for (std::size_t q = 0; q < p; ++q) {
          o[ch * p + q] = di[q] * (fg[ch] - bg[ch]) + i[q] * dfg[ch] + (1.0 - i[q]) * dbg[ch];
        }
      }
    }
    return out;
  }

 private:
  void require_jacobian() const {
    if (!differentiable_) {
      throw std::logic_error("spiro_render: derivative requested from a non-differentiable render");
    }
  }

  RenderGrid grid_;
  bool differentiable_;
  Tensor intensity_;
  Tensor jac_;
};

}  // namespace

void UniformSpec::validate() const {
  if (!(widen >= 0.0)) throw std::invalid_argument("uniform spec: widen must be >= 0");
  if (!(hi() > lo())) {
    throw std::invalid_argument("uniform spec: need high > low, got [" + std::to_string(lo()) +
                                ", " + std::to_string(hi()) + "]");
  }
}

FactorsOfInterest FactorsOfInterest::from_array(std::span<const double> a) {
  if (a.size() != kNumFactors) throw std::invalid_argument("factors: expected 4 values");
  return {a[0], a[1], a[2], a[3]};
}

Nuisance Nuisance::from_array(std::span<const double> a) {
  if (a.size() != kNumNuisance) throw std::invalid_argument("nuisance: expected 6 values");
  return {a[0], a[1], a[2], a[3], a[4], a[5]};
}

SpecTable SpecTable::defaults() {
  SpecTable t;
  t.factors = {UniformSpec{2.0, 5.0}, UniformSpec{0.1, 1.1}, UniformSpec{0.25, 1.0},
               UniformSpec{0.4, 1.0}};
  t.nuisance = {UniformSpec{0.5, 2.5}, UniformSpec{0.4, 1.0}, UniformSpec{0.4, 1.0},
                UniformSpec{0.0, 0.6}, UniformSpec{0.0, 0.6}, UniformSpec{0.0, 0.6}};
  return t;
}

std::size_t SpecTable::nuisance_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumNuisance; ++i) {
    if (kNuisanceNames[i] == name) return i;
  }
  throw std::invalid_argument("unknown nuisance field: " + std::string(name));
}

const UniformSpec& SpecTable::spec(std::string_view name) const {
  for (std::size_t i = 0; i < kNumFactors; ++i) {
    if (kFactorNames[i] == name) return factors[i];
  }
  for (std::size_t i = 0; i < kNumNuisance; ++i) {
    if (kNuisanceNames[i] == name) return nuisance[i];
  }
  throw std::invalid_argument("unknown spirograph field: " + std::string(name));
}

UniformSpec& SpecTable::spec(std::string_view name) {
  return const_cast<UniformSpec&>(std::as_const(*this).spec(name));
}

void SpecTable::validate() const {
  for (const auto& s : factors) s.validate();
  for (const auto& s : nuisance) s.validate();
}

double SpecTable::reference_value() const {
  double acc = 0.0;
  for (const auto& s : nuisance) acc += s.variance();
  return acc / static_cast<double>(kNumNuisance);
}

FactorsOfInterest sample_factors(Rng& rng, const SpecTable& specs) {
  FactorsOfInterest f;
  f.m = specs.factors[0].at(rng.uniform());
  f.b = specs.factors[1].at(rng.uniform());
  f.sigma = specs.factors[2].at(rng.uniform());
  f.f_r = specs.factors[3].at(rng.uniform());
  return f;
}

std::array<double, kNumNuisance> draw_uniforms(Rng& rng) {
  std::array<double, kNumNuisance> u;
  for (auto& v : u) v = rng.uniform();
  return u;
}

Nuisance nuisance_from_uniforms(std::span<const double> u, const SpecTable& specs) {
  std::array<double, kNumNuisance> a;
  for (std::size_t i = 0; i < kNumNuisance; ++i) {
    a[i] = specs.nuisance[i].at(u[i]);
    if (i > 0) a[i] = std::clamp(a[i], 0.0, 1.0);
  }
  return Nuisance::from_array(a);
}

Nuisance sample_nuisance(Rng& rng, const SpecTable& specs) {
  const auto u = draw_uniforms(rng);
  return nuisance_from_uniforms(u, specs);
}

std::vector<double> default_ts() {
  std::vector<double> ts(kNumPoints);
  for (std::size_t i = 0; i < kNumPoints; ++i) {
    ts[i] = kTwoPi * (static_cast<double>(i) / static_cast<double>(kNumPoints - 1));
  }
  return ts;
}

std::vector<Point> hypotrochoid_points(double m, double b, double h, std::span<const double> ts) {
  if (b == 0.0) throw std::invalid_argument("hypotrochoid: b must be non-zero");
  std::vector<Point> pts;
  pts.reserve(ts.size());
  for (double t : ts) {
    const double phi = (m - h) * t / b;
    pts.push_back({(m - h) * std::cos(t) + h * std::cos(phi),
                   (m - h) * std::sin(t) - h * std::sin(phi)});
  }
  return pts;
}

std::vector<double> RenderGrid::coords() const {
  validate();
  std::vector<double> c(resolution);
  for (int i = 0; i < resolution; ++i) {
    c[i] = -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(resolution - 1);
  }
  return c;
}

void RenderGrid::validate() const {
  if (resolution < 2) throw std::invalid_argument("render grid: resolution must be >= 2");
  if (!(extent > 0.0)) throw std::invalid_argument("render grid: extent must be positive");
}

Tensor intensity_field(std::span<const Point> points, const RenderGrid& grid, double sigma) {
  if (points.size() != kNumPoints) {
    throw std::invalid_argument("intensity_field: expected 40 points, got " +
                                std::to_string(points.size()));
  }
  RowMat xs(kNumPoints, 1), ys(kNumPoints, 1);
  for (std::size_t i = 0; i < kNumPoints; ++i) {
    xs(i) = points[i].x;
    ys(i) = points[i].y;
  }
  const Field f = compute_field(xs, ys, nullptr, grid.coords(), sigma);
  const auto r = static_cast<std::size_t>(grid.resolution);
  return Tensor(Shape{r, r}, std::vector<double>(f.intensity.data(), f.intensity.data() + r * r));
}

Tensor render(const FactorsOfInterest& f, const Nuisance& n, const RenderGrid& grid) {
  const auto fa = f.to_array();
  const auto na = n.to_array();
  Tensor out = render_batch(Tensor(Shape{1, kNumFactors}, std::vector<double>(fa.begin(), fa.end())),
                            Tensor(Shape{1, kNumNuisance}, std::vector<double>(na.begin(), na.end())),
                            grid);
  const auto r = static_cast<std::size_t>(grid.resolution);
  return out.reshaped(Shape{3, r, r});
}

Tensor render_batch(const Tensor& factors, const Tensor& nuisance, const RenderGrid& grid) {
  RenderOp op(grid, false);
  const Tensor* in[2] = {&factors, &nuisance};
  return op.forward(in);
}

ad::Var render_batch(const ad::Var& factors, const ad::Var& nuisance, const RenderGrid& grid,
                     bool differentiable) {
  return ad::custom_op(std::make_shared<RenderOp>(grid, differentiable), {factors, nuisance});
}

std::array<double, kNumNuisance> SpiroDataset::eval_uniforms(std::size_t i) const {
  Rng rng(seed, Stream::kEvalNuisance, i);
  return draw_uniforms(rng);
}

Tensor SpiroDataset::eval_nuisance_under(const SpecTable& s) const {
  s.validate();
  const std::size_t n = size();
  Tensor out(Shape{n, kNumNuisance});
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = nuisance_from_uniforms(eval_uniforms(i), s).to_array();
    std::copy(a.begin(), a.end(), out.data().begin() + i * kNumNuisance);
  }
  return out;
}

SpiroDataset generate_dataset(std::size_t n, std::uint64_t seed, const SpecTable& specs,
                              const RenderGrid& grid) {
  if (n == 0) throw std::invalid_argument("generate_dataset: n must be positive");
  specs.validate();
  grid.validate();
  SpiroDataset ds;
  ds.seed = seed;
  ds.specs = specs;
  ds.grid = grid;
  ds.factors = Tensor(Shape{n, kNumFactors});
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, Stream::kFactors, i);
    const auto a = sample_factors(rng, specs).to_array();
    std::copy(a.begin(), a.end(), ds.factors.data().begin() + i * kNumFactors);
  }
  ds.eval_nuisance = ds.eval_nuisance_under(specs);
  return ds;
}

}  // namespace invclr::spiro
