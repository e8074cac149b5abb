// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/eval/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace invclr::eval {

namespace {

using ad::Shape;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

constexpr std::size_t kChunk = 256;
constexpr std::size_t kNF = spiro::kNumFactors;
constexpr std::size_t kNA = spiro::kNumNuisance;

std::vector<std::size_t> all_or(std::span<const std::size_t> indices, std::size_t n) {
  std::vector<std::size_t> out(indices.begin(), indices.end());
  if (out.empty()) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
  }
  for (std::size_t i : out) {
    if (i >= n) throw std::out_of_range("sample index " + std::to_string(i) + " out of range");
  }
  return out;
}

Tensor gather_factors(const spiro::SpiroDataset& data, std::span<const std::size_t> idx) {
  Tensor f(Shape{idx.size(), kNF});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(data.factors.data().begin() + idx[r] * kNF, kNF, f.data().begin() + r * kNF);
  }
  return f;
}

void put_row(Tensor& t, std::size_t r, const std::array<double, kNA>& v) {
  std::copy(v.begin(), v.end(), t.data().begin() + r * kNA);
}

void check_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ad::ShapeError(std::string(what) + " must be a matrix");
}

}  // namespace

Tensor ProbeModel::predict(const Tensor& x) const {
  check_matrix(x, "probe features");
  const std::size_t d = x.dim(1);
  if (w.rank() != 2 || w.dim(1) != d + 1) {
    throw ad::ShapeError("probe: expected " + std::to_string(w.rank() == 2 ? w.dim(1) - 1 : 0) +
                         " features, got " + std::to_string(d));
  }
  const std::size_t t = w.dim(0);
  ConstMap X(x.data().data(), x.dim(0), d);
  ConstMap W(w.data().data(), t, d + 1);
  RowMatrix out = X * W.leftCols(d).transpose();
  out.rowwise() += W.col(d).transpose();
  Tensor y(Shape{x.dim(0), t});
  std::copy(out.data(), out.data() + out.size(), y.data().begin());
  return y;
}

void FeatureAvgConfig::validate() const {
  if (M < 1) throw std::invalid_argument("feature averaging needs M >= 1");
}

Tensor encode(const ParamStore& params, const EncoderConfig& enc, const spiro::RenderGrid& grid,
              const Tensor& factors, const Tensor& nuisance) {
  const std::size_t n = factors.dim(0);
  if (nuisance.shape() != Shape{n, kNA}) throw ad::ShapeError("encode: nuisance rows must match");
  Tensor out(Shape{n, enc.repr_dim});
  for (std::size_t lo = 0; lo < n; lo += kChunk) {
    const std::size_t hi = std::min(n, lo + kChunk);
    Tensor f = ad::kernels::slice(factors, 0, lo, hi);
    Tensor a = ad::kernels::slice(nuisance, 0, lo, hi);
    ad::BoundParams p(params);
    Tensor z = train::encoder_forward(p, enc, ad::constant(spiro::render_batch(f, a, grid))).value();
    std::copy(z.data().begin(), z.data().end(), out.data().begin() + lo * enc.repr_dim);
  }
  return out;
}

Tensor embed(const spiro::SpiroDataset& data, const ParamStore& params, const EncoderConfig& enc,
             const Tensor& nuisance) {
  return encode(params, enc, data.grid, data.factors, nuisance);
}

Tensor embed(const spiro::SpiroDataset& data, const ParamStore& params, const EncoderConfig& enc) {
  return embed(data, params, enc, data.eval_nuisance);
}

spiro::Nuisance averaging_draw(std::uint64_t seed, std::size_t idx, std::size_t m,
                               const spiro::SpecTable& specs) {
  Rng rng(seed, Stream::kFeatureAvg, idx, m);
  return spiro::sample_nuisance(rng, specs);
}

Tensor feature_average(const spiro::SpiroDataset& data, const ParamStore& params,
                       const EncoderConfig& enc, const FeatureAvgConfig& cfg,
                       std::span<const std::size_t> indices) {
  cfg.validate();
  const auto idx = all_or(indices, data.size());
  const Tensor f = gather_factors(data, idx);
  Tensor acc(Shape{idx.size(), enc.repr_dim});
  for (std::size_t m = 0; m < cfg.M; ++m) {
    Tensor a(Shape{idx.size(), kNA});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      put_row(a, r, averaging_draw(cfg.seed, idx[r], m, data.specs).to_array());
    }
    ad::kernels::add_inplace(acc, encode(params, enc, data.grid, f, a));
  }
  return ad::kernels::scale(acc, 1.0 / static_cast<double>(cfg.M));
}

ProbeModel fit_linear_probe(const Tensor& features, const Tensor& targets, double weight_decay) {
  check_matrix(features, "probe features");
  check_matrix(targets, "probe targets");
  const std::size_t n = features.dim(0), d = features.dim(1), t = targets.dim(1);
  if (targets.dim(0) != n) throw ad::ShapeError("probe: features and targets differ in rows");
  if (n < 2) throw std::invalid_argument("probe: need at least 2 samples");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("probe: weight_decay must be >= 0");
  if (!features.all_finite() || !targets.all_finite()) {
    throw std::invalid_argument("probe: non-finite features or targets");
  }
  // Least squares on [X 1; sqrt(n wd) I 0] keeps the conditioning of X
  // instead of squaring it as the normal equations would.
  const double ridge = std::sqrt(static_cast<double>(n) * weight_decay);
  const std::size_t rows = ridge > 0.0 ? n + d : n;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(rows, d + 1);
  X.topLeftCorner(n, d) = ConstMap(features.data().data(), n, d);
  X.col(d).head(n).setOnes();
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(rows, t);
  Y.topRows(n) = ConstMap(targets.data().data(), n, t);
  if (ridge > 0.0) X.bottomLeftCorner(d, d).diagonal().setConstant(ridge);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < static_cast<Eigen::Index>(d + 1)) {
    throw std::invalid_argument(
        "probe: least-squares system is singular (collinear or constant features); "
        "use weight_decay > 0");
  }
  const Eigen::MatrixXd W = qr.solve(Y);
  ProbeModel model;
  model.weight_decay = weight_decay;
  model.w = Tensor(Shape{t, d + 1});
  for (std::size_t j = 0; j < t; ++j) {
    for (std::size_t c = 0; c <= d; ++c) model.w[j * (d + 1) + c] = W(c, j);
  }
  if (!model.w.all_finite()) throw std::runtime_error("probe: solution is not finite");
  return model;
}

std::vector<double> probe_mse(const ProbeModel& model, const Tensor& features,
                              const Tensor& targets) {
  const Tensor pred = model.predict(features);
  if (pred.shape() != targets.shape()) {
    throw ad::ShapeError("probe_mse: targets are " + ad::to_string(targets.shape()) +
                         ", predictions " + ad::to_string(pred.shape()));
  }
  const std::size_t n = pred.dim(0), t = pred.dim(1);
  std::vector<double> mse(t, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      const double r = pred[i * t + j] - targets[i * t + j];
      mse[j] += r * r;
    }
  }
  for (double& v : mse) v /= static_cast<double>(n);
  return mse;
}

AlphaRecovery alpha_recovery(const Tensor& train_features, const Tensor& train_alpha,
                             const Tensor& test_features, const Tensor& test_alpha,
                             const spiro::SpecTable& specs, double weight_decay) {
  check_matrix(train_alpha, "alpha targets");
  const std::size_t n = train_alpha.dim(0), a = train_alpha.dim(1);
  std::vector<double> mean(a, 0.0), sd(a, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < a; ++c) mean[c] += train_alpha[i * a + c] / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < a; ++c) {
      const double r = train_alpha[i * a + c] - mean[c];
      sd[c] += r * r / static_cast<double>(n);
    }
  }
  for (double& s : sd) s = s > 0.0 ? std::sqrt(s) : 1.0;
  Tensor z(train_alpha.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < a; ++c) z[i * a + c] = (train_alpha[i * a + c] - mean[c]) / sd[c];
  }
  const ProbeModel probe = fit_linear_probe(train_features, z, weight_decay);
  Tensor pred = probe.predict(test_features);
  if (pred.shape() != test_alpha.shape()) throw ad::ShapeError("alpha_recovery: test shapes differ");
  AlphaRecovery out;
  out.per_coordinate.assign(a, 0.0);
  const std::size_t m = pred.dim(0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < a; ++c) {
      const double r = pred[i * a + c] * sd[c] + mean[c] - test_alpha[i * a + c];
      out.per_coordinate[c] += r * r / static_cast<double>(m);
    }
  }
  for (double v : out.per_coordinate) out.loss += v / static_cast<double>(a);
  out.reference = specs.reference_value();
  return out;
}

obj::Estimate condvar_report(const spiro::SpiroDataset& data, const ParamStore& params,
                             const EncoderConfig& enc, std::size_t k, std::size_t L,
                             std::uint64_t seed) {
  if (k == 0 || k > data.size()) {
    throw std::invalid_argument("condvar_report: k must be in [1, " + std::to_string(data.size()) +
                                "]");
  }
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  const Tensor f = gather_factors(data, idx);
  Tensor e(Shape{k, enc.repr_dim});
  for (std::size_t i = 0; i < k; ++i) {
    Rng rng(seed, Stream::kCondvar, i, 0);
    for (std::size_t c = 0; c < enc.repr_dim; ++c) e[i * enc.repr_dim + c] = rng.rademacher();
  }
  auto column = [&](std::size_t j) {
    Tensor a(Shape{k, kNA});
    for (std::size_t i = 0; i < k; ++i) {
      Rng rng(seed, Stream::kCondvar, i, j + 1);
      put_row(a, i, spiro::sample_nuisance(rng, data.specs).to_array());
    }
    const Tensor z = encode(params, enc, data.grid, f, a);
    return obj::scalar_projection(ad::constant(z), e).value();
  };
  return obj::nested_mc_condvar(column, L);
}

spiro::SpecTable SweepSpec::apply(const spiro::SpecTable& base, double s) const {
  spiro::SpecTable out = base;
  for (const auto& field : fields) {
    auto& spec = out.spec(field);
    if (kind == Kind::kShift) {
      spec.shift += s;
    } else {
      spec.widen += s;
    }
  }
  out.validate();
  return out;
}

SweepCurve robustness_sweep(const spiro::SpiroDataset& test, const ParamStore& params,
                            const EncoderConfig& enc, const ProbeModel& probe,
                            const SweepSpec& sweep) {
  SweepCurve curve{sweep.name, {}};
  for (double s : sweep.strengths) {
    const spiro::SpecTable specs = sweep.apply(test.specs, s);
    const Tensor z = embed(test, params, enc, test.eval_nuisance_under(specs));
    curve.points.push_back({s, probe_mse(probe, z, test.factors)});
  }
  return curve;
}

Tensor ensemble_predict(const spiro::SpiroDataset& data, const ParamStore& params,
                        const EncoderConfig& enc, const ProbeModel& probe, std::size_t M,
                        std::uint64_t seed, std::span<const std::size_t> indices) {
  if (M < 1) throw std::invalid_argument("ensemble needs M >= 1");
  const auto idx = all_or(indices, data.size());
  const Tensor f = gather_factors(data, idx);
  Tensor acc;
  for (std::size_t m = 0; m < M; ++m) {
    Tensor a(Shape{idx.size(), kNA});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      put_row(a, r, averaging_draw(seed, idx[r], m, data.specs).to_array());
    }
    Tensor pred = probe.predict(encode(params, enc, data.grid, f, a));
    if (m == 0) {
      acc = std::move(pred);
    } else {
      ad::kernels::add_inplace(acc, pred);
    }
  }
  return ad::kernels::scale(acc, 1.0 / static_cast<double>(M));
}

void EvalConfig::validate() const {
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("eval.weight_decay must be >= 0");
  if (condvar_k == 0) throw std::invalid_argument("eval.condvar_k must be >= 1");
  if (condvar_L < 2) throw std::invalid_argument("eval.condvar_L must be >= 2");
  for (const auto& s : sweeps) {
    if (s.fields.empty()) throw std::invalid_argument("sweep '" + s.name + "' lists no fields");
    for (const auto& f : s.fields) spiro::SpecTable::nuisance_index(f);
  }
}

std::vector<SweepSpec> EvalConfig::default_sweeps() {
  using K = SweepSpec::Kind;
  return {
      {"h_shift", {"h"}, K::kShift, {-0.5, -0.3, -0.1, 0.0, 0.1, 0.3, 0.5}},
      {"background_shift", {"b_r", "b_g", "b_b"}, K::kShift, {0.0, 0.2, 0.4}},
      {"background_widen", {"b_r", "b_g", "b_b"}, K::kWiden, {0.0, 0.2, 0.4}},
  };
}

EvalReport evaluate(const spiro::SpiroDataset& train_set, const spiro::SpiroDataset& test_set,
                    const ParamStore& params, const EncoderConfig& enc, const EvalConfig& cfg) {
  cfg.validate();
  EvalReport report;
  const Tensor z_train = embed(train_set, params, enc);
  const Tensor z_test = embed(test_set, params, enc);
  const ProbeModel probe = fit_linear_probe(z_train, train_set.factors, cfg.weight_decay);
  report.probe_mse = probe_mse(probe, z_test, test_set.factors);
  report.alpha = alpha_recovery(z_train, train_set.eval_nuisance, z_test, test_set.eval_nuisance,
                                test_set.specs, cfg.weight_decay);
  report.condvar = condvar_report(test_set, params, enc, std::min(cfg.condvar_k, test_set.size()),
                                  cfg.condvar_L, cfg.seed);
  for (std::size_t m = 1; cfg.fa_max_M > 0 && m <= cfg.fa_max_M; m *= 2) {
    const Tensor a = feature_average(train_set, params, enc, {m, cfg.seed});
    const Tensor b = feature_average(test_set, params, enc, {m, cfg.seed + 1});
    const ProbeModel p = fit_linear_probe(a, train_set.factors, cfg.weight_decay);
    report.feature_averaging.push_back({m, probe_mse(p, b, test_set.factors)});
  }
  for (const auto& sweep : cfg.sweeps) {
    report.robustness.push_back(robustness_sweep(test_set, params, enc, probe, sweep));
  }
  return report;
}

}  // namespace invclr::eval
