// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "invclr/train/train.hpp"

namespace invclr::eval {

using ad::ParamStore;
using ad::Tensor;
using train::EncoderConfig;

/// Linear regressor on features augmented with a trailing constant 1.
struct ProbeModel {
  Tensor w;  // targets x (d + 1); last column is the bias
  double weight_decay = 1e-8;

  /// n x d features -> n x targets predictions.
  Tensor predict(const Tensor& x) const;
};

struct FeatureAvgConfig {
  std::size_t M = 1;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Encodes rendered images for the given factors and nuisances (rows match),
/// in chunks; no projection head. Returns n x repr_dim.
Tensor encode(const ParamStore& params, const EncoderConfig& enc, const spiro::RenderGrid& grid,
              const Tensor& factors, const Tensor& nuisance);

/// Representations of every sample under an explicit n x 6 nuisance table.
Tensor embed(const spiro::SpiroDataset& data, const ParamStore& params, const EncoderConfig& enc,
             const Tensor& nuisance);
/// Representations under each sample's stored evaluation nuisance.
Tensor embed(const spiro::SpiroDataset& data, const ParamStore& params, const EncoderConfig& enc);

/// Nuisance draw m of sample idx for feature averaging and ensembling.
spiro::Nuisance averaging_draw(std::uint64_t seed, std::size_t idx, std::size_t m,
                               const spiro::SpecTable& specs);

/// z^(M) for the listed samples (all samples when `indices` is empty).
Tensor feature_average(const spiro::SpiroDataset& data, const ParamStore& params,
                       const EncoderConfig& enc, const FeatureAvgConfig& cfg,
                       std::span<const std::size_t> indices = {});

/// Ridge regression with an unregularised bias: minimises
/// (1/n) |Xw - y|^2 + wd |w_features|^2 for each target column.
ProbeModel fit_linear_probe(const Tensor& features, const Tensor& targets, double weight_decay);

/// Mean squared residual per target column.
std::vector<double> probe_mse(const ProbeModel& model, const Tensor& features,
                              const Tensor& targets);

struct AlphaRecovery {
  double loss = 0.0;                  // test MSE averaged over alpha coordinates
  double reference = 0.0;             // Mean_i Var(alpha_i) under the specs
  std::vector<double> per_coordinate;
};

/// Fits z -> alpha on standardised targets, reports test MSE in original units.
AlphaRecovery alpha_recovery(const Tensor& train_features, const Tensor& train_alpha,
                             const Tensor& test_features, const Tensor& test_alpha,
                             const spiro::SpecTable& specs, double weight_decay);

/// Nested Monte Carlo conditional variance of e.z/|z| over the first `k`
/// samples, with L fresh nuisance draws each.
obj::Estimate condvar_report(const spiro::SpiroDataset& data, const ParamStore& params,
                             const EncoderConfig& enc, std::size_t k, std::size_t L,
                             std::uint64_t seed);

struct SweepSpec {
  enum class Kind { kShift, kWiden };
  std::string name;
  std::vector<std::string> fields;  // nuisance field names
  Kind kind = Kind::kShift;
  std::vector<double> strengths;

  /// Returns `base` with every listed field shifted or widened by s.
  spiro::SpecTable apply(const spiro::SpecTable& base, double s) const;
};

struct SweepPoint {
  double strength = 0.0;
  std::vector<double> mse;  // per factor
};

struct SweepCurve {
  std::string name;
  std::vector<SweepPoint> points;
};

/// Re-embeds `test` under each shifted spec and scores the fixed probe.
SweepCurve robustness_sweep(const spiro::SpiroDataset& test, const ParamStore& params,
                            const EncoderConfig& enc, const ProbeModel& probe,
                            const SweepSpec& sweep);

/// (1/M) sum_m probe(f(t(x, alpha_m))) for the listed samples, using the
/// same draws as feature_average.
Tensor ensemble_predict(const spiro::SpiroDataset& data, const ParamStore& params,
                        const EncoderConfig& enc, const ProbeModel& probe, std::size_t M,
                        std::uint64_t seed, std::span<const std::size_t> indices = {});

struct FeatureAvgPoint {
  std::size_t M = 1;
  std::vector<double> mse;  // per factor, probe refit on averaged train features
};

struct EvalConfig {
  double weight_decay = 1e-8;
  std::size_t condvar_k = 256;
  std::size_t condvar_L = 100;
  std::uint64_t seed = 0;
  std::size_t fa_max_M = 16;  // 0 disables the feature-averaging curve
  std::vector<SweepSpec> sweeps = default_sweeps();
  void validate() const;

  static std::vector<SweepSpec> default_sweeps();
};

struct EvalReport {
  std::vector<double> probe_mse;  // m, b, sigma, f_r
  AlphaRecovery alpha;
  obj::Estimate condvar;
  std::vector<FeatureAvgPoint> feature_averaging;
  std::vector<SweepCurve> robustness;
};

/// Probes are fit on `train_set` embeddings and scored on `test_set`.
EvalReport evaluate(const spiro::SpiroDataset& train_set, const spiro::SpiroDataset& test_set,
                    const ParamStore& params, const EncoderConfig& enc, const EvalConfig& cfg);

}  // namespace invclr::eval
