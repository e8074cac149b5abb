// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "invclr/ad/params.hpp"
#include "invclr/obj/objectives.hpp"
#include "invclr/spiro/spirograph.hpp"

namespace invclr::train {

using ad::ParamStore;
using ad::Tensor;
using ad::Var;

/// MLP encoder: flatten -> (affine, ReLU) per hidden layer -> affine.
struct EncoderConfig {
  std::array<std::size_t, 3> input_shape = {3, 32, 32};
  std::vector<std::size_t> hidden_sizes = {512, 256};
  std::size_t repr_dim = 128;

  std::size_t input_dim() const { return input_shape[0] * input_shape[1] * input_shape[2]; }
  void validate() const;
};

/// Projection head: affine -> ReLU -> affine.
struct HeadConfig {
  std::size_t hidden = 128;
  std::size_t out_dim = 64;
  void validate() const;
};

enum class OptimizerKind { kAdam, kSgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;  // SGD only
  void validate() const;
};

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  double lr_max = 1e-3;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  obj::RegConfig reg;
  obj::SimilarityConfig sim;
  obj::PenaltyRoute route = obj::PenaltyRoute::kBasis;
  /// Wall-clock timings make the metrics stream machine dependent, so they
  /// are only recorded on request.
  bool record_wall_time = false;
  void validate() const;
};

/// Weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases. Names are
/// "enc.<i>.w", "enc.<i>.b", "head.<i>.w", "head.<i>.b".
ParamStore init_params(const EncoderConfig& enc, const HeadConfig& head, std::uint64_t seed);

/// images: K x C x H x W (or already flat K x CHW). Returns K x repr_dim.
Var encoder_forward(const ad::BoundParams& p, const EncoderConfig& cfg, const Var& images);
Var head_forward(const ad::BoundParams& p, const HeadConfig& cfg, const Var& z);

/// 0.5 lr_max (1 + cos(pi step / total)).
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max);

struct OptimizerState {
  ParamStore first;   // Adam m, or SGD momentum buffer
  ParamStore second;  // Adam v; empty for SGD
  std::uint64_t step = 0;
};

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, const ParamStore& params);

  /// Throws std::runtime_error naming the parameter if any gradient is not
  /// finite; params are untouched in that case.
  void step(ParamStore& params, const ParamStore& grads, double lr);
  const OptimizerState& state() const { return state_; }

 private:
  OptimizerConfig cfg_;
  OptimizerState state_;
};

struct MetricsRecord {
  std::uint64_t step = 0;  // 1-based optimizer step
  std::uint64_t epoch = 0;
  double lr = 0.0;
  double infonce = 0.0;
  std::optional<double> penalty;  // empty when lambda = 0
  bool penalty_clipped = false;
  std::optional<double> wall_ms;
};

struct TrainHooks {
  std::function<void(const MetricsRecord&)> on_metrics;
  /// Called after each completed epoch with the current parameters.
  std::function<void(std::size_t epoch, const ParamStore&)> on_epoch;
};

struct TrainResult {
  ParamStore params;
  std::vector<MetricsRecord> metrics;
};

/// Raised when the loss or a gradient stops being finite; carries the
/// parameters from before the failing step.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, ParamStore last_good, std::uint64_t step)
      : std::runtime_error(what), last_good(std::move(last_good)), step(step) {}
  ParamStore last_good;
  std::uint64_t step;
};

/// Nuisance for view `view` (0 or 1) of sample `idx` in `epoch`.
spiro::Nuisance view_nuisance(std::uint64_t seed, std::uint64_t epoch, std::size_t idx, int view,
                              const spiro::SpecTable& specs);

/// Sample order for one epoch (Fisher-Yates on the kShuffle stream).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n);

/// Everything random that one optimizer step consumes.
struct Batch {
  Tensor factors;      // K x 4
  Tensor view1;        // K x 6 nuisance, the penalty's linearisation point
  Tensor view2;        // K x 6
  Tensor alpha_prime;  // K x L x 6, empty when lambda = 0
  Tensor e;            // K x repr_dim, empty when lambda = 0
};

Batch make_batch(const spiro::SpiroDataset& data, std::span<const std::size_t> indices,
                 std::uint64_t epoch, const TrainConfig& cfg, std::size_t repr_dim);

/// Renders both views, encodes them and evaluates the training loss.
obj::LossParts batch_loss(const ad::BoundParams& p, const EncoderConfig& enc,
                          const HeadConfig& head, const TrainConfig& cfg,
                          const spiro::RenderGrid& grid, const Batch& batch);

TrainResult train(const spiro::SpiroDataset& data, const EncoderConfig& enc,
                  const HeadConfig& head, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// As above, starting from the given parameters instead of init_params.
TrainResult train(const spiro::SpiroDataset& data, const EncoderConfig& enc,
                  const HeadConfig& head, const TrainConfig& cfg, ParamStore params,
                  const TrainHooks& hooks);

}  // namespace invclr::train
