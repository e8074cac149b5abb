// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include "invclr/train/train.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>

namespace invclr::train {

namespace {

using ad::Shape;

void add_affine(ParamStore& store, const std::string& prefix, std::size_t fan_in,
                std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w(Shape{fan_in, fan_out});
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  store.add(prefix + ".w", std::move(w));
  store.add(prefix + ".b", Tensor(Shape{1, fan_out}));
}

Var affine(const ad::BoundParams& p, const std::string& prefix, const Var& x) {
  return ad::matmul(x, p[prefix + ".w"]) + p[prefix + ".b"];
}

void check_finite(const ParamStore& grads) {
  for (const auto& [name, g] : grads) {
    if (g.all_finite()) continue;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw std::runtime_error("non-finite gradient in " + name + " at flat index " +
                                 std::to_string(i) + " (value " + std::to_string(g[i]) + ")");
      }
    }
  }
}

}  // namespace

void EncoderConfig::validate() const {
  for (std::size_t d : input_shape) {
    if (d == 0) throw std::invalid_argument("encoder.input_shape entries must be positive");
  }
  if (hidden_sizes.empty()) throw std::invalid_argument("encoder needs at least one hidden layer");
  for (std::size_t h : hidden_sizes) {
    if (h == 0) throw std::invalid_argument("encoder.hidden_sizes entries must be positive");
  }
  if (repr_dim < 2) throw std::invalid_argument("encoder.repr_dim must be >= 2");
}

void HeadConfig::validate() const {
  if (hidden == 0) throw std::invalid_argument("head.hidden must be positive");
  if (out_dim < 2) throw std::invalid_argument("head.out_dim must be >= 2");
}

void OptimizerConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer.beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer.beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer.eps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("optimizer.momentum must be in [0, 1)");
  }
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("train.batch_size must be >= 2");
  if (epochs == 0) throw std::invalid_argument("train.epochs must be >= 1");
  if (!(lr_max > 0.0) || !std::isfinite(lr_max)) {
    throw std::invalid_argument("train.lr_max must be positive");
  }
  optimizer.validate();
  reg.validate();
  sim.validate();
}

ParamStore init_params(const EncoderConfig& enc, const HeadConfig& head, std::uint64_t seed) {
  enc.validate();
  head.validate();
  ParamStore store;
  std::uint64_t layer = 0;
  std::size_t fan_in = enc.input_dim();
  for (std::size_t i = 0; i <= enc.hidden_sizes.size(); ++i) {
    const std::size_t out = i < enc.hidden_sizes.size() ? enc.hidden_sizes[i] : enc.repr_dim;
    Rng rng(seed, Stream::kInit, layer++);
    add_affine(store, "enc." + std::to_string(i), fan_in, out, rng);
    fan_in = out;
  }
  Rng r0(seed, Stream::kInit, layer++);
  add_affine(store, "head.0", enc.repr_dim, head.hidden, r0);
  Rng r1(seed, Stream::kInit, layer++);
  add_affine(store, "head.1", head.hidden, head.out_dim, r1);
  return store;
}

Var encoder_forward(const ad::BoundParams& p, const EncoderConfig& cfg, const Var& images) {
  const Shape& s = images.shape();
  const std::size_t d = cfg.input_dim();
  const bool flat = s.size() == 2 && s[1] == d;
  const bool image = s.size() == 4 && s[1] == cfg.input_shape[0] && s[2] == cfg.input_shape[1] &&
                     s[3] == cfg.input_shape[2];
  if (!flat && !image) {
    throw ad::ShapeError("encoder_forward: expected K x " + std::to_string(cfg.input_shape[0]) +
                         " x " + std::to_string(cfg.input_shape[1]) + " x " +
                         std::to_string(cfg.input_shape[2]) + ", got " + ad::to_string(s));
  }
  Var x = flat ? images : ad::reshape(images, {s[0], d});
  const std::size_t n = cfg.hidden_sizes.size();
  for (std::size_t i = 0; i < n; ++i) x = ad::relu(affine(p, "enc." + std::to_string(i), x));
  return affine(p, "enc." + std::to_string(n), x);
}

Var head_forward(const ad::BoundParams& p, const HeadConfig&, const Var& z) {
  return affine(p, "head.1", ad::relu(affine(p, "head.0", z)));
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max) {
  if (total_steps == 0 || step > total_steps) {
    throw std::invalid_argument("cosine_lr: need 0 <= step <= total_steps, total_steps > 0");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * lr_max * (1.0 + std::cos(std::numbers::pi * frac));
}

Optimizer::Optimizer(const OptimizerConfig& cfg, const ParamStore& params) : cfg_(cfg) {
  cfg_.validate();
  state_.first = params.zeros_like();
  if (cfg_.kind == OptimizerKind::kAdam) state_.second = params.zeros_like();
}

void Optimizer::step(ParamStore& params, const ParamStore& grads, double lr) {
  check_finite(grads);
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& [name, w] : params) {
    const Tensor& g = grads.get(name);
    Tensor& m = state_.first.get(name);
    if (g.shape() != w.shape()) {
      throw ad::ShapeError("optimizer: gradient for " + name + " has shape " +
                           ad::to_string(g.shape()) + ", parameter is " +
                           ad::to_string(w.shape()));
    }
    if (cfg_.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.momentum * m[i] + g[i];
        w[i] -= lr * m[i];
      }
      continue;
    }
    Tensor& v = state_.second.get(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

spiro::Nuisance view_nuisance(std::uint64_t seed, std::uint64_t epoch, std::size_t idx, int view,
                              const spiro::SpecTable& specs) {
  Rng rng(seed, Stream::kView, epoch, 2 * static_cast<std::uint64_t>(idx) + view);
  return spiro::sample_nuisance(rng, specs);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, Stream::kShuffle, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

Batch make_batch(const spiro::SpiroDataset& data, std::span<const std::size_t> indices,
                 std::uint64_t epoch, const TrainConfig& cfg, std::size_t repr_dim) {
  constexpr std::size_t nf = spiro::kNumFactors, na = spiro::kNumNuisance;
  const std::size_t k = indices.size(), l = cfg.reg.L;
  const bool penalised = cfg.reg.lambda > 0.0;
  Batch out{Tensor(Shape{k, nf}), Tensor(Shape{k, na}), Tensor(Shape{k, na}), {}, {}};
  if (penalised) {
    out.alpha_prime = Tensor(Shape{k, l, na});
    out.e = Tensor(Shape{k, repr_dim});
  }
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t idx = indices[r];
    if (idx >= data.size()) throw std::out_of_range("make_batch: sample index out of range");
    std::copy_n(data.factors.data().begin() + idx * nf, nf, out.factors.data().begin() + r * nf);
    const auto v1 = view_nuisance(cfg.seed, epoch, idx, 0, data.specs).to_array();
    const auto v2 = view_nuisance(cfg.seed, epoch, idx, 1, data.specs).to_array();
    std::copy(v1.begin(), v1.end(), out.view1.data().begin() + r * na);
    std::copy(v2.begin(), v2.end(), out.view2.data().begin() + r * na);
    if (!penalised) continue;
    Rng rng(cfg.seed, Stream::kPenalty, epoch, idx);
    for (std::size_t j = 0; j < l; ++j) {
      const auto a = spiro::sample_nuisance(rng, data.specs).to_array();
      std::copy(a.begin(), a.end(), out.alpha_prime.data().begin() + (r * l + j) * na);
    }
    for (std::size_t c = 0; c < repr_dim; ++c) out.e[r * repr_dim + c] = rng.rademacher();
  }
  return out;
}

obj::LossParts batch_loss(const ad::BoundParams& p, const EncoderConfig& enc,
                          const HeadConfig& head, const TrainConfig& cfg,
                          const spiro::RenderGrid& grid, const Batch& batch) {
  const bool penalised = cfg.reg.lambda > 0.0;
  Var fac = ad::constant(batch.factors);
  Var alpha = ad::constant(batch.view1);
  Var z1 = encoder_forward(p, enc, spiro::render_batch(fac, alpha, grid, penalised));
  Var z2 = encoder_forward(p, enc, spiro::render_batch(fac, ad::constant(batch.view2), grid, false));
  obj::Map g = [&](const Var& z) { return head_forward(p, head, z); };
  return obj::full_loss(z1, z2, g, cfg.sim, cfg.reg, {alpha, batch.alpha_prime, batch.e, cfg.route});
}

TrainResult train(const spiro::SpiroDataset& data, const EncoderConfig& enc,
                  const HeadConfig& head, const TrainConfig& cfg, const TrainHooks& hooks) {
  return train(data, enc, head, cfg, init_params(enc, head, cfg.seed), hooks);
}

TrainResult train(const spiro::SpiroDataset& data, const EncoderConfig& enc,
                  const HeadConfig& head, const TrainConfig& cfg, ParamStore params,
                  const TrainHooks& hooks) {
  cfg.validate();
  enc.validate();
  head.validate();
  const std::size_t n = data.size();
  const std::size_t k = cfg.batch_size;
  const auto res = static_cast<std::size_t>(data.grid.resolution);
  if (n == 0) throw std::invalid_argument("train: dataset is empty");
  if (enc.input_shape != std::array<std::size_t, 3>{3, res, res}) {
    throw std::invalid_argument("train: encoder input_shape does not match the dataset grid (3 x " +
                                std::to_string(res) + " x " + std::to_string(res) + ")");
  }
  if (k > n) {
    throw std::invalid_argument("train: batch_size " + std::to_string(k) +
                                " exceeds dataset size " + std::to_string(n));
  }
  const std::size_t per_epoch = n / k;
  const std::size_t total = per_epoch * cfg.epochs;

  Optimizer opt(cfg.optimizer, params);
  TrainResult out;
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(cfg.seed, epoch, n);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const auto t0 = std::chrono::steady_clock::now();
      const Batch batch =
          make_batch(data, std::span(order).subspan(b * k, k), epoch, cfg, enc.repr_dim);
      ad::BoundParams p(params);
      const obj::LossParts loss = batch_loss(p, enc, head, cfg, data.grid, batch);
      const double total_loss = loss.total.value().item();
      if (!std::isfinite(total_loss)) {
        throw TrainingAborted("train: non-finite loss at step " + std::to_string(step + 1) +
                                  " (epoch " + std::to_string(epoch) + ")",
                              params, step);
      }
      const ParamStore grads = ad::backward(loss.total, p);
      const double lr = cosine_lr(step, total, cfg.lr_max);
      try {
        opt.step(params, grads, lr);
      } catch (const std::runtime_error& err) {
        throw TrainingAborted(std::string("train: ") + err.what() + " at step " +
                                  std::to_string(step + 1),
                              params, step);
      }
      ++step;

      MetricsRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.infonce = loss.infonce;
      rec.penalty = loss.penalty;
      rec.penalty_clipped = loss.clipped;
      if (cfg.record_wall_time) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      }
      if (hooks.on_metrics) hooks.on_metrics(rec);
      out.metrics.push_back(rec);
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, params);
  }
  out.params = std::move(params);
  return out;
}

}  // namespace invclr::train
