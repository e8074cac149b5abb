// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "invclr/ad/check.hpp"
#include "invclr/train/train.hpp"

namespace ad = invclr::ad;
namespace spiro = invclr::spiro;
namespace train = invclr::train;
using ad::ParamStore;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

train::EncoderConfig tiny_encoder(std::size_t res) {
  train::EncoderConfig enc;
  enc.input_shape = {3, res, res};
  enc.hidden_sizes = {2};
  enc.repr_dim = 3;
  return enc;
}

spiro::SpiroDataset small_dataset(std::size_t n, int res, std::uint64_t seed = 1) {
  return spiro::generate_dataset(n, seed, spiro::SpecTable::defaults(), {res, 5.0});
}

}  // namespace

TEST(EncoderTest, ZeroParametersGiveZeroRepresentations) {
  train::EncoderConfig enc = tiny_encoder(4);
  ParamStore store = train::init_params(enc, {}, 1);
  for (auto& [name, t] : store) t = Tensor(t.shape());
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor img(Shape{2, 3, 4, 4});
  for (double& v : img.data()) v = u(gen);
  ad::BoundParams p(store);
  Tensor z = train::encoder_forward(p, enc, ad::constant(img)).value();
  EXPECT_EQ(z.shape(), (Shape{2, 3}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(EncoderTest, IdenticalImagesGiveIdenticalRows) {
  train::EncoderConfig enc;
  enc.input_shape = {3, 8, 8};
  ParamStore store = train::init_params(enc, {}, 2);
  Tensor one = spiro::render({4, 0.4, 1, 0.7}, {2, 0.5, 0.6, 0.1, 0.2, 0.3}, {8, 5.0});
  Tensor img(Shape{2, 3, 8, 8});
  std::copy(one.data().begin(), one.data().end(), img.data().begin());
  std::copy(one.data().begin(), one.data().end(), img.data().begin() + one.size());
  ad::BoundParams p(store);
  Tensor z = train::encoder_forward(p, enc, ad::constant(img)).value();
  for (std::size_t c = 0; c < enc.repr_dim; ++c) EXPECT_EQ(z[c], z[enc.repr_dim + c]);
}

TEST(EncoderTest, ShapeMismatchRejected) {
  train::EncoderConfig enc = tiny_encoder(4);
  ParamStore store = train::init_params(enc, {}, 1);
  ad::BoundParams p(store);
  EXPECT_THROW(train::encoder_forward(p, enc, ad::constant(Tensor(Shape{2, 3, 5, 5}))),
               ad::ShapeError);
  EXPECT_THROW(train::encoder_forward(p, enc, ad::constant(Tensor(Shape{2, 47}))), ad::ShapeError);
}

TEST(EncoderTest, JvpMatchesCentralDifferences) {
  train::EncoderConfig enc;
  enc.input_shape = {3, 4, 4};
  enc.hidden_sizes = {16, 8};
  enc.repr_dim = 5;
  ParamStore store = train::init_params(enc, {}, 3);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0, 1), d(-1, 1);
  Tensor x(Shape{2, 3, 4, 4}), dir(Shape{2, 3, 4, 4});
  for (double& v : x.data()) v = u(gen);
  for (double& v : dir.data()) v = d(gen);
  ad::BoundParams p(store);
  ad::Program prog = [&](std::span<const Var> in) { return train::encoder_forward(p, enc, in[0]); };
  std::vector<Tensor> at{x}, dirs{dir};
  Tensor jv = ad::jvp(prog, at, dirs).derivative.value();
  const double h = 1e-6;
  auto eval = [&](double s) {
    Tensor xs = x;
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += s * dir[i];
    return train::encoder_forward(p, enc, ad::constant(xs)).value();
  };
  Tensor fp = eval(h), fm = eval(-h);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < jv.size(); ++i) {
    const double fd = (fp[i] - fm[i]) / (2 * h);
    num += (jv[i] - fd) * (jv[i] - fd);
    den += fd * fd;
  }
  EXPECT_LT(std::sqrt(num / den), 1e-5);
}

TEST(InitTest, DeterministicPerSeed) {
  train::EncoderConfig enc = tiny_encoder(4);
  EXPECT_EQ(train::init_params(enc, {}, 5), train::init_params(enc, {}, 5));
  EXPECT_NE(train::init_params(enc, {}, 5), train::init_params(enc, {}, 6));
}

TEST(InitTest, UniformBoundsAndZeroBiases) {
  train::EncoderConfig enc;
  enc.input_shape = {1, 10, 10};
  enc.hidden_sizes = {50};
  ParamStore store = train::init_params(enc, {}, 7);
  const Tensor& w = store.get("enc.0.w");
  ASSERT_EQ(w.shape(), (Shape{100, 50}));
  double lo = 1, hi = -1;
  for (double v : w.data()) {
    ASSERT_LE(std::abs(v), 0.1);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_LT(lo, -0.09);
  EXPECT_GT(hi, 0.09);
  for (const auto& [name, t] : store) {
    if (name.ends_with(".b")) {
      for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
    }
  }
  EXPECT_TRUE(store.contains("head.1.w"));
  EXPECT_EQ(store.get("head.1.w").shape(), (Shape{128, 64}));
}

TEST(ConfigTest, InvariantsEnforced) {
  train::EncoderConfig enc;
  enc.repr_dim = 1;
  EXPECT_THROW(enc.validate(), std::invalid_argument);
  enc = {};
  enc.hidden_sizes.clear();
  EXPECT_THROW(enc.validate(), std::invalid_argument);
  EXPECT_THROW((train::HeadConfig{128, 1}.validate()), std::invalid_argument);
  train::TrainConfig cfg;
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(CosineLrTest, Examples) {
  EXPECT_EQ(train::cosine_lr(0, 100, 0.1), 0.1);
  EXPECT_NEAR(train::cosine_lr(100, 100, 0.1), 0.0, 1e-18);
  EXPECT_NEAR(train::cosine_lr(50, 100, 0.1), 0.05, 1e-17);
  EXPECT_THROW(train::cosine_lr(101, 100, 0.1), std::invalid_argument);
}

TEST(OptimizerTest, SgdZeroGradientLeavesParameters) {
  ParamStore store;
  store.add("w", Tensor(Shape{3}, std::vector<double>{1, -2, 3}));
  ParamStore before = store;
  train::Optimizer opt({train::OptimizerKind::kSgd}, store);
  for (int i = 0; i < 5; ++i) opt.step(store, store.zeros_like(), 0.1);
  EXPECT_EQ(store, before);
}

TEST(OptimizerTest, SgdOnQuadraticDecreasesMonotonically) {
  // f(w) = 2.5 w^2, curvature 5; lr 0.3 < 2/5.
  ParamStore store;
  store.add("w", Tensor(Shape{1}, std::vector<double>{3.0}));
  train::OptimizerConfig cfg{train::OptimizerKind::kSgd};
  cfg.momentum = 0.0;
  train::Optimizer opt(cfg, store);
  double prev = 2.5 * 9.0;
  for (int i = 0; i < 30; ++i) {
    ParamStore g = store.zeros_like();
    g.get("w")[0] = 5.0 * store.get("w")[0];
    opt.step(store, g, 0.3);
    const double f = 2.5 * store.get("w")[0] * store.get("w")[0];
    EXPECT_LT(f, prev);
    prev = f;
  }
}

// Reference trajectory from a 50-digit evaluation of the Adam recurrence on
// f(w) = sum (w_i - c_i)^4 / 4 + 0.1 w0 w1, c = (1, -1, 0.5), lr 0.05.
TEST(OptimizerTest, AdamMatchesScriptedReference) {
  const double expected[10][3] = {
      {0.5499999967741937565, -0.34999999872773540133, 1.150000001457725905},
      {0.59947195101917749513, -0.39958106133893747425, 1.1005904725637912805},
      {0.64815285860272156227, -0.44847570179909621462, 1.0522058393809156794},
      {0.69589082290072052574, -0.49644977657702170578, 1.0052744024208066862},
      {0.74265446241235415882, -0.54331867120611855282, 0.96018555365109502593},
      {0.78852095758281886218, -0.58895769458070446447, 0.91726200453997166358},
      {0.83365025910828397553, -0.63330581495181799237, 0.87674233235456963283},
      {0.8782538824949959088, -0.67636336434038801514, 0.83877570571558516413},
      {0.92256453696581242719, -0.71818528189200661573, 0.80342720805684349461},
      {0.96681005786597116143, -0.75887173133971085192, 0.77069017487240531963},
  };
  const double c[3] = {1.0, -1.0, 0.5};
  ParamStore store;
  store.add("w", Tensor(Shape{3}, std::vector<double>{0.5, -0.3, 1.2}));
  train::Optimizer opt({train::OptimizerKind::kAdam}, store);
  for (int t = 0; t < 10; ++t) {
    const Tensor& w = store.get("w");
    ParamStore g = store.zeros_like();
    for (int i = 0; i < 3; ++i) g.get("w")[i] = std::pow(w[i] - c[i], 3);
    g.get("w")[0] += 0.1 * w[1];
    g.get("w")[1] += 0.1 * w[0];
    opt.step(store, g, 0.05);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(store.get("w")[i], expected[t][i], 1e-12) << t;
  }
  EXPECT_EQ(opt.state().step, 10u);
}

TEST(OptimizerTest, NonFiniteGradientRejectedWithoutUpdate) {
  ParamStore store;
  store.add("a", Tensor(Shape{2}, 1.0));
  store.add("b", Tensor(Shape{2}, 1.0));
  ParamStore before = store;
  train::Optimizer opt({}, store);
  ParamStore g = store.zeros_like();
  g.get("b")[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step(store, g, 0.1);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& err) {
    EXPECT_NE(std::string(err.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(store, before);
}

TEST(BatchTest, ShuffleIsAPermutation) {
  auto order = train::epoch_order(3, 2, 1000);
  std::vector<std::size_t> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) ASSERT_EQ(sorted[i], i);
  EXPECT_NE(order, train::epoch_order(3, 3, 1000));
}

TEST(BatchTest, ViewStreamsIndependentOfLambda) {
  auto data = small_dataset(16, 8);
  train::TrainConfig a, b;
  a.reg.lambda = 0.0;
  b.reg.lambda = 0.01;
  b.reg.L = 3;
  std::vector<std::size_t> idx{3, 7, 11};
  const auto ba = train::make_batch(data, idx, 4, a, 5);
  const auto bb = train::make_batch(data, idx, 4, b, 5);
  EXPECT_EQ(ba.view1, bb.view1);
  EXPECT_EQ(ba.view2, bb.view2);
  EXPECT_EQ(ba.factors, bb.factors);
  EXPECT_NE(ba.view1, ba.view2);
  EXPECT_TRUE(ba.alpha_prime.shape().empty());
  EXPECT_EQ(bb.alpha_prime.shape(), (Shape{3, 3, 6}));
  EXPECT_EQ(bb.e.shape(), (Shape{3, 5}));
}

TEST(PipelineGradientTest, FullLossMatchesFiniteDifferences) {
  auto data = small_dataset(4, 8, 11);
  train::EncoderConfig enc = tiny_encoder(8);
  train::HeadConfig head{3, 2};
  train::TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.reg = {0.5, 2, 1000};
  ParamStore store = train::init_params(enc, head, 11);
  // Positive hidden biases keep the ReLU units active.
  store.get("enc.0.b")[0] = 0.3;
  store.get("enc.0.b")[1] = 0.4;
  for (double& b : store.get("head.0.b").data()) b = 0.5;
  std::vector<std::size_t> idx{0, 2};
  const auto batch = train::make_batch(data, idx, 0, cfg, enc.repr_dim);
  auto loss_at = [&](const ParamStore& s) {
    ad::BoundParams p(s);
    return train::batch_loss(p, enc, head, cfg, data.grid, batch).total.value().item();
  };
  ad::BoundParams p(store);
  auto parts = train::batch_loss(p, enc, head, cfg, data.grid, batch);
  ASSERT_TRUE(parts.penalty.has_value());
  ASSERT_GT(*parts.penalty, 0.0);
  ParamStore grads = ad::backward(parts.total, p);
  ParamStore s = store;
  const double h = 1e-6;
  double num = 0, den = 0;
  for (auto& [name, t] : s) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x0 = t[i];
      t[i] = x0 + h;
      const double fp = loss_at(s);
      t[i] = x0 - h;
      const double fm = loss_at(s);
      t[i] = x0;
      const double fd = (fp - fm) / (2 * h);
      const double g = grads.get(name)[i];
      num += (g - fd) * (g - fd);
      den += fd * fd;
    }
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
  EXPECT_EQ(cfg.route, invclr::obj::PenaltyRoute::kBasis);
}

TEST(TrainTest, InputValidation) {
  auto data = small_dataset(8, 8);
  train::TrainConfig cfg;
  cfg.batch_size = 16;
  EXPECT_THROW(train::train(data, tiny_encoder(8), {}, cfg), std::invalid_argument);
  cfg.batch_size = 4;
  EXPECT_THROW(train::train(data, tiny_encoder(16), {}, cfg), std::invalid_argument);
}

TEST(TrainTest, NonFiniteLossAbortsWithLastGoodParameters) {
  auto data = small_dataset(8, 8);
  train::EncoderConfig enc = tiny_encoder(8);
  train::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.reg.lambda = 0.0;
  ParamStore store = train::init_params(enc, {}, 1);
  store.get("enc.0.b")[0] = std::numeric_limits<double>::infinity();
  try {
    train::train(data, enc, {}, cfg, store, {});
    FAIL() << "expected TrainingAborted";
  } catch (const train::TrainingAborted& err) {
    EXPECT_EQ(err.step, 0u);
    EXPECT_EQ(err.last_good.get("enc.0.w"), store.get("enc.0.w"));
  }
}

TEST(TrainTest, DeterministicAndStepsIncrease) {
  auto data = small_dataset(64, 8);
  train::EncoderConfig enc;
  enc.input_shape = {3, 8, 8};
  enc.hidden_sizes = {16};
  enc.repr_dim = 8;
  train::HeadConfig head{8, 4};
  train::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.reg.L = 4;
  std::size_t epochs_seen = 0;
  train::TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t, const ParamStore&) { ++epochs_seen; };
  auto r1 = train::train(data, enc, head, cfg, hooks);
  auto r2 = train::train(data, enc, head, cfg);
  EXPECT_EQ(epochs_seen, 2u);
  ASSERT_EQ(r1.metrics.size(), 8u);
  EXPECT_EQ(r1.params, r2.params);
  for (std::size_t i = 0; i < r1.metrics.size(); ++i) {
    EXPECT_EQ(r1.metrics[i].step, i + 1);
    EXPECT_EQ(r1.metrics[i].infonce, r2.metrics[i].infonce);
    EXPECT_EQ(r1.metrics[i].penalty, r2.metrics[i].penalty);
    EXPECT_FALSE(r1.metrics[i].wall_ms.has_value());
  }
  EXPECT_EQ(r1.metrics[0].lr, cfg.lr_max);
}

TEST(TrainTest, FirstStepLossIndependentOfLambda) {
  auto data = small_dataset(32, 8);
  train::EncoderConfig enc;
  enc.input_shape = {3, 8, 8};
  enc.hidden_sizes = {16};
  enc.repr_dim = 8;
  train::HeadConfig head{8, 4};
  train::TrainConfig a;
  a.batch_size = 8;
  a.epochs = 1;
  a.reg.lambda = 0.0;
  train::TrainConfig b = a;
  b.reg = {0.01, 4, 1000};
  auto ra = train::train(data, enc, head, a);
  auto rb = train::train(data, enc, head, b);
  EXPECT_EQ(ra.metrics[0].infonce, rb.metrics[0].infonce);
  EXPECT_FALSE(ra.metrics[0].penalty.has_value());
  EXPECT_TRUE(rb.metrics[0].penalty.has_value());
}

TEST(TrainTest, InfoNceFallsBelowChanceWithinOneEpoch) {
  auto data = small_dataset(2048, 16);
  train::EncoderConfig enc;
  enc.input_shape = {3, 16, 16};
  enc.hidden_sizes = {128};
  enc.repr_dim = 32;
  train::HeadConfig head{32, 16};
  train::TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 1;
  cfg.reg.lambda = 0.0;
  auto r = train::train(data, enc, head, cfg);
  ASSERT_EQ(r.metrics.size(), 32u);
  double tail = 0;
  for (std::size_t i = 27; i < 32; ++i) tail += r.metrics[i].infonce / 5;
  EXPECT_LT(tail, std::log(64.0) - 0.03);
  EXPECT_LT(tail, r.metrics[0].infonce);
}
