#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "hicle/data.hpp"
#include "hicle/error.hpp"
#include "hicle/gradcheck.hpp"
#include "hicle/io.hpp"
#include "hicle/kernels.hpp"
#include "hicle/model.hpp"

using namespace hicle;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kStructural;
}

ModelDims tiny_dims() {
  ModelDims d;
  d.encoder = {4, 8};
  d.projection = {8, 2};
  return d;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

struct TinyTask {
  Dataset ds;
  HierarchyTree tree;
  TrainConfig cfg;
};

TinyTask tiny_task() {
  SyntheticSpec spec;
  spec.counts = {2, 2, 2};
  spec.level_scales = {1.0, 0.5, 0.25};
  spec.samples_per_instance = 4;
  spec.input_dim = 6;
  spec.seed = 1;
  TinyTask t{generate_synthetic(spec), {}, {}};
  t.tree = build_tree(t.ds.paths);
  t.cfg.dims.encoder = {6, 8};
  t.cfg.dims.projection = {8, 4};
  t.cfg.epochs = 3;
  t.cfg.sampler.batch_size = 16;
  t.cfg.seed = 5;
  return t;
}

}  // namespace

TEST(Init, DeterministicWithZeroBiases) {
  ModelDims d;
  d.encoder = {4, 8};
  d.projection = {8, 2};
  const auto a = init_model(d, 7);
  const auto b = init_model(d, 7);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == init_model(d, 8));
  for (const auto& l : a.layers)
    for (double v : l.bias) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(a.encoder_layers, 1u);
  EXPECT_EQ(a.parameter_count(), 4u * 8 + 8 + 8 * 2 + 2);
}

TEST(Init, WeightsWithinFanInBound) {
  ModelDims d;
  d.encoder = {5, 7, 3};
  d.projection = {3, 2};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto m = init_model(d, seed);
    for (const auto& l : m.layers) {
      const double bound = std::sqrt(6.0 / static_cast<double>(l.in_dim()));
      for (double w : l.weight.data()) ASSERT_LE(std::abs(w), bound);
    }
  }
}

TEST(Init, InvalidDims) {
  ModelDims d;
  d.encoder = {4, 0};
  d.projection = {0, 2};
  EXPECT_EQ(kind_of([&] { init_model(d, 0); }), ErrorKind::kConfiguration);
  d.encoder = {4, 8};
  d.projection = {6, 2};
  EXPECT_EQ(kind_of([&] { init_model(d, 0); }), ErrorKind::kConfiguration);
}

TEST(Forward, UnitProjections) {
  Rng rng(1);
  const auto m = init_model(tiny_dims(), 3);
  const Matrix x = random_matrix(rng, 10, 4);
  const auto out = forward(m, x);
  EXPECT_EQ(out.encoder_features.cols(), 8u);
  EXPECT_EQ(out.projections.cols(), 2u);
  for (std::size_t i = 0; i < 10; ++i) {
    double n = 0.0;
    for (double v : out.projections.row(i)) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
  EXPECT_EQ(encode(m, x), out.encoder_features);
}

TEST(Forward, ZeroInputIsRejected) {
  const auto m = init_model(tiny_dims(), 3);
  EXPECT_EQ(kind_of([&] { forward(m, Matrix(2, 4)); }), ErrorKind::kNormalization);
  Matrix bad(1, 4);
  bad(0, 2) = std::nan("");
  EXPECT_EQ(kind_of([&] { forward(m, bad); }), ErrorKind::kNumeric);
  EXPECT_EQ(kind_of([&] { forward(m, Matrix(1, 5)); }), ErrorKind::kStructural);
}

TEST(Backward, LinearLayerClosedForm) {
  Layer layer{Matrix(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6}), {0.5, -0.5}};
  const Matrix x(1, 3, std::vector<double>{1, -1, 2});
  const Matrix up(1, 2, std::vector<double>{2, 3});
  const auto g = linear_backward(layer, x, up);
  EXPECT_EQ(g.weight, Matrix(2, 3, std::vector<double>{2, -2, 4, 3, -3, 6}));
  EXPECT_EQ(g.bias, (std::vector<double>{2, 3}));
  EXPECT_EQ(g.input, Matrix(1, 3, std::vector<double>{14, 19, 24}));
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(2);
  const auto m = init_model(tiny_dims(), 4);
  const auto fwd = forward(m, random_matrix(rng, 5, 4));
  auto g = backward(m, fwd.cache, Matrix(5, 2));
  g.for_each_tensor([](std::span<double> t) {
    for (double v : t) EXPECT_EQ(v, 0.0);
  });
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(3);
  ModelDims d;
  d.encoder = {3, 5};
  d.projection = {5, 4, 3};
  const auto model = init_model(d, 9);
  const Matrix x = random_matrix(rng, 4, 3);
  const Matrix weights = random_matrix(rng, 4, 3);
  auto objective = [&](const EncoderModel& m) {
    const auto p = forward(m, x).projections;
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) s += p.data()[k] * weights.data()[k];
    return s;
  };
  const auto fwd = forward(model, x);
  auto grads = backward(model, fwd.cache, weights);
  std::vector<double> analytic;
  grads.for_each_tensor([&](std::span<double> t) { analytic.insert(analytic.end(), t.begin(), t.end()); });

  std::vector<double> numeric;
  EncoderModel probe = model;
  std::vector<std::span<double>> tensors;
  probe.for_each_tensor([&](std::span<double> t) { tensors.push_back(t); });
  for (auto t : tensors)
    for (double& v : t) {
      const double keep = v;
      v = keep + gradcheck::kStep;
      const double up = objective(probe);
      v = keep - gradcheck::kStep;
      const double down = objective(probe);
      v = keep;
      numeric.push_back((up - down) / (2.0 * gradcheck::kStep));
    }
  EXPECT_LT(gradcheck::max_error(analytic, numeric), 1e-5);
}

TEST(Sgd, MomentumHandIteration) {
  EncoderModel w;
  w.encoder_layers = 1;
  w.layers.push_back({Matrix(1, 1, std::vector<double>{1.0}), {0.0}});
  EncoderModel g = w;
  auto state = make_optimizer(w, 0.9, 0.1);
  sgd_step(w, g, state, 0.1);
  EXPECT_NEAR(w.layers[0].weight(0, 0), 0.9, 1e-15);
  EXPECT_EQ(state.momentum_buffers.layers[0].weight(0, 0), 1.0);
  sgd_step(w, g, state, 0.1);
  EXPECT_NEAR(state.momentum_buffers.layers[0].weight(0, 0), 1.9, 1e-15);
  EXPECT_NEAR(w.layers[0].weight(0, 0), 0.71, 1e-15);
}

TEST(Sgd, PlainStepAndZeroGradient) {
  EncoderModel w;
  w.encoder_layers = 1;
  w.layers.push_back({Matrix(1, 2, std::vector<double>{1.0, -2.0}), {0.5}});
  EncoderModel g = w.zeros_like();
  auto state = make_optimizer(w, 0.0, 0.1);
  const EncoderModel before = w;
  sgd_step(w, g, state, 0.1);
  EXPECT_TRUE(w == before);
  g.layers[0].weight(0, 0) = 2.0;
  g.layers[0].bias[0] = -1.0;
  sgd_step(w, g, state, 0.5);
  EXPECT_EQ(w.layers[0].weight(0, 0), 0.0);
  EXPECT_EQ(w.layers[0].bias[0], 1.0);
  EXPECT_EQ(kind_of([] { make_optimizer(EncoderModel{}, 1.0, 0.1); }), ErrorKind::kConfiguration);
}

TEST(LrSchedule, StepDecay) {
  TrainConfig cfg;
  cfg.base_lr = 0.1;
  cfg.lr_decay_factor = 0.1;
  cfg.lr_decay_every = 40;
  EXPECT_EQ(lr_at_epoch(cfg, 0), 0.1);
  EXPECT_EQ(lr_at_epoch(cfg, 39), 0.1);
  EXPECT_NEAR(lr_at_epoch(cfg, 40), 0.01, 1e-15);
  EXPECT_NEAR(lr_at_epoch(cfg, 85), 0.001, 1e-15);
  for (std::size_t e = 1; e < 200; ++e) EXPECT_LE(lr_at_epoch(cfg, e), lr_at_epoch(cfg, e - 1));
}

TEST(Train, Deterministic) {
  auto t = tiny_task();
  const auto a = train(t.ds.features, t.ds.paths, t.tree, t.cfg);
  const auto b = train(t.ds.features, t.ds.paths, t.tree, t.cfg);
  EXPECT_TRUE(a.model == b.model);
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.log[e].loss, b.log[e].loss);
    EXPECT_EQ(a.log[e].violation_rate, b.log[e].violation_rate);
    EXPECT_GT(a.log[e].batches, 0u);
  }
}

TEST(Train, ZeroLearningRateKeepsInitialParameters) {
  auto t = tiny_task();
  t.cfg.epochs = 1;
  t.cfg.base_lr = 1e-300;  // base_lr must be positive; this is zero for every practical purpose
  const auto r = train(t.ds.features, t.ds.paths, t.tree, t.cfg);
  auto init = init_model(t.cfg.dims, t.cfg.seed);
  std::vector<double> a, b;
  auto trained = r.model;
  trained.for_each_tensor([&](std::span<double> x) { a.insert(a.end(), x.begin(), x.end()); });
  init.for_each_tensor([&](std::span<double> x) { b.insert(b.end(), x.begin(), x.end()); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-290);
  EXPECT_TRUE(std::isfinite(r.log[0].loss));
}

TEST(Train, IdentityHiMulConEReproducesHiConE) {
  auto t = tiny_task();
  t.cfg.loss_cfg.lambda_schedule = LambdaSchedule::kIdentity;
  t.cfg.loss = LossKind::kHiMulConE;
  const auto a = train(t.ds.features, t.ds.paths, t.tree, t.cfg);
  t.cfg.loss = LossKind::kHiConE;
  const auto b = train(t.ds.features, t.ds.paths, t.tree, t.cfg);
  EXPECT_TRUE(a.model == b.model);
  for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(a.log[e].loss, b.log[e].loss);
}

TEST(Train, EveryLossRuns) {
  auto t = tiny_task();
  t.cfg.epochs = 1;
  for (auto k : {LossKind::kHiMulCon, LossKind::kHiConE, LossKind::kHiMulConE, LossKind::kSupCon, LossKind::kSimCLR}) {
    t.cfg.loss = k;
    const auto r = train(t.ds.features, t.ds.paths, t.tree, t.cfg);
    EXPECT_TRUE(std::isfinite(r.log[0].loss)) << loss_kind_name(k);
    EXPECT_TRUE(r.log[0].violation_rate.has_value());
    EXPECT_EQ(r.log[0].clamp_failures, 0u);
  }
}

TEST(Train, ConfigErrors) {
  auto t = tiny_task();
  t.cfg.epochs = 0;
  EXPECT_EQ(kind_of([&] { train(t.ds.features, t.ds.paths, t.tree, t.cfg); }), ErrorKind::kConfiguration);
  t = tiny_task();
  t.cfg.dims.encoder = {5, 8};
  EXPECT_EQ(kind_of([&] { train(t.ds.features, t.ds.paths, t.tree, t.cfg); }), ErrorKind::kConfiguration);
  t = tiny_task();
  t.cfg.base_lr = 0.0;
  EXPECT_EQ(kind_of([&] { train(t.ds.features, t.ds.paths, t.tree, t.cfg); }), ErrorKind::kConfiguration);
}

TEST(Probe, CrossEntropyOfEqualLogits) {
  const std::vector<double> z{0.0, 0.0};
  EXPECT_NEAR(cross_entropy(z, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(std::vector<double>{1000.0, 0.0}, 1), 1000.0, 1e-9);
  EXPECT_EQ(kind_of([&] { cross_entropy(z, 2); }), ErrorKind::kRange);
}

TEST(Probe, SeparableClassesAreLearned) {
  Rng rng(4);
  auto make = [&](std::size_t n, Matrix& x, std::vector<std::uint64_t>& y) {
    x = Matrix(n, 3);
    y.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t c = i % 2 ? 7 : 3;
      x(i, 0) = (c == 7 ? 2.0 : -2.0) + 0.3 * rng.normal();
      x(i, 1) = rng.normal();
      x(i, 2) = rng.normal();
      y.push_back(c);
    }
  };
  Matrix tx, vx;
  std::vector<std::uint64_t> ty, vy;
  make(60, tx, ty);
  make(20, vx, vy);
  const auto r = train_linear_probe(tx, ty, vx, vy, ProbeConfig{});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.classes, (std::vector<std::uint64_t>{3, 7}));
  EXPECT_EQ(r.majority_baseline, 0.5);
}

TEST(Probe, SingleClassIsDegenerate) {
  const Matrix x(4, 2, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  const std::vector<std::uint64_t> y{1, 1, 1, 1};
  EXPECT_EQ(kind_of([&] { train_linear_probe(x, y, x, y, ProbeConfig{}); }), ErrorKind::kDegenerateTask);
}

TEST(Checkpoint, RoundTrip) {
  const auto m = init_model(tiny_dims(), 11);
  const auto bytes = encode_checkpoint(m);
  EXPECT_EQ(bytes.substr(0, 4), "HCM1");
  EXPECT_EQ(bytes.size(), 4u + 4 + 2 * 8 + 8 * m.parameter_count());
  EXPECT_TRUE(decode_checkpoint(bytes, 1) == m);
  const auto path = fs::temp_directory_path() / "hicle_model_test.hcm";
  write_checkpoint(path, m);
  EXPECT_TRUE(read_checkpoint(path, 1) == m);
  fs::remove(path);
}

TEST(Checkpoint, FormatErrors) {
  const auto bytes = encode_checkpoint(init_model(tiny_dims(), 11));
  std::string bad = bytes;
  bad[1] = 'X';
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bad, 1); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3), 1); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bytes + "z", 1); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bytes, 2); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([] { read_checkpoint("/nonexistent/dir/model.hcm", 1); }), ErrorKind::kIo);
}
