#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "fd.hpp"
#include "ttfs/error.hpp"
#include "ttfs/io/data.hpp"
#include "ttfs/surrogate.hpp"
#include "ttfs/train.hpp"
#include "ttfs/verify.hpp"

using namespace ttfs;

namespace {

TemporalKernel base() { return TemporalKernel{10.0, 0.0, 0, 32, 1.0}; }

NetworkState small_net(std::uint64_t seed, bool bn = true, std::uint32_t window = 32) {
  Rng rng(seed);
  KernelDefaults kd;
  kd.window = window;
  return build_network({6}, 3, {{nn::LayerKind::Dense, 8, bn}, {nn::LayerKind::Dense, 5, bn}},
                       kd, rng);
}

TensorD inputs(std::uint64_t seed, const Shape& shape, std::size_t n) {
  Rng rng(seed);
  return verify::random_inputs(rng, shape, n);
}

// Simpson's rule; exact for the quadratic integrand below.
double simpson(const std::function<double(double)>& f, double a, double b, int n = 2) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST(Relaxation, ProbabilityExamples) {
  const RelaxationSchedule s{50, 0};
  EXPECT_NEAR(relaxation_prob(0, s), 0.98, 1e-15);
  EXPECT_EQ(relaxation_prob(49, s), 0.0);
  EXPECT_EQ(relaxation_prob(100, s), 0.0);
  EXPECT_EQ(relaxation_prob(0, RelaxationSchedule{1, 0}), 0.0);
}

TEST(Relaxation, DrawsReproducibleAndNeverRelaxAtZero) {
  Rng a(42), b(42);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(draw_relaxation(0.5, 6, a), draw_relaxation(0.5, 6, b));
  Rng c(1);
  for (int i = 0; i < 1000; ++i)
    for (bool r : draw_relaxation(0.0, 4, c)) EXPECT_FALSE(r);
  Rng d(2);
  for (int i = 0; i < 100; ++i)
    for (bool r : draw_relaxation(1.0, 4, d)) EXPECT_TRUE(r);
}

TEST(Relaxation, FrequencyTracksProbability) {
  Rng rng(3);
  std::size_t hits = 0;
  for (int i = 0; i < 10000; ++i) hits += draw_relaxation(0.3, 1, rng)[0];
  EXPECT_NEAR(hits / 10000.0, 0.3, 0.02);
}

TEST(TtfsLayer, RelaxedIsRelu) {
  const TtfsForward f = ttfs_layer_forward(TensorD({1, 2}, {-1.0, 0.5}), base(), true);
  EXPECT_EQ(f.zhat[0], 0.0);
  EXPECT_EQ(f.zhat[1], 0.5);
  for (SpikeTime t : f.times) EXPECT_FALSE(t.fired());
}

TEST(TtfsLayer, StrictQuantizes) {
  const TtfsForward f = ttfs_layer_forward(TensorD({1, 2}, {0.5, 0.01}), base(), false);
  EXPECT_NEAR(f.zhat[0], 0.49659, 1e-5);
  EXPECT_EQ(f.times[0], SpikeTime::at(7));
  EXPECT_EQ(f.zhat[1], 0.0);
  EXPECT_FALSE(f.times[1].fired());
}

TEST(TtfsLayer, RelaxedBackwardHasNoKernelGrads) {
  const TtfsForward f = ttfs_layer_forward(TensorD({1, 3}, {0.2, -0.3, 0.9}), base(), true);
  const TtfsGrads g = ttfs_layer_backward(TensorD({1, 3}, 1.0), f.cache, GradMode::Analytic);
  EXPECT_EQ(g.kernel.d_tau, 0.0);
  EXPECT_EQ(g.kernel.d_td, 0.0);
  EXPECT_EQ(g.dz[0], 1.0);
  EXPECT_EQ(g.dz[1], 0.0);
}

// zhat * (t - t_d) / tau^2 at t = 7: 0.49659 * 7 / 100.
TEST(TtfsLayer, SingleElementTauGradient) {
  const TtfsForward f = ttfs_layer_forward(TensorD({1, 1}, {0.5}), base(), false);
  const TtfsGrads g = ttfs_layer_backward(TensorD({1, 1}, {1.0}), f.cache, GradMode::Analytic);
  EXPECT_NEAR(g.kernel.d_tau, 0.034761, 1e-6);
  EXPECT_NEAR(g.kernel.d_td, 0.049659, 1e-6);
}

TEST(TtfsLayer, SteModes) {
  const TensorD z({1, 4}, {2.0, 0.5, 0.01, -1.0});
  const TtfsForward f = ttfs_layer_forward(z, base(), false);
  const TensorD up({1, 4}, {1.0, 2.0, 3.0, 4.0});
  const TtfsGrads pass = ttfs_layer_backward(up, f.cache, GradMode::Analytic, SteMode::PassThrough);
  EXPECT_EQ(pass.dz, up);
  const TtfsGrads clamped = ttfs_layer_backward(up, f.cache, GradMode::Analytic, SteMode::Clamped);
  EXPECT_EQ(clamped.dz, TensorD({1, 4}, {0.0, 2.0, 0.0, 0.0}));
}

TEST(TtfsLayer, StaleCacheIsStateError) {
  EXPECT_THROW(ttfs_layer_backward(TensorD({1, 1}), TtfsCache{}, GradMode::Analytic), StateError);
  const TtfsForward f = ttfs_layer_forward(TensorD({1, 2}), base(), false);
  EXPECT_THROW(ttfs_layer_backward(TensorD({1, 3}), f.cache, GradMode::Analytic), StateError);
}

TEST(TtfsLayer, KernelGradsMatchFdWithTimesFrozen) {
  Rng rng(5);
  TensorD z({4, 8});
  ttfs::test::fill_normal(z.data(), rng, 0.5);
  TemporalKernel k{9.0, 1.0, 32, 32, 1.0};
  const TtfsForward f = ttfs_layer_forward(z, k, false);
  std::vector<double> c(z.size());
  for (double& v : c) v = rng.normal();
  const TtfsGrads g = ttfs_layer_backward(TensorD(z.shape(), c), f.cache, GradMode::Analytic);
  auto loss = [&](const TemporalKernel& kk) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (f.times[i].fired()) s += c[i] * kernel_value(kk, f.times[i].value());
    return s;
  };
  const double h = 1e-6;
  TemporalKernel a = k, b = k;
  a.tau += h;
  b.tau -= h;
  EXPECT_NEAR(g.kernel.d_tau, (loss(a) - loss(b)) / (2 * h), 1e-7);
  a = k;
  b = k;
  a.t_d += h;
  b.t_d -= h;
  EXPECT_NEAR(g.kernel.d_td, (loss(a) - loss(b)) / (2 * h), 1e-7);
}

TEST(RegTr, Examples) {
  NetworkState net = small_net(1);
  RegTr r = reg_tr(net);
  EXPECT_EQ(r.value, 0.0);
  for (const KernelGrads& g : r.grads) {
    EXPECT_EQ(g.d_tau, 0.0);
    EXPECT_EQ(g.d_td, 0.0);
  }
  net.layers[0].kernel->tau = 11.0;
  r = reg_tr(net);
  EXPECT_DOUBLE_EQ(r.value, 1.0);
  EXPECT_DOUBLE_EQ(r.grads[1].d_tau, 2.0);
  net = small_net(1);
  net.layers[0].kernel->t_d = 0.5;
  net.layers[1].kernel->t_d = -0.5;
  r = reg_tr(net);
  EXPECT_DOUBLE_EQ(r.value, 0.5);
  EXPECT_DOUBLE_EQ(r.grads[2].d_td, -1.0);
}

TEST(RegTr, PositiveIffAwayFromInit) {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    NetworkState net = small_net(2);
    const auto ks = net.kernels();
    TemporalKernel* k = ks[rng.below(ks.size())];
    if (rng.uniform() < 0.5) k->tau += rng.uniform(-1, 1); else k->t_d += rng.uniform(-1, 1);
    EXPECT_GT(reg_tr(net).value, 0.0);
  }
}

TEST(PTb, Examples) {
  const double m = std::exp(-3.2);
  EXPECT_NEAR(p_tb(1.0, 0.0, m), m - m * m * m / 6.0, 1e-15);
  EXPECT_NEAR(p_tb(1.0, 0.0, 0.040762), 0.040751, 1e-6);
  EXPECT_NEAR(p_tb(0.0, 0.0, m), m, 1e-15);
}

// The polynomial is the integral of the Taylor-approximated density
// 1 - (gamma x + beta)^2 / 2 from beta to z_min.
TEST(PTb, MatchesQuadratureOfApproximant) {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double g = rng.uniform(-2, 2), b = rng.uniform(-2, 2), m = rng.uniform(1e-3, 1);
    const double q = simpson([&](double x) { return 1.0 - 0.5 * (g * x + b) * (g * x + b); }, b, m);
    EXPECT_NEAR(p_tb(g, b, m), q, 1e-12);
  }
  const double m = 0.040762;
  EXPECT_NEAR(p_tb(0.0, m, m), 0.0, 1e-15);
}

TEST(PTb, GradExamples) {
  const double m = std::exp(-3.2);
  const PtbGrads g = p_tb_grads(1.0, 0.0, m);
  EXPECT_NEAR(g.d_beta, -0.5 * (m * m + 2.0), 1e-15);
  EXPECT_NEAR(g.d_beta, -1.000831, 1e-6);
  EXPECT_NEAR(g.d_gamma, -m * m * m / 3.0, 1e-15);
  EXPECT_NEAR(g.d_gamma, -2.258e-5, 1e-8);
}

TEST(PTb, GradsMatchFiniteDifferences) {
  Rng rng(8);
  const verify::PtbCheckReport r = verify::check_p_tb(rng, 1000);
  EXPECT_EQ(r.points, 1000u);
  EXPECT_LT(r.max_abs_error, 1e-6);
}

TEST(TotalLoss, ZeroLambdasIsCrossEntropy) {
  const NetworkState net = small_net(3);
  const TensorD x = inputs(4, net.input_shape, 8);
  const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1};
  LossConfig cfg;
  cfg.lambda_tr = cfg.lambda_tb = 0.0;
  const LossResult r = total_loss(net, x, y, cfg, {});
  EXPECT_EQ(r.loss.total, nn::cross_entropy(infer(net, x).logits, y).loss);
}

TEST(TotalLoss, AtInitWithoutTbIsCrossEntropy) {
  const NetworkState net = small_net(3);
  const TensorD x = inputs(4, net.input_shape, 8);
  const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1};
  LossConfig cfg;
  cfg.lambda_tb = 0.0;
  const LossResult r = total_loss(net, x, y, cfg, {});
  EXPECT_EQ(r.loss.reg_tr, 0.0);
  EXPECT_EQ(r.loss.total, r.loss.ce);
}

TEST(TotalLoss, TermsRecomputedIndependently) {
  NetworkState net = small_net(5);
  net.layers[0].kernel->tau = 12.0;
  net.layers[1].kernel->t_d = 0.7;
  net.layers[0].bn->beta[2] = -0.3f;
  const TensorD x = inputs(6, net.input_shape, 8);
  const std::vector<int> y{2, 1, 0, 0, 1, 2, 0, 1};
  const LossResult r = total_loss(net, x, y, LossConfig{}, {});

  const double ce = nn::cross_entropy(infer(net, x).logits, y).loss;
  const double tr = 4.0 + 0.49;
  double ptb = 0.0;
  for (const NetLayer& l : net.layers) {
    if (!l.bn || !l.kernel) continue;
    const double m = std::exp((l.kernel->t_d - l.kernel->window) / l.kernel->tau);
    for (std::size_t c = 0; c < l.bn->channels(); ++c) ptb += p_tb(l.bn->gamma[c], l.bn->beta[c], m);
  }
  EXPECT_NEAR(r.loss.total, ce + 1e-5 * tr - 1e-5 * ptb, 1e-13);
  EXPECT_NEAR(r.loss.reg_tr, tr, 1e-12);
  EXPECT_NEAR(r.loss.p_tb, ptb, 1e-12);
}

TEST(TotalLoss, NegativeLambdaIsConfigError) {
  const NetworkState net = small_net(3);
  const std::vector<int> y{0};
  LossConfig cfg;
  cfg.lambda_tb = -1.0;
  EXPECT_THROW(total_loss(net, inputs(1, net.input_shape, 1), y, cfg, {}), ConfigError);
}

TEST(TotalLoss, NonFinitePreactivationNamesLayer) {
  NetworkState net = small_net(3, false);
  net.layers[0].params.weights[0] = std::numeric_limits<float>::infinity();
  const std::vector<int> y{0, 1};
  try {
    total_loss(net, TensorD({2, 6}, 1.0), y, LossConfig{}, {});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos) << e.what();
  }
}

// All layers relaxed: a plain ReLU network applied to the (still spike
// encoded) input, bit-identical to composing the nn primitives directly.
TEST(Network, AllRelaxedIsPlainReluNetwork) {
  for (bool bn : {false, true}) {
    NetworkState net = small_net(9, bn);
    for (NetLayer& l : net.layers)
      if (l.bn) {
        l.bn->running_mean.fill(0.2f);
        l.bn->running_var.fill(1.7f);
      }
    const TensorD x = inputs(10, net.input_shape, 16);
    ForwardOptions opt;
    opt.relaxed.assign(net.layers.size(), true);
    const TensorD got = network_forward(net, x, opt).logits;

    TensorD h = x;
    for (double& v : h.data()) v = decode(net.input_kernel, encode(net.input_kernel, v));
    for (const NetLayer& l : net.layers) {
      h = nn::layer_forward(h, l.params);
      if (l.bn) h = nn::batchnorm_apply(h, *l.bn, false);
      if (l.kernel)
        for (double& v : h.data()) v = std::max(v, 0.0);
    }
    EXPECT_EQ(got, h);
  }
}

TEST(Network, StrictTimesEqualEncodeOfPreactivations) {
  const NetworkState net = small_net(11);
  const NetworkForward f = infer(net, inputs(12, net.input_shape, 4));
  for (const LayerForward& l : f.layers) {
    if (!l.ttfs.valid) continue;
    for (std::size_t i = 0; i < l.pre.size(); ++i)
      EXPECT_EQ(l.ttfs.times[i], encode(l.ttfs.kernel, l.pre[i]));
  }
}

// Continuous relaxation: every encoded layer relaxed, so no quantizer is on
// the path. Also covers the strict path with frozen spike times.
TEST(Gradients, MatchFrozenOracleOnRandomNets) {
  Rng rng(13);
  for (int i = 0; i < 30; ++i) {
    verify::RandomNetOptions ro;
    ro.min_dense = ro.max_dense = 3;
    ro.max_width = 12;
    ro.max_inputs = 10;
    ro.max_classes = 4;
    const NetworkState net = verify::random_network(rng, ro);
    const TensorD x = verify::random_inputs(rng, net.input_shape, 6);
    std::vector<int> y(6);
    for (int& v : y) v = static_cast<int>(rng.below(net.num_classes()));
    verify::GradCheckOptions go;
    go.relaxed.assign(net.layers.size(), i % 2 == 0);
    go.lambda_tr = go.lambda_tb = i % 3 == 0 ? 0.0 : 1e-2;
    const verify::GradCheckReport r = verify::check_gradients(net, x, y, go);
    for (const verify::ParamCheck& p : r.params) EXPECT_LT(p.rel_error, 1e-4) << i << " " << p.name;
  }
}

TEST(Gradients, ClampedSteMatchesOracle) {
  Rng rng(14);
  for (int i = 0; i < 10; ++i) {
    verify::RandomNetOptions ro;
    ro.max_width = 12;
    ro.max_inputs = 10;
    const NetworkState net = verify::random_network(rng, ro);
    const TensorD x = verify::random_inputs(rng, net.input_shape, 5);
    std::vector<int> y(5);
    for (int& v : y) v = static_cast<int>(rng.below(net.num_classes()));
    verify::GradCheckOptions go;
    go.ste = SteMode::Clamped;
    EXPECT_LT(verify::check_gradients(net, x, y, go).worst(), 1e-4) << i;
  }
}

TEST(Gradients, ConvAndMaxPoolMatchOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    KernelDefaults kd;
    kd.window = 16;
    const NetworkState net =
        build_network({1, 6, 6}, 3,
                      {{nn::LayerKind::Conv2d, 3, true},
                       {nn::LayerKind::MaxPool, 0, false},
                       {nn::LayerKind::Conv2d, 2, seed % 2 == 0}},
                      kd, rng);
    const TensorD x = verify::random_inputs(rng, net.input_shape, 4);
    const std::vector<int> y{0, 1, 2, 1};
    verify::GradCheckOptions go;
    go.relaxed = {seed == 3, false, seed == 2, false};
    EXPECT_LT(verify::check_gradients(net, x, y, go).worst(), 1e-4) << seed;
  }
}

TEST(Train, ZeroEpochsLeavesNetUnchanged) {
  const NetworkState net = small_net(15);
  Rng rng(1);
  Dataset d = io::make_blobs(io::BlobOptions{64, 3, 6, 1, 1.0, 1.0}, rng);
  for (float& v : d.x.data()) v = std::clamp(0.5f + 0.1f * v, 0.0f, 1.0f);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult r = train(net, d, d, cfg, 1);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.state.net.layers[0].params.weights, net.layers[0].params.weights);
  EXPECT_EQ(r.state.net.layers[1].kernel, net.layers[1].kernel);
}

TEST(Train, SeparableTwoClassReachesHighAccuracy) {
  const io::DatasetHandle h = io::ingest_dataset("blobs:n=600,classes=2,dim=2,spread=0.3,separation=4", 3);
  Rng rng(named_stream(3, "init"));
  const NetworkState net =
      build_network(h.input_shape, 2, {{nn::LayerKind::Dense, 16, true}}, KernelDefaults{}, rng);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 64;
  cfg.e_tar = 50;
  cfg.lr = 3e-3;
  const TrainResult r = train(net, h.train, h.val, cfg, 3);
  ASSERT_FALSE(r.diverged) << r.divergence;
  ASSERT_EQ(r.log.size(), 200u);
  EXPECT_GE(evaluate(r.state.net, h.train).accuracy, 0.99);
  for (std::size_t e = cfg.e_tar - 1; e < r.log.size(); ++e)
    for (bool relaxed : r.log[e].relaxed) EXPECT_FALSE(relaxed);
}

TEST(Train, InvalidConfigNamesField) {
  TrainConfig cfg;
  cfg.lambda_tb = -1.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lambda_tb"), std::string::npos);
  }
}
