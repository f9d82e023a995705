#include <gtest/gtest.h>

#include <cmath>

#include "ttfs/error.hpp"
#include "ttfs/metrics.hpp"
#include "ttfs/verify.hpp"

using namespace ttfs;
using namespace ttfs::metrics;

TEST(SpikeRate, Examples) {
  EXPECT_EQ(spike_rate({0, 10, 5, 1}).value(), 0.0);
  EXPECT_EQ(spike_rate({10, 10, 1, 1}).value(), 100.0);
  const Percent r = spike_rate({49000, 280641, 544, 17});
  EXPECT_NEAR(r.value(), 0.0321, 5e-5);
  EXPECT_EQ(r.str(), "0.03");
  EXPECT_THROW(spike_rate({1, 0, 5, 1}), ConfigError);
  EXPECT_THROW(spike_rate({1, 5, 0, 1}), ConfigError);
}

TEST(Sparsity, Examples) {
  EXPECT_EQ(sparsity({0, 10, 5, 1}).value(), 0.0);
  EXPECT_EQ(sparsity({49000, 280641, 544, 17}).str(), "17.46");
  EXPECT_EQ(sparsity({7, 7, 3, 1}).value(), 100.0);
  EXPECT_THROW(sparsity({1, 0, 5, 1}), ConfigError);
}

TEST(Sparsity, EqualsRateTimesStepsExactly) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const SpikeStats s{rng.below(1'000'000), 1 + rng.below(1'000'000), 1 + rng.below(2000), 3};
    EXPECT_EQ(sparsity(s), spike_rate(s) * s.steps);
  }
}

// The neuron count is recovered from S = 49,000 and a 17.46% sparsity.
TEST(TableReplay, BackDerivedNeuronCount) {
  const double n = 49000 / 0.1746;
  std::uint64_t consistent = 0;
  for (auto N = static_cast<std::uint64_t>(n) - 20; N <= static_cast<std::uint64_t>(n) + 20; ++N) {
    const SpikeStats s{49000, N, 544, 17};
    if (sparsity(s).str() == "17.46") {
      ++consistent;
      EXPECT_EQ(spike_rate(s).str(), "0.03");
    }
  }
  EXPECT_GT(consistent, 0u);
}

TEST(Percent, Formatting) {
  EXPECT_EQ(Percent(1, 3).str(), "0.33");
  EXPECT_EQ(Percent(2, 3).str(), "0.67");
  EXPECT_EQ(Percent(1, 200).str(), "0.01");  // half rounds away from zero
  EXPECT_EQ(Percent(5, 1).str(0), "5");
}

TEST(Energy, Examples) {
  const EnergyModel m{"m", 2.0, 3.0, StaticBasis::Layers};
  EXPECT_DOUBLE_EQ(energy({0, 10, 32, 4}, m), 12.0);
  const EnergyModel dyn{"d", 2.0, 0.0, StaticBasis::Layers};
  EXPECT_DOUBLE_EQ(energy_estimate({50, 100, 32, 4}, dyn, {100, 100, 32, 4}).normalized, 0.5);
  const SpikeStats s{1234, 5000, 64, 2};
  EXPECT_DOUBLE_EQ(energy_estimate(s, m, s).normalized, 1.0);
  EXPECT_THROW(energy_estimate(s, dyn, {0, 10, 10, 1}), ConfigError);
  EXPECT_THROW((EnergyModel{"bad", -1.0, 0.0, StaticBasis::Layers}.validate()), ConfigError);
}

TEST(Energy, LinearInSpikes) {
  const EnergyModel m{"m", 0.7, 11.0, StaticBasis::Layers};
  for (std::uint64_t S = 0; S < 1000; S += 37)
    EXPECT_NEAR(energy({S, 1000, 64, 5}, m), 0.7 * S + 5 * 11.0, 1e-9);
  const EnergyModel dyn = energy_model_preset("unit");
  for (std::uint64_t S = 1; S < 1000; S += 37)
    EXPECT_DOUBLE_EQ(energy({S, 1000, 64, 5}, dyn), static_cast<double>(S));
}

// Both rows of ours against the temporal-switch baseline (S = 193k, H = 512).
TEST(Energy, NeuromorphicPresetsReplayTable) {
  const SpikeStats baseline{193000, 280641, 512, 17};
  const SpikeStats tb4{49000, 280641, 544, 17}, tb5{67000, 280641, 544, 17};
  auto norm = [&](const SpikeStats& s, const char* model) {
    return std::round(100 * energy_estimate(s, energy_model_preset(model), baseline).normalized) / 100;
  };
  EXPECT_DOUBLE_EQ(norm(tb4, "truenorth"), 0.74);
  EXPECT_DOUBLE_EQ(norm(tb4, "spinnaker"), 0.54);
  EXPECT_DOUBLE_EQ(norm(tb5, "truenorth"), 0.78);
  EXPECT_DOUBLE_EQ(norm(tb5, "spinnaker"), 0.60);
  EXPECT_THROW(energy_model_preset("loihi"), ConfigError);
  for (const std::string& n : energy_model_names()) EXPECT_NO_THROW(energy_model_preset(n));
}

TEST(ErrorReport, AllClippedSumsExcess) {
  Rng rng(2);
  KernelDefaults kd;
  NetworkState net = build_network({3}, 2, {{nn::LayerKind::Dense, 4, false}}, kd, rng);
  net.layers[0].params.weights.fill(1.0f);
  net.layers[0].params.bias.fill(0.0f);
  // input 1.0 decodes to 1.0 exactly, so every hidden z is 3.0
  const auto rep = error_report(net, TensorD({2, 3}, 1.0));
  ASSERT_EQ(rep.size(), 2u);
  EXPECT_EQ(rep[0].total(), 0.0);
  EXPECT_DOUBLE_EQ(rep[1].max_error, 2 * 4 * 2.0);
  EXPECT_EQ(rep[1].min_error, 0.0);
  EXPECT_EQ(rep[1].precision_error, 0.0);
}

TEST(ErrorReport, OnBinEdgesOnlyPrecisionErrorIsZero) {
  Rng rng(2);
  NetworkState net = build_network({2}, 2, {{nn::LayerKind::Dense, 2, false}}, {}, rng);
  // inputs exactly at quantization levels encode without error
  const TemporalKernel& k = net.input_kernel;
  const TensorD x({1, 2}, {kernel_value(k, 3), kernel_value(k, 11)});
  const auto rep = error_report(net, x);
  EXPECT_EQ(rep[0].max_error, 0.0);
  EXPECT_EQ(rep[0].min_error, 0.0);
  EXPECT_LT(rep[0].precision_error, 1e-15);
}

TEST(ErrorReport, EqualsElementwiseRecomputation) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const NetworkState net = verify::random_network(rng);
    const TensorD x = verify::random_inputs(rng, net.input_shape, 8);
    const auto rep = error_report(net, x);
    const NetworkForward f = infer(net, x);
    std::vector<KernelErrorReport> want;
    KernelErrorReport in;
    for (double v : x.data()) in += classify_and_error(net.input_kernel, v).error;
    want.push_back(in);
    for (const LayerForward& l : f.layers) {
      if (!l.ttfs.valid) continue;
      KernelErrorReport r;
      for (double z : l.pre.data()) r += classify_and_error(l.ttfs.kernel, z).error;
      want.push_back(r);
    }
    ASSERT_EQ(rep.size(), want.size());
    for (std::size_t j = 0; j < rep.size(); ++j) {
      EXPECT_NEAR(rep[j].max_error, want[j].max_error, 1e-9);
      EXPECT_NEAR(rep[j].min_error, want[j].min_error, 1e-9);
      EXPECT_NEAR(rep[j].precision_error, want[j].precision_error, 1e-9);
      EXPECT_NEAR(rep[j].total(), rep[j].max_error + rep[j].min_error + rep[j].precision_error, 0);
    }
  }
}
