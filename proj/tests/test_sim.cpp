#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "ttfs/error.hpp"
#include "ttfs/snn_sim.hpp"
#include "ttfs/verify.hpp"

using namespace ttfs;
using namespace ttfs::sim;

namespace {

// input(width) -> hidden dense layers -> readout, no BN, identity-ish weights
NetworkState chain(std::size_t hidden_layers, std::uint32_t T, std::size_t width = 1,
                   std::size_t classes = 2) {
  Rng rng(0);
  KernelDefaults kd;
  kd.window = T;
  std::vector<LayerSpec> spec(hidden_layers, LayerSpec{nn::LayerKind::Dense, width, false});
  NetworkState net = build_network({width}, classes, spec, kd, rng);
  for (NetLayer& l : net.layers) {
    l.params.weights.fill(1.0f);
    l.params.bias.fill(0.0f);
  }
  return net;
}

SimLayer dense_layer(std::size_t in, std::size_t out, std::vector<double> w,
                     std::vector<double> b = {}) {
  SimLayer l;
  l.kind = nn::LayerKind::Dense;
  l.in_shape = {in};
  l.out_shape = {out};
  l.weights = std::move(w);
  l.bias = std::move(b);
  return l;
}

TemporalKernel base() { return TemporalKernel{10.0, 0.0, 0, 32, 1.0}; }

}  // namespace

TEST(Schedule, OneEncodedLayer) {
  NetworkState net = chain(0, 32);
  const SimSchedule s = build_schedule(net);
  EXPECT_EQ(s.horizon, 32u);
  ASSERT_EQ(s.stages.size(), 2u);
  EXPECT_EQ(s.stages[0].fire, (SimWindow{0, 32}));
  EXPECT_EQ(s.stages[1].integ, (SimWindow{0, 32}));
  EXPECT_FALSE(s.stages[1].fire);
}

TEST(Schedule, SeventeenEncodedLayers) {
  EXPECT_EQ(build_schedule(chain(16, 32)).horizon, 544u);
}

TEST(Schedule, ChainedWindows) {
  const SimSchedule s = build_schedule(chain(2, 8));
  EXPECT_EQ(s.horizon, 24u);
  EXPECT_EQ(s.stages[0].fire, (SimWindow{0, 8}));
  EXPECT_EQ(s.stages[1].fire, (SimWindow{8, 16}));
  EXPECT_EQ(s.stages[2].fire, (SimWindow{16, 24}));
  // a layer's FIRE window is the next layer's INTEG window
  for (std::size_t i = 1; i < s.stages.size(); ++i) EXPECT_EQ(s.stages[i].integ, s.stages[i - 1].fire);
}

TEST(Schedule, InconsistentWindowIsConfigError) {
  NetworkState net = chain(2, 8);
  net.layers[1].kernel->window = 16;
  EXPECT_THROW(build_schedule(net), ConfigError);
  net = chain(2, 8);
  net.layers[0].kernel->t_ref = 9;
  EXPECT_THROW(build_schedule(net), ConfigError);
}

TEST(Integrate, NoSpikesNoBiasLeavesPotential) {
  std::vector<IFNeuronState> st(2);
  st[0].u = 0.3;
  integrate_step(st, {}, dense_layer(1, 2, {1, 1}), base(), {0, 32}, 0);
  EXPECT_EQ(st[0].u, 0.3);
  EXPECT_EQ(st[1].u, 0.0);
}

TEST(Integrate, SpikeAtWindowStartAndLater) {
  std::vector<IFNeuronState> st(1);
  const SpikeEvent e0{0, 0, 0};
  integrate_step(st, std::span(&e0, 1), dense_layer(1, 1, {1}), base(), {0, 32}, 0);
  EXPECT_DOUBLE_EQ(st[0].u, 1.0);
  std::vector<IFNeuronState> st2(1);
  const SpikeEvent e7{0, 0, 7};
  integrate_step(st2, std::span(&e7, 1), dense_layer(1, 1, {1}), base(), {0, 32}, 7);
  EXPECT_NEAR(st2[0].u, 0.49659, 1e-5);
}

TEST(Integrate, BiasLumpedAtStartOrSpreadPerStep) {
  const SimLayer l = dense_layer(1, 1, {1}, {0.66});
  std::vector<IFNeuronState> lumped(1), spread(1);
  for (std::uint32_t t = 0; t <= 32; ++t) {
    integrate_step(lumped, {}, l, base(), {0, 32}, t, BiasMode::Lumped);
    if (t == 0) EXPECT_DOUBLE_EQ(lumped[0].u, 0.66);
    integrate_step(spread, {}, l, base(), {0, 32}, t, BiasMode::PerStep);
  }
  EXPECT_DOUBLE_EQ(lumped[0].u, 0.66);
  EXPECT_NEAR(spread[0].u, 0.66, 1e-12);
}

TEST(Integrate, RefractoryNeuronsUnchanged) {
  std::vector<IFNeuronState> st(1);
  st[0].u = 2.0;
  st[0].fired = true;
  st[0].spike_time = SpikeTime::at(0);
  const SpikeEvent e{0, 0, 3};
  integrate_step(st, std::span(&e, 1), dense_layer(1, 1, {1}, {5}), base(), {0, 32}, 3);
  EXPECT_EQ(st[0].u, 2.0);
}

TEST(Integrate, ProtocolErrors) {
  std::vector<IFNeuronState> st(1);
  EXPECT_THROW(integrate_step(st, {}, dense_layer(1, 1, {1}), base(), {0, 32}, 33), ProtocolError);
  const SpikeEvent e{0, 0, 4};
  EXPECT_THROW(integrate_step(st, std::span(&e, 1), dense_layer(1, 1, {1}), base(), {0, 32}, 5),
               ProtocolError);
}

TEST(Fire, ThresholdEqualityAtWindowStart) {
  std::vector<IFNeuronState> st(1);
  st[0].u = base().z_max();
  const auto ev = fire_step(st, base(), 1, 0);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0], (SpikeEvent{1, 0, 0}));
  EXPECT_TRUE(st[0].fired);
  EXPECT_EQ(st[0].spike_time, SpikeTime::at(0));
  EXPECT_TRUE(fire_step(st, base(), 1, 1).empty());  // refractory
}

TEST(Fire, HalfFiresAtSevenMatchingEncode) {
  std::vector<IFNeuronState> st(1);
  st[0].u = 0.5;
  std::uint32_t fired_at = 99;
  for (std::uint32_t t = 0; t <= 32; ++t)
    for (const SpikeEvent& e : fire_step(st, base(), 1, t)) fired_at = e.time;
  EXPECT_EQ(fired_at, 7u);
  EXPECT_EQ(encode(base(), 0.5), SpikeTime::at(7));
}

TEST(Fire, NonPositiveNeverFires) {
  std::vector<IFNeuronState> st(2);
  st[0].u = 0.0;
  st[1].u = -1.0;
  for (std::uint32_t t = 0; t <= 40; ++t) EXPECT_TRUE(fire_step(st, base(), 1, t).empty());
  EXPECT_FALSE(st[0].spike_time.fired());
}

TEST(Fire, LargerPotentialFiresNoLater) {
  Rng rng(1);
  std::vector<IFNeuronState> st(50);
  for (auto& s : st) s.u = rng.uniform(0.0, 1.2);
  for (std::uint32_t t = 0; t <= 32; ++t) fire_step(st, base(), 1, t);
  for (const auto& a : st)
    for (const auto& b : st)
      if (a.u > b.u && b.spike_time.fired()) {
        ASSERT_TRUE(a.spike_time.fired());
        EXPECT_LE(a.spike_time.value(), b.spike_time.value());
      }
}

TEST(Inference, ZeroImagePredictsArgmaxOfBias) {
  NetworkState net = chain(1, 16, 3, 4);
  net.layers.back().params.bias = Tensor({4}, {0.1f, -0.2f, 0.7f, 0.3f});
  const std::vector<double> img(3, 0.0);
  const SimResult r = run_inference(net, img);
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.prediction, 2u);
  EXPECT_NEAR(r.potentials[2], 0.7, 1e-7);
}

TEST(Inference, SingleNeuronChainHandTrace) {
  const NetworkState net = chain(1, 32);
  const std::vector<double> img{1.0};
  const SimResult r = run_inference(net, img);
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_EQ(r.events[0], (SpikeEvent{0, 0, 0}));
  EXPECT_EQ(r.events[1], (SpikeEvent{1, 0, 32}));
  EXPECT_NEAR(r.potentials[0], 1.0, 1e-12);
}

TEST(Inference, MatchesSurrogateOnRandomNets) {
  Rng rng(2);
  for (BiasMode mode : {BiasMode::Lumped}) {
    verify::EquivalenceReport total;
    for (int i = 0; i < 40; ++i) {
      const NetworkState net = verify::random_network(rng);
      total += verify::compare_with_simulator(net, verify::random_inputs(rng, net.input_shape, 5),
                                              SimOptions{mode});
    }
    EXPECT_EQ(total.time_mismatches, 0u) << total.first_mismatch;
    EXPECT_LE(total.max_potential_error, 1e-4);
    EXPECT_GT(total.neurons_compared, 1000u);
  }
}

TEST(Inference, MatchesSurrogateOnConvNets) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(seed);
    KernelDefaults kd;
    kd.window = 16;
    NetworkState net = build_network({2, 6, 6}, 4,
                                     {{nn::LayerKind::Conv2d, 4, true},
                                      {nn::LayerKind::MaxPool, 0, false},
                                      {nn::LayerKind::Conv2d, 3, seed % 2 == 0},
                                      {nn::LayerKind::Dense, 8, true}},
                                     kd, rng);
    for (NetLayer& l : net.layers)
      if (l.bn)
        for (std::size_t c = 0; c < l.bn->channels(); ++c) {
          l.bn->running_mean[c] = static_cast<float>(rng.uniform(-0.3, 0.3));
          l.bn->running_var[c] = static_cast<float>(rng.uniform(0.5, 2.0));
          l.bn->beta[c] = static_cast<float>(rng.uniform(-0.2, 0.5));
        }
    const verify::EquivalenceReport r =
        verify::compare_with_simulator(net, verify::random_inputs(rng, net.input_shape, 4));
    EXPECT_TRUE(r.ok(1e-4)) << r.first_mismatch << " " << r.max_potential_error;
  }
}

TEST(Inference, AtMostOneSpikePerNeuronAndStatsBound) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const NetworkState net = verify::random_network(rng);
    const TensorD x = verify::random_inputs(rng, net.input_shape, 1);
    const SimResult r = run_inference(net, x.data());
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const SpikeEvent& e : r.events) EXPECT_TRUE(seen.insert({e.layer, e.neuron}).second);
    const metrics::SpikeStats s = count_spikes(r.events, net);
    EXPECT_LE(s.spikes, s.neurons);
    EXPECT_EQ(s.neurons, net.hidden_neuron_count());
    EXPECT_EQ(s.steps, build_schedule(net).horizon);
    // S matches the surrogate's count of fired hidden neurons
    std::uint64_t surrogate = 0;
    for (std::uint64_t c : count_layer_spikes(infer(net, x))) surrogate += c;
    EXPECT_EQ(s.spikes, surrogate);
  }
}

TEST(CountSpikes, EmptyAndOnePerNeuron) {
  const NetworkState net = chain(2, 8, 3, 2);
  EXPECT_EQ(count_spikes({}, net).spikes, 0u);
  std::vector<SpikeEvent> ev;
  for (std::uint32_t l = 1; l <= 2; ++l)
    for (std::uint32_t n = 0; n < 3; ++n) ev.push_back({l, n, 8 * l});
  const metrics::SpikeStats s = count_spikes(ev, net);
  EXPECT_EQ(s.spikes, s.neurons);
  EXPECT_EQ(s.layers, 3u);
}

TEST(SpikeCsv, RoundTrip) {
  const std::vector<SpikeEvent> ev{{0, 1, 0}, {1, 5, 40}, {2, 0, 77}};
  std::stringstream ss;
  write_spike_csv(ss, ev);
  EXPECT_EQ(ss.str().substr(0, 18), "layer,neuron,time\n");
  EXPECT_EQ(ss.str().find('\r'), std::string::npos);
  EXPECT_EQ(read_spike_csv(ss), ev);
}

TEST(SpikeCsv, EmptyAndMalformed) {
  std::stringstream empty;
  EXPECT_TRUE(read_spike_csv(empty).empty());
  std::stringstream header_only("layer,neuron,time\n");
  EXPECT_TRUE(read_spike_csv(header_only).empty());
  std::stringstream bad_header("a,b,c\n1,2,3\n");
  EXPECT_THROW(read_spike_csv(bad_header), FormatError);
  std::stringstream bad_row("layer,neuron,time\n1,2,3\n1,x,3\n");
  try {
    read_spike_csv(bad_row);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(BiasModeNames, RoundTrip) {
  EXPECT_EQ(bias_mode_from_string("lumped"), BiasMode::Lumped);
  EXPECT_EQ(bias_mode_from_string("per_step"), BiasMode::PerStep);
  EXPECT_THROW(bias_mode_from_string("x"), ConfigError);
}
