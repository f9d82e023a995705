#pragma once

// Discrete-time integrate-and-fire simulator for trained TTFS networks.
// Every encoded stage owns a window of T+1 global steps [k*T, k*T + T]. A
// layer integrates incoming spikes during its sender's window (INTEG) and
// fires during its own (FIRE); both share the boundary step, where
// integration runs before firing.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttfs/metrics.hpp"
#include "ttfs/network.hpp"

namespace ttfs::sim {

// Closed range of global steps.
struct SimWindow {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;  // inclusive

  bool contains(std::int64_t t) const { return t >= begin && t <= end; }
  friend bool operator==(const SimWindow&, const SimWindow&) = default;
};

// Phases of one stage; the input encoder has no INTEG window and the readout
// has no FIRE window. Maxpool stages relay within their source's window.
struct StagePhase {
  std::optional<SimWindow> integ;
  std::optional<SimWindow> fire;
};

struct SimSchedule {
  std::uint32_t window = 0;   // T
  std::uint32_t horizon = 0;  // H = L*T; steps 0..H are simulated
  std::vector<StagePhase> stages;  // input encoder, then one per network layer
};

// Throws ConfigError when kernels disagree on T or a kernel's t_ref breaks
// the k*T chaining.
SimSchedule build_schedule(const NetworkState& net);

struct IFNeuronState {
  double u = 0.0;
  bool fired = false;
  SpikeTime spike_time;
};

struct SpikeEvent {
  std::uint32_t layer = 0;  // encoded-layer index, 0 = input encoder
  std::uint32_t neuron = 0;
  std::uint32_t time = 0;

  friend bool operator==(const SpikeEvent&, const SpikeEvent&) = default;
};

// How a bias reaches the membrane.
//   Lumped:  b added once at INTEG window start
//   PerStep: b / (T + 1) added at every INTEG step
enum class BiasMode { Lumped, PerStep };

const char* to_string(BiasMode m);
BiasMode bias_mode_from_string(const std::string& s);

// One synaptic stage with batch norm folded into its weights and bias.
struct SimLayer {
  nn::LayerKind kind = nn::LayerKind::Dense;
  Shape in_shape;
  Shape out_shape;
  std::vector<double> weights;  // same layout as nn::LayerParams
  std::vector<double> bias;     // per output unit (dense) or channel (conv); may be empty
  std::optional<TemporalKernel> kernel;  // set on firing stages
  std::size_t source = 0;  // index into SimNetwork::kernels scaling incoming spikes
  std::uint32_t encoded = 0;  // encoded-layer index of a firing stage
};

struct SimNetwork {
  Shape input_shape;
  std::vector<TemporalKernel> kernels;  // input encoder first
  std::vector<SimLayer> layers;
  SimSchedule schedule;
};

// Folds inference-mode batch norm: w' = w*g/sqrt(var+eps), b' = beta + g*(b-mean)/sqrt(var+eps).
SimNetwork compile(const NetworkState& net);

// Adds the bias share due at step t and every incoming spike's weight scaled
// by the sender's kernel at t. Refractory neurons are left untouched.
// Throws ProtocolError if t lies outside `integ` or an event is not stamped t.
void integrate_step(std::span<IFNeuronState> states, std::span<const SpikeEvent> events,
                    const SimLayer& layer,
                    const TemporalKernel& sender, const SimWindow& integ, std::uint32_t t,
                    BiasMode bias_mode = BiasMode::Lumped);

// Every unfired neuron with u >= theta(t) fires. The threshold follows the
// kernel, theta(t) = theta0 * (kappa(t) - floor), where `floor` is the
// encoder's log offset; outside the kernel window nothing fires.
std::vector<SpikeEvent> fire_step(std::span<IFNeuronState> states, const TemporalKernel& k,
                                  std::uint32_t layer, std::uint32_t t);

struct SimOptions {
  BiasMode bias_mode = BiasMode::Lumped;
};

struct SimResult {
  std::size_t prediction = 0;
  std::vector<SpikeEvent> events;  // encoder and hidden spikes in time order
  std::vector<double> potentials;  // readout membrane potentials
  std::vector<std::vector<SpikeTime>> times;  // per encoded layer, input first
};

// Simulates one sample; `image` holds intensities in the input layout.
SimResult run_inference(const SimNetwork& net, std::span<const double> image,
                        const SimOptions& opt = {});
SimResult run_inference(const NetworkState& net, std::span<const double> image,
                        const SimOptions& opt = {});

// S counts hidden-layer events only; N, H and L come from the network.
metrics::SpikeStats count_spikes(std::span<const SpikeEvent> events, const NetworkState& net);
metrics::SpikeStats count_spikes(std::span<const SpikeEvent> events, const SimNetwork& net);

// CSV with header "layer,neuron,time", one row per event. Reading accepts a
// zero-byte stream as no events; any other header is a FormatError and a
// malformed row a ParseError naming the line.
void write_spike_csv(std::ostream& os, std::span<const SpikeEvent> events);
std::vector<SpikeEvent> read_spike_csv(std::istream& is);

}  // namespace ttfs::sim
