#pragma once

// Spike-efficiency and energy accounting.

#include <cstdint>
#include <string>
#include <vector>

#include "ttfs/surrogate.hpp"
#include "ttfs/temporal_kernel.hpp"

namespace ttfs::metrics {

// S spikes from N neurons over H time steps in L encoded layers.
struct SpikeStats {
  std::uint64_t spikes = 0;
  std::uint64_t neurons = 0;
  std::uint64_t steps = 0;
  std::uint32_t layers = 0;
};

// An exact non-negative rational percentage.
class Percent {
 public:
  Percent(std::uint64_t num, std::uint64_t den);

  std::uint64_t numerator() const { return num_; }
  std::uint64_t denominator() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  // Fixed two-decimal rendering, e.g. "17.46".
  std::string str(int decimals = 2) const;

  Percent operator*(std::uint64_t k) const;
  friend bool operator==(const Percent& a, const Percent& b);

 private:
  std::uint64_t num_;
  std::uint64_t den_;
};

// 100 * S / (N * H). Throws ConfigError when N or H is zero.
Percent spike_rate(const SpikeStats& s);
// 100 * S / N. Throws ConfigError when N is zero.
Percent sparsity(const SpikeStats& s);

// What the static coefficient multiplies.
enum class StaticBasis { Layers, TimeSteps };

struct EnergyModel {
  std::string name;
  double e_dynamic = 0.0;  // per spike
  double e_static = 0.0;   // per layer (or per time step, see `basis`)
  StaticBasis basis = StaticBasis::Layers;

  void validate() const;
};

// Named presets: "unit" (E_d = 1, E_s = 0), "truenorth", "spinnaker".
// The neuromorphic presets are relative coefficients, static cost per time step.
EnergyModel energy_model_preset(const std::string& name);
std::vector<std::string> energy_model_names();

struct EnergyEstimate {
  double absolute = 0.0;
  double normalized = 0.0;
};

double energy(const SpikeStats& s, const EnergyModel& m);

// E = S*E_d + L*E_s (or H*E_s), normalized by the baseline's energy under the
// same model. Throws ConfigError if the baseline energy is zero.
EnergyEstimate energy_estimate(const SpikeStats& s, const EnergyModel& m,
                               const SpikeStats& baseline);

// Per encoded layer (input encoder first) sums of clipping, pruning and
// quantization errors of a strict forward trace.
std::vector<KernelErrorReport> layer_errors(const NetworkForward& fwd);

// Strict inference forward of `batch`, then layer_errors.
std::vector<KernelErrorReport> error_report(const NetworkState& net, const TensorD& batch);

}  // namespace ttfs::metrics
