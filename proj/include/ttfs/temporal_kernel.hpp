#pragma once

// The exponentially decaying TTFS kernel: a layer's analog value z is
// carried by one integer spike time t, with
//   decode(t) = exp(-(t - t_ref - t_d) / tau)   for t_ref <= t <= t_ref + T
// and encode the ceiling-quantized inverse of it.

#include <compare>
#include <cstdint>
#include <string>

namespace ttfs {

// Numerical-stability offset inside encode's logarithm.
inline constexpr double kEncodeEpsilon = 1e-10;

struct TemporalKernel {
  double tau = 10.0;          // time constant, in time steps
  double t_d = 0.0;           // time delay, in time steps
  std::uint32_t t_ref = 0;    // global step at which this layer's window opens
  std::uint32_t window = 32;  // T: valid local spike times are 0..T
  double theta0 = 1.0;        // initial firing threshold

  // Throws ConfigError naming the offending field.
  void validate() const;

  double z_max() const;  // exp(t_d / tau)
  double z_min() const;  // exp((t_d - T) / tau)
  std::uint32_t last_step() const { return t_ref + window; }

  friend bool operator==(const TemporalKernel&, const TemporalKernel&) = default;
};

// First-spike time of one neuron, in global time steps, or "no spike".
class SpikeTime {
 public:
  static constexpr std::int32_t kNone = -1;

  constexpr SpikeTime() = default;
  static constexpr SpikeTime none() { return SpikeTime(); }
  static constexpr SpikeTime at(std::int32_t t) { return SpikeTime(t); }

  constexpr bool fired() const { return value_ != kNone; }
  constexpr std::int32_t value() const { return value_; }

  friend constexpr auto operator<=>(const SpikeTime&, const SpikeTime&) = default;

 private:
  constexpr explicit SpikeTime(std::int32_t t) : value_(t) {}
  std::int32_t value_ = kNone;
};

std::string to_string(SpikeTime t);

// Kernel at integer global time t; zero outside [t_ref, t_ref + T].
double kernel_value(const TemporalKernel& k, std::int64_t t);

SpikeTime encode(const TemporalKernel& k, double z);
double decode(const TemporalKernel& k, SpikeTime t);

struct RepresentationBounds {
  double z_min = 0.0;
  double z_max = 0.0;
};

RepresentationBounds representation_bounds(const TemporalKernel& k);

// Largest gap between adjacent quantization levels: exp(t_d/tau) - exp((t_d-1)/tau).
double max_precision_error(const TemporalKernel& k);

enum class Region { Pruned, Quantized, Clipped };

const char* to_string(Region r);

struct KernelErrorReport {
  double max_error = 0.0;        // clipping, z above z_max
  double min_error = 0.0;        // pruning, z below z_min
  double precision_error = 0.0;  // quantization inside the range

  double total() const { return max_error + min_error + precision_error; }

  KernelErrorReport& operator+=(const KernelErrorReport& o) {
    max_error += o.max_error;
    min_error += o.min_error;
    precision_error += o.precision_error;
    return *this;
  }
};

struct ErrorClassification {
  Region region = Region::Quantized;
  KernelErrorReport error;
};

ErrorClassification classify_and_error(const TemporalKernel& k, double z);

// How the kernel-parameter gradients are formed.
//   Analytic:     exact derivatives of the kernel with the spike time held fixed
//   PaperLiteral: the factors (t - t_d)/tau^2 and t_d/tau, with t the global
//                 spike time, reproduced for fidelity experiments
enum class GradMode { Unset, Analytic, PaperLiteral };

const char* to_string(GradMode m);
GradMode grad_mode_from_string(const std::string& s);

struct KernelGrads {
  double d_tau = 0.0;
  double d_td = 0.0;
};

// d(decode)/d(tau) and d(decode)/d(t_d) at spike time t. A pruned activation
// contributes zero. Throws ConfigError for GradMode::Unset.
KernelGrads kernel_param_grads(const TemporalKernel& k, SpikeTime t, GradMode mode);

}  // namespace ttfs
