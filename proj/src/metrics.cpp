#include "ttfs/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace ttfs::metrics {

Percent::Percent(std::uint64_t num, std::uint64_t den) : num_(num), den_(den) {
  if (den == 0) throw ConfigError("percentage with zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
}

std::string Percent::str(int decimals) const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value());
  return buf;
}

Percent Percent::operator*(std::uint64_t k) const {
  const std::uint64_t g = std::gcd(k, den_);
  const unsigned __int128 num = static_cast<unsigned __int128>(num_) * (k / g);
  if (num > ~std::uint64_t{0}) throw ConfigError("percentage overflow");
  return Percent(static_cast<std::uint64_t>(num), den_ / g);
}

bool operator==(const Percent& a, const Percent& b) {
  return static_cast<unsigned __int128>(a.num_) * b.den_ ==
         static_cast<unsigned __int128>(b.num_) * a.den_;
}

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  if (p > ~std::uint64_t{0}) throw ConfigError("spike statistics overflow");
  return static_cast<std::uint64_t>(p);
}

}  // namespace

Percent spike_rate(const SpikeStats& s) {
  if (s.neurons == 0) throw ConfigError("spike rate needs N > 0");
  if (s.steps == 0) throw ConfigError("spike rate needs H > 0");
  return Percent(checked_mul(100, s.spikes), checked_mul(s.neurons, s.steps));
}

Percent sparsity(const SpikeStats& s) {
  if (s.neurons == 0) throw ConfigError("sparsity needs N > 0");
  return Percent(checked_mul(100, s.spikes), s.neurons);
}

void EnergyModel::validate() const {
  if (!(e_dynamic >= 0.0) || !(e_static >= 0.0))
    throw ConfigError("energy model '" + name + "' needs E_d >= 0 and E_s >= 0");
}

// Relative coefficients (E_d = 1) whose static term is charged per time step.
// With them the normalized TrueNorth/SpiNNaker energies of the published
// CIFAR-10 comparison (TSC baseline, 512 steps) are reproduced to two decimals.
EnergyModel energy_model_preset(const std::string& name) {
  if (name == "unit") return {"unit", 1.0, 0.0, StaticBasis::Layers};
  if (name == "truenorth") return {"truenorth", 1.0, 570.0, StaticBasis::TimeSteps};
  if (name == "spinnaker") return {"spinnaker", 1.0, 206.0, StaticBasis::TimeSteps};
  throw ConfigError("unknown energy model '" + name + "'");
}

std::vector<std::string> energy_model_names() { return {"unit", "truenorth", "spinnaker"}; }

double energy(const SpikeStats& s, const EnergyModel& m) {
  m.validate();
  const double units = m.basis == StaticBasis::Layers ? static_cast<double>(s.layers)
                                                      : static_cast<double>(s.steps);
  return static_cast<double>(s.spikes) * m.e_dynamic + units * m.e_static;
}

EnergyEstimate energy_estimate(const SpikeStats& s, const EnergyModel& m,
                               const SpikeStats& baseline) {
  EnergyEstimate e;
  e.absolute = energy(s, m);
  const double base = energy(baseline, m);
  if (base == 0.0) throw ConfigError("baseline energy is zero; cannot normalize");
  e.normalized = e.absolute / base;
  return e;
}

std::vector<KernelErrorReport> layer_errors(const NetworkForward& fwd) {
  std::vector<KernelErrorReport> out;
  auto accumulate = [&](const TtfsCache& c) {
    KernelErrorReport r;
    for (double z : c.z.data()) r += classify_and_error(c.kernel, z).error;
    out.push_back(r);
  };
  accumulate(fwd.input);
  for (const auto& lf : fwd.layers)
    if (lf.ttfs.valid) accumulate(lf.ttfs);
  return out;
}

std::vector<KernelErrorReport> error_report(const NetworkState& net, const TensorD& batch) {
  return layer_errors(infer(net, batch));
}

}  // namespace ttfs::metrics
