#include "ttfs/temporal_kernel.hpp"

#include <cmath>

#include "ttfs/error.hpp"

namespace ttfs {

void TemporalKernel::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw ConfigError("tau must be a finite value > 0, got " + std::to_string(tau));
  if (!std::isfinite(t_d)) throw ConfigError("t_d must be finite");
  if (window < 1) throw ConfigError("window T must be >= 1");
  if (!(theta0 > 0.0) || !std::isfinite(theta0))
    throw ConfigError("theta0 must be a finite value > 0, got " + std::to_string(theta0));
}

double TemporalKernel::z_max() const { return std::exp(t_d / tau); }

double TemporalKernel::z_min() const {
  return std::exp((t_d - static_cast<double>(window)) / tau);
}

std::string to_string(SpikeTime t) {
  return t.fired() ? std::to_string(t.value()) : std::string("none");
}

double kernel_value(const TemporalKernel& k, std::int64_t t) {
  if (t < static_cast<std::int64_t>(k.t_ref) || t > static_cast<std::int64_t>(k.last_step()))
    return 0.0;
  const double local = static_cast<double>(t - static_cast<std::int64_t>(k.t_ref));
  return std::exp(-(local - k.t_d) / k.tau);
}

SpikeTime encode(const TemporalKernel& k, double z) {
  const double r = z > 0.0 ? z : 0.0;
  const double raw = std::ceil(-k.tau * std::log(r / k.theta0 + kEncodeEpsilon) + k.t_d);
  const double local = raw > 0.0 ? raw : 0.0;
  if (!(local <= static_cast<double>(k.window))) return SpikeTime::none();
  return SpikeTime::at(static_cast<std::int32_t>(k.t_ref) + static_cast<std::int32_t>(local));
}

double decode(const TemporalKernel& k, SpikeTime t) {
  return t.fired() ? kernel_value(k, t.value()) : 0.0;
}

RepresentationBounds representation_bounds(const TemporalKernel& k) {
  return {k.z_min(), k.z_max()};
}

double max_precision_error(const TemporalKernel& k) {
  return std::exp(k.t_d / k.tau) - std::exp((k.t_d - 1.0) / k.tau);
}

const char* to_string(Region r) {
  switch (r) {
    case Region::Pruned: return "pruned";
    case Region::Quantized: return "quantized";
    case Region::Clipped: return "clipped";
  }
  return "?";
}

ErrorClassification classify_and_error(const TemporalKernel& k, double z) {
  ErrorClassification c;
  const double hi = k.z_max();
  const double lo = k.z_min();
  if (z > hi) {
    c.region = Region::Clipped;
    c.error.max_error = z - hi;
  } else if (z < lo) {
    c.region = Region::Pruned;
    c.error.min_error = lo - z;
  } else {
    c.region = Region::Quantized;
    c.error.precision_error = z - decode(k, encode(k, z));
  }
  return c;
}

const char* to_string(GradMode m) {
  switch (m) {
    case GradMode::Unset: return "unset";
    case GradMode::Analytic: return "analytic";
    case GradMode::PaperLiteral: return "paper_literal";
  }
  return "?";
}

GradMode grad_mode_from_string(const std::string& s) {
  if (s == "analytic") return GradMode::Analytic;
  if (s == "paper_literal") return GradMode::PaperLiteral;
  throw ConfigError("grad mode must be 'analytic' or 'paper_literal', got '" + s + "'");
}

KernelGrads kernel_param_grads(const TemporalKernel& k, SpikeTime t, GradMode mode) {
  if (mode == GradMode::Unset) throw ConfigError("kernel gradient mode is unset");
  if (!t.fired()) return {};
  const double zhat = decode(k, t);
  const double tau2 = k.tau * k.tau;
  if (mode == GradMode::Analytic) {
    const double local = static_cast<double>(t.value()) - static_cast<double>(k.t_ref);
    return {zhat * (local - k.t_d) / tau2, zhat / k.tau};
  }
  return {zhat * (static_cast<double>(t.value()) - k.t_d) / tau2, zhat * k.t_d / k.tau};
}

}  // namespace ttfs
