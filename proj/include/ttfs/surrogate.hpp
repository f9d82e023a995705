#pragma once

// Spike-time-domain surrogate of a TTFS network: each hidden activation is
// encoded to an integer spike time and decoded through the layer's kernel.
// Backward uses a straight-through estimator for the quantizer.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ttfs/network.hpp"
#include "ttfs/temporal_kernel.hpp"

namespace ttfs {

// Gradient of the decoded activation w.r.t. its pre-activation on the strict
// (unrelaxed) path.
//   PassThrough: 1 everywhere, including pruned and clipped elements
//   Clamped:     1 inside [z_min, z_max], 0 outside
enum class SteMode { PassThrough, Clamped };

const char* to_string(SteMode m);
SteMode ste_mode_from_string(const std::string& s);

struct RelaxationSchedule {
  std::uint32_t e_tar = 50;
  std::uint64_t seed = 0;
};

// max(0, 1 - (e + 1) / e_tar).
double relaxation_prob(std::uint32_t epoch, const RelaxationSchedule& s);

// One Bernoulli draw per layer: relaxed iff r < p with r ~ U[0, 1). With p = 0
// nothing is ever relaxed.
std::vector<bool> draw_relaxation(double p, std::size_t layers, Rng& rng);

struct TtfsCache {
  TensorD z;
  std::vector<SpikeTime> times;
  TemporalKernel kernel;
  bool relaxed = false;
  bool valid = false;
};

struct TtfsForward {
  TensorD zhat;
  std::vector<SpikeTime> times;  // all none() on a relaxed layer
  TtfsCache cache;
};

// Relaxed: zhat = relu(z). Strict: zhat = decode(encode(z)) elementwise.
TtfsForward ttfs_layer_forward(const TensorD& z, const TemporalKernel& k, bool relaxed);

struct TtfsGrads {
  TensorD dz;
  KernelGrads kernel;
};

// Throws StateError if `cache` is empty or was produced for a different shape.
TtfsGrads ttfs_layer_backward(const TensorD& upstream, const TtfsCache& cache, GradMode mode,
                              SteMode ste = SteMode::PassThrough);

// Temporal-kernel regularization: sum over kernels of (tau - tau0)^2 +
// (t_d - t_d0)^2. Gradients are listed input encoder first.
struct RegTr {
  double value = 0.0;
  std::vector<KernelGrads> grads;
};

RegTr reg_tr(const NetworkState& net);

// Taylor-approximated pruning-region probability mass of one BN channel:
//   1/2 (g^2/3 + g + 1) b^3 - 1/2 m b^2 - 1/2 (m^2 g + 2) b - (m^2 g^2 / 6 - 1) m
// with g = gamma, b = beta, m = z_min of the kernel the channel feeds.
double p_tb(double gamma, double beta, double z_min);

struct PtbGrads {
  double d_gamma = 0.0;
  double d_beta = 0.0;
};

PtbGrads p_tb_grads(double gamma, double beta, double z_min);

struct ForwardOptions {
  bool training = false;      // batch-statistics BN
  std::vector<bool> relaxed;  // per hidden encoded layer; missing entries are strict
};

struct LayerForward {
  nn::LayerCache linear;
  nn::BatchNormCache bn;
  nn::BatchStats bn_stats;  // training mode only
  TtfsCache ttfs;
  TensorD pre;  // linear (+BN) output; for encoded layers this is z
};

struct NetworkForward {
  TtfsCache input;  // input encoder; `input.z` holds the raw intensities
  std::vector<LayerForward> layers;
  TensorD logits;
};

// Throws NumericError naming the layer if a pre-activation is non-finite.
NetworkForward network_forward(const NetworkState& net, const TensorD& x,
                               const ForwardOptions& opt = {});

// Strict, inference-mode forward.
inline NetworkForward infer(const NetworkState& net, const TensorD& x) {
  return network_forward(net, x);
}

struct LayerGradients {
  TensorD weights;
  TensorD bias;
  std::vector<double> gamma;
  std::vector<double> beta;
  KernelGrads kernel;
};

struct NetworkGradients {
  KernelGrads input_kernel;
  std::vector<LayerGradients> layers;
};

NetworkGradients network_backward(const NetworkState& net, const NetworkForward& fwd,
                                  const TensorD& dlogits, GradMode mode, SteMode ste);

struct LossConfig {
  double lambda_tr = 1e-5;
  double lambda_tb = 1e-5;
  GradMode grad_mode = GradMode::Analytic;
  SteMode ste = SteMode::PassThrough;
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double reg_tr = 0.0;
  double p_tb = 0.0;  // summed over every BN channel that feeds a kernel
};

struct LossResult {
  LossBreakdown loss;
  NetworkGradients grads;
  NetworkForward forward;
};

// Sum of p_tb over every BN channel feeding a kernel; z_min is taken from
// that layer's own kernel.
double p_tb_total(const NetworkState& net);

// L = L_CE + lambda_tr * REG_TR - lambda_tb * P_TB, with gradients for every
// parameter. z_min inside P_TB is treated as a constant.
LossResult total_loss(const NetworkState& net, const TensorD& x, std::span<const int> labels,
                      const LossConfig& cfg, const ForwardOptions& opt);

// Stable-ordered Adam slots for every trainable parameter.
std::vector<nn::ParamRef> param_refs(NetworkState& net, const NetworkGradients& g);

// Spikes emitted by hidden encoded layers in a strict forward (per layer).
std::vector<std::uint64_t> count_layer_spikes(const NetworkForward& fwd);

}  // namespace ttfs
