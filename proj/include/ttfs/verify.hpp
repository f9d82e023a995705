#pragma once

// Oracles cross-checking the surrogate: random network generation, the
// surrogate-vs-simulator spike-time comparison, and finite-difference
// gradient checks.

#include <cstdint>
#include <string>
#include <vector>

#include "ttfs/network.hpp"
#include "ttfs/rng.hpp"
#include "ttfs/snn_sim.hpp"
#include "ttfs/surrogate.hpp"

namespace ttfs::verify {

struct RandomNetOptions {
  std::size_t min_dense = 2;  // dense layers including the readout
  std::size_t max_dense = 4;
  std::size_t max_width = 64;
  std::size_t min_inputs = 4;
  std::size_t max_inputs = 64;
  std::size_t min_classes = 2;
  std::size_t max_classes = 10;
  double tau_lo = 5.0, tau_hi = 20.0;
  double td_lo = 0.0, td_hi = 3.0;
  std::vector<std::uint32_t> windows{8, 16, 32};
  double bn_prob = 0.5;      // chance that a hidden layer carries batch norm
  double weight_gain = 1.5;  // multiplies the Kaiming standard deviation
};

// Dense network with random shape, weights, kernels and (inference-mode)
// batch-norm statistics; kernels are chained at k*T.
NetworkState random_network(Rng& rng, const RandomNetOptions& opt = {});

// [n, input_shape...] intensities drawn uniformly from [0, 1).
TensorD random_inputs(Rng& rng, const Shape& input_shape, std::size_t n);

struct EquivalenceReport {
  std::size_t samples = 0;
  std::size_t neurons_compared = 0;
  std::size_t time_mismatches = 0;
  double max_potential_error = 0.0;
  std::string first_mismatch;  // empty when every spike time agrees

  bool ok(double potential_tol) const {
    return time_mismatches == 0 && max_potential_error <= potential_tol;
  }
  EquivalenceReport& operator+=(const EquivalenceReport& o);
};

// Runs the strict surrogate forward and the simulator on every row of
// `inputs`, comparing first-spike times of every encoded neuron and the
// readout potentials against the logits.
EquivalenceReport compare_with_simulator(const NetworkState& net, const TensorD& inputs,
                                         const sim::SimOptions& opt = {});

struct GradCheckOptions {
  double h = 1e-3;
  // Gradient norms below this are compared absolutely; a bias feeding a
  // training-mode batch norm has an exactly cancelling gradient.
  double norm_floor = 1e-6;
  GradMode mode = GradMode::Analytic;
  SteMode ste = SteMode::PassThrough;
  double lambda_tr = 1e-2;
  double lambda_tb = 1e-2;
  bool training = true;
  std::vector<bool> relaxed;
};

struct ParamCheck {
  std::string name;
  std::size_t count = 0;
  double rel_error = 0.0;  // ||analytic - fd|| / max(||analytic||, ||fd||, norm_floor)
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double worst() const;
};

// Richardson-extrapolated central differences (steps h and h/2) of the loss with every spike time, the STE gates, the
// ReLU masks of relaxed layers, the maxpool routing and the z_min inside the
// pruning term frozen at the base point. Each decoded activation becomes
// kappa(t_frozen; tau, t_d) + gate * (z - z_frozen), which has the same
// gradient as the straight-through backward.
GradCheckReport check_gradients(NetworkState net, const TensorD& x, std::span<const int> labels,
                                const GradCheckOptions& opt = {});

struct PtbCheckReport {
  std::size_t points = 0;
  double max_abs_error = 0.0;
};

// p_tb_grads against central differences of p_tb at random (gamma, beta, z_min).
PtbCheckReport check_p_tb(Rng& rng, std::size_t points, double h = 1e-5);

}  // namespace ttfs::verify
