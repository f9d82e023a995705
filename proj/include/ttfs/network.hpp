#pragma once

#include <optional>
#include <vector>

#include "ttfs/nn.hpp"
#include "ttfs/rng.hpp"
#include "ttfs/temporal_kernel.hpp"

namespace ttfs {

// Initial kernel values; temporal-kernel regularization pulls towards these.
struct KernelInit {
  double tau0 = 10.0;
  double t_d0 = 0.0;
};

// One stage of the surrogate network: linear map, optional batch norm, and
// for hidden dense/conv stages the TTFS kernel that encodes its output.
struct NetLayer {
  nn::LayerParams params;
  std::optional<nn::BatchNormParams> bn;
  std::optional<TemporalKernel> kernel;
  KernelInit init;

  bool encoded() const { return kernel.has_value(); }
};

// The input intensities are spike-encoded with `input_kernel`; every hidden
// dense/conv layer carries its own kernel; the last layer is a dense readout
// whose raw pre-activations are the logits.
struct NetworkState {
  Shape input_shape;
  TemporalKernel input_kernel;
  KernelInit input_init;
  std::vector<NetLayer> layers;

  std::size_t num_classes() const;
  // Kernels including the input encoder.
  std::size_t encoded_layer_count() const;
  // Neurons of hidden encoded layers (the input encoder is excluded).
  std::size_t hidden_neuron_count() const;
  // Per-sample output shape of every layer, in order.
  std::vector<Shape> layer_shapes() const;
  // All kernels, input encoder first.
  std::vector<const TemporalKernel*> kernels() const;
  std::vector<TemporalKernel*> kernels();

  // Throws ConfigError/DimensionError on structural violations.
  void validate() const;
};

struct LayerSpec {
  nn::LayerKind kind = nn::LayerKind::Dense;
  std::size_t units = 0;  // dense width or conv output channels
  bool batch_norm = true;
};

struct KernelDefaults {
  std::uint32_t window = 32;
  double tau0 = 10.0;
  double t_d0 = 0.0;
  double theta0 = 1.0;
};

// Builds a network from hidden layer specs; the dense readout with
// `num_classes` units is appended. Kaiming-normal weights (std sqrt(2/fan_in))
// drawn from `rng`; biases only on layers without batch norm; kernels chained
// so layer k's window opens at k*T (the input encoder is layer 0).
NetworkState build_network(const Shape& input_shape, std::size_t num_classes,
                           const std::vector<LayerSpec>& hidden, const KernelDefaults& kd,
                           Rng& rng);

}  // namespace ttfs
