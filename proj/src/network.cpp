#include "ttfs/network.hpp"

#include <cmath>

namespace ttfs {

std::size_t NetworkState::num_classes() const {
  if (layers.empty()) return 0;
  return layers.back().params.fan_out();
}

std::size_t NetworkState::encoded_layer_count() const {
  std::size_t n = 1;
  for (const auto& l : layers) n += l.encoded() ? 1 : 0;
  return n;
}

std::vector<Shape> NetworkState::layer_shapes() const {
  std::vector<Shape> out;
  Shape s = input_shape;
  for (const auto& l : layers) {
    s = nn::layer_output_shape(l.params, s);
    out.push_back(s);
  }
  return out;
}

std::size_t NetworkState::hidden_neuron_count() const {
  const auto shapes = layer_shapes();
  std::size_t n = 0;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].encoded()) n += shape_size(shapes[i]);
  return n;
}

std::vector<const TemporalKernel*> NetworkState::kernels() const {
  std::vector<const TemporalKernel*> out{&input_kernel};
  for (const auto& l : layers)
    if (l.kernel) out.push_back(&*l.kernel);
  return out;
}

std::vector<TemporalKernel*> NetworkState::kernels() {
  std::vector<TemporalKernel*> out{&input_kernel};
  for (auto& l : layers)
    if (l.kernel) out.push_back(&*l.kernel);
  return out;
}

void NetworkState::validate() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  input_kernel.validate();
  const auto shapes = layer_shapes();  // throws on dimension mismatches
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const NetLayer& l = layers[i];
    const bool last = i + 1 == layers.size();
    if (last) {
      if (l.params.kind != nn::LayerKind::Dense)
        throw ConfigError("output layer must be dense");
      if (l.kernel) throw ConfigError("output layer must not carry a temporal kernel");
      if (l.params.fan_out() < 2) throw ConfigError("output layer needs at least 2 classes");
    } else if (l.params.kind == nn::LayerKind::MaxPool) {
      if (l.kernel || l.bn) throw ConfigError("maxpool layer cannot have a kernel or batch norm");
    } else if (!l.kernel) {
      throw ConfigError("hidden layer " + std::to_string(i) + " has no temporal kernel");
    }
    if (l.kernel) l.kernel->validate();
    if (l.bn && l.bn->channels() != l.params.fan_out())
      throw DimensionError("batch norm channels do not match layer " + std::to_string(i));
  }
  std::uint32_t window = input_kernel.window;
  for (const auto* k : kernels())
    if (k->window != window) throw ConfigError("all kernels must share the same window T");
}

NetworkState build_network(const Shape& input_shape, std::size_t num_classes,
                           const std::vector<LayerSpec>& hidden, const KernelDefaults& kd,
                           Rng& rng) {
  NetworkState net;
  net.input_shape = input_shape;
  net.input_kernel = TemporalKernel{kd.tau0, kd.t_d0, 0, kd.window, kd.theta0};
  net.input_init = {kd.tau0, kd.t_d0};

  Shape shape = input_shape;
  std::uint32_t encoded = 1;
  auto init_weights = [&](nn::LayerParams& p) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(p.fan_in()));
    for (float& w : p.weights.data()) w = static_cast<float>(rng.normal(0.0, stddev));
  };
  for (const LayerSpec& spec : hidden) {
    NetLayer layer;
    switch (spec.kind) {
      case nn::LayerKind::Dense:
        layer.params = nn::LayerParams::dense(shape_size(shape), spec.units, !spec.batch_norm);
        break;
      case nn::LayerKind::Conv2d:
        if (shape.size() != 3)
          throw ConfigError("conv2d layer needs a [C,H,W] input, got " + shape_str(shape));
        layer.params = nn::LayerParams::conv2d(shape[0], spec.units, !spec.batch_norm);
        break;
      case nn::LayerKind::MaxPool:
        layer.params = nn::LayerParams::maxpool();
        break;
    }
    if (spec.kind != nn::LayerKind::MaxPool) {
      if (spec.units == 0) throw ConfigError("hidden layer width must be > 0");
      init_weights(layer.params);
      if (spec.batch_norm) layer.bn = nn::BatchNormParams(spec.units);
      layer.kernel = TemporalKernel{kd.tau0, kd.t_d0, encoded * kd.window, kd.window, kd.theta0};
      layer.init = {kd.tau0, kd.t_d0};
      ++encoded;
    }
    shape = nn::layer_output_shape(layer.params, shape);
    net.layers.push_back(std::move(layer));
  }
  NetLayer out;
  out.params = nn::LayerParams::dense(shape_size(shape), num_classes, true);
  init_weights(out.params);
  net.layers.push_back(std::move(out));
  net.validate();
  return net;
}

}  // namespace ttfs
