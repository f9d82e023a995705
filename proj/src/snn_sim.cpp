#include "ttfs/snn_sim.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include "ttfs/error.hpp"

namespace ttfs::sim {

const char* to_string(BiasMode m) { return m == BiasMode::Lumped ? "lumped" : "per_step"; }

BiasMode bias_mode_from_string(const std::string& s) {
  if (s == "lumped") return BiasMode::Lumped;
  if (s == "per_step") return BiasMode::PerStep;
  throw ConfigError("bias mode must be 'lumped' or 'per_step', got '" + s + "'");
}

SimSchedule build_schedule(const NetworkState& net) {
  SimSchedule s;
  const std::uint32_t T = net.input_kernel.window;
  if (T < 1) throw ConfigError("window T must be >= 1");
  s.window = T;
  std::uint32_t k = 0;
  auto check = [&](const TemporalKernel& kern) {
    if (kern.window != T)
      throw ConfigError("kernel " + std::to_string(k) + " has T=" + std::to_string(kern.window) +
                        ", expected " + std::to_string(T));
    if (kern.t_ref != k * T)
      throw ConfigError("kernel " + std::to_string(k) + " opens at t_ref=" +
                        std::to_string(kern.t_ref) + ", expected " + std::to_string(k * T));
  };
  check(net.input_kernel);
  SimWindow prev{0, T};
  s.stages.push_back({std::nullopt, prev});
  for (const auto& l : net.layers) {
    if (l.kernel) {
      ++k;
      check(*l.kernel);
      const SimWindow fire{k * T, k * T + T};
      s.stages.push_back({prev, fire});
      prev = fire;
    } else if (l.params.kind == nn::LayerKind::MaxPool) {
      s.stages.push_back({prev, prev});
    } else {
      s.stages.push_back({prev, std::nullopt});
    }
  }
  s.horizon = (k + 1) * T;
  return s;
}

SimNetwork compile(const NetworkState& net) {
  net.validate();
  SimNetwork sn;
  sn.input_shape = net.input_shape;
  sn.schedule = build_schedule(net);
  sn.kernels.push_back(net.input_kernel);
  std::size_t source = 0;
  Shape shape = net.input_shape;
  for (const auto& l : net.layers) {
    SimLayer sl;
    sl.kind = l.params.kind;
    sl.in_shape = shape;
    sl.out_shape = nn::layer_output_shape(l.params, shape);
    sl.source = source;
    shape = sl.out_shape;
    if (sl.kind != nn::LayerKind::MaxPool) {
      const std::size_t out = l.params.fan_out();
      sl.weights.assign(l.params.weights.data().begin(), l.params.weights.data().end());
      if (l.params.has_bias() || l.bn) {
        sl.bias.assign(out, 0.0);
        if (l.params.has_bias())
          for (std::size_t o = 0; o < out; ++o) sl.bias[o] = l.params.bias[o];
      }
      if (l.bn) {
        const auto& bn = *l.bn;
        const std::size_t per_out = sl.weights.size() / out;
        for (std::size_t o = 0; o < out; ++o) {
          const double scale =
              static_cast<double>(bn.gamma[o]) / std::sqrt(static_cast<double>(bn.running_var[o]) + bn.eps);
          sl.bias[o] = static_cast<double>(bn.beta[o]) +
                       scale * (sl.bias[o] - static_cast<double>(bn.running_mean[o]));
          if (sl.kind == nn::LayerKind::Dense) {
            for (std::size_t i = 0; i < per_out; ++i) sl.weights[i * out + o] *= scale;
          } else {
            for (std::size_t i = 0; i < per_out; ++i) sl.weights[o * per_out + i] *= scale;
          }
        }
      }
    }
    if (l.kernel) {
      sl.kernel = *l.kernel;
      sn.kernels.push_back(*l.kernel);
      source = sn.kernels.size() - 1;
      sl.encoded = static_cast<std::uint32_t>(source);
    }
    sn.layers.push_back(std::move(sl));
  }
  return sn;
}

void integrate_step(std::span<IFNeuronState> states, std::span<const SpikeEvent> events,
                    const SimLayer& layer, const TemporalKernel& sender, const SimWindow& integ,
                    std::uint32_t t, BiasMode bias_mode) {
  if (!integ.contains(t))
    throw ProtocolError("integration at step " + std::to_string(t) + " outside window [" +
                        std::to_string(integ.begin) + ", " + std::to_string(integ.end) + "]");
  if (states.size() != shape_size(layer.out_shape))
    throw DimensionError("state count does not match layer output " + shape_str(layer.out_shape));
  const std::size_t in_size = shape_size(layer.in_shape);
  const bool conv = layer.kind == nn::LayerKind::Conv2d;
  const std::size_t out_units = conv ? layer.out_shape[0] : states.size();
  const std::size_t plane = conv ? layer.out_shape[1] * layer.out_shape[2] : 1;

  if (!layer.bias.empty()) {
    double share = 0.0;
    if (bias_mode == BiasMode::Lumped) {
      share = t == integ.begin ? 1.0 : 0.0;
    } else {
      share = 1.0 / static_cast<double>(integ.end - integ.begin + 1);
    }
    if (share != 0.0)
      for (std::size_t o = 0; o < out_units; ++o)
        for (std::size_t p = 0; p < plane; ++p) {
          IFNeuronState& s = states[o * plane + p];
          if (!s.fired) s.u += layer.bias[o] * share;
        }
  }

  for (const SpikeEvent& e : events) {
    if (e.time != t)
      throw ProtocolError("spike stamped " + std::to_string(e.time) + " delivered at step " +
                          std::to_string(t));
    if (e.neuron >= in_size)
      throw ProtocolError("spike from neuron " + std::to_string(e.neuron) +
                          " beyond presynaptic size " + std::to_string(in_size));
    const double kappa = kernel_value(sender, t);
    if (!conv) {
      const double* w = &layer.weights[static_cast<std::size_t>(e.neuron) * out_units];
      for (std::size_t j = 0; j < out_units; ++j)
        if (!states[j].fired) states[j].u += w[j] * kappa;
      continue;
    }
    const std::size_t C = layer.in_shape[0], H = layer.in_shape[1], W = layer.in_shape[2];
    const std::size_t c = e.neuron / (H * W);
    const long y = static_cast<long>((e.neuron / W) % H);
    const long x = static_cast<long>(e.neuron % W);
    for (std::size_t o = 0; o < out_units; ++o) {
      const double* k = &layer.weights[(o * C + c) * 9];
      for (int ky = 0; ky < 3; ++ky) {
        const long oy = y - ky + 1;
        if (oy < 0 || oy >= static_cast<long>(H)) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const long ox = x - kx + 1;
          if (ox < 0 || ox >= static_cast<long>(W)) continue;
          IFNeuronState& s = states[o * plane + static_cast<std::size_t>(oy) * W + ox];
          if (!s.fired) s.u += k[ky * 3 + kx] * kappa;
        }
      }
    }
  }
}

std::vector<SpikeEvent> fire_step(std::span<IFNeuronState> states, const TemporalKernel& k,
                                  std::uint32_t layer, std::uint32_t t) {
  std::vector<SpikeEvent> out;
  if (t < k.t_ref || t > k.last_step()) return out;
  const double threshold = k.theta0 * (kernel_value(k, t) - kEncodeEpsilon);
  for (std::size_t i = 0; i < states.size(); ++i) {
    IFNeuronState& s = states[i];
    if (s.fired) continue;
    const double r = s.u > 0.0 ? s.u : 0.0;
    if (r >= threshold) {
      s.fired = true;
      s.spike_time = SpikeTime::at(static_cast<std::int32_t>(t));
      out.push_back({layer, static_cast<std::uint32_t>(i), t});
    }
  }
  return out;
}

SimResult run_inference(const SimNetwork& net, std::span<const double> image,
                        const SimOptions& opt) {
  if (image.size() != shape_size(net.input_shape))
    throw DimensionError("image has " + std::to_string(image.size()) + " values, network expects " +
                         shape_str(net.input_shape));
  if (net.schedule.stages.size() != net.layers.size() + 1)
    throw StateError("schedule does not match the compiled network");
  SimResult r;
  std::vector<IFNeuronState> input(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (!std::isfinite(image[i])) throw NumericError("non-finite input intensity at " + std::to_string(i));
    input[i].u = image[i];
  }
  std::vector<std::vector<IFNeuronState>> states(net.layers.size());
  std::vector<std::vector<bool>> relayed(net.layers.size());
  r.times.emplace_back(image.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const std::size_t n = shape_size(net.layers[i].out_shape);
    if (net.layers[i].kind == nn::LayerKind::MaxPool) {
      relayed[i].assign(n, false);
    } else {
      states[i].resize(n);
    }
    if (net.layers[i].kernel) r.times.emplace_back(n);
  }

  auto record = [&](const std::vector<SpikeEvent>& ev) {
    for (const SpikeEvent& e : ev) {
      r.times[e.layer][e.neuron] = SpikeTime::at(static_cast<std::int32_t>(e.time));
      r.events.push_back(e);
    }
  };

  std::vector<SpikeEvent> cur;
  for (std::uint32_t t = 0; t <= net.schedule.horizon; ++t) {
    cur.clear();
    if (net.schedule.stages[0].fire->contains(t)) {
      cur = fire_step(input, net.kernels[0], 0, t);
      record(cur);
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const SimLayer& l = net.layers[i];
      const StagePhase& ph = net.schedule.stages[i + 1];
      if (l.kind == nn::LayerKind::MaxPool) {
        const std::size_t H = l.in_shape[1], W = l.in_shape[2];
        const std::size_t OH = l.out_shape[1], OW = l.out_shape[2];
        std::vector<SpikeEvent> relay;
        for (const SpikeEvent& e : cur) {
          const std::size_t c = e.neuron / (H * W);
          const std::size_t oy = (e.neuron / W) % H / 2, ox = e.neuron % W / 2;
          if (oy >= OH || ox >= OW) continue;
          const std::size_t o = (c * OH + oy) * OW + ox;
          if (relayed[i][o]) continue;
          relayed[i][o] = true;
          relay.push_back({e.layer, static_cast<std::uint32_t>(o), e.time});
        }
        cur = std::move(relay);
        continue;
      }
      if (ph.integ && ph.integ->contains(t)) {
        integrate_step(states[i], cur, l, net.kernels[l.source], *ph.integ, t, opt.bias_mode);
      } else if (!cur.empty()) {
        throw ProtocolError("layer " + std::to_string(i) + " received spikes at step " +
                            std::to_string(t) + " outside its integration window");
      }
      cur.clear();
      if (l.kernel && ph.fire && ph.fire->contains(t)) {
        cur = fire_step(states[i], *l.kernel, l.encoded, t);
        record(cur);
      }
    }
  }

  const auto& out = states.back();
  r.potentials.resize(out.size());
  for (std::size_t j = 0; j < out.size(); ++j) r.potentials[j] = out[j].u;
  for (std::size_t j = 1; j < out.size(); ++j)
    if (r.potentials[j] > r.potentials[r.prediction]) r.prediction = j;
  return r;
}

SimResult run_inference(const NetworkState& net, std::span<const double> image,
                        const SimOptions& opt) {
  return run_inference(compile(net), image, opt);
}

metrics::SpikeStats count_spikes(std::span<const SpikeEvent> events, const SimNetwork& net) {
  metrics::SpikeStats s;
  for (const SpikeEvent& e : events) s.spikes += e.layer > 0 ? 1 : 0;
  for (const SimLayer& l : net.layers)
    if (l.kernel) s.neurons += shape_size(l.out_shape);
  s.steps = net.schedule.horizon;
  s.layers = static_cast<std::uint32_t>(net.kernels.size());
  return s;
}

metrics::SpikeStats count_spikes(std::span<const SpikeEvent> events, const NetworkState& net) {
  metrics::SpikeStats s;
  for (const SpikeEvent& e : events) s.spikes += e.layer > 0 ? 1 : 0;
  s.neurons = net.hidden_neuron_count();
  s.layers = static_cast<std::uint32_t>(net.encoded_layer_count());
  s.steps = static_cast<std::uint64_t>(s.layers) * net.input_kernel.window;
  return s;
}

void write_spike_csv(std::ostream& os, std::span<const SpikeEvent> events) {
  os << "layer,neuron,time\n";
  for (const SpikeEvent& e : events) os << e.layer << ',' << e.neuron << ',' << e.time << '\n';
}

std::vector<SpikeEvent> read_spike_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) return {};  // a zero-byte file holds no events
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "layer,neuron,time")
    throw FormatError("spike CSV header must be 'layer,neuron,time', got '" + line + "'");
  std::vector<SpikeEvent> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::uint32_t v[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int f = 0; f < 3; ++f) {
      auto [next, ec] = std::from_chars(p, end, v[f]);
      const bool sep_ok = f < 2 ? (next != end && *next == ',') : next == end;
      if (ec != std::errc() || !sep_ok)
        throw ParseError("spike CSV line " + std::to_string(lineno) + ": expected three unsigned integers");
      p = next + (f < 2 ? 1 : 0);
    }
    out.push_back({v[0], v[1], v[2]});
  }
  return out;
}

}  // namespace ttfs::sim
