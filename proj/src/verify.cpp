#include "ttfs/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ttfs/error.hpp"

namespace ttfs::verify {

NetworkState random_network(Rng& rng, const RandomNetOptions& opt) {
  if (opt.windows.empty()) throw ConfigError("no window choices given");
  if (opt.min_dense < 1 || opt.max_dense < opt.min_dense)
    throw ConfigError("invalid dense layer range");
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
  const std::uint32_t T = opt.windows[rng.below(opt.windows.size())];
  const std::size_t dense = pick(opt.min_dense, opt.max_dense);
  const std::size_t inputs = pick(opt.min_inputs, opt.max_inputs);
  const std::size_t classes = pick(opt.min_classes, opt.max_classes);

  auto kernel = [&](std::uint32_t k) {
    TemporalKernel kern;
    kern.tau = rng.uniform(opt.tau_lo, opt.tau_hi);
    kern.t_d = rng.uniform(opt.td_lo, opt.td_hi);
    kern.window = T;
    kern.t_ref = k * T;
    kern.theta0 = 1.0;
    return kern;
  };

  NetworkState net;
  net.input_shape = {inputs};
  net.input_kernel = kernel(0);
  net.input_init = {net.input_kernel.tau, net.input_kernel.t_d};
  std::size_t fan_in = inputs;
  for (std::size_t d = 0; d < dense; ++d) {
    const bool readout = d + 1 == dense;
    const std::size_t out = readout ? classes : pick(2, opt.max_width);
    NetLayer l;
    const bool bn = !readout && rng.uniform() < opt.bn_prob;
    l.params = nn::LayerParams::dense(fan_in, out, !bn);
    const double sd = opt.weight_gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& w : l.params.weights.data()) w = static_cast<float>(rng.normal(0.0, sd));
    for (auto& b : l.params.bias.data()) b = static_cast<float>(rng.uniform(-0.2, 0.2));
    if (bn) {
      nn::BatchNormParams p(out);
      for (std::size_t c = 0; c < out; ++c) {
        p.gamma[c] = static_cast<float>(rng.uniform(0.5, 1.5));
        p.beta[c] = static_cast<float>(rng.uniform(-0.5, 0.5));
        p.running_mean[c] = static_cast<float>(rng.uniform(-0.5, 0.5));
        p.running_var[c] = static_cast<float>(rng.uniform(0.5, 2.0));
      }
      l.bn = std::move(p);
    }
    if (!readout) {
      l.kernel = kernel(static_cast<std::uint32_t>(d + 1));
      l.init = {l.kernel->tau, l.kernel->t_d};
    }
    net.layers.push_back(std::move(l));
    fan_in = out;
  }
  net.validate();
  return net;
}

TensorD random_inputs(Rng& rng, const Shape& input_shape, std::size_t n) {
  Shape s{n};
  s.insert(s.end(), input_shape.begin(), input_shape.end());
  TensorD x(s);
  for (auto& v : x.data()) v = rng.uniform();
  return x;
}

EquivalenceReport& EquivalenceReport::operator+=(const EquivalenceReport& o) {
  samples += o.samples;
  neurons_compared += o.neurons_compared;
  time_mismatches += o.time_mismatches;
  max_potential_error = std::max(max_potential_error, o.max_potential_error);
  if (first_mismatch.empty()) first_mismatch = o.first_mismatch;
  return *this;
}

EquivalenceReport compare_with_simulator(const NetworkState& net, const TensorD& inputs,
                                         const sim::SimOptions& opt) {
  const NetworkForward fwd = infer(net, inputs);
  const sim::SimNetwork compiled = sim::compile(net);
  std::vector<const std::vector<SpikeTime>*> surrogate{&fwd.input.times};
  for (const auto& lf : fwd.layers)
    if (lf.ttfs.valid) surrogate.push_back(&lf.ttfs.times);

  EquivalenceReport rep;
  const std::size_t B = batch_of(inputs);
  const std::size_t per = inputs.size() / std::max<std::size_t>(B, 1);
  const std::size_t K = fwd.logits.dim(1);
  for (std::size_t b = 0; b < B; ++b) {
    const std::span<const double> row(inputs.data().data() + b * per, per);
    const sim::SimResult r = sim::run_inference(compiled, row, opt);
    ++rep.samples;
    for (std::size_t k = 0; k < surrogate.size(); ++k) {
      const auto& st = *surrogate[k];
      const std::size_t n = r.times[k].size();
      for (std::size_t i = 0; i < n; ++i) {
        ++rep.neurons_compared;
        const SpikeTime expect = st[b * n + i];
        if (r.times[k][i] == expect) continue;
        if (rep.first_mismatch.empty()) {
          std::ostringstream os;
          os << "sample " << b << " layer " << k << " neuron " << i << ": surrogate "
             << to_string(expect) << ", simulator " << to_string(r.times[k][i]);
          rep.first_mismatch = os.str();
        }
        ++rep.time_mismatches;
      }
    }
    for (std::size_t j = 0; j < K; ++j)
      rep.max_potential_error =
          std::max(rep.max_potential_error, std::abs(r.potentials[j] - fwd.logits.at(b, j)));
  }
  return rep;
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& p : params) w = std::max(w, p.rel_error);
  return w;
}

namespace {

struct FrozenLayer {
  std::vector<SpikeTime> times;
  TensorD z;
  std::vector<double> gate;  // d zhat / d z at the base point
  std::vector<std::size_t> argmax;
  double z_min = 0.0;
  bool relaxed = false;
};

struct Frozen {
  std::vector<SpikeTime> input_times;
  std::vector<FrozenLayer> layers;
};

Frozen freeze(const NetworkState& net, const NetworkForward& fwd, SteMode ste) {
  Frozen f;
  f.input_times = fwd.input.times;
  f.layers.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& lf = fwd.layers[i];
    FrozenLayer& fl = f.layers[i];
    fl.argmax = lf.linear.argmax;
    if (!net.layers[i].kernel) continue;
    const TtfsCache& c = lf.ttfs;
    fl.times = c.times;
    fl.z = c.z;
    fl.z_min = c.kernel.z_min();
    fl.relaxed = c.relaxed;
    fl.gate.resize(c.z.size());
    const double lo = c.kernel.z_min(), hi = c.kernel.z_max();
    for (std::size_t k = 0; k < c.z.size(); ++k) {
      const double z = c.z[k];
      if (c.relaxed)
        fl.gate[k] = z > 0.0 ? 1.0 : 0.0;
      else
        fl.gate[k] = ste == SteMode::PassThrough || (z >= lo && z <= hi) ? 1.0 : 0.0;
    }
  }
  return f;
}

TensorD frozen_maxpool(const TensorD& x, const Shape& out_shape, std::span<const std::size_t> argmax) {
  Shape s{batch_of(x)};
  s.insert(s.end(), out_shape.begin(), out_shape.end());
  TensorD y(s);
  if (argmax.size() != y.size()) throw StateError("frozen maxpool routing has the wrong size");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[argmax[i]];
  return y;
}

double frozen_loss(const NetworkState& net, const Frozen& f, const TensorD& x,
                   std::span<const int> labels, const GradCheckOptions& opt) {
  TensorD h(x.shape());
  for (std::size_t i = 0; i < h.size(); ++i)
    h[i] = f.input_times[i].fired() ? kernel_value(net.input_kernel, f.input_times[i].value()) : 0.0;
  const auto shapes = net.layer_shapes();
  double ptb = 0.0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const NetLayer& l = net.layers[i];
    const FrozenLayer& fl = f.layers[i];
    TensorD pre = l.params.kind == nn::LayerKind::MaxPool
                      ? frozen_maxpool(h, shapes[i], fl.argmax)
                      : nn::layer_forward(h, l.params);
    if (l.bn) {
      nn::BatchStats stats;
      pre = nn::batchnorm_apply(pre, *l.bn, opt.training, nullptr, opt.training ? &stats : nullptr);
      if (l.kernel)
        for (std::size_t c = 0; c < l.bn->channels(); ++c)
          ptb += p_tb(l.bn->gamma[c], l.bn->beta[c], fl.z_min);
    }
    if (!l.kernel) {
      h = std::move(pre);
      continue;
    }
    TensorD zhat(pre.shape());
    for (std::size_t k = 0; k < pre.size(); ++k) {
      const double base = fl.times[k].fired() ? kernel_value(*l.kernel, fl.times[k].value()) : 0.0;
      zhat[k] = fl.relaxed ? fl.gate[k] * pre[k] : base + fl.gate[k] * (pre[k] - fl.z[k]);
    }
    h = std::move(zhat);
  }
  const double ce = nn::cross_entropy(h, labels).loss;
  return ce + opt.lambda_tr * reg_tr(net).value - opt.lambda_tb * ptb;
}

}  // namespace

GradCheckReport check_gradients(NetworkState net, const TensorD& x, std::span<const int> labels,
                                const GradCheckOptions& opt) {
  if (!(opt.h > 0.0)) throw ConfigError("finite-difference step must be > 0");
  const LossConfig cfg{opt.lambda_tr, opt.lambda_tb, opt.mode, opt.ste};
  const LossResult base = total_loss(net, x, labels, cfg, {opt.training, opt.relaxed});
  // Relaxed flags are reflected in each layer's cache, so freezing them is enough.
  const Frozen frozen = freeze(net, base.forward, opt.ste);
  const auto refs = param_refs(net, base.grads);
  auto f = [&] { return frozen_loss(net, frozen, x, labels, opt); };

  GradCheckReport rep;
  for (const nn::ParamRef& ref : refs) {
    ParamCheck pc;
    pc.name = ref.name;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    auto probe = [&](auto values) {
      pc.count = values.size();
      for (std::size_t i = 0; i < values.size(); ++i) {
        using V = std::remove_reference_t<decltype(values[i])>;
        const V saved = values[i];
        auto central = [&](double step) {
          const V up = static_cast<V>(static_cast<double>(saved) + step);
          const V dn = static_cast<V>(static_cast<double>(saved) - step);
          values[i] = up;
          const double fp = f();
          values[i] = dn;
          const double fm = f();
          values[i] = saved;
          return (fp - fm) / (static_cast<double>(up) - static_cast<double>(dn));
        };
        // Richardson extrapolation of two central differences cancels the h^2 term.
        const double fd = (4.0 * central(opt.h / 2.0) - central(opt.h)) / 3.0;
        const double an = ref.grad[i];
        diff2 += (an - fd) * (an - fd);
        a2 += an * an;
        n2 += fd * fd;
        pc.max_abs_error = std::max(pc.max_abs_error, std::abs(an - fd));
      }
    };
    std::visit(probe, ref.values);
    pc.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), opt.norm_floor});
    rep.params.push_back(pc);
  }
  return rep;
}

PtbCheckReport check_p_tb(Rng& rng, std::size_t points, double h) {
  PtbCheckReport r;
  for (std::size_t i = 0; i < points; ++i) {
    const double g = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-2.0, 2.0);
    const double m = rng.uniform(1e-3, 1.0);
    const PtbGrads an = p_tb_grads(g, b, m);
    const double dg = (p_tb(g + h, b, m) - p_tb(g - h, b, m)) / (2.0 * h);
    const double db = (p_tb(g, b + h, m) - p_tb(g, b - h, m)) / (2.0 * h);
    r.max_abs_error = std::max({r.max_abs_error, std::abs(an.d_gamma - dg), std::abs(an.d_beta - db)});
    ++r.points;
  }
  return r;
}

}  // namespace ttfs::verify
