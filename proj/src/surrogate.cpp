#include "ttfs/surrogate.hpp"

#include <algorithm>
#include <cmath>

namespace ttfs {

const char* to_string(SteMode m) {
  return m == SteMode::PassThrough ? "pass_through" : "clamped";
}

SteMode ste_mode_from_string(const std::string& s) {
  if (s == "pass_through") return SteMode::PassThrough;
  if (s == "clamped") return SteMode::Clamped;
  throw ConfigError("ste must be 'pass_through' or 'clamped', got '" + s + "'");
}

double relaxation_prob(std::uint32_t epoch, const RelaxationSchedule& s) {
  if (s.e_tar == 0) throw ConfigError("e_tar must be >= 1");
  const double p = 1.0 - (static_cast<double>(epoch) + 1.0) / static_cast<double>(s.e_tar);
  return std::max(0.0, p);
}

std::vector<bool> draw_relaxation(double p, std::size_t layers, Rng& rng) {
  std::vector<bool> out(layers);
  for (std::size_t i = 0; i < layers; ++i) out[i] = rng.uniform() < p;
  return out;
}

TtfsForward ttfs_layer_forward(const TensorD& z, const TemporalKernel& k, bool relaxed) {
  TtfsForward f;
  f.zhat = TensorD(z.shape());
  f.times.assign(z.size(), SpikeTime::none());
  if (relaxed) {
    for (std::size_t i = 0; i < z.size(); ++i) f.zhat[i] = z[i] > 0.0 ? z[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < z.size(); ++i) {
      f.times[i] = encode(k, z[i]);
      f.zhat[i] = decode(k, f.times[i]);
    }
  }
  f.cache.z = z;
  f.cache.times = f.times;
  f.cache.kernel = k;
  f.cache.relaxed = relaxed;
  f.cache.valid = true;
  return f;
}

TtfsGrads ttfs_layer_backward(const TensorD& up, const TtfsCache& cache, GradMode mode,
                              SteMode ste) {
  if (!cache.valid) throw StateError("ttfs_layer_backward called without a cached forward pass");
  if (up.size() != cache.z.size() || cache.times.size() != cache.z.size())
    throw StateError("upstream gradient " + shape_str(up.shape()) +
                     " does not match cached TTFS activation " + shape_str(cache.z.shape()));
  if (mode == GradMode::Unset) throw ConfigError("kernel gradient mode is unset");
  TtfsGrads g;
  g.dz = TensorD(cache.z.shape());
  if (cache.relaxed) {
    for (std::size_t i = 0; i < up.size(); ++i) g.dz[i] = cache.z[i] > 0.0 ? up[i] : 0.0;
    return g;
  }
  const double lo = cache.kernel.z_min();
  const double hi = cache.kernel.z_max();
  for (std::size_t i = 0; i < up.size(); ++i) {
    const double z = cache.z[i];
    const bool pass = ste == SteMode::PassThrough || (z >= lo && z <= hi);
    g.dz[i] = pass ? up[i] : 0.0;
    if (up[i] != 0.0 && cache.times[i].fired()) {
      const KernelGrads kg = kernel_param_grads(cache.kernel, cache.times[i], mode);
      g.kernel.d_tau += up[i] * kg.d_tau;
      g.kernel.d_td += up[i] * kg.d_td;
    }
  }
  return g;
}

RegTr reg_tr(const NetworkState& net) {
  RegTr r;
  auto add = [&](const TemporalKernel& k, const KernelInit& init) {
    const double dt = k.tau - init.tau0;
    const double dd = k.t_d - init.t_d0;
    r.value += dt * dt + dd * dd;
    r.grads.push_back({2.0 * dt, 2.0 * dd});
  };
  add(net.input_kernel, net.input_init);
  for (const auto& l : net.layers)
    if (l.kernel) add(*l.kernel, l.init);
  return r;
}

double p_tb(double g, double b, double m) {
  return 0.5 * (g * g / 3.0 + g + 1.0) * b * b * b - 0.5 * m * b * b -
         0.5 * (m * m * g + 2.0) * b - (m * m * g * g / 6.0 - 1.0) * m;
}

PtbGrads p_tb_grads(double g, double b, double m) {
  PtbGrads r;
  r.d_beta = 1.5 * (g * g / 3.0 + g + 1.0) * b * b - m * b - 0.5 * (m * m * g + 2.0);
  r.d_gamma = (g / 3.0 + 0.5) * b * b * b - 0.5 * m * m * b - m * m * m * g / 3.0;
  return r;
}

NetworkForward network_forward(const NetworkState& net, const TensorD& x,
                               const ForwardOptions& opt) {
  NetworkForward f;
  if (!x.all_finite()) throw NumericError("non-finite input intensities");
  TtfsForward in = ttfs_layer_forward(x, net.input_kernel, false);
  TensorD h = std::move(in.zhat);
  f.input = std::move(in.cache);
  f.layers.resize(net.layers.size());
  std::size_t encoded = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const NetLayer& layer = net.layers[i];
    LayerForward& lf = f.layers[i];
    TensorD pre = nn::layer_forward(h, layer.params, &lf.linear);
    if (layer.bn)
      pre = nn::batchnorm_apply(pre, *layer.bn, opt.training, &lf.bn,
                                opt.training ? &lf.bn_stats : nullptr);
    if (!pre.all_finite())
      throw NumericError("non-finite pre-activation in layer " + std::to_string(i));
    if (layer.kernel) {
      const bool relaxed = encoded < opt.relaxed.size() && opt.relaxed[encoded];
      TtfsForward t = ttfs_layer_forward(pre, *layer.kernel, relaxed);
      h = std::move(t.zhat);
      lf.ttfs = std::move(t.cache);
      ++encoded;
    } else {
      h = pre;
    }
    lf.pre = std::move(pre);
  }
  f.logits = std::move(h);
  return f;
}

NetworkGradients network_backward(const NetworkState& net, const NetworkForward& fwd,
                                  const TensorD& dlogits, GradMode mode, SteMode ste) {
  if (fwd.layers.size() != net.layers.size())
    throw StateError("forward cache does not belong to this network");
  NetworkGradients g;
  g.layers.resize(net.layers.size());
  TensorD up = dlogits;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const NetLayer& layer = net.layers[i];
    const LayerForward& lf = fwd.layers[i];
    LayerGradients& lg = g.layers[i];
    if (layer.kernel) {
      TtfsGrads tg = ttfs_layer_backward(up, lf.ttfs, mode, ste);
      lg.kernel = tg.kernel;
      up = std::move(tg.dz);
    }
    if (layer.bn) {
      nn::BatchNormGrads bg = nn::batchnorm_backward(up, *layer.bn, lf.bn);
      lg.gamma = std::move(bg.gamma);
      lg.beta = std::move(bg.beta);
      up = std::move(bg.input);
    }
    nn::LayerGrads pg = nn::layer_backward(up, layer.params, lf.linear);
    lg.weights = std::move(pg.weights);
    lg.bias = std::move(pg.bias);
    up = std::move(pg.input);
  }
  g.input_kernel = ttfs_layer_backward(up, fwd.input, mode, ste).kernel;
  return g;
}

double p_tb_total(const NetworkState& net) {
  double total = 0.0;
  for (const auto& l : net.layers) {
    if (!l.bn || !l.kernel) continue;
    const double m = l.kernel->z_min();
    for (std::size_t c = 0; c < l.bn->channels(); ++c)
      total += p_tb(l.bn->gamma[c], l.bn->beta[c], m);
  }
  return total;
}

LossResult total_loss(const NetworkState& net, const TensorD& x, std::span<const int> labels,
                      const LossConfig& cfg, const ForwardOptions& opt) {
  if (cfg.lambda_tr < 0.0) throw ConfigError("lambda_tr must be >= 0");
  if (cfg.lambda_tb < 0.0) throw ConfigError("lambda_tb must be >= 0");
  LossResult r;
  r.forward = network_forward(net, x, opt);
  nn::CrossEntropyResult ce = nn::cross_entropy(r.forward.logits, labels);
  r.grads = network_backward(net, r.forward, ce.grad, cfg.grad_mode, cfg.ste);

  const RegTr tr = reg_tr(net);
  r.loss.ce = ce.loss;
  r.loss.reg_tr = tr.value;
  r.loss.p_tb = p_tb_total(net);
  r.loss.total = ce.loss + cfg.lambda_tr * tr.value - cfg.lambda_tb * r.loss.p_tb;
  if (!std::isfinite(r.loss.total)) throw NumericError("non-finite loss at the output layer");

  std::size_t k = 0;
  r.grads.input_kernel.d_tau += cfg.lambda_tr * tr.grads[k].d_tau;
  r.grads.input_kernel.d_td += cfg.lambda_tr * tr.grads[k].d_td;
  ++k;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const NetLayer& l = net.layers[i];
    LayerGradients& lg = r.grads.layers[i];
    if (l.kernel) {
      lg.kernel.d_tau += cfg.lambda_tr * tr.grads[k].d_tau;
      lg.kernel.d_td += cfg.lambda_tr * tr.grads[k].d_td;
      ++k;
    }
    if (l.bn && l.kernel && cfg.lambda_tb != 0.0) {
      const double m = l.kernel->z_min();
      for (std::size_t c = 0; c < l.bn->channels(); ++c) {
        const PtbGrads pg = p_tb_grads(l.bn->gamma[c], l.bn->beta[c], m);
        lg.gamma[c] -= cfg.lambda_tb * pg.d_gamma;
        lg.beta[c] -= cfg.lambda_tb * pg.d_beta;
      }
    }
  }
  return r;
}

std::vector<nn::ParamRef> param_refs(NetworkState& net, const NetworkGradients& g) {
  std::vector<nn::ParamRef> refs;
  auto scalar = [](double& v) { return std::span<double>(&v, 1); };
  auto cscalar = [](const double& v) { return std::span<const double>(&v, 1); };
  refs.push_back({"input.tau", scalar(net.input_kernel.tau), cscalar(g.input_kernel.d_tau)});
  refs.push_back({"input.t_d", scalar(net.input_kernel.t_d), cscalar(g.input_kernel.d_td)});
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    NetLayer& l = net.layers[i];
    const LayerGradients& lg = g.layers[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    if (l.params.kind == nn::LayerKind::MaxPool) continue;
    refs.push_back({prefix + "weights", l.params.weights.data(), lg.weights.data()});
    if (l.params.has_bias()) refs.push_back({prefix + "bias", l.params.bias.data(), lg.bias.data()});
    if (l.bn) {
      refs.push_back({prefix + "gamma", l.bn->gamma.data(), std::span<const double>(lg.gamma)});
      refs.push_back({prefix + "beta", l.bn->beta.data(), std::span<const double>(lg.beta)});
    }
    if (l.kernel) {
      refs.push_back({prefix + "tau", scalar(l.kernel->tau), cscalar(lg.kernel.d_tau)});
      refs.push_back({prefix + "t_d", scalar(l.kernel->t_d), cscalar(lg.kernel.d_td)});
    }
  }
  return refs;
}

std::vector<std::uint64_t> count_layer_spikes(const NetworkForward& fwd) {
  std::vector<std::uint64_t> out;
  for (const auto& lf : fwd.layers) {
    if (!lf.ttfs.valid) continue;
    out.push_back(static_cast<std::uint64_t>(
        std::count_if(lf.ttfs.times.begin(), lf.ttfs.times.end(),
                      [](SpikeTime t) { return t.fired(); })));
  }
  return out;
}

}  // namespace ttfs
