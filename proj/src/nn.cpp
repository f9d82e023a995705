#include "ttfs/nn.hpp"

#include <cmath>
#include <limits>

namespace ttfs::nn {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool: return "maxpool";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  if (name == "dense") return LayerKind::Dense;
  if (name == "conv2d" || name == "conv") return LayerKind::Conv2d;
  if (name == "maxpool") return LayerKind::MaxPool;
  throw ConfigError("unknown layer kind '" + name + "'");
}

std::size_t LayerParams::fan_in() const {
  switch (kind) {
    case LayerKind::Dense: return weights.dim(0);
    case LayerKind::Conv2d: return weights.dim(1) * 9;
    case LayerKind::MaxPool: return 0;
  }
  return 0;
}

std::size_t LayerParams::fan_out() const {
  switch (kind) {
    case LayerKind::Dense: return weights.dim(1);
    case LayerKind::Conv2d: return weights.dim(0);
    case LayerKind::MaxPool: return 0;
  }
  return 0;
}

LayerParams LayerParams::dense(std::size_t in, std::size_t out, bool with_bias) {
  LayerParams p;
  p.kind = LayerKind::Dense;
  p.weights = Tensor({in, out});
  if (with_bias) p.bias = Tensor({out});
  return p;
}

LayerParams LayerParams::conv2d(std::size_t in_ch, std::size_t out_ch, bool with_bias) {
  LayerParams p;
  p.kind = LayerKind::Conv2d;
  p.weights = Tensor({out_ch, in_ch, 3, 3});
  if (with_bias) p.bias = Tensor({out_ch});
  return p;
}

LayerParams LayerParams::maxpool() {
  LayerParams p;
  p.kind = LayerKind::MaxPool;
  return p;
}

Shape layer_output_shape(const LayerParams& p, const Shape& s) {
  switch (p.kind) {
    case LayerKind::Dense:
      if (shape_size(s) != p.weights.dim(0))
        throw DimensionError("dense layer expects " + std::to_string(p.weights.dim(0)) +
                             " inputs, got " + shape_str(s));
      return {p.weights.dim(1)};
    case LayerKind::Conv2d:
      if (s.size() != 3 || s[0] != p.weights.dim(1))
        throw DimensionError("conv2d expects [" + std::to_string(p.weights.dim(1)) +
                             ",H,W] input, got " + shape_str(s));
      return {p.weights.dim(0), s[1], s[2]};
    case LayerKind::MaxPool:
      if (s.size() != 3 || s[1] < 2 || s[2] < 2)
        throw DimensionError("maxpool expects [C,H,W] input with H,W >= 2, got " +
                             shape_str(s));
      return {s[0], s[1] / 2, s[2] / 2};
  }
  return {};
}

namespace {

double bias_at(const LayerParams& p, std::size_t o) {
  return p.has_bias() ? static_cast<double>(p.bias[o]) : 0.0;
}

void require_conv_input(const TensorD& x, const LayerParams& p) {
  if (x.rank() != 4 || x.dim(1) != p.weights.dim(1))
    throw DimensionError("conv2d expects [B," + std::to_string(p.weights.dim(1)) +
                         ",H,W] input, got " + shape_str(x.shape()));
}

}  // namespace

TensorD dense_forward(const TensorD& x, const LayerParams& p) {
  const std::size_t batch = batch_of(x);
  const std::size_t in = p.weights.dim(0);
  const std::size_t out = p.weights.dim(1);
  if (features_of(x) != in)
    throw DimensionError("dense layer expects " + std::to_string(in) +
                         " input features, got " + shape_str(x.shape()));
  TensorD y({batch, out});
  const auto w = p.weights.data();
  const auto xs = x.data();
  std::vector<double> acc(out);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xs[b * in + i];
      if (xi == 0.0) continue;
      const float* row = &w[i * out];
      for (std::size_t o = 0; o < out; ++o) acc[o] += xi * static_cast<double>(row[o]);
    }
    for (std::size_t o = 0; o < out; ++o) y.at(b, o) = acc[o] + bias_at(p, o);
  }
  return y;
}

TensorD conv2d_forward(const TensorD& x, const LayerParams& p) {
  require_conv_input(x, p);
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = p.weights.dim(0);
  TensorD y({B, O, H, W});
  const auto w = p.weights.data();
  const auto xs = x.data();
  auto ys = y.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      double* plane = &ys[((b * O) + o) * H * W];
      for (std::size_t c = 0; c < C; ++c) {
        const double* in = &xs[((b * C) + c) * H * W];
        const float* k = &w[((o * C) + c) * 9];
        for (std::size_t yy = 0; yy < H; ++yy) {
          for (std::size_t xx = 0; xx < W; ++xx) {
            double s = 0.0;
            for (int ky = 0; ky < 3; ++ky) {
              const long iy = static_cast<long>(yy) + ky - 1;
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const long ix = static_cast<long>(xx) + kx - 1;
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                s += in[iy * W + ix] * static_cast<double>(k[ky * 3 + kx]);
              }
            }
            plane[yy * W + xx] += s;
          }
        }
      }
      const double bo = bias_at(p, o);
      for (std::size_t i = 0; i < H * W; ++i) plane[i] += bo;
    }
  }
  return y;
}

TensorD maxpool_forward(const TensorD& x, std::vector<std::size_t>* argmax) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2)
    throw DimensionError("maxpool expects [B,C,H,W] with H,W >= 2, got " +
                         shape_str(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = H / 2, OW = W / 2;
  TensorD y({B, C, OH, OW});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t out = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t base = bc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox, ++out) {
        std::size_t best = base + (2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * W + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        y[out] = x[best];
        if (argmax) (*argmax)[out] = best;
      }
    }
  }
  return y;
}

TensorD layer_forward(const TensorD& x, const LayerParams& p, LayerCache* cache) {
  TensorD y;
  std::vector<std::size_t> argmax;
  switch (p.kind) {
    case LayerKind::Dense: y = dense_forward(x, p); break;
    case LayerKind::Conv2d: y = conv2d_forward(x, p); break;
    case LayerKind::MaxPool: y = maxpool_forward(x, cache ? &argmax : nullptr); break;
  }
  if (cache) {
    cache->input = x;
    cache->argmax = std::move(argmax);
    cache->valid = true;
  }
  return y;
}

LayerGrads layer_backward(const TensorD& up, const LayerParams& p, const LayerCache& cache) {
  if (!cache.valid) throw StateError("layer_backward called without a cached forward pass");
  const TensorD& x = cache.input;
  LayerGrads g;
  g.input = TensorD(x.shape());
  switch (p.kind) {
    case LayerKind::Dense: {
      const std::size_t B = batch_of(x), I = p.weights.dim(0), O = p.weights.dim(1);
      if (up.size() != B * O)
        throw StateError("upstream gradient " + shape_str(up.shape()) +
                         " does not match cached dense output");
      g.weights = TensorD({I, O});
      if (p.has_bias()) g.bias = TensorD({O});
      const auto w = p.weights.data();
      for (std::size_t b = 0; b < B; ++b) {
        const double* u = &up[b * O];
        for (std::size_t i = 0; i < I; ++i) {
          const double xi = x[b * I + i];
          double gi = 0.0;
          double* gw = &g.weights[i * O];
          const float* row = &w[i * O];
          for (std::size_t o = 0; o < O; ++o) {
            gw[o] += xi * u[o];
            gi += u[o] * static_cast<double>(row[o]);
          }
          g.input[b * I + i] = gi;
        }
        if (p.has_bias())
          for (std::size_t o = 0; o < O; ++o) g.bias[o] += u[o];
      }
      break;
    }
    case LayerKind::Conv2d: {
      const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const std::size_t O = p.weights.dim(0);
      if (up.size() != B * O * H * W)
        throw StateError("upstream gradient does not match cached conv2d output");
      g.weights = TensorD(p.weights.shape());
      if (p.has_bias()) g.bias = TensorD({O});
      const auto w = p.weights.data();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < O; ++o) {
          const double* u = &up[((b * O) + o) * H * W];
          if (p.has_bias())
            for (std::size_t i = 0; i < H * W; ++i) g.bias[o] += u[i];
          for (std::size_t c = 0; c < C; ++c) {
            const double* in = &x[((b * C) + c) * H * W];
            double* gin = &g.input[((b * C) + c) * H * W];
            const float* k = &w[((o * C) + c) * 9];
            double* gk = &g.weights[((o * C) + c) * 9];
            for (std::size_t yy = 0; yy < H; ++yy) {
              for (std::size_t xx = 0; xx < W; ++xx) {
                const double uv = u[yy * W + xx];
                if (uv == 0.0) continue;
                for (int ky = 0; ky < 3; ++ky) {
                  const long iy = static_cast<long>(yy) + ky - 1;
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  for (int kx = 0; kx < 3; ++kx) {
                    const long ix = static_cast<long>(xx) + kx - 1;
                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                    gk[ky * 3 + kx] += uv * in[iy * W + ix];
                    gin[iy * W + ix] += uv * static_cast<double>(k[ky * 3 + kx]);
                  }
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::MaxPool: {
      if (up.size() != cache.argmax.size())
        throw StateError("upstream gradient does not match cached maxpool output");
      for (std::size_t i = 0; i < up.size(); ++i) g.input[cache.argmax[i]] += up[i];
      break;
    }
  }
  return g;
}

BatchNormParams::BatchNormParams(std::size_t channels)
    : gamma({channels}, 1.0f),
      beta({channels}, 0.0f),
      running_mean({channels}, 0.0f),
      running_var({channels}, 1.0f) {}

namespace {

struct ChannelLayout {
  std::size_t batch, channels, spatial;
};

ChannelLayout channel_layout(const TensorD& x, std::size_t expected) {
  ChannelLayout l{};
  if (x.rank() == 2) {
    l = {x.dim(0), x.dim(1), 1};
  } else if (x.rank() == 4) {
    l = {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  } else {
    throw DimensionError("batch norm expects [B,F] or [B,C,H,W], got " + shape_str(x.shape()));
  }
  if (l.channels != expected)
    throw DimensionError("batch norm has " + std::to_string(expected) + " channels, input " +
                         shape_str(x.shape()));
  return l;
}

inline std::size_t bn_index(const ChannelLayout& l, std::size_t b, std::size_t c,
                            std::size_t s) {
  return (b * l.channels + c) * l.spatial + s;
}

}  // namespace

TensorD batchnorm_apply(const TensorD& x, const BatchNormParams& p, bool training,
                        BatchNormCache* cache, BatchStats* stats) {
  const ChannelLayout l = channel_layout(x, p.channels());
  if (training && l.batch < 2)
    throw ConfigError("batch norm in training mode needs batch size >= 2");
  TensorD y(x.shape());
  TensorD x_hat(x.shape());
  std::vector<double> inv_std(l.channels);
  if (stats) {
    stats->mean.assign(l.channels, 0.0);
    stats->var.assign(l.channels, 0.0);
  }
  const double count = static_cast<double>(l.batch * l.spatial);
  for (std::size_t c = 0; c < l.channels; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (std::size_t b = 0; b < l.batch; ++b)
        for (std::size_t s = 0; s < l.spatial; ++s) sum += x[bn_index(l, b, c, s)];
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < l.batch; ++b)
        for (std::size_t s = 0; s < l.spatial; ++s) {
          const double d = x[bn_index(l, b, c, s)] - mean;
          sq += d * d;
        }
      var = sq / count;
      if (stats) {
        stats->mean[c] = mean;
        stats->var[c] = sq / (count - 1);
      }
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + p.eps);
    const double g = p.gamma[c], be = p.beta[c];
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const std::size_t i = bn_index(l, b, c, s);
        x_hat[i] = (x[i] - mean) * inv_std[c];
        y[i] = g * x_hat[i] + be;
      }
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
    cache->valid = true;
  }
  return y;
}

void update_running_stats(BatchNormParams& p, const BatchStats& stats) {
  if (stats.mean.size() != p.channels() || stats.var.size() != p.channels())
    throw DimensionError("batch statistics do not match batch norm channels");
  for (std::size_t c = 0; c < p.channels(); ++c) {
    p.running_mean[c] =
        static_cast<float>(p.momentum * p.running_mean[c] + (1.0 - p.momentum) * stats.mean[c]);
    p.running_var[c] =
        static_cast<float>(p.momentum * p.running_var[c] + (1.0 - p.momentum) * stats.var[c]);
  }
}

TensorD batchnorm_forward(const TensorD& x, BatchNormParams& p, bool training,
                          BatchNormCache* cache) {
  BatchStats stats;
  TensorD y = batchnorm_apply(x, p, training, cache, training ? &stats : nullptr);
  if (training) update_running_stats(p, stats);
  return y;
}

BatchNormGrads batchnorm_backward(const TensorD& up, const BatchNormParams& p,
                                  const BatchNormCache& cache) {
  if (!cache.valid) throw StateError("batchnorm_backward called without a cached forward pass");
  if (up.shape() != cache.x_hat.shape())
    throw StateError("upstream gradient does not match cached batch norm output");
  const ChannelLayout l = channel_layout(up, p.channels());
  BatchNormGrads g;
  g.input = TensorD(up.shape());
  g.gamma.assign(l.channels, 0.0);
  g.beta.assign(l.channels, 0.0);
  const double count = static_cast<double>(l.batch * l.spatial);
  for (std::size_t c = 0; c < l.channels; ++c) {
    double sum_up = 0.0, sum_up_xhat = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const std::size_t i = bn_index(l, b, c, s);
        sum_up += up[i];
        sum_up_xhat += up[i] * cache.x_hat[i];
      }
    g.beta[c] = sum_up;
    g.gamma[c] = sum_up_xhat;
    const double scale = static_cast<double>(p.gamma[c]) * cache.inv_std[c];
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const std::size_t i = bn_index(l, b, c, s);
        g.input[i] = cache.training
                         ? scale * (up[i] - sum_up / count - cache.x_hat[i] * sum_up_xhat / count)
                         : scale * up[i];
      }
  }
  return g;
}

CrossEntropyResult cross_entropy(const TensorD& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects [B,K] logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (K < 2) throw DimensionError("cross_entropy needs at least 2 classes");
  if (labels.size() != B)
    throw DimensionError("cross_entropy got " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
  CrossEntropyResult r;
  r.grad = TensorD({B, K});
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw IndexError("label " + std::to_string(y) + " out of range for " +
                       std::to_string(K) + " classes");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, logits.at(b, k));
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logits.at(b, k) - mx);
    const double log_z = std::log(z) + mx;
    total += log_z - logits.at(b, static_cast<std::size_t>(y));
    for (std::size_t k = 0; k < K; ++k) {
      const double prob = std::exp(logits.at(b, k) - log_z);
      r.grad.at(b, k) = (prob - (k == static_cast<std::size_t>(y) ? 1.0 : 0.0)) / B;
    }
  }
  r.loss = total / B;
  return r;
}

void adam_step(std::span<const ParamRef> params, AdamState& s) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamRef& p = params[k];
    for (double g : p.grad)
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter '" + p.name + "'");
    const std::size_t n = std::visit([](auto v) { return v.size(); }, p.values);
    if (n != p.grad.size())
      throw DimensionError("gradient size mismatch for parameter '" + p.name + "'");
    if (k < s.m.size() && !s.m[k].empty() && s.m[k].size() != n)
      throw DimensionError("Adam moment shape changed for parameter '" + p.name + "'");
  }
  if (s.m.size() < params.size()) {
    s.m.resize(params.size());
    s.v.resize(params.size());
  }
  ++s.step;
  const auto& c = s.config;
  const double t = static_cast<double>(s.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamRef& p = params[k];
    auto& m = s.m[k];
    auto& v = s.v[k];
    if (m.empty()) {
      m.assign(p.grad.size(), 0.0);
      v.assign(p.grad.size(), 0.0);
    }
    auto update = [&](auto values) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = p.grad[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        const double step = c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
        using V = std::remove_reference_t<decltype(values[i])>;
        values[i] = static_cast<V>(static_cast<double>(values[i]) - step);
      }
    };
    std::visit(update, p.values);
  }
}

}  // namespace ttfs::nn
