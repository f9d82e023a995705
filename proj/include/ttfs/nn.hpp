#pragma once

// Minimal dense/conv substrate with hand-written backward passes, batch
// normalization, softmax cross-entropy and Adam. Parameters are stored in
// 32-bit tensors; every forward/backward computes in 64-bit.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ttfs/tensor.hpp"

namespace ttfs::nn {

enum class LayerKind { Dense, Conv2d, MaxPool };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// Weights of one linear stage.
//   Dense:   weights [in, out], bias [out]
//   Conv2d:  weights [out_ch, in_ch, 3, 3], bias [out_ch]; stride 1, pad 1
//   MaxPool: 2x2, stride 2, no parameters
// An empty bias tensor means the layer has no bias.
struct LayerParams {
  LayerKind kind = LayerKind::Dense;
  Tensor weights;
  Tensor bias;

  bool has_bias() const { return !bias.empty(); }
  std::size_t fan_in() const;
  std::size_t fan_out() const;

  static LayerParams dense(std::size_t in, std::size_t out, bool with_bias);
  static LayerParams conv2d(std::size_t in_ch, std::size_t out_ch, bool with_bias);
  static LayerParams maxpool();
};

// Output shape (without the batch axis) for a per-sample input shape.
Shape layer_output_shape(const LayerParams& p, const Shape& sample_shape);

TensorD dense_forward(const TensorD& x, const LayerParams& p);
TensorD conv2d_forward(const TensorD& x, const LayerParams& p);
TensorD maxpool_forward(const TensorD& x, std::vector<std::size_t>* argmax = nullptr);

struct LayerCache {
  TensorD input;
  std::vector<std::size_t> argmax;  // maxpool only: flat input index per output
  bool valid = false;
};

struct LayerGrads {
  TensorD input;
  TensorD weights;
  TensorD bias;
};

TensorD layer_forward(const TensorD& x, const LayerParams& p, LayerCache* cache = nullptr);

// Throws StateError when `cache` does not hold a forward pass of `p`.
LayerGrads layer_backward(const TensorD& upstream, const LayerParams& p,
                          const LayerCache& cache);

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  BatchNormParams() = default;
  explicit BatchNormParams(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
};

struct BatchNormCache {
  TensorD x_hat;
  std::vector<double> inv_std;
  bool training = false;
  bool valid = false;
};

// Per-channel batch statistics of one training-mode pass. `var` is the
// unbiased estimate that feeds the running variance.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
};

// Normalizes per feature for [B, F] input and per channel for [B, C, H, W].
// Training mode uses batch statistics (biased variance) and folds them into
// the running estimates; inference mode reads the running estimates.
TensorD batchnorm_forward(const TensorD& x, BatchNormParams& p, bool training,
                          BatchNormCache* cache = nullptr);

// batchnorm_forward without touching the running estimates; training-mode
// statistics are returned through `stats` instead.
TensorD batchnorm_apply(const TensorD& x, const BatchNormParams& p, bool training,
                        BatchNormCache* cache = nullptr, BatchStats* stats = nullptr);

void update_running_stats(BatchNormParams& p, const BatchStats& stats);

struct BatchNormGrads {
  TensorD input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

BatchNormGrads batchnorm_backward(const TensorD& upstream, const BatchNormParams& p,
                                  const BatchNormCache& cache);

struct CrossEntropyResult {
  double loss = 0.0;
  TensorD grad;
};

// Mean softmax cross-entropy; grad = (softmax - onehot) / B.
CrossEntropyResult cross_entropy(const TensorD& logits, std::span<const int> labels);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// A named, updatable parameter and its gradient.
struct ParamRef {
  std::string name;
  std::variant<std::span<float>, std::span<double>> values;
  std::span<const double> grad;
};

// One bias-corrected Adam update. Parameter i keeps moment slot i across
// calls, so callers must pass parameters in a stable order. Rejects the whole
// step (nothing modified) if any gradient is non-finite.
void adam_step(std::span<const ParamRef> params, AdamState& state);

}  // namespace ttfs::nn
