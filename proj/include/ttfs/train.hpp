#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ttfs/dataset.hpp"
#include "ttfs/nn.hpp"
#include "ttfs/surrogate.hpp"

namespace ttfs {

enum class RelaxDraw { PerEpoch, PerBatch };

const char* to_string(RelaxDraw d);
RelaxDraw relax_draw_from_string(const std::string& s);

// Defaults follow the reference hyperparameter table (Adam, lr 1e-3,
// batch 512, e_tar 50, lambda_TR = lambda_TB = 1e-5, T = 32, tau0 = 10,
// t_d0 = 0, theta0 = 1).
struct TrainConfig {
  double lambda_tr = 1e-5;
  double lambda_tb = 1e-5;
  double lr = 1e-3;
  std::uint32_t epochs = 2000;
  std::uint32_t batch_size = 512;
  std::uint32_t e_tar = 50;
  bool relaxation = true;
  RelaxDraw relax_draw = RelaxDraw::PerEpoch;
  GradMode grad_mode = GradMode::Analytic;
  SteMode ste = SteMode::PassThrough;
  KernelDefaults kernel;

  // Throws ConfigError naming the offending field.
  void validate() const;
  LossConfig loss_config() const { return {lambda_tr, lambda_tb, grad_mode, ste}; }
};

struct LayerSummary {
  std::size_t layer = 0;  // 0 = input encoder, then hidden encoded layers
  double tau = 0.0;
  double t_d = 0.0;
  double z_min = 0.0;
  double z_max = 0.0;
  double gamma_mean = 0.0;  // 0 when the layer has no BN
  double beta_mean = 0.0;
  KernelErrorReport errors;
  std::uint64_t spikes = 0;
};

struct EpochLog {
  std::uint32_t epoch = 0;
  double relax_prob = 0.0;
  std::vector<bool> relaxed;  // per hidden encoded layer (per-epoch draws)
  LossBreakdown train_loss;   // batch mean
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double spikes_per_sample = 0.0;  // hidden encoded layers, strict val forward
  std::vector<LayerSummary> layers;
};

struct EvalResult {
  std::size_t samples = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::uint64_t spikes = 0;  // hidden encoded layers, summed over samples
  double spikes_per_sample = 0.0;
  std::vector<std::uint64_t> layer_spikes;
  std::vector<KernelErrorReport> layer_errors;  // input encoder first
};

// Strict, inference-mode evaluation.
EvalResult evaluate(const NetworkState& net, const Dataset& data, std::size_t batch_size = 256);

struct TrainState {
  NetworkState net;
  nn::AdamState adam;
  std::uint32_t next_epoch = 0;
  std::string shuffle_rng;
  std::string relax_rng;
};

struct TrainResult {
  TrainState state;  // last finite state
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string divergence;
};

// Called after every completed epoch; the log so far is final.
using EpochCallback = std::function<void(const EpochLog&, const TrainState&)>;

// Minibatch Adam over shuffled training data. The shuffle and relaxation
// streams are derived from `seed`. If the loss diverges, training stops and
// the result carries the last finite state.
TrainResult train(NetworkState net, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

// Continues a run from a saved state; `state.next_epoch` is the first epoch run.
TrainResult resume(TrainState state, const Dataset& train_set, const Dataset& val_set,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Smallest tau the optimizer may leave behind.
inline constexpr double kMinTau = 1e-2;

}  // namespace ttfs
