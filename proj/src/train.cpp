#include "ttfs/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ttfs/metrics.hpp"

namespace ttfs {

const char* to_string(RelaxDraw d) { return d == RelaxDraw::PerEpoch ? "per_epoch" : "per_batch"; }

RelaxDraw relax_draw_from_string(const std::string& s) {
  if (s == "per_epoch") return RelaxDraw::PerEpoch;
  if (s == "per_batch") return RelaxDraw::PerBatch;
  throw ConfigError("relax_draw must be 'per_epoch' or 'per_batch', got '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lambda_tr >= 0.0)) throw ConfigError("lambda_tr must be >= 0");
  if (!(lambda_tb >= 0.0)) throw ConfigError("lambda_tb must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (e_tar < 1) throw ConfigError("e_tar must be >= 1");
  if (grad_mode == GradMode::Unset) throw ConfigError("grad_mode is unset");
  if (kernel.window < 1) throw ConfigError("T must be >= 1");
  if (!(kernel.tau0 > 0.0)) throw ConfigError("tau0 must be > 0");
  if (!(kernel.theta0 > 0.0)) throw ConfigError("theta0 must be > 0");
}

namespace {

std::size_t argmax_row(const TensorD& logits, std::size_t b) {
  const std::size_t K = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t k = 1; k < K; ++k)
    if (logits.at(b, k) > logits.at(b, best)) best = k;
  return best;
}

std::size_t hidden_encoded(const NetworkState& net) { return net.encoded_layer_count() - 1; }

}  // namespace

EvalResult evaluate(const NetworkState& net, const Dataset& data, std::size_t batch_size) {
  EvalResult r;
  r.samples = data.size();
  const std::size_t layers = net.encoded_layer_count();
  r.layer_spikes.assign(layers, 0);
  r.layer_errors.assign(layers, {});
  if (data.size() == 0) return r;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    rows.resize(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const TensorD x = data.gather(rows);
    const std::vector<int> y = data.gather_labels(rows);
    const NetworkForward fwd = infer(net, x);
    loss_sum += nn::cross_entropy(fwd.logits, y).loss * static_cast<double>(rows.size());
    for (std::size_t b = 0; b < rows.size(); ++b)
      correct += argmax_row(fwd.logits, b) == static_cast<std::size_t>(y[b]) ? 1 : 0;
    r.layer_spikes[0] += static_cast<std::uint64_t>(std::count_if(
        fwd.input.times.begin(), fwd.input.times.end(), [](SpikeTime t) { return t.fired(); }));
    const auto hidden = count_layer_spikes(fwd);
    for (std::size_t i = 0; i < hidden.size(); ++i) r.layer_spikes[i + 1] += hidden[i];
    const auto errs = metrics::layer_errors(fwd);
    for (std::size_t i = 0; i < errs.size(); ++i) r.layer_errors[i] += errs[i];
  }
  r.loss = loss_sum / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  r.spikes = std::accumulate(r.layer_spikes.begin() + 1, r.layer_spikes.end(), std::uint64_t{0});
  r.spikes_per_sample = static_cast<double>(r.spikes) / static_cast<double>(data.size());
  return r;
}

TrainResult train(NetworkState net, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch) {
  TrainState state;
  state.net = std::move(net);
  state.adam.config.lr = cfg.lr;
  state.shuffle_rng = named_stream(seed, "shuffle").state();
  state.relax_rng = named_stream(seed, "relaxation").state();
  return resume(std::move(state), train_set, val_set, cfg, on_epoch);
}

TrainResult resume(TrainState state, const Dataset& train_set, const Dataset& val_set,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  state.net.validate();
  if (train_set.size() == 0) throw ConfigError("training set is empty");
  if (train_set.sample_shape != state.net.input_shape)
    throw DimensionError("dataset sample shape " + shape_str(train_set.sample_shape) +
                         " does not match network input " + shape_str(state.net.input_shape));

  TrainResult result;
  Rng shuffle_rng, relax_rng;
  shuffle_rng.set_state(state.shuffle_rng);
  relax_rng.set_state(state.relax_rng);
  const RelaxationSchedule schedule{cfg.e_tar, 0};
  const std::size_t n_hidden = hidden_encoded(state.net);
  const LossConfig loss_cfg = cfg.loss_config();

  std::vector<std::size_t> order(train_set.size());
  for (std::uint32_t epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.relax_prob = cfg.relaxation ? relaxation_prob(epoch, schedule) : 0.0;
    std::vector<bool> relaxed = draw_relaxation(log.relax_prob, n_hidden, relax_rng);
    log.relaxed = relaxed;

    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);

    std::size_t seen = 0, correct = 0, batches = 0;
    LossBreakdown sums;
    try {
      for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
        if (end - begin < 2) break;  // batch norm needs two samples
        if (cfg.relax_draw == RelaxDraw::PerBatch && begin > 0)
          relaxed = draw_relaxation(log.relax_prob, n_hidden, relax_rng);
        const std::span<const std::size_t> rows(order.data() + begin, end - begin);
        const TensorD x = train_set.gather(rows);
        const std::vector<int> y = train_set.gather_labels(rows);
        LossResult r = total_loss(state.net, x, y, loss_cfg, {true, relaxed});

        const auto refs = param_refs(state.net, r.grads);
        nn::adam_step(refs, state.adam);
        for (std::size_t i = 0; i < state.net.layers.size(); ++i)
          if (state.net.layers[i].bn)
            nn::update_running_stats(*state.net.layers[i].bn, r.forward.layers[i].bn_stats);
        for (TemporalKernel* k : state.net.kernels()) k->tau = std::max(k->tau, kMinTau);

        sums.total += r.loss.total;
        sums.ce += r.loss.ce;
        sums.reg_tr += r.loss.reg_tr;
        sums.p_tb += r.loss.p_tb;
        ++batches;
        for (std::size_t b = 0; b < rows.size(); ++b)
          correct += argmax_row(r.forward.logits, b) == static_cast<std::size_t>(y[b]) ? 1 : 0;
        seen += rows.size();
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    if (batches > 0) {
      const double nb = static_cast<double>(batches);
      log.train_loss = {sums.total / nb, sums.ce / nb, sums.reg_tr / nb, sums.p_tb / nb};
      log.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    }

    const EvalResult ev = evaluate(state.net, val_set);
    log.val_loss = ev.loss;
    log.val_accuracy = ev.accuracy;
    log.spikes_per_sample = ev.spikes_per_sample;
    const auto kernels = state.net.kernels();
    std::size_t k = 0;
    auto summarize = [&](const TemporalKernel& kern, const nn::BatchNormParams* bn) {
      LayerSummary s;
      s.layer = k;
      s.tau = kern.tau;
      s.t_d = kern.t_d;
      s.z_min = kern.z_min();
      s.z_max = kern.z_max();
      if (bn && bn->channels() > 0) {
        double g = 0.0, b = 0.0;
        for (std::size_t c = 0; c < bn->channels(); ++c) {
          g += bn->gamma[c];
          b += bn->beta[c];
        }
        s.gamma_mean = g / static_cast<double>(bn->channels());
        s.beta_mean = b / static_cast<double>(bn->channels());
      }
      if (k < ev.layer_errors.size()) s.errors = ev.layer_errors[k];
      if (k < ev.layer_spikes.size()) s.spikes = ev.layer_spikes[k];
      log.layers.push_back(s);
      ++k;
    };
    summarize(state.net.input_kernel, nullptr);
    for (const auto& l : state.net.layers)
      if (l.kernel) summarize(*l.kernel, l.bn ? &*l.bn : nullptr);

    state.next_epoch = epoch + 1;
    state.shuffle_rng = shuffle_rng.state();
    state.relax_rng = relax_rng.state();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, state);
  }
  result.state = std::move(state);
  return result;
}

}  // namespace ttfs
