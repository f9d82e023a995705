// ttfs: train, evaluate and simulate TTFS networks, and run the oracle checks.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ttfs/error.hpp"
#include "ttfs/io/checkpoint.hpp"
#include "ttfs/io/config.hpp"
#include "ttfs/io/data.hpp"
#include "ttfs/io/files.hpp"
#include "ttfs/io/report.hpp"
#include "ttfs/metrics.hpp"
#include "ttfs/snn_sim.hpp"
#include "ttfs/train.hpp"
#include "ttfs/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ttfs;

namespace {

std::atomic<bool> g_interrupted{false};

void on_sigint(int) { g_interrupted = true; }

struct Interrupted {
  TrainState state;
};

// Exit codes: 0 success, 1 check failed, 2 usage or input error, 3 training
// diverged, 130 interrupted.
int fail(const std::string& kind, const std::string& message, int code = 2) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("TTFS_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0' || s[0] == '-') throw ConfigError(std::string("TTFS_SEED is not an unsigned integer: ") + s);
  return v;
}

std::optional<std::string> env_out() {
  const char* s = std::getenv("TTFS_OUT");
  if (!s || !*s) return std::nullopt;
  return std::string(s);
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

const Dataset& pick_split(const io::DatasetHandle& h, const std::string& name) {
  if (name == "train") return h.train;
  if (name == "val") return h.val;
  if (name == "test") return h.test;
  throw ConfigError("split must be train, val or test, got '" + name + "'");
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

int cmd_train(const TrainArgs& a) {
  io::RunConfig cfg = io::load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  else if (auto s = env_seed()) cfg.seed = *s;
  if (a.out) cfg.out = *a.out;
  else if (auto o = env_out()) cfg.out = *o;

  const io::DatasetHandle data = io::ingest_dataset(cfg.data, cfg.seed, cfg.split);
  Rng init = named_stream(cfg.seed, "init");
  NetworkState net = build_network(data.input_shape, data.classes, cfg.hidden, cfg.train.kernel, init);

  const fs::path out = cfg.out;
  fs::create_directories(out);
  const fs::path log_path = out / "train.ndjson";
  fs::path partial = log_path;
  partial += ".partial";
  std::ofstream log(partial, std::ios::trunc);
  if (!log) throw IoError("cannot open '" + partial.string() + "' for writing");
  log << json{{"config", io::to_json(cfg)}}.dump() << '\n' << std::flush;

  std::signal(SIGINT, on_sigint);
  auto on_epoch = [&](const EpochLog& e, const TrainState& s) {
    log << io::to_json(e).dump() << '\n' << std::flush;
    if (g_interrupted) throw Interrupted{s};
  };

  TrainResult result;
  bool interrupted = false;
  try {
    result = train(std::move(net), data.train, data.val, cfg.train, cfg.seed, on_epoch);
  } catch (const Interrupted& i) {
    result.state = i.state;
    interrupted = true;
  }
  log.close();
  fs::rename(partial, log_path);

  io::save_checkpoint({result.state.net, result.state.next_epoch, result.state.shuffle_rng,
                       result.state.relax_rng},
                      out / "checkpoint.ttfs");
  const EvalResult test = evaluate(result.state.net, data.test);
  const json summary = {{"epochs_completed", result.state.next_epoch},
                        {"interrupted", interrupted},
                        {"diverged", result.diverged},
                        {"divergence", result.divergence},
                        {"test", io::to_json(test)}};
  io::write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  print(summary);
  if (interrupted) return 130;
  if (result.diverged) return fail("numeric", result.divergence, 3);
  return 0;
}

// ---- eval / simulate -------------------------------------------------------

struct DataArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::optional<std::uint64_t> seed;
  double val = io::SplitSpec{}.val;
  double test = io::SplitSpec{}.test;
  std::size_t limit = 0;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (auto s = env_seed()) return *s;
  return 0;
}

Dataset load_split(const DataArgs& a, const NetworkState& net) {
  const io::DatasetHandle h = io::ingest_dataset(a.data, resolve_seed(a.seed), {a.val, a.test});
  Dataset d = pick_split(h, a.split);
  if (d.sample_shape != net.input_shape) {
    if (d.sample_size() != shape_size(net.input_shape))
      throw DimensionError("data samples " + shape_str(d.sample_shape) + " do not fit network input " +
                           shape_str(net.input_shape));
    d.sample_shape = net.input_shape;
  }
  if (a.limit > 0 && a.limit < d.size()) d = d.slice(0, a.limit);
  return d;
}

int cmd_eval(const DataArgs& a) {
  const io::Checkpoint c = io::load_checkpoint(a.ckpt);
  const Dataset d = load_split(a, c.net);
  print(io::to_json(evaluate(c.net, d)));
  return 0;
}

struct SimArgs {
  DataArgs data;
  std::string spikes_out;
  std::string stats_out;
  std::string bias_mode = "lumped";
};

int cmd_simulate(const SimArgs& a) {
  const io::Checkpoint c = io::load_checkpoint(a.data.ckpt);
  const Dataset d = load_split(a.data, c.net);
  const sim::SimNetwork net = sim::compile(c.net);
  const sim::SimOptions opt{sim::bias_mode_from_string(a.bias_mode)};
  std::vector<sim::SpikeEvent> all;
  std::size_t correct = 0;
  const std::size_t per = d.sample_size();
  std::vector<double> row(per);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t k = 0; k < per; ++k) row[k] = d.x[i * per + k];
    const sim::SimResult r = sim::run_inference(net, row, opt);
    correct += r.prediction == static_cast<std::size_t>(d.y[i]) ? 1 : 0;
    all.insert(all.end(), r.events.begin(), r.events.end());
  }
  std::ostringstream csv;
  sim::write_spike_csv(csv, all);
  io::write_file_atomic(a.spikes_out, csv.str());
  metrics::SpikeStats stats = sim::count_spikes(all, net);
  stats.neurons *= d.size();
  if (!a.stats_out.empty()) io::write_file_atomic(a.stats_out, io::to_json(stats).dump(2) + "\n");
  print({{"samples", d.size()},
         {"accuracy", d.size() ? static_cast<double>(correct) / static_cast<double>(d.size()) : 0.0},
         {"events", all.size()},
         {"stats", io::to_json(stats)},
         {"spikes_out", a.spikes_out}});
  return 0;
}

// ---- verify-equiv -----------------------------------------------------------

struct EquivArgs {
  std::size_t nets = 200;
  std::size_t inputs = 10;
  std::optional<std::uint64_t> seed;
  std::string bias_mode = "lumped";
  double tol = 1e-4;
};

int cmd_verify_equiv(const EquivArgs& a) {
  Rng rng = named_stream(resolve_seed(a.seed), "verify-equiv");
  const sim::SimOptions opt{sim::bias_mode_from_string(a.bias_mode)};
  verify::EquivalenceReport total;
  std::size_t failing_nets = 0;
  for (std::size_t n = 0; n < a.nets; ++n) {
    const NetworkState net = verify::random_network(rng);
    const TensorD x = verify::random_inputs(rng, net.input_shape, a.inputs);
    const verify::EquivalenceReport r = verify::compare_with_simulator(net, x, opt);
    failing_nets += r.ok(a.tol) ? 0 : 1;
    total += r;
  }
  const bool ok = total.ok(a.tol);
  print({{"nets", a.nets},
         {"samples", total.samples},
         {"neurons_compared", total.neurons_compared},
         {"time_mismatches", total.time_mismatches},
         {"max_potential_error", total.max_potential_error},
         {"failing_nets", failing_nets},
         {"first_mismatch", total.first_mismatch},
         {"ok", ok}});
  return ok ? 0 : 1;
}

// ---- check-grads ------------------------------------------------------------

struct GradArgs {
  std::string mode = "analytic";
  std::string ste = "pass_through";
  double tol = 1e-4;
  std::size_t nets = 100;
  std::size_t points = 1000;
  std::optional<std::uint64_t> seed;
  std::optional<double> t_d0;
};

int cmd_check_grads(const GradArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  Rng rng = named_stream(seed, "check-grads");
  verify::GradCheckOptions opt;
  opt.mode = grad_mode_from_string(a.mode);
  opt.ste = ste_mode_from_string(a.ste);
  verify::RandomNetOptions shape;
  shape.min_dense = shape.max_dense = 3;
  shape.max_width = 8;
  shape.max_inputs = 8;
  shape.max_classes = 4;

  struct Kind {
    double worst = 0.0;
    double max_grad_norm = 0.0;
    std::size_t tensors = 0;
  };
  std::map<std::string, Kind> kinds;
  for (std::size_t n = 0; n < a.nets; ++n) {
    NetworkState net = verify::random_network(rng, shape);
    for (TemporalKernel* k : net.kernels())
      if (a.t_d0) k->t_d = *a.t_d0;
    // Anchor the regularizer away from the current kernels so its gradient is exercised.
    net.input_init = {net.input_kernel.tau + rng.uniform(-2.0, 2.0), a.t_d0.value_or(rng.uniform(0.0, 3.0))};
    for (auto& l : net.layers)
      if (l.kernel) l.init = {l.kernel->tau + rng.uniform(-2.0, 2.0), a.t_d0.value_or(rng.uniform(0.0, 3.0))};
    const std::size_t B = 6;
    const TensorD x = verify::random_inputs(rng, net.input_shape, B);
    std::vector<int> y(B);
    for (int& v : y) v = static_cast<int>(rng.below(net.num_classes()));
    opt.relaxed = {rng.uniform() < 0.3, rng.uniform() < 0.3};
    const verify::GradCheckReport rep = verify::check_gradients(net, x, y, opt);

    const LossResult base = total_loss(net, x, y, {opt.lambda_tr, opt.lambda_tb, opt.mode, opt.ste},
                                       {opt.training, opt.relaxed});
    const auto refs = param_refs(net, base.grads);
    for (std::size_t i = 0; i < rep.params.size(); ++i) {
      const std::string& name = rep.params[i].name;
      Kind& k = kinds[name.substr(name.find('.') + 1)];
      double norm = 0.0;
      for (double g : refs[i].grad) norm += g * g;
      k.worst = std::max(k.worst, rep.params[i].rel_error);
      k.max_grad_norm = std::max(k.max_grad_norm, std::sqrt(norm));
      ++k.tensors;
    }
  }
  Rng prng = named_stream(seed, "check-grads-ptb");
  const verify::PtbCheckReport ptb = verify::check_p_tb(prng, a.points);
  constexpr double kPtbTol = 1e-6;

  bool ok = ptb.max_abs_error <= kPtbTol;
  json params = json::object();
  for (const auto& [name, k] : kinds) {
    ok = ok && k.worst <= a.tol;
    params[name] = {{"tensors", k.tensors},
                    {"max_rel_error", k.worst},
                    {"max_grad_norm", k.max_grad_norm},
                    {"ok", k.worst <= a.tol}};
  }
  print({{"mode", a.mode},
         {"ste", a.ste},
         {"nets", a.nets},
         {"tol", a.tol},
         {"params", params},
         {"p_tb", {{"points", ptb.points}, {"max_abs_error", ptb.max_abs_error}, {"tol", kPtbTol}}},
         {"ok", ok}});
  return ok ? 0 : 1;
}

// ---- metrics ----------------------------------------------------------------

struct MetricsArgs {
  std::string spikes;
  std::string energy_model = "unit";
  std::string baseline;
  std::string ckpt;
  std::optional<std::uint64_t> neurons;
  std::optional<std::uint32_t> layers;
  std::optional<std::uint32_t> window;
  std::uint64_t samples = 1;
  std::string format = "json";
};

int cmd_metrics(const MetricsArgs& a) {
  std::ifstream in(a.spikes);
  if (!in) throw IoError("cannot open '" + a.spikes + "' for reading");
  const std::vector<sim::SpikeEvent> events = sim::read_spike_csv(in);
  if (a.samples == 0) throw ConfigError("--samples must be >= 1");

  metrics::SpikeStats s;
  if (!a.ckpt.empty()) {
    s = sim::count_spikes(events, io::load_checkpoint(a.ckpt).net);
  } else {
    if (!a.neurons || !a.layers || !a.window)
      throw ConfigError("metrics needs --ckpt or all of --neurons, --layers and --window");
    for (const auto& e : events) s.spikes += e.layer > 0 ? 1 : 0;
    s.neurons = *a.neurons;
    s.layers = *a.layers;
    s.steps = static_cast<std::uint64_t>(*a.layers) * *a.window;
  }
  s.neurons *= a.samples;

  json bj;
  try {
    bj = json::parse(io::read_file(a.baseline));
  } catch (const json::parse_error& e) {
    throw ParseError("baseline '" + a.baseline + "': " + e.what());
  }
  const metrics::SpikeStats baseline = io::spike_stats_from_json(bj);
  const io::MetricsReport r = io::make_report(s, metrics::energy_model_preset(a.energy_model), baseline);
  if (a.format == "csv") {
    std::cout << io::to_csv(r);
  } else if (a.format == "json") {
    std::cout << io::to_json(r).dump() << '\n';
  } else {
    throw ConfigError("--format must be json or csv");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, evaluate and simulate time-to-first-spike networks."};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a network from a config file");
  train_cmd->add_option("--config", ta.config, "JSON run config")->required();
  train_cmd->add_option("--seed", ta.seed, "Seed (overrides TTFS_SEED and the config)");
  train_cmd->add_option("--out", ta.out, "Output directory (overrides TTFS_OUT and the config)");

  auto add_data = [](CLI::App* c, DataArgs& d) {
    c->add_option("--ckpt", d.ckpt, "Checkpoint file")->required();
    c->add_option("--data", d.data, "Data source, e.g. blobs or csv:path")->required();
    c->add_option("--split", d.split, "train, val or test")->capture_default_str();
    c->add_option("--seed", d.seed, "Seed used to split the data");
    c->add_option("--val", d.val, "Validation fraction")->capture_default_str();
    c->add_option("--test", d.test, "Test fraction")->capture_default_str();
    c->add_option("--limit", d.limit, "Use at most this many samples");
  };
  DataArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Strict surrogate accuracy of a checkpoint");
  add_data(eval_cmd, ea);

  SimArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Event-driven inference with spike export");
  add_data(sim_cmd, sa.data);
  sim_cmd->add_option("--spikes-out", sa.spikes_out, "Spike CSV to write")->required();
  sim_cmd->add_option("--stats-out", sa.stats_out, "Write S, N, H, L as JSON here");
  sim_cmd->add_option("--bias-mode", sa.bias_mode, "lumped or per_step")->capture_default_str();

  EquivArgs qa;
  auto* eq_cmd = app.add_subcommand("verify-equiv", "Compare surrogate and simulator spike times");
  eq_cmd->add_option("--nets", qa.nets, "Random networks")->capture_default_str();
  eq_cmd->add_option("--inputs", qa.inputs, "Random inputs per network")->capture_default_str();
  eq_cmd->add_option("--seed", qa.seed, "Seed");
  eq_cmd->add_option("--bias-mode", qa.bias_mode, "lumped or per_step")->capture_default_str();
  eq_cmd->add_option("--tol", qa.tol, "Output potential tolerance")->capture_default_str();

  GradArgs ga;
  auto* gr_cmd = app.add_subcommand("check-grads", "Finite-difference gradient checks");
  gr_cmd->add_option("--mode", ga.mode, "analytic or paper_literal")->capture_default_str();
  gr_cmd->add_option("--ste", ga.ste, "pass_through or clamped")->capture_default_str();
  gr_cmd->add_option("--tol", ga.tol, "Relative tolerance")->capture_default_str();
  gr_cmd->add_option("--nets", ga.nets, "Random networks")->capture_default_str();
  gr_cmd->add_option("--points", ga.points, "Random points for the pruning term")->capture_default_str();
  gr_cmd->add_option("--seed", ga.seed, "Seed");
  gr_cmd->add_option("--t-d0", ga.t_d0, "Fix every kernel delay and its anchor to this value");

  MetricsArgs ma;
  auto* me_cmd = app.add_subcommand("metrics", "Spike rate, sparsity and energy from a spike CSV");
  me_cmd->add_option("--spikes", ma.spikes, "Spike CSV")->required();
  me_cmd->add_option("--energy-model", ma.energy_model, "unit, truenorth or spinnaker")->capture_default_str();
  me_cmd->add_option("--baseline", ma.baseline, "JSON with S, N, H, L of the reference run")->required();
  me_cmd->add_option("--ckpt", ma.ckpt, "Checkpoint giving N, H and L");
  me_cmd->add_option("--neurons", ma.neurons, "Hidden neurons per sample");
  me_cmd->add_option("--layers", ma.layers, "Encoded layers including the input encoder");
  me_cmd->add_option("--window", ma.window, "Time window T");
  me_cmd->add_option("--samples", ma.samples, "Samples the CSV covers")->capture_default_str();
  me_cmd->add_option("--format", ma.format, "json or csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*sim_cmd) return cmd_simulate(sa);
    if (*eq_cmd) return cmd_verify_equiv(qa);
    if (*gr_cmd) return cmd_check_grads(ga);
    if (*me_cmd) return cmd_metrics(ma);
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return fail("usage", "no command given");
}
