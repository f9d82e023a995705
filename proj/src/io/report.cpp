#include "ttfs/io/report.hpp"

#include <sstream>

#include "ttfs/error.hpp"

namespace ttfs::io {

using nlohmann::json;

json to_json(const KernelErrorReport& e) {
  return {{"max", e.max_error}, {"min", e.min_error}, {"precision", e.precision_error}, {"total", e.total()}};
}

json to_json(const EpochLog& log) {
  json layers = json::array();
  for (const LayerSummary& s : log.layers)
    layers.push_back({{"layer", s.layer},
                      {"tau", s.tau},
                      {"t_d", s.t_d},
                      {"z_min", s.z_min},
                      {"z_max", s.z_max},
                      {"gamma_mean", s.gamma_mean},
                      {"beta_mean", s.beta_mean},
                      {"errors", to_json(s.errors)},
                      {"spikes", s.spikes}});
  json relaxed = json::array();
  for (bool r : log.relaxed) relaxed.push_back(r);
  return {{"epoch", log.epoch},
          {"relax_prob", log.relax_prob},
          {"relaxed", relaxed},
          {"loss",
           {{"total", log.train_loss.total},
            {"ce", log.train_loss.ce},
            {"reg_tr", log.train_loss.reg_tr},
            {"p_tb", log.train_loss.p_tb}}},
          {"train_accuracy", log.train_accuracy},
          {"val_loss", log.val_loss},
          {"val_accuracy", log.val_accuracy},
          {"spikes_per_sample", log.spikes_per_sample},
          {"layers", layers}};
}

json to_json(const EvalResult& r) {
  json errors = json::array();
  for (const auto& e : r.layer_errors) errors.push_back(to_json(e));
  return {{"samples", r.samples},
          {"loss", r.loss},
          {"accuracy", r.accuracy},
          {"spikes", r.spikes},
          {"spikes_per_sample", r.spikes_per_sample},
          {"layer_spikes", r.layer_spikes},
          {"layer_errors", errors}};
}

json to_json(const metrics::SpikeStats& s) {
  return {{"S", s.spikes}, {"N", s.neurons}, {"H", s.steps}, {"L", s.layers}};
}

metrics::SpikeStats spike_stats_from_json(const json& j) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "S" && it.key() != "N" && it.key() != "H" && it.key() != "L")
        throw ConfigError("unknown key '" + it.key() + "' in spike stats");
    metrics::SpikeStats s;
    s.spikes = j.at("S").get<std::uint64_t>();
    s.neurons = j.at("N").get<std::uint64_t>();
    s.steps = j.at("H").get<std::uint64_t>();
    s.layers = j.at("L").get<std::uint32_t>();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spike stats need unsigned S, N, H and L: ") + e.what());
  }
}

MetricsReport make_report(const metrics::SpikeStats& s, const metrics::EnergyModel& m,
                          const metrics::SpikeStats& baseline) {
  MetricsReport r;
  r.stats = s;
  r.energy_model = m.name;
  r.energy = metrics::energy_estimate(s, m, baseline);
  return r;
}

json to_json(const MetricsReport& r) {
  json j = {{"S", r.stats.spikes},
            {"N", r.stats.neurons},
            {"H", r.stats.steps},
            {"L", r.stats.layers},
            {"rate_pct", metrics::spike_rate(r.stats).str()},
            {"sparsity_pct", metrics::sparsity(r.stats).str()},
            {"energy_model", r.energy_model},
            {"energy_abs", r.energy.absolute},
            {"energy_norm", r.energy.normalized}};
  if (!r.layer_errors.empty()) {
    json errors = json::array();
    for (const auto& e : r.layer_errors) errors.push_back(e.total());
    j["layer_error_totals"] = errors;
  }
  return j;
}

std::string to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "S,N,H,L,rate_pct,sparsity_pct,energy_model,energy_abs,energy_norm";
  for (std::size_t i = 0; i < r.layer_errors.size(); ++i) os << ",error_total_" << i;
  os << '\n'
     << r.stats.spikes << ',' << r.stats.neurons << ',' << r.stats.steps << ',' << r.stats.layers << ','
     << metrics::spike_rate(r.stats).str() << ',' << metrics::sparsity(r.stats).str() << ','
     << r.energy_model << ',' << r.energy.absolute << ',' << r.energy.normalized;
  for (const auto& e : r.layer_errors) os << ',' << e.total();
  os << '\n';
  return os.str();
}

}  // namespace ttfs::io
