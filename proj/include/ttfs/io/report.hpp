#pragma once

// JSON renderings of training logs, evaluation results and metric reports.

#include <string>
#include <vector>

#include "json.hpp"
#include "ttfs/metrics.hpp"
#include "ttfs/train.hpp"

namespace ttfs::io {

nlohmann::json to_json(const KernelErrorReport& e);
nlohmann::json to_json(const EpochLog& log);
nlohmann::json to_json(const EvalResult& r);
nlohmann::json to_json(const metrics::SpikeStats& s);
metrics::SpikeStats spike_stats_from_json(const nlohmann::json& j);

struct MetricsReport {
  metrics::SpikeStats stats;
  std::string energy_model;
  metrics::EnergyEstimate energy;
  std::vector<KernelErrorReport> layer_errors;  // optional, input encoder first
};

MetricsReport make_report(const metrics::SpikeStats& s, const metrics::EnergyModel& m,
                          const metrics::SpikeStats& baseline);

// Fields S, N, H, L, rate_pct, sparsity_pct, energy_abs, energy_norm and,
// when present, per-layer error totals.
nlohmann::json to_json(const MetricsReport& r);
std::string to_csv(const MetricsReport& r);

}  // namespace ttfs::io
