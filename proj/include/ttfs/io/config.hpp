#pragma once

// Run configuration: a JSON document with a strict schema. Every key is
// optional; missing keys take the defaults below and unknown keys are errors.
//
//   {
//     "seed": 0,
//     "data": "blobs",
//     "out": "runs/default",
//     "split": {"val": 0.1, "test": 0.2},
//     "model": {"hidden": [128, 64], "batch_norm": true},
//     "kernel": {"T": 32, "tau0": 10, "t_d0": 0, "theta0": 1},
//     "train": {"epochs": 2000, "batch_size": 512, "lr": 0.001,
//               "lambda_tr": 1e-5, "lambda_tb": 1e-5, "e_tar": 50,
//               "relaxation": true, "relax_draw": "per_epoch",
//               "grad_mode": "analytic", "ste": "pass_through"}
//   }
//
// A hidden entry is a width (dense layer) or an object
// {"kind": "dense"|"conv2d"|"maxpool", "units": N, "batch_norm": bool}.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ttfs/io/data.hpp"
#include "ttfs/network.hpp"
#include "ttfs/train.hpp"

namespace ttfs::io {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data = "blobs";
  std::string out = "runs/default";
  SplitSpec split;
  std::vector<LayerSpec> hidden{{nn::LayerKind::Dense, 128, true}, {nn::LayerKind::Dense, 64, true}};
  TrainConfig train;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Throws ParseError (with line number) on malformed JSON and ConfigError on
// schema violations. Whitespace-only text yields the defaults.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& c);

}  // namespace ttfs::io
