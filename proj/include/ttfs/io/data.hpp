#pragma once

// Dataset ingestion. A source string selects the reader:
//   blobs[:n=5000,classes=10,dim=32,clusters=1,spread=1,separation=1]
//   moons[:n=1000,noise=0.1]
//   csv:PATH[,classes=K][,shape=CxHxW][,limit=N]   rows "label,v1,v2,..." with v in [0,255]
//   idx:IMAGES:LABELS[,classes=K][,limit=N]         unsigned-byte IDX files
// Pixel sources are scaled by 1/255. Synthetic features are min-max scaled
// with the training split's range and clamped to [0, 1].

#include <cstdint>
#include <filesystem>
#include <string>

#include "ttfs/dataset.hpp"
#include "ttfs/rng.hpp"

namespace ttfs::io {

struct SplitSpec {
  double val = 0.1;
  double test = 0.2;
};

struct DatasetHandle {
  Dataset train;
  Dataset val;
  Dataset test;
  Shape input_shape;
  std::size_t classes = 0;
  std::string source;
};

struct BlobOptions {
  std::size_t n = 5000;
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t clusters = 1;  // Gaussian clusters per class
  double spread = 1.0;       // cluster standard deviation
  double separation = 1.0;   // standard deviation of cluster centres
};

struct MoonOptions {
  std::size_t n = 1000;
  double noise = 0.1;
};

// Raw (unscaled) synthetic samples in generation order.
Dataset make_blobs(const BlobOptions& o, Rng& rng);
Dataset make_moons(const MoonOptions& o, Rng& rng);

// Throws ParseError for malformed rows and FormatError for out-of-range
// pixels or labels; `classes` = 0 infers the count from the labels.
Dataset load_csv(const std::filesystem::path& path, std::size_t classes = 0);
// Throws FormatError on a magic mismatch, truncation or count mismatch.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t classes = 0);

// Deterministic shuffle under `seed`, then test, val and train slices.
DatasetHandle split_dataset(const Dataset& all, std::uint64_t seed, const SplitSpec& split);

// Per-feature min-max scaling fitted on the training split, applied and clamped to [0, 1] on every split.
void minmax_normalize(DatasetHandle& h);

DatasetHandle ingest_dataset(const std::string& source, std::uint64_t seed,
                             const SplitSpec& split = {});

}  // namespace ttfs::io
