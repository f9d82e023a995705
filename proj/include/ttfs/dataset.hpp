#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ttfs/tensor.hpp"

namespace ttfs {

// Labelled samples with intensities in [0, 1]. `x` is [n, sample_shape...].
struct Dataset {
  Tensor x;
  std::vector<int> y;
  Shape sample_shape;
  std::size_t classes = 0;

  std::size_t size() const { return y.size(); }
  std::size_t sample_size() const { return shape_size(sample_shape); }

  // Gathers the given rows into a [k, sample_shape...] batch.
  TensorD gather(std::span<const std::size_t> rows) const;
  std::vector<int> gather_labels(std::span<const std::size_t> rows) const;

  // Rows [begin, end) in order.
  Dataset slice(std::size_t begin, std::size_t end) const;
  Dataset select(std::span<const std::size_t> rows) const;
};

}  // namespace ttfs
