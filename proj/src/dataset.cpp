#include "ttfs/dataset.hpp"

#include <numeric>

namespace ttfs {

TensorD Dataset::gather(std::span<const std::size_t> rows) const {
  Shape shape{rows.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  TensorD out(shape);
  const std::size_t n = sample_size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= size()) throw IndexError("sample index out of range");
    const float* src = &x[rows[r] * n];
    double* dst = &out[r * n];
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i];
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = y.at(rows[r]);
  return out;
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Dataset d;
  d.sample_shape = sample_shape;
  d.classes = classes;
  Shape shape{rows.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  d.x = Tensor(shape);
  const std::size_t n = sample_size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(&x[rows[r] * n], n, &d.x[r * n]);
    d.y.push_back(y.at(rows[r]));
  }
  return d;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return select(rows);
}

}  // namespace ttfs
