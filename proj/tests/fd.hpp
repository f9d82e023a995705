#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ttfs/rng.hpp"
#include "ttfs/tensor.hpp"

namespace ttfs::test {

// ||a - b|| / max(||a||, ||b||, floor)
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b,
                        double floor = 1e-8) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Central differences of f over every element of `values` (f32 storage,
// realized step in the denominator).
inline std::vector<double> fd_grad(std::span<float> values, const std::function<double()>& f,
                                   double h = 1e-3) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float saved = values[i];
    const float up = static_cast<float>(saved + h), dn = static_cast<float>(saved - h);
    values[i] = up;
    const double fp = f();
    values[i] = dn;
    const double fm = f();
    values[i] = saved;
    g[i] = (fp - fm) / (static_cast<double>(up) - static_cast<double>(dn));
  }
  return g;
}

inline std::vector<double> fd_grad(std::span<double> values, const std::function<double()>& f,
                                   double h = 1e-5) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double fp = f();
    values[i] = saved - h;
    const double fm = f();
    values[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline void fill_normal(std::span<float> v, Rng& rng, double sd = 1.0) {
  for (float& x : v) x = static_cast<float>(rng.normal(0.0, sd));
}
inline void fill_normal(std::span<double> v, Rng& rng, double sd = 1.0) {
  for (double& x : v) x = rng.normal(0.0, sd);
}

inline std::vector<double> to_vec(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace ttfs::test
