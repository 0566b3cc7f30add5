#pragma once

// Oracles shared by the test suites: central differences, random networks
// and a relative-error measure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "csvgd/net.hpp"
#include "csvgd/random.hpp"

namespace csvgd::testing {

/// |a - b| relative to the larger magnitude, with a floor so that values
/// near zero are compared absolutely.
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Step used by every finite-difference oracle.
inline double fd_step(double x) { return 1e-6 * std::max(1.0, std::abs(x)); }

/// Central difference of f along coordinate i of x.
template <class F>
double central_diff(F&& f, std::vector<double> x, std::size_t i) {
  const double h = fd_step(x[i]);
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double dn = f(x);
  return (up - dn) / (2.0 * h);
}

/// Softplus chain with weights uniform on [-scale, scale] ([0, scale] on
/// nonneg links) and, when present, biases likewise.
inline LayeredNet random_net(std::vector<std::size_t> widths, Rng& rng, double scale = 1.0,
                             bool with_bias = false, std::vector<bool> nonneg = {}) {
  if (nonneg.empty()) nonneg.assign(widths.size() - 1, false);
  LayeredNet net = LayeredNet::softplus_chain(widths, nonneg, with_bias);
  auto p = net.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = net.is_nonneg_param(i) ? uniform(rng, 0.0, scale) : uniform(rng, -scale, scale);
  }
  return net;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

}  // namespace csvgd::testing
