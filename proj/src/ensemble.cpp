#include "csvgd/ensemble.hpp"

#include <cmath>

#include "csvgd/error.hpp"

namespace csvgd {

void validate(const Ensemble& ensemble) {
  if (ensemble.particles.empty()) throw ShapeError("ensemble has no particles");
  const Layout& layout = ensemble.particles.front().layout;
  if (ensemble.shape && ensemble.shape->layout() != layout) {
    throw ShapeError("particle layout does not match the ensemble template");
  }
  const std::size_t n = layout_size(layout);
  for (std::size_t a = 0; a < ensemble.size(); ++a) {
    const auto& p = ensemble.particles[a];
    if (p.layout != layout || p.values.size() != n) {
      throw ShapeError("particle " + std::to_string(a) + " does not share the common layout");
    }
  }
  if (!ensemble.frozen.empty()) {
    if (ensemble.frozen.size() != ensemble.size()) throw ShapeError("frozen mask count mismatch");
    for (const auto& f : ensemble.frozen) {
      if (f.size() != n) throw ShapeError("frozen mask length mismatch");
    }
  }
  if (!ensemble.grad_sq_sum.empty()) {
    if (ensemble.grad_sq_sum.size() != ensemble.size()) {
      throw ShapeError("optimizer state count mismatch");
    }
    for (const auto& g : ensemble.grad_sq_sum) {
      if (g.size() != n) throw ShapeError("optimizer state length mismatch");
    }
  }
}

Ensemble initialize_network_ensemble(const LayeredNet& shape, std::size_t n_particles,
                                     std::uint64_t seed) {
  if (n_particles == 0) throw DomainError("ensemble needs at least one particle");
  Ensemble e;
  e.rng = Rng(seed);
  e.shape = shape.with_params(std::vector<double>(shape.num_params(), 0.0));
  const auto& w = shape.widths();
  for (std::size_t a = 0; a < n_particles; ++a) {
    LayeredNet net = *e.shape;
    for (std::size_t k = 0; k < shape.num_links(); ++k) {
      const double r = std::sqrt(6.0 / static_cast<double>(w[k] + w[k + 1]));
      const double lo = shape.nonneg(k) ? 0.0 : -r;
      for (std::size_t i = 0; i < w[k + 1]; ++i) {
        for (std::size_t j = 0; j < w[k]; ++j) net.weight(k, i, j) = uniform(e.rng, lo, r);
      }
    }
    e.particles.push_back(net.flatten());
  }
  return e;
}

Ensemble initialize_flat_ensemble(std::size_t dim, std::size_t n_particles, std::uint64_t seed) {
  if (n_particles == 0) throw DomainError("ensemble needs at least one particle");
  Ensemble e;
  e.rng = Rng(seed);
  const double r = std::sqrt(6.0 / static_cast<double>(dim + 1));
  for (std::size_t a = 0; a < n_particles; ++a) {
    ParamVector p{std::vector<double>(dim), {{"theta", dim, 1}}};
    for (auto& v : p.values) v = uniform(e.rng, -r, r);
    e.particles.push_back(std::move(p));
  }
  return e;
}

double mean_active_params(const Ensemble& ensemble, double threshold) {
  if (ensemble.particles.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : ensemble.particles) {
    total += static_cast<double>(param_count(p.values, threshold));
  }
  return total / static_cast<double>(ensemble.size());
}

}  // namespace csvgd
