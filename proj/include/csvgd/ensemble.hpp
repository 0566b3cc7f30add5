#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "csvgd/net.hpp"
#include "csvgd/random.hpp"

namespace csvgd {

/// N_r particles sharing one layout. When the particles are networks, shape
/// is the common graph template (its own parameter values are unused).
struct Ensemble {
  std::optional<LayeredNet> shape;
  std::vector<ParamVector> particles;
  /// Per-particle flags for coordinates held at zero after condensation.
  /// Empty means nothing is frozen.
  std::vector<std::vector<std::uint8_t>> frozen;
  /// Per-particle AdaGrad accumulators; empty until first used.
  std::vector<std::vector<double>> grad_sq_sum;
  std::size_t iteration = 0;
  std::size_t stage = 0;
  Rng rng;

  std::size_t size() const { return particles.size(); }
  std::size_t dim() const { return particles.empty() ? 0 : particles.front().values.size(); }
  bool is_frozen(std::size_t a, std::size_t p) const {
    return !frozen.empty() && frozen[a][p] != 0;
  }
};

/// Throws ShapeError unless all particles share a layout (and match shape).
void validate(const Ensemble& ensemble);

/// Weights i.i.d. uniform on [-r, r], r = sqrt(6 / (fan_in + fan_out));
/// matrices flagged nonneg draw from [0, r]. Biases start at zero.
Ensemble initialize_network_ensemble(const LayeredNet& shape, std::size_t n_particles,
                                     std::uint64_t seed);

/// Flat particles of a single (dim x 1) block, uniform on [-r, r] with
/// r = sqrt(6 / (dim + 1)).
Ensemble initialize_flat_ensemble(std::size_t dim, std::size_t n_particles, std::uint64_t seed);

/// Mean over particles of the number of coordinates with |theta| > threshold.
double mean_active_params(const Ensemble& ensemble, double threshold);

}  // namespace csvgd
