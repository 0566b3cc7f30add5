#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "csvgd/ensemble.hpp"
#include "csvgd/likelihood.hpp"
#include "csvgd/random.hpp"

namespace csvgd {

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and 1/(N-1) covariance of the selected coordinates (all when
/// coords is empty).
GaussianSummary summarize(const Ensemble& ensemble, std::span<const std::size_t> coords = {});

/// Restriction of a summary to a coordinate subset.
GaussianSummary marginal(const GaussianSummary& g, std::span<const std::size_t> coords);

inline constexpr double kCovarianceJitter = 1e-10;

/// Bhattacharyya distance between two Gaussians; both covariances get
/// kCovarianceJitter * I before use.
double bhattacharyya(const GaussianSummary& a, const GaussianSummary& b);

/// Integral of |F_a - F_b| over the line for two empirical distributions.
double wasserstein1(std::span<const double> a, std::span<const double> b);

/// Mean over particles of sum_{j in coords} |theta_j|.
double sparsity_l1(const Ensemble& ensemble, std::span<const std::size_t> coords);

/// Centered moving average; the window shrinks at the ends.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

struct PushforwardW1 {
  std::vector<double> per_point;  // mean of the componentwise W1 at each input
  double sum = 0.0;
};

/// Pushforward samples of `model` over the ensemble at each test input,
/// compared componentwise against reference[i][k] = samples of output k at
/// input i.
PushforwardW1 pushforward_w1(const Ensemble& ensemble, const RegressionModel& model,
                             const std::vector<std::vector<double>>& inputs,
                             const std::vector<std::vector<std::vector<double>>>& reference);

/// Reference samples truth * (1 + noise * eta) with `replicas` draws per
/// output component; a single draw when noise is zero.
std::vector<std::vector<std::vector<double>>> noisy_reference(
    const std::vector<std::vector<double>>& truth, double noise, std::size_t replicas, Rng& rng);

}  // namespace csvgd
