#pragma once

#include <span>
#include <vector>

namespace csvgd {

/// Gamma function by the Lanczos approximation (g = 7, 9 coefficients),
/// with the reflection formula below 1/2.
double lanczos_gamma(double x);

/// Exponential-family sparsifying prior
///   pi(theta) = lambda c1(alpha) exp(-lambda^alpha c2(alpha) |theta|^alpha)
/// applied independently to every coordinate. alpha = 2 is the Gaussian
/// N(0, 1/lambda^2); alpha <= 1 has a corner at the origin.
struct PriorSpec {
  double alpha = 1.0;
  double lambda = 0.1;

  bool operator==(const PriorSpec&) const = default;
};

struct PriorConstants {
  double c1 = 0.0;
  double c2 = 0.0;
};

/// Throws DomainError outside alpha in (0, 2], lambda >= 0. A zero
/// multiplier is accepted and yields a flat prior (zero score).
void validate(const PriorSpec& spec);

PriorConstants prior_constants(double alpha);

/// Per-coordinate log density; needs lambda > 0.
double prior_log_density(const PriorSpec& spec, double theta);

/// d/d theta_i log pi(theta). Uses the zero subgradient at theta_i == 0.
std::vector<double> prior_score(const PriorSpec& spec, std::span<const double> theta);
void accumulate_prior_score(const PriorSpec& spec, std::span<const double> theta,
                            std::span<double> out);

}  // namespace csvgd
