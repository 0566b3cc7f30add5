#include "csvgd/priors.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "csvgd/error.hpp"

namespace csvgd {

double lanczos_gamma(double x) {
  static constexpr double kG = 7.0;
  static constexpr std::array<double, 9> kCoef = {
      0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
      771.32342877765313,      -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    // Reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x).
    return std::numbers::pi / (std::sin(std::numbers::pi * x) * lanczos_gamma(1.0 - x));
  }
  x -= 1.0;
  double a = kCoef[0];
  const double t = x + kG + 0.5;
  for (std::size_t i = 1; i < kCoef.size(); ++i) a += kCoef[i] / (x + static_cast<double>(i));
  return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, x + 0.5) * std::exp(-t) * a;
}

void validate(const PriorSpec& spec) {
  if (!(spec.alpha > 0.0 && spec.alpha <= 2.0)) {
    throw DomainError("prior exponent alpha must lie in (0, 2]");
  }
  if (!(spec.lambda >= 0.0) || !std::isfinite(spec.lambda)) {
    throw DomainError("prior multiplier lambda must be finite and >= 0");
  }
}

PriorConstants prior_constants(double alpha) {
  if (!(alpha > 0.0)) throw DomainError("prior exponent alpha must be positive");
  const double g1 = lanczos_gamma(1.0 / alpha);
  const double g3 = lanczos_gamma(3.0 / alpha);
  return {alpha * std::sqrt(g3) / (2.0 * std::pow(g1, 1.5)), std::pow(g3 / g1, alpha / 2.0)};
}

double prior_log_density(const PriorSpec& spec, double theta) {
  validate(spec);
  if (!(spec.lambda > 0.0)) throw DomainError("log density needs lambda > 0");
  const auto c = prior_constants(spec.alpha);
  return std::log(spec.lambda * c.c1) -
         std::pow(spec.lambda, spec.alpha) * c.c2 * std::pow(std::abs(theta), spec.alpha);
}

void accumulate_prior_score(const PriorSpec& spec, std::span<const double> theta,
                            std::span<double> out) {
  if (out.size() != theta.size()) throw ShapeError("prior score buffer has wrong size");
  if (spec.lambda == 0.0) return;
  const double scale =
      std::pow(spec.lambda, spec.alpha) * prior_constants(spec.alpha).c2 * spec.alpha;
  const double expo = spec.alpha - 1.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t = theta[i];
    if (t == 0.0) continue;
    const double mag = expo == 0.0 ? 1.0 : std::pow(std::abs(t), expo);
    out[i] -= scale * mag * (t > 0.0 ? 1.0 : -1.0);
  }
}

std::vector<double> prior_score(const PriorSpec& spec, std::span<const double> theta) {
  validate(spec);
  std::vector<double> out(theta.size(), 0.0);
  accumulate_prior_score(spec, theta, out);
  return out;
}

}  // namespace csvgd
