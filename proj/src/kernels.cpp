#include "csvgd/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "csvgd/error.hpp"

namespace csvgd {

std::string to_string(BandwidthRule r) { return r == BandwidthRule::kFixed ? "fixed" : "median"; }

BandwidthRule bandwidth_rule_from_string(const std::string& s) {
  if (s == "fixed") return BandwidthRule::kFixed;
  if (s == "median") return BandwidthRule::kMedian;
  throw FormatError("unknown bandwidth rule '" + s + "'");
}

void validate(const KernelSpec& spec) {
  if (!(spec.gamma > 0.0) || !std::isfinite(spec.gamma)) {
    throw DomainError("kernel bandwidth gamma must be positive");
  }
  if (!(spec.beta >= 1.0)) throw DomainError("kernel exponent beta must be >= 1");
}

double kernel_power_sum(double beta, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("kernel arguments differ in length");
  double s = 0.0;
  if (beta == 2.0) {
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  } else if (beta == 1.0) {
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(std::abs(a[i] - b[i]), beta);
  }
  return s;
}

double kernel_eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
  validate(spec);
  return std::exp(-kernel_power_sum(spec.beta, a, b) / (spec.gamma * spec.beta));
}

std::vector<double> kernel_grad(const KernelSpec& spec, std::span<const double> a,
                                std::span<const double> b) {
  const double k = kernel_eval(spec, a, b);
  std::vector<double> g(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    if (d == 0.0) continue;
    const double mag = spec.beta == 1.0 ? 1.0 : std::pow(std::abs(d), spec.beta - 1.0);
    g[i] = mag * (d > 0.0 ? 1.0 : -1.0) * k / spec.gamma;
  }
  return g;
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower =
      *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double median_bandwidth(std::span<const double> distances, std::size_t n_particles) {
  if (distances.empty() || n_particles == 0) return kBandwidthFloor;
  const double med = median(std::vector<double>(distances.begin(), distances.end()));
  const double gamma = std::sqrt(0.5 * med / std::log(static_cast<double>(n_particles) + 1.0));
  return std::max(gamma, kBandwidthFloor);
}

double silverman_bandwidth(const std::vector<std::vector<double>>& particles) {
  const std::size_t n = particles.size();
  if (n < 2) return kBandwidthFloor;
  const std::size_t d = particles.front().size();
  double mean_sd = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (const auto& p : particles) m += p[j];
    m /= static_cast<double>(n);
    double v = 0.0;
    for (const auto& p : particles) v += (p[j] - m) * (p[j] - m);
    mean_sd += std::sqrt(v / static_cast<double>(n - 1));
  }
  mean_sd /= static_cast<double>(d);
  const double dd = static_cast<double>(d);
  const double gamma = std::pow(4.0 / (dd + 2.0), 1.0 / (dd + 4.0)) *
                       std::pow(static_cast<double>(n), -1.0 / (dd + 4.0)) * mean_sd;
  return std::max(gamma, kBandwidthFloor);
}

}  // namespace csvgd
