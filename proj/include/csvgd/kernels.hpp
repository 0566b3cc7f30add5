#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace csvgd {

enum class BandwidthRule { kFixed, kMedian };

std::string to_string(BandwidthRule r);
BandwidthRule bandwidth_rule_from_string(const std::string& s);

/// kappa(a, b) = exp(-|a - b|_beta^beta / (gamma beta)).
struct KernelSpec {
  double beta = 2.0;
  double gamma = 1.0;
  BandwidthRule rule = BandwidthRule::kFixed;

  bool operator==(const KernelSpec&) const = default;
};

inline constexpr double kBandwidthFloor = 1e-6;

void validate(const KernelSpec& spec);

double kernel_eval(const KernelSpec& spec, std::span<const double> a, std::span<const double> b);

/// Gradient of kappa(a, b) with respect to its first argument. Zero when
/// a == b.
std::vector<double> kernel_grad(const KernelSpec& spec, std::span<const double> a,
                                std::span<const double> b);

/// Sum_i |a_i - b_i|^beta, the kernel exponent before scaling.
double kernel_power_sum(double beta, std::span<const double> a, std::span<const double> b);

/// gamma = sqrt(0.5 * median(distances) / log(n + 1)), floored at
/// kBandwidthFloor. distances holds the pairwise (a < b) distances; with none
/// (a single particle) the floor itself is returned.
double median_bandwidth(std::span<const double> distances, std::size_t n_particles);

double median(std::vector<double> values);

/// Silverman's rule of thumb on an ensemble of d-dimensional particles,
/// using the mean per-coordinate sample standard deviation.
double silverman_bandwidth(const std::vector<std::vector<double>>& particles);

}  // namespace csvgd
