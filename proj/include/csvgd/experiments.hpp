#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "csvgd/ensemble.hpp"
#include "csvgd/svgd.hpp"

namespace csvgd {

struct DataConfig {
  std::size_t n_train = 80;
  std::size_t n_test = 1000;
  double delta = 0.2;
  double test_range = 0.4;
  double noise = 0.1;
  /// Likelihood variance; unset means (max(noise, kMinNoise) * RMS(S))^2.
  std::optional<double> noise_var;
  std::size_t reference_replicas = 100;

  bool operator==(const DataConfig&) const = default;
};

/// Floor on the relative noise used by the automatic likelihood variance so
/// that noiseless data still gives a finite likelihood.
inline constexpr double kMinNoise = 0.01;

/// Cartesian grid for the MVN survey; an empty axis keeps the base value.
struct SweepConfig {
  std::vector<double> lambdas;
  std::vector<double> gammas;
  std::vector<double> alphas;
  std::vector<double> betas;

  bool operator==(const SweepConfig&) const = default;
};

struct RunConfig {
  std::string experiment = "mvn";  // mvn | hyperelastic | sweep
  std::uint64_t seed = 0;
  std::size_t particles = 128;
  std::vector<std::size_t> widths = {3, 30, 30, 1};
  SvgdConfig svgd;
  DataConfig data;
  SweepConfig sweep;
  std::size_t w1_every = 50;        // hyperelastic metric cadence
  std::size_t snapshot_every = 100; // MVN particle snapshots

  bool operator==(const RunConfig&) const = default;
};

/// Desk-scale defaults per experiment.
RunConfig default_config(const std::string& experiment);
void validate(const RunConfig& config);

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep the defaults of c.experiment; unknown keys are errors.
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

struct MvnResult {
  Ensemble ensemble;
  RunReport report;
  Eigen::VectorXd mean;
  double bhattacharyya = 0.0;     // full 3-D
  double bhattacharyya_12 = 0.0;  // (theta1, theta2) marginal
  double l1_theta3 = 0.0;
};

/// Runs cSVGD on the illustrative Gaussian target. Artifacts go to out when
/// given.
MvnResult run_mvn(const RunConfig& config,
                  const std::optional<std::filesystem::path>& out = std::nullopt);

struct HyperelasticResult {
  Ensemble ensemble;
  RunReport report;
  std::vector<double> stage_w1;  // summed test W1 after every stage
  std::vector<double> point_w1;  // final per-point W1 along the test path
  double w1_sum = 0.0;
  double reference_w1 = 0.0;     // per-point W1 at E = 0
  double active_params = 0.0;
  double noise_var = 0.0;
};

/// Generates data, runs cSVGD with condensation and scores the pushforward
/// on the test path. With resume set, continues from out/checkpoints/latest.json
/// when present.
HyperelasticResult run_hyperelastic(const RunConfig& config,
                                    const std::optional<std::filesystem::path>& out = std::nullopt,
                                    bool resume = false);

/// One row per grid cell in out/sweep.csv; cells already present are
/// skipped. Returns the number of cells computed in this call.
std::size_t run_sweep(const RunConfig& config, const std::filesystem::path& out);

/// Distance matrix, per-layer weight samples and graph dumps of a checkpoint.
void condense_inspect(const std::filesystem::path& checkpoint, const std::filesystem::path& out);

}  // namespace csvgd
