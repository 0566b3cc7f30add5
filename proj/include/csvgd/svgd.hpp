#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "csvgd/ensemble.hpp"
#include "csvgd/kernels.hpp"
#include "csvgd/likelihood.hpp"
#include "csvgd/priors.hpp"

namespace csvgd {

enum class PenaltySchedule { kFixed, kAdaptive };

std::string to_string(PenaltySchedule s);
PenaltySchedule penalty_schedule_from_string(const std::string& s);

struct SvgdConfig {
  double step_size = 1e-3;
  std::size_t max_iters = 1000;  // per stage
  double tol = 1e-4;             // relative misfit change over the window
  std::size_t window = 50;
  double grad_tol = 1e-8;
  PriorSpec prior;               // prior.lambda is the initial multiplier
  KernelSpec kernel;
  double axis_mask_threshold = 1e-2;
  PenaltySchedule schedule = PenaltySchedule::kFixed;
  double growth = 2.0;
  double accuracy_band = 0.1;
  std::size_t max_stages = 1;
  std::size_t max_total_iters = 4000;  // sparsifying budget, polish excluded
  std::size_t polish_iters = 0;
  bool condense = true;
  double prune_epsilon = 1e-3;
  bool freeze_pruned = true;
  bool adagrad = false;
  double adagrad_offset = 1e-8;

  bool operator==(const SvgdConfig&) const = default;
};

void validate(const SvgdConfig& config);
void to_json(nlohmann::json& j, const SvgdConfig& c);
void from_json(const nlohmann::json& j, SvgdConfig& c);

/// Bandwidth for the current ensemble: the fixed gamma, or the median rule
/// applied to the pairwise graph distances.
double resolve_bandwidth(const KernelSpec& spec, const Ensemble& ensemble);

/// Median of the pairwise distances (0 for a single particle).
double median_pairwise_distance(const Ensemble& ensemble);

/// g_a = 1/N sum_b [k(b, a) score_b + grad_b k(b, a)], where score_b already
/// holds likelihood plus prior score. Repulsion along coordinate j is
/// dropped for a pair whose j-th entries both lie within axis_mask of zero.
std::vector<std::vector<double>> stein_gradient(const Ensemble& ensemble,
                                                const std::vector<std::vector<double>>& scores,
                                                const KernelSpec& kernel, double axis_mask);

struct StepInfo {
  double mean_misfit = 0.0;     // before the update
  double mean_grad_norm = 0.0;  // of the applied Stein direction
  double gamma = 0.0;
};

/// One update theta_a += eps g_a (AdaGrad-scaled when enabled); frozen
/// coordinates stay put and nonneg coordinates are clipped at zero.
/// lambda overrides config.prior.lambda.
StepInfo svgd_step(Ensemble& ensemble, const Target& target, const SvgdConfig& config,
                   double lambda);

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t stage = 0;
  double lambda = 0.0;
  double mse = 0.0;
  double gamma = 0.0;
  double active_params = 0.0;
  double median_distance = 0.0;
};

/// Called before every step with the ensemble the record describes.
using Observer = std::function<void(const Ensemble&, const IterationRecord&)>;

struct StageReport {
  std::size_t stage = 0;
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool polish = false;
  double final_mse = 0.0;
  double active_params = 0.0;            // after condensation when enabled
  std::vector<double> median_distance;   // one entry per iteration

  bool operator==(const StageReport&) const = default;
};

/// Steps until the misfit window test or gradient test passes, or max_iters.
StageReport run_stage(Ensemble& ensemble, const Target& target, const SvgdConfig& config,
                      double lambda, std::size_t max_iters, const Observer& observer = {});

/// Where a staged run stands; stored in checkpoints so a run can resume at a
/// stage boundary.
struct RunState {
  double lambda = 0.0;
  double best_mse = 0.0;
  bool has_best = false;
  std::size_t stages_done = 0;
  std::size_t total_iters = 0;
  bool sparsifying = true;  // false once growth stopped or budget spent
  bool polished = false;
  std::vector<StageReport> stages;

  bool operator==(const RunState&) const = default;
};

struct RunReport {
  std::vector<StageReport> stages;
  std::vector<double> lambda_trajectory;  // one entry per stage

  bool operator==(const RunReport&) const = default;
};

struct RunHooks {
  Observer observer;
  /// Called after every stage (and its condensation) with the state needed
  /// to resume.
  std::function<void(const Ensemble&, const RunState&)> on_stage_end;
};

/// Staged sparsification: stages alternate with condensation while lambda
/// follows the schedule, then lambda reverts to its initial value for a
/// polishing stage on the fixed graph. Pass `resume` to continue from a
/// checkpointed state.
RunReport run_csvgd(Ensemble& ensemble, const Target& target, const SvgdConfig& config,
                    const RunHooks& hooks = {}, std::optional<RunState> resume = std::nullopt);

inline constexpr const char* kCheckpointFormat = "csvgd-checkpoint/1";

struct Checkpoint {
  Ensemble ensemble;
  SvgdConfig config;
  RunState state;
};

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
/// Throws FormatError for unreadable, corrupt or foreign files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace csvgd
