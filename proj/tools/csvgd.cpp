// csvgd: command-line front end for the condensed SVGD experiments.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "csvgd/error.hpp"
#include "csvgd/experiments.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> particles;
  std::optional<double> alpha;
  std::optional<double> lambda;
  std::optional<double> beta;
  std::optional<double> gamma;
  std::optional<std::string> bandwidth;
  std::optional<std::string> schedule;
  std::optional<double> step;
  std::optional<std::size_t> max_iters;
  std::optional<std::size_t> stages;
  std::optional<std::size_t> polish;
  std::optional<double> noise;
  std::optional<double> noise_var;
  bool no_condense = false;
  bool adagrad = false;
  bool resume = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--particles", o.particles, "Ensemble size");
  cmd->add_option("--alpha", o.alpha, "Prior exponent");
  cmd->add_option("--lambda", o.lambda, "Initial penalty multiplier");
  cmd->add_option("--beta", o.beta, "Kernel exponent");
  cmd->add_option("--gamma", o.gamma, "Fixed kernel bandwidth (implies --bandwidth fixed)");
  cmd->add_option("--bandwidth", o.bandwidth, "fixed | median");
  cmd->add_option("--schedule", o.schedule, "fixed | adaptive");
  cmd->add_option("--step", o.step, "Step size");
  cmd->add_option("--max-iters", o.max_iters, "Iterations per stage");
  cmd->add_option("--stages", o.stages, "Maximum sparsifying stages");
  cmd->add_option("--polish", o.polish, "Polishing iterations");
  cmd->add_flag("--adagrad", o.adagrad, "Enable AdaGrad step scaling");
  cmd->add_flag("--no-condense", o.no_condense, "Disable graph condensation");
}

csvgd::RunConfig resolve(const std::string& experiment, const Overrides& o) {
  csvgd::RunConfig c =
      o.config ? csvgd::load_config(*o.config) : csvgd::default_config(experiment);
  if (o.config && c.experiment != experiment) {
    // A config written for one command may seed another; keep its values.
    c.experiment = experiment;
  }
  if (o.seed) c.seed = *o.seed;
  if (o.particles) c.particles = *o.particles;
  if (o.alpha) c.svgd.prior.alpha = *o.alpha;
  if (o.lambda) c.svgd.prior.lambda = *o.lambda;
  if (o.beta) c.svgd.kernel.beta = *o.beta;
  if (o.bandwidth) c.svgd.kernel.rule = csvgd::bandwidth_rule_from_string(*o.bandwidth);
  if (o.gamma) {
    c.svgd.kernel.gamma = *o.gamma;
    if (!o.bandwidth) c.svgd.kernel.rule = csvgd::BandwidthRule::kFixed;
  }
  if (o.schedule) c.svgd.schedule = csvgd::penalty_schedule_from_string(*o.schedule);
  if (o.step) c.svgd.step_size = *o.step;
  if (o.max_iters) c.svgd.max_iters = *o.max_iters;
  if (o.stages) c.svgd.max_stages = *o.stages;
  if (o.max_iters || o.stages) c.svgd.max_total_iters = c.svgd.max_iters * c.svgd.max_stages;
  if (o.polish) c.svgd.polish_iters = *o.polish;
  if (o.noise) c.data.noise = *o.noise;
  if (o.noise_var) c.data.noise_var = *o.noise_var;
  if (o.adagrad) c.svgd.adagrad = true;
  if (o.no_condense) c.svgd.condense = false;
  csvgd::validate(c);
  return c;
}

void write_readme(const fs::path& dir, int argc, char** argv) {
  std::ofstream out(dir / "README.md");
  out << "# csvgd run\n\nCommand:\n\n    ";
  for (int i = 0; i < argc; ++i) out << (i ? " " : "") << argv[i];
  out << "\n\nconfig.json holds the resolved configuration. metrics.csv has one row per "
         "iteration; checkpoints/ and graphs/ hold stage snapshots.\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Condensed Stein variational gradient descent experiments"};
  app.require_subcommand(1);
  Overrides o;

  auto* mvn = app.add_subcommand("mvn", "Gaussian target with sparsifying prior");
  add_common(mvn, o);

  auto* hyper = app.add_subcommand("hyperelastic", "Hyperelastic ICNN ensemble");
  add_common(hyper, o);
  hyper->add_option("--noise", o.noise, "Relative data noise level");
  hyper->add_option("--noise-var", o.noise_var, "Likelihood variance");
  hyper->add_flag("--resume", o.resume, "Continue from checkpoints/latest.json");

  auto* sweep = app.add_subcommand("sweep", "Lambda x gamma survey on the Gaussian target");
  add_common(sweep, o);

  auto* inspect = app.add_subcommand("condense-inspect", "Distances and graphs of a checkpoint");
  std::string checkpoint;
  std::optional<std::string> inspect_out;
  inspect->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  inspect->add_option("--out", inspect_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (inspect->parsed()) {
      const fs::path dir = inspect_out ? fs::path(*inspect_out) : fs::path("inspect");
      csvgd::condense_inspect(checkpoint, dir);
      std::printf("wrote %s\n", dir.string().c_str());
      return 0;
    }
    const std::string name = mvn->parsed() ? "mvn" : hyper->parsed() ? "hyperelastic" : "sweep";
    const csvgd::RunConfig c = resolve(name, o);
    const fs::path dir = o.out ? fs::path(*o.out) : fs::path("runs") / name;
    fs::create_directories(dir);
    write_readme(dir, argc, argv);
    if (name == "mvn") {
      const auto r = csvgd::run_mvn(c, dir);
      std::printf("iterations %zu  mean (%.4f, %.4f, %.4f)  bhattacharyya %.6g  (theta1,theta2) %.6g"
                  "  l1(theta3) %.6g\n",
                  r.ensemble.iteration, r.mean(0), r.mean(1), r.mean(2), r.bhattacharyya,
                  r.bhattacharyya_12, r.l1_theta3);
    } else if (name == "hyperelastic") {
      const auto r = csvgd::run_hyperelastic(c, dir, o.resume);
      std::printf("iterations %zu  stages %zu  active weights %.1f  test W1 %.6g  W1 at E=0 %.3g\n",
                  r.ensemble.iteration, r.report.stages.size(), r.active_params, r.w1_sum,
                  r.reference_w1);
    } else {
      const std::size_t n = csvgd::run_sweep(c, dir);
      std::printf("computed %zu cells into %s\n", n, (dir / "sweep.csv").string().c_str());
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "csvgd: %s\n", e.what());
    return 1;
  }
}
