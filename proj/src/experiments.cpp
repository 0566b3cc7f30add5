#include "csvgd/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <Eigen/LU>

#include "csvgd/condense.hpp"
#include "csvgd/csv.hpp"
#include "csvgd/error.hpp"
#include "csvgd/mechanics.hpp"
#include "csvgd/metrics.hpp"

namespace csvgd {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig default_config(const std::string& experiment) {
  RunConfig c;
  c.experiment = experiment;
  if (experiment == "mvn" || experiment == "sweep") {
    c.particles = 128;
    c.widths.clear();
    c.svgd.step_size = 5e-2;
    c.svgd.max_iters = 5000;
    c.svgd.max_total_iters = 5000;
    c.svgd.max_stages = 1;
    c.svgd.prior = {1.0, 0.1};
    c.svgd.kernel = {2.0, 1.0, BandwidthRule::kMedian};
    c.svgd.condense = false;
    if (experiment == "sweep") {
      c.svgd.kernel.rule = BandwidthRule::kFixed;
      c.sweep.lambdas = {0.01, 0.1, 1.0, 10.0};
      c.sweep.gammas = {0.1, 1.0, 10.0};
    }
  } else if (experiment == "hyperelastic") {
    c.particles = 10;
    c.widths = {3, 30, 30, 1};
    c.svgd.step_size = 3e-2;
    c.svgd.adagrad = true;
    c.svgd.prior = {0.5, 0.05};
    c.svgd.kernel = {2.0, 1.0, BandwidthRule::kMedian};
    c.svgd.max_iters = 500;
    c.svgd.max_stages = 7;
    c.svgd.max_total_iters = 3500;
    c.svgd.polish_iters = 500;
    c.svgd.condense = true;
    c.data.noise_var = 0.1;
  } else {
    throw DomainError("unknown experiment '" + experiment + "'");
  }
  return c;
}

void validate(const RunConfig& c) {
  if (c.experiment != "mvn" && c.experiment != "hyperelastic" && c.experiment != "sweep") {
    throw DomainError("unknown experiment '" + c.experiment + "'");
  }
  if (c.particles == 0) throw DomainError("ensemble size must be at least 1");
  validate(c.svgd);
  if (c.experiment == "hyperelastic") {
    if (c.widths.size() < 2 || c.widths.front() != 3 || c.widths.back() != 1) {
      throw DomainError("hyperelastic networks map 3 invariants to 1 energy");
    }
    if (!(c.data.noise >= 0.0)) throw DomainError("noise level must be >= 0");
    if (c.data.noise_var && !(*c.data.noise_var > 0.0)) {
      throw DomainError("noise variance must be positive");
    }
    if (c.data.n_train == 0 || c.data.n_test == 0) throw DomainError("empty data set requested");
    if (c.data.reference_replicas == 0) throw DomainError("reference replicas must be >= 1");
    if (c.w1_every == 0) throw DomainError("w1_every must be >= 1");
  }
  if (c.snapshot_every == 0) throw DomainError("snapshot_every must be >= 1");
}

void to_json(json& j, const RunConfig& c) {
  json data{{"n_train", c.data.n_train},
            {"n_test", c.data.n_test},
            {"delta", c.data.delta},
            {"test_range", c.data.test_range},
            {"noise", c.data.noise},
            {"noise_var", c.data.noise_var ? json(*c.data.noise_var) : json()},
            {"reference_replicas", c.data.reference_replicas}};
  j = json{{"experiment", c.experiment},
           {"seed", c.seed},
           {"particles", c.particles},
           {"widths", c.widths},
           {"svgd", c.svgd},
           {"data", data},
           {"sweep",
            {{"lambdas", c.sweep.lambdas},
             {"gammas", c.sweep.gammas},
             {"alphas", c.sweep.alphas},
             {"betas", c.sweep.betas}}},
           {"w1_every", c.w1_every},
           {"snapshot_every", c.snapshot_every}};
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) throw FormatError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void from_json(const json& j, RunConfig& c) {
  check_keys(j,
             {"experiment", "seed", "particles", "widths", "svgd", "data", "sweep", "w1_every",
              "snapshot_every"},
             "config");
  if (j.contains("experiment")) c = default_config(j.at("experiment").get<std::string>());
  read_opt(j, "seed", c.seed);
  read_opt(j, "particles", c.particles);
  read_opt(j, "widths", c.widths);
  if (j.contains("svgd")) {
    check_keys(j.at("svgd"),
               {"step_size", "max_iters", "tol", "window", "grad_tol", "prior", "kernel",
                "axis_mask_threshold", "schedule", "growth", "accuracy_band", "max_stages",
                "max_total_iters", "polish_iters", "condense", "prune_epsilon", "freeze_pruned",
                "adagrad", "adagrad_offset"},
               "svgd");
    SvgdConfig s = c.svgd;
    from_json(j.at("svgd"), s);
    c.svgd = s;
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"n_train", "n_test", "delta", "test_range", "noise", "noise_var",
                   "reference_replicas"},
               "data");
    read_opt(d, "n_train", c.data.n_train);
    read_opt(d, "n_test", c.data.n_test);
    read_opt(d, "delta", c.data.delta);
    read_opt(d, "test_range", c.data.test_range);
    read_opt(d, "noise", c.data.noise);
    if (d.contains("noise_var")) {
      const auto& v = d.at("noise_var");
      if (v.is_null() || (v.is_string() && v.get<std::string>() == "auto")) {
        c.data.noise_var.reset();
      } else {
        c.data.noise_var = v.get<double>();
      }
    }
    read_opt(d, "reference_replicas", c.data.reference_replicas);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"lambdas", "gammas", "alphas", "betas"}, "sweep");
    read_opt(s, "lambdas", c.sweep.lambdas);
    read_opt(s, "gammas", c.sweep.gammas);
    read_opt(s, "alphas", c.sweep.alphas);
    read_opt(s, "betas", c.sweep.betas);
  }
  read_opt(j, "w1_every", c.w1_every);
  read_opt(j, "snapshot_every", c.snapshot_every);
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  try {
    RunConfig c;
    from_json(json::parse(in), c);
    return c;
  } catch (const json::exception& e) {
    throw FormatError("bad config " + path.string() + ": " + e.what());
  }
}

void save_config(const RunConfig& config, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << json(config).dump(2) << '\n';
}

namespace {

const std::vector<std::string> kMetricsHeader = {
    "iteration", "stage", "lambda", "mse", "w1_sum", "bhattacharyya", "active_params",
    "median_pairwise_distance"};

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string two_digits(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02zu", v);
  return buf;
}

// Keeps the header and the rows whose first column is below `iteration`.
void truncate_csv(const fs::path& path, std::size_t iteration) {
  std::ifstream in(path);
  if (!in) return;
  std::string header;
  std::getline(in, header);
  std::vector<std::string> keep;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (!cells.empty() && parse_double(cells[0]) < static_cast<double>(iteration)) {
      keep.push_back(line);
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << header << '\n';
  for (const auto& l : keep) out << l << '\n';
}

GaussianSummary mvn_truth(const MvnTarget& t) {
  return {t.mean(), t.precision().inverse()};
}

}  // namespace

MvnResult run_mvn(const RunConfig& config, const std::optional<fs::path>& out) {
  validate(config);
  const MvnTarget target = MvnTarget::illustrative();
  const GaussianSummary truth = mvn_truth(target);
  const std::vector<std::size_t> c12 = {0, 1};
  const std::vector<std::size_t> c3 = {2};
  Ensemble e = initialize_flat_ensemble(3, config.particles, config.seed);

  std::unique_ptr<CsvWriter> metrics;
  std::unique_ptr<CsvWriter> snaps;
  std::unique_ptr<CsvWriter> sparsity;
  if (out) {
    fs::create_directories(*out / "checkpoints");
    save_config(config, *out / "config.json");
    metrics = std::make_unique<CsvWriter>(*out / "metrics.csv", kMetricsHeader);
    snaps = std::make_unique<CsvWriter>(*out / "particles.csv",
                                        std::vector<std::string>{"iteration", "particle", "theta1",
                                                                 "theta2", "theta3"});
    sparsity = std::make_unique<CsvWriter>(*out / "sparsity.csv",
                                           std::vector<std::string>{"iteration", "l1_theta3"});
  }
  auto log_state = [&](const Ensemble& en, std::size_t iteration, std::size_t stage,
                       double lambda, double mse, double active, double med) {
    if (!metrics) return;
    const double db = bhattacharyya(summarize(en), truth);
    *metrics << iteration << stage << lambda << mse;
    metrics->skip();
    *metrics << db << active << med;
    metrics->end_row();
    if (iteration % config.snapshot_every == 0) {
      for (std::size_t a = 0; a < en.size(); ++a) {
        const auto& v = en.particles[a].values;
        *snaps << iteration << a << v[0] << v[1] << v[2];
        snaps->end_row();
      }
      *sparsity << iteration << sparsity_l1(en, c3);
      sparsity->end_row();
    }
  };

  RunHooks hooks;
  hooks.observer = [&](const Ensemble& en, const IterationRecord& r) {
    log_state(en, r.iteration, r.stage, r.lambda, r.mse, r.active_params, r.median_distance);
  };
  MvnResult res;
  res.report = run_csvgd(e, target, config.svgd, hooks);

  double mse = 0.0;
  for (const auto& p : e.particles) mse += target.misfit(p.values, nullptr);
  mse /= static_cast<double>(e.size());
  const GaussianSummary s = summarize(e);
  res.mean = s.mean;
  res.bhattacharyya = bhattacharyya(s, truth);
  res.bhattacharyya_12 = bhattacharyya(marginal(s, c12), marginal(truth, c12));
  res.l1_theta3 = sparsity_l1(e, c3);
  if (out) {
    // The final state is always logged, whatever the snapshot cadence.
    *metrics << e.iteration << e.stage << config.svgd.prior.lambda << mse;
    metrics->skip();
    *metrics << res.bhattacharyya << mean_active_params(e, config.svgd.prune_epsilon)
             << median_pairwise_distance(e);
    metrics->end_row();
    for (std::size_t a = 0; a < e.size(); ++a) {
      const auto& v = e.particles[a].values;
      *snaps << e.iteration << a << v[0] << v[1] << v[2];
      snaps->end_row();
    }
    *sparsity << e.iteration << res.l1_theta3;
    sparsity->end_row();
    RunState st;
    st.lambda = config.svgd.prior.lambda;
    st.stages = res.report.stages;
    st.stages_done = res.report.stages.size();
    st.sparsifying = false;
    save_checkpoint({e, config.svgd, st}, *out / "checkpoints" / "final.json");
    write_json({{"iterations", e.iteration},
                {"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
                {"bhattacharyya", res.bhattacharyya},
                {"bhattacharyya_theta12", res.bhattacharyya_12},
                {"l1_theta3", res.l1_theta3}},
               *out / "summary.json");
  }
  res.ensemble = std::move(e);
  return res;
}

namespace {

struct HyperelasticSetup {
  MechanicsData data;
  double noise_var = 0.0;
  std::shared_ptr<StressModel> model;
  std::vector<std::vector<std::vector<double>>> reference;
  std::vector<std::vector<std::vector<double>>> reference_zero;
  std::vector<std::vector<double>> zero_input;
};

HyperelasticSetup setup_hyperelastic(const RunConfig& c) {
  HyperelasticSetup s;
  DataOptions o;
  o.n_train = c.data.n_train;
  o.n_test = c.data.n_test;
  o.delta = c.data.delta;
  o.test_range = c.data.test_range;
  o.noise_level = c.data.noise;
  o.seed = c.seed;
  s.data = generate_data(TruthParams{}, o);
  if (c.data.noise_var) {
    s.noise_var = *c.data.noise_var;
  } else {
    const double sd = std::max(c.data.noise, kMinNoise) * s.data.train_stress_rms;
    s.noise_var = sd * sd;
  }
  s.model = std::make_shared<StressModel>();
  Rng rng(c.seed + 2);
  s.reference = noisy_reference(s.data.test.outputs, c.data.noise, c.data.reference_replicas, rng);
  s.zero_input = {std::vector<double>(6, 0.0)};
  const TruthPotential truth(TruthParams{}, true);
  const Voigt s0 = to_voigt(stress_from_potential(truth, Mat3::Zero()));
  s.reference_zero = noisy_reference({std::vector<double>(s0.begin(), s0.end())}, c.data.noise,
                                     c.data.reference_replicas, rng);
  return s;
}

RunState initial_state(const RunConfig& c) {
  RunState st;
  st.lambda = c.svgd.prior.lambda;
  return st;
}

void dump_graphs(const Ensemble& e, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t a = 0; a < e.size(); ++a) {
    const NetGraph g = prune(make_graph(e.shape->with_params(e.particles[a].values)), 0.0);
    write_graph_dump(g, dir / ("particle_" + two_digits(a) + "_nodes.csv"),
                     dir / ("particle_" + two_digits(a) + "_edges.csv"));
  }
}

const std::vector<std::string> kStagesHeader = {"stage",      "lambda", "iterations",
                                                "converged",  "polish", "final_mse",
                                                "active_params", "w1_sum"};

std::vector<double> read_stage_w1(const fs::path& path, std::size_t stages) {
  std::vector<double> w;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (w.size() < stages && std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    w.push_back(parse_double(cells.back()));
  }
  if (w.size() != stages) throw FormatError("stages.csv does not cover the checkpointed stages");
  return w;
}

}  // namespace

HyperelasticResult run_hyperelastic(const RunConfig& config, const std::optional<fs::path>& out,
                                    bool resume) {
  validate(config);
  const HyperelasticSetup s = setup_hyperelastic(config);
  const RegressionTarget target(s.data.train, s.noise_var, s.model);
  std::vector<bool> nonneg(config.widths.size() - 1, true);
  nonneg.front() = false;
  const LayeredNet shape = LayeredNet::softplus_chain(config.widths, nonneg);
  Ensemble e = initialize_network_ensemble(shape, config.particles, config.seed + 1);

  HyperelasticResult res;
  res.noise_var = s.noise_var;
  std::optional<RunState> state;
  std::unique_ptr<CsvWriter> metrics;
  std::unique_ptr<CsvWriter> stages;
  if (out) {
    const fs::path latest = *out / "checkpoints" / "latest.json";
    if (resume && fs::exists(latest)) {
      Checkpoint cp = load_checkpoint(latest);
      if (!(cp.config == config.svgd)) {
        throw FormatError("checkpoint was written with a different engine configuration");
      }
      e = std::move(cp.ensemble);
      state = std::move(cp.state);
      truncate_csv(*out / "metrics.csv", e.iteration);
      res.stage_w1 = read_stage_w1(*out / "stages.csv", state->stages.size());
      truncate_csv(*out / "stages.csv", state->stages.size());
    } else {
      fs::create_directories(*out / "checkpoints");
      fs::create_directories(*out / "graphs");
      fs::create_directories(*out / "data");
      write_dataset_csv(s.data.train, *out / "data" / "train.csv");
      write_dataset_csv(s.data.test, *out / "data" / "test.csv");
      save_checkpoint({e, config.svgd, initial_state(config)},
                      *out / "checkpoints" / "initial.json");
      dump_graphs(e, *out / "graphs" / "initial");
    }
    save_config(config, *out / "config.json");
    metrics = std::make_unique<CsvWriter>(*out / "metrics.csv", kMetricsHeader, state.has_value());
    stages = std::make_unique<CsvWriter>(*out / "stages.csv", kStagesHeader, state.has_value());
  }

  auto w1_of = [&](const Ensemble& en) {
    return pushforward_w1(en, *s.model, s.data.test.inputs, s.reference);
  };
  auto write_row = [&](std::size_t iteration, std::size_t stage, double lambda, double mse,
                       std::optional<double> w1, double active, double med) {
    if (!metrics) return;
    *metrics << iteration << stage << lambda << mse;
    if (w1) {
      *metrics << *w1;
    } else {
      metrics->skip();
    }
    metrics->skip();
    *metrics << active << med;
    metrics->end_row();
  };

  RunHooks hooks;
  hooks.observer = [&](const Ensemble& en, const IterationRecord& r) {
    std::optional<double> w1;
    if (r.iteration % config.w1_every == 0) w1 = w1_of(en).sum;
    write_row(r.iteration, r.stage, r.lambda, r.mse, w1, r.active_params, r.median_distance);
  };
  hooks.on_stage_end = [&](const Ensemble& en, const RunState& st) {
    const double w1 = w1_of(en).sum;
    res.stage_w1.push_back(w1);
    if (!out) return;
    const StageReport& r = st.stages.back();
    *stages << r.stage << r.lambda << r.iterations << (r.converged ? 1 : 0) << (r.polish ? 1 : 0)
            << r.final_mse << r.active_params << w1;
    stages->end_row();
    stages->flush();
    metrics->flush();
    dump_graphs(en, *out / "graphs" / ("stage_" + two_digits(r.stage)));
    const Checkpoint cp{en, config.svgd, st};
    save_checkpoint(cp, *out / "checkpoints" / ("stage_" + two_digits(r.stage) + ".json"));
    save_checkpoint(cp, *out / "checkpoints" / "latest.json");
  };

  res.report = run_csvgd(e, target, config.svgd, hooks, state);

  const PushforwardW1 w = w1_of(e);
  res.point_w1 = w.per_point;
  res.w1_sum = w.sum;
  res.reference_w1 = pushforward_w1(e, *s.model, s.zero_input, s.reference_zero).sum;
  res.active_params = mean_active_params(e, config.svgd.prune_epsilon);
  if (out) {
    double mse = 0.0;
    for (const auto& p : e.particles) mse += target.misfit(p.values, &*e.shape);
    mse /= static_cast<double>(e.size());
    write_row(e.iteration, e.stage, config.svgd.prior.lambda, mse, w.sum, res.active_params,
              median_pairwise_distance(e));
    metrics->flush();
    CsvWriter pts(*out / "w1_points.csv", {"delta", "F11", "w1", "w1_ma11"});
    const auto ma = moving_average(w.per_point, 11);
    for (std::size_t i = 0; i < w.per_point.size(); ++i) {
      pts << s.data.test_delta[i] << 1.0 + s.data.test_delta[i] << w.per_point[i] << ma[i];
      pts.end_row();
    }
    RunState st;
    st.lambda = config.svgd.prior.lambda;
    st.stages = res.report.stages;
    st.stages_done = res.report.stages.size();
    st.sparsifying = false;
    st.polished = true;
    save_checkpoint({e, config.svgd, st}, *out / "checkpoints" / "final.json");
    write_json({{"iterations", e.iteration},
                {"stages", res.report.stages.size()},
                {"lambda_trajectory", res.report.lambda_trajectory},
                {"noise_var", s.noise_var},
                {"w1_sum", res.w1_sum},
                {"stage_w1", res.stage_w1},
                {"reference_w1", res.reference_w1},
                {"active_params", res.active_params},
                {"template_widths", e.shape->widths()}},
               *out / "summary.json");
  }
  res.ensemble = std::move(e);
  return res;
}

std::size_t run_sweep(const RunConfig& config, const fs::path& out) {
  validate(config);
  fs::create_directories(out);
  save_config(config, out / "config.json");
  auto axis = [](const std::vector<double>& v, double base) {
    return v.empty() ? std::vector<double>{base} : v;
  };
  const auto alphas = axis(config.sweep.alphas, config.svgd.prior.alpha);
  const auto betas = axis(config.sweep.betas, config.svgd.kernel.beta);
  const auto lambdas = axis(config.sweep.lambdas, config.svgd.prior.lambda);
  const auto gammas = axis(config.sweep.gammas, config.svgd.kernel.gamma);

  const fs::path csv = out / "sweep.csv";
  std::set<std::string> done;
  if (std::ifstream in(csv); in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto cells = split_csv_line(line);
      if (cells.size() >= 4) done.insert(cells[0] + "," + cells[1] + "," + cells[2] + "," + cells[3]);
    }
  }
  CsvWriter w(csv,
              {"alpha", "beta", "lambda", "gamma", "bhattacharyya", "bhattacharyya_theta12",
               "l1_theta3", "mean_theta1", "mean_theta2", "mean_theta3", "iterations"},
              true);
  std::size_t computed = 0;
  for (double alpha : alphas) {
    for (double beta : betas) {
      for (double lambda : lambdas) {
        for (double gamma : gammas) {
          const std::string key = format_double(alpha) + "," + format_double(beta) + "," +
                                  format_double(lambda) + "," + format_double(gamma);
          if (done.contains(key)) continue;
          RunConfig cell = config;
          cell.experiment = "mvn";
          cell.svgd.prior = {alpha, lambda};
          cell.svgd.kernel.beta = beta;
          if (!config.sweep.gammas.empty()) {
            cell.svgd.kernel.gamma = gamma;
            cell.svgd.kernel.rule = BandwidthRule::kFixed;
          }
          const MvnResult r = run_mvn(cell);
          w << alpha << beta << lambda << gamma << r.bhattacharyya << r.bhattacharyya_12
            << r.l1_theta3 << r.mean(0) << r.mean(1) << r.mean(2) << r.ensemble.iteration;
          w.end_row();
          w.flush();
          ++computed;
        }
      }
    }
  }
  return computed;
}

void condense_inspect(const fs::path& checkpoint, const fs::path& out) {
  const Checkpoint cp = load_checkpoint(checkpoint);
  const Ensemble& e = cp.ensemble;
  fs::create_directories(out);
  const Eigen::MatrixXd d = distance_matrix(e);
  {
    std::vector<std::string> header{"particle"};
    for (Eigen::Index b = 0; b < d.cols(); ++b) header.push_back("p" + std::to_string(b));
    CsvWriter w(out / "distance_matrix.csv", header);
    for (Eigen::Index a = 0; a < d.rows(); ++a) {
      w << static_cast<long long>(a);
      for (Eigen::Index b = 0; b < d.cols(); ++b) w << d(a, b);
      w.end_row();
    }
  }
  {
    CsvWriter w(out / "weights.csv", {"particle", "block", "row", "col", "value"});
    for (std::size_t a = 0; a < e.size(); ++a) {
      const auto& p = e.particles[a];
      std::size_t off = 0;
      for (const auto& le : p.layout) {
        for (std::size_t i = 0; i < le.rows; ++i) {
          for (std::size_t j = 0; j < le.cols; ++j) {
            const double v = p.values[off + i * le.cols + j];
            if (e.shape && v == 0.0) continue;
            w << a << le.id << i << j << v;
            w.end_row();
          }
        }
        off += le.rows * le.cols;
      }
    }
  }
  if (e.shape) dump_graphs(e, out / "graphs");
}

}  // namespace csvgd
