#include "csvgd/svgd.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <initializer_list>
#include <limits>

#include "csvgd/condense.hpp"
#include "csvgd/error.hpp"
#include "parallel.hpp"

namespace csvgd {

using nlohmann::json;

std::string to_string(PenaltySchedule s) { return s == PenaltySchedule::kFixed ? "fixed" : "adaptive"; }

PenaltySchedule penalty_schedule_from_string(const std::string& s) {
  if (s == "fixed") return PenaltySchedule::kFixed;
  if (s == "adaptive") return PenaltySchedule::kAdaptive;
  throw FormatError("unknown penalty schedule '" + s + "'");
}

void validate(const SvgdConfig& c) {
  if (!(c.step_size >= 0.0) || !std::isfinite(c.step_size)) {
    throw DomainError("step size must be finite and non-negative");
  }
  if (!(c.tol >= 0.0) || !(c.grad_tol >= 0.0)) throw DomainError("tolerances must be >= 0");
  if (!(c.axis_mask_threshold >= 0.0)) throw DomainError("axis mask threshold must be >= 0");
  if (!(c.prune_epsilon >= 0.0)) throw DomainError("prune threshold must be >= 0");
  if (!(c.growth >= 1.0)) throw DomainError("penalty growth factor must be >= 1");
  if (!(c.accuracy_band >= 0.0)) throw DomainError("accuracy band must be >= 0");
  if (!(c.adagrad_offset > 0.0)) throw DomainError("AdaGrad offset must be positive");
  if (c.window == 0) throw DomainError("convergence window must be positive");
  validate(c.prior);
  validate(c.kernel);
}

void to_json(json& j, const SvgdConfig& c) {
  j = json{{"step_size", c.step_size},
           {"max_iters", c.max_iters},
           {"tol", c.tol},
           {"window", c.window},
           {"grad_tol", c.grad_tol},
           {"prior", {{"alpha", c.prior.alpha}, {"lambda", c.prior.lambda}}},
           {"kernel",
            {{"beta", c.kernel.beta}, {"gamma", c.kernel.gamma}, {"rule", to_string(c.kernel.rule)}}},
           {"axis_mask_threshold", c.axis_mask_threshold},
           {"schedule", to_string(c.schedule)},
           {"growth", c.growth},
           {"accuracy_band", c.accuracy_band},
           {"max_stages", c.max_stages},
           {"max_total_iters", c.max_total_iters},
           {"polish_iters", c.polish_iters},
           {"condense", c.condense},
           {"prune_epsilon", c.prune_epsilon},
           {"freeze_pruned", c.freeze_pruned},
           {"adagrad", c.adagrad},
           {"adagrad_offset", c.adagrad_offset}};
}

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void only_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw FormatError(std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end()) {
      throw FormatError("unknown key '" + k + "' in " + where);
    }
  }
}

}  // namespace

void from_json(const json& j, SvgdConfig& c) {
  read_opt(j, "step_size", c.step_size);
  read_opt(j, "max_iters", c.max_iters);
  read_opt(j, "tol", c.tol);
  read_opt(j, "window", c.window);
  read_opt(j, "grad_tol", c.grad_tol);
  if (j.contains("prior")) {
    only_keys(j.at("prior"), {"alpha", "lambda"}, "prior");
    read_opt(j.at("prior"), "alpha", c.prior.alpha);
    read_opt(j.at("prior"), "lambda", c.prior.lambda);
  }
  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    only_keys(k, {"beta", "gamma", "rule"}, "kernel");
    read_opt(k, "beta", c.kernel.beta);
    read_opt(k, "gamma", c.kernel.gamma);
    if (k.contains("rule")) c.kernel.rule = bandwidth_rule_from_string(k.at("rule").get<std::string>());
  }
  read_opt(j, "axis_mask_threshold", c.axis_mask_threshold);
  if (j.contains("schedule")) c.schedule = penalty_schedule_from_string(j.at("schedule").get<std::string>());
  read_opt(j, "growth", c.growth);
  read_opt(j, "accuracy_band", c.accuracy_band);
  read_opt(j, "max_stages", c.max_stages);
  read_opt(j, "max_total_iters", c.max_total_iters);
  read_opt(j, "polish_iters", c.polish_iters);
  read_opt(j, "condense", c.condense);
  read_opt(j, "prune_epsilon", c.prune_epsilon);
  read_opt(j, "freeze_pruned", c.freeze_pruned);
  read_opt(j, "adagrad", c.adagrad);
  read_opt(j, "adagrad_offset", c.adagrad_offset);
}

namespace {

std::vector<double> pairwise_upper(const Ensemble& e) {
  const Eigen::MatrixXd d = distance_matrix(e);
  std::vector<double> out;
  for (Eigen::Index a = 0; a < d.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < d.cols(); ++b) out.push_back(d(a, b));
  }
  return out;
}

}  // namespace

double median_pairwise_distance(const Ensemble& ensemble) {
  if (ensemble.size() < 2) return 0.0;
  return median(pairwise_upper(ensemble));
}

double resolve_bandwidth(const KernelSpec& spec, const Ensemble& ensemble) {
  if (spec.rule == BandwidthRule::kFixed) return spec.gamma;
  if (ensemble.size() < 2) return kBandwidthFloor;
  return median_bandwidth(pairwise_upper(ensemble), ensemble.size());
}

std::vector<std::vector<double>> stein_gradient(const Ensemble& ensemble,
                                                const std::vector<std::vector<double>>& scores,
                                                const KernelSpec& kernel, double axis_mask) {
  validate(ensemble);
  validate(kernel);
  const std::size_t n = ensemble.size();
  const std::size_t dim = ensemble.dim();
  if (scores.size() != n) throw ShapeError("one score per particle is required");
  for (const auto& s : scores) {
    if (s.size() != dim) throw ShapeError("score length does not match the particle layout");
  }
  // k(a, b) is symmetric, so fill the matrix once.
  std::vector<double> k(n * n, 1.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double v = std::exp(-kernel_power_sum(kernel.beta, ensemble.particles[a].values,
                                                  ensemble.particles[b].values) /
                                (kernel.gamma * kernel.beta));
      k[a * n + b] = k[b * n + a] = v;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<std::vector<double>> g(n, std::vector<double>(dim, 0.0));
  detail::parallel_for(n, [&](std::size_t a) {
    const auto& ta = ensemble.particles[a].values;
    auto& ga = g[a];
    for (std::size_t b = 0; b < n; ++b) {
      const double kab = k[a * n + b];
      if (kab == 0.0) continue;
      const auto& tb = ensemble.particles[b].values;
      const auto& sb = scores[b];
      for (std::size_t j = 0; j < dim; ++j) {
        double term = kab * sb[j];
        const double d = ta[j] - tb[j];
        if (d != 0.0 && !(std::abs(ta[j]) < axis_mask && std::abs(tb[j]) < axis_mask)) {
          const double mag = kernel.beta == 2.0   ? std::abs(d)
                             : kernel.beta == 1.0 ? 1.0
                                                  : std::pow(std::abs(d), kernel.beta - 1.0);
          term += mag * (d > 0.0 ? 1.0 : -1.0) * kab / kernel.gamma;
        }
        ga[j] += term;
      }
    }
    for (double& v : ga) v *= inv_n;
  });
  return g;
}

namespace {

struct Evaluation {
  std::vector<std::vector<double>> scores;  // likelihood plus prior
  double mean_misfit = 0.0;
};

Evaluation evaluate(const Ensemble& ensemble, const Target& target, const SvgdConfig& config,
                    double lambda) {
  validate(ensemble);
  const std::size_t n = ensemble.size();
  const LayeredNet* shape = ensemble.shape ? &*ensemble.shape : nullptr;
  PriorSpec prior = config.prior;
  prior.lambda = lambda;
  validate(prior);
  Evaluation ev;
  ev.scores.assign(n, std::vector<double>(ensemble.dim(), 0.0));
  std::vector<double> misfit(n, 0.0);
  detail::parallel_for(n, [&](std::size_t a) {
    const auto& theta = ensemble.particles[a].values;
    misfit[a] = target.accumulate_score(theta, shape, ev.scores[a]);
    accumulate_prior_score(prior, theta, ev.scores[a]);
  });
  for (double m : misfit) ev.mean_misfit += m;
  ev.mean_misfit /= static_cast<double>(n);
  return ev;
}

std::string describe_coordinate(const ParamVector& p, std::size_t index) {
  std::size_t off = 0;
  for (const auto& e : p.layout) {
    const std::size_t sz = e.rows * e.cols;
    if (index < off + sz) {
      return std::to_string(index) + " (" + e.id + "[" + std::to_string((index - off) / e.cols) +
             "," + std::to_string((index - off) % e.cols) + "])";
    }
    off += sz;
  }
  return std::to_string(index);
}

StepInfo apply(Ensemble& ensemble, const Evaluation& ev, const SvgdConfig& config, double gamma) {
  const std::size_t n = ensemble.size();
  const std::size_t dim = ensemble.dim();
  const LayeredNet* shape = ensemble.shape ? &*ensemble.shape : nullptr;
  KernelSpec kernel = config.kernel;
  kernel.gamma = gamma;
  auto g = stein_gradient(ensemble, ev.scores, kernel, config.axis_mask_threshold);

  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < dim; ++p) {
      if (ensemble.is_frozen(a, p)) {
        g[a][p] = 0.0;
      } else if (!std::isfinite(g[a][p])) {
        throw DomainError("non-finite Stein gradient at particle " + std::to_string(a) +
                          ", coordinate " + describe_coordinate(ensemble.particles[a], p));
      }
    }
  }

  if (config.adagrad && ensemble.grad_sq_sum.empty()) {
    ensemble.grad_sq_sum.assign(n, std::vector<double>(dim, 0.0));
  }
  double norm_sum = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    auto& theta = ensemble.particles[a].values;
    double sq = 0.0;
    for (std::size_t p = 0; p < dim; ++p) {
      const double gp = g[a][p];
      sq += gp * gp;
      if (ensemble.is_frozen(a, p)) continue;
      double step = config.step_size * gp;
      if (config.adagrad) {
        double& acc = ensemble.grad_sq_sum[a][p];
        acc += gp * gp;
        step /= std::sqrt(acc) + config.adagrad_offset;
      }
      theta[p] += step;
      if (shape && theta[p] < 0.0 && shape->is_nonneg_param(p)) theta[p] = 0.0;
    }
    norm_sum += std::sqrt(sq);
  }
  StepInfo info;
  info.gamma = gamma;
  info.mean_misfit = ev.mean_misfit;
  info.mean_grad_norm = norm_sum / static_cast<double>(n);
  ++ensemble.iteration;
  return info;
}

}  // namespace

StepInfo svgd_step(Ensemble& ensemble, const Target& target, const SvgdConfig& config,
                   double lambda) {
  const Evaluation ev = evaluate(ensemble, target, config, lambda);
  return apply(ensemble, ev, config, resolve_bandwidth(config.kernel, ensemble));
}

StageReport run_stage(Ensemble& ensemble, const Target& target, const SvgdConfig& config,
                      double lambda, std::size_t max_iters, const Observer& observer) {
  validate(config);
  StageReport r;
  r.stage = ensemble.stage;
  r.lambda = lambda;
  std::deque<double> history;
  double last_misfit = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t it = 0; it < max_iters; ++it) {
    IterationRecord rec;
    rec.iteration = ensemble.iteration;
    rec.stage = ensemble.stage;
    rec.lambda = lambda;
    rec.active_params = mean_active_params(ensemble, config.prune_epsilon);
    const std::vector<double> dists =
        ensemble.size() > 1 ? pairwise_upper(ensemble) : std::vector<double>{};
    rec.median_distance = dists.empty() ? 0.0 : median(dists);
    rec.gamma = config.kernel.rule == BandwidthRule::kFixed
                    ? config.kernel.gamma
                    : median_bandwidth(dists, ensemble.size());
    const Evaluation ev = evaluate(ensemble, target, config, lambda);
    rec.mse = ev.mean_misfit;
    if (observer) observer(ensemble, rec);
    const StepInfo info = apply(ensemble, ev, config, rec.gamma);
    r.median_distance.push_back(rec.median_distance);
    ++r.iterations;
    last_misfit = info.mean_misfit;

    history.push_back(info.mean_misfit);
    if (history.size() > config.window + 1) history.pop_front();
    bool done = info.mean_grad_norm < config.grad_tol;
    if (history.size() == config.window + 1) {
      const double old = history.front();
      const double scale = std::max(std::abs(old), std::numeric_limits<double>::min());
      done = done || std::abs(info.mean_misfit - old) / scale < config.tol;
    }
    if (done) {
      r.converged = true;
      break;
    }
  }
  r.final_mse = r.iterations > 0 ? last_misfit : std::numeric_limits<double>::quiet_NaN();
  r.active_params = mean_active_params(ensemble, config.prune_epsilon);
  return r;
}

namespace {

void condense_in_place(Ensemble& e, const SvgdConfig& c) {
  if (c.condense && e.shape) e = condense(e, c.prune_epsilon, c.freeze_pruned);
}

}  // namespace

RunReport run_csvgd(Ensemble& ensemble, const Target& target, const SvgdConfig& config,
                    const RunHooks& hooks, std::optional<RunState> resume) {
  validate(config);
  RunState st;
  if (resume) {
    st = *resume;
  } else {
    st.lambda = config.prior.lambda;
  }
  const double lambda0 = config.prior.lambda;

  while (st.sparsifying && st.stages_done < config.max_stages &&
         st.total_iters < config.max_total_iters) {
    const std::size_t budget = std::min(config.max_iters, config.max_total_iters - st.total_iters);
    StageReport r = run_stage(ensemble, target, config, st.lambda, budget, hooks.observer);
    st.total_iters += r.iterations;
    condense_in_place(ensemble, config);
    if (config.condense && ensemble.shape) {
      r.active_params = mean_active_params(ensemble, config.prune_epsilon);
    }
    ++ensemble.stage;
    ++st.stages_done;
    st.stages.push_back(r);
    if (config.schedule == PenaltySchedule::kAdaptive) {
      if (!st.has_best || r.final_mse <= (1.0 + config.accuracy_band) * st.best_mse) {
        if (!st.has_best || r.final_mse < st.best_mse) st.best_mse = r.final_mse;
        st.has_best = true;
        st.lambda *= config.growth;
      } else {
        st.sparsifying = false;
      }
    }
    if (st.stages_done >= config.max_stages || st.total_iters >= config.max_total_iters) {
      st.sparsifying = false;
    }
    if (hooks.on_stage_end) hooks.on_stage_end(ensemble, st);
  }
  st.sparsifying = false;

  if (!st.polished && config.polish_iters > 0) {
    st.lambda = lambda0;
    StageReport r =
        run_stage(ensemble, target, config, st.lambda, config.polish_iters, hooks.observer);
    r.polish = true;
    ++ensemble.stage;
    st.stages.push_back(r);
    st.polished = true;
    if (hooks.on_stage_end) hooks.on_stage_end(ensemble, st);
  }
  st.lambda = lambda0;

  RunReport report;
  report.stages = st.stages;
  for (const auto& s : st.stages) report.lambda_trajectory.push_back(s.lambda);
  return report;
}

namespace {

json ensemble_to_json(const Ensemble& e) {
  json j;
  if (e.shape) j["shape"] = to_json(*e.shape);
  json layout = json::array();
  if (!e.particles.empty()) {
    for (const auto& le : e.particles.front().layout) {
      layout.push_back({{"id", le.id}, {"rows", le.rows}, {"cols", le.cols}});
    }
  }
  j["layout"] = layout;
  json parts = json::array();
  for (const auto& p : e.particles) parts.push_back(p.values);
  j["particles"] = parts;
  j["frozen"] = e.frozen;
  j["grad_sq_sum"] = e.grad_sq_sum;
  j["iteration"] = e.iteration;
  j["stage"] = e.stage;
  j["rng"] = serialize_rng(e.rng);
  return j;
}

Ensemble ensemble_from_json(const json& j) {
  Ensemble e;
  if (j.contains("shape")) e.shape = net_from_json(j.at("shape"));
  Layout layout;
  for (const auto& le : j.at("layout")) {
    layout.push_back({le.at("id").get<std::string>(), le.at("rows").get<std::size_t>(),
                      le.at("cols").get<std::size_t>()});
  }
  for (const auto& p : j.at("particles")) {
    e.particles.push_back({p.get<std::vector<double>>(), layout});
  }
  e.frozen = j.at("frozen").get<std::vector<std::vector<std::uint8_t>>>();
  e.grad_sq_sum = j.at("grad_sq_sum").get<std::vector<std::vector<double>>>();
  e.iteration = j.at("iteration").get<std::size_t>();
  e.stage = j.at("stage").get<std::size_t>();
  e.rng = deserialize_rng(j.at("rng").get<std::string>());
  validate(e);
  return e;
}

json stage_to_json(const StageReport& s) {
  return {{"stage", s.stage},         {"lambda", s.lambda},       {"iterations", s.iterations},
          {"converged", s.converged}, {"polish", s.polish},       {"final_mse", s.final_mse},
          {"active_params", s.active_params}, {"median_distance", s.median_distance}};
}

StageReport stage_from_json(const json& j) {
  StageReport s;
  s.stage = j.at("stage").get<std::size_t>();
  s.lambda = j.at("lambda").get<double>();
  s.iterations = j.at("iterations").get<std::size_t>();
  s.converged = j.at("converged").get<bool>();
  s.polish = j.at("polish").get<bool>();
  s.final_mse = j.at("final_mse").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                            : j.at("final_mse").get<double>();
  s.active_params = j.at("active_params").get<double>();
  s.median_distance = j.at("median_distance").get<std::vector<double>>();
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  json j;
  j["format"] = kCheckpointFormat;
  j["ensemble"] = ensemble_to_json(cp.ensemble);
  j["config"] = cp.config;
  json stages = json::array();
  for (const auto& s : cp.state.stages) stages.push_back(stage_to_json(s));
  j["state"] = {{"lambda", cp.state.lambda},           {"best_mse", cp.state.best_mse},
                {"has_best", cp.state.has_best},       {"stages_done", cp.state.stages_done},
                {"total_iters", cp.state.total_iters}, {"sparsifying", cp.state.sparsifying},
                {"polished", cp.state.polished},       {"stages", stages}};
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out << j.dump(1) << '\n';
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  try {
    const json j = json::parse(in);
    if (!j.contains("format") || j.at("format") != kCheckpointFormat) {
      throw FormatError(path.string() + " is not a " + kCheckpointFormat + " file");
    }
    Checkpoint cp;
    cp.ensemble = ensemble_from_json(j.at("ensemble"));
    cp.config = j.at("config").get<SvgdConfig>();
    const auto& s = j.at("state");
    cp.state.lambda = s.at("lambda").get<double>();
    cp.state.best_mse = s.at("best_mse").get<double>();
    cp.state.has_best = s.at("has_best").get<bool>();
    cp.state.stages_done = s.at("stages_done").get<std::size_t>();
    cp.state.total_iters = s.at("total_iters").get<std::size_t>();
    cp.state.sparsifying = s.at("sparsifying").get<bool>();
    cp.state.polished = s.at("polished").get<bool>();
    for (const auto& st : s.at("stages")) cp.state.stages.push_back(stage_from_json(st));
    return cp;
  } catch (const json::exception& e) {
    throw FormatError("corrupt checkpoint " + path.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace csvgd
