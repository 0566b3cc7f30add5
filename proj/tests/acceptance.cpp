// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Usage: acceptance [output-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "csvgd/condense.hpp"
#include "csvgd/experiments.hpp"
#include "csvgd/kernels.hpp"
#include "csvgd/mechanics.hpp"
#include "csvgd/priors.hpp"
#include "support.hpp"

using namespace csvgd;
using csvgd::testing::central_diff;
using csvgd::testing::random_net;
using csvgd::testing::random_vector;
using csvgd::testing::rel_err;

namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kMeanTol = 0.15;
constexpr double kBhattacharyyaTol = 0.1;
constexpr double kMvnSeconds = 120.0;
constexpr double kGradRelTol = 1e-5;
constexpr std::size_t kMinGradCoords = 500;
constexpr double kQuadratureTol = 1e-6;
constexpr double kGaussianScoreTol = 1e-12;
constexpr double kPreserveTol = 1e-12;
constexpr double kPruneEps = 1e-3;
constexpr double kStressFreeTol = 1e-8;
constexpr double kTruthFdTol = 1e-6;
constexpr double kCycleTol = 1e-6;
constexpr double kMaxActive = 60.0;
constexpr std::size_t kMaxIters = 4000;
constexpr double kHyperSeconds = 1800.0;
constexpr double kReferenceW1Tol = 1e-8;
constexpr double kAdaptiveW1Factor = 1.5;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------- 1, 2

void mvn_recovery(const fs::path& root) {
  const RunConfig c = default_config("mvn");
  const auto t0 = std::chrono::steady_clock::now();
  const MvnResult r = run_mvn(c, root / "mvn");
  const double secs = seconds_since(t0);
  const double dmean = std::hypot(r.mean(0) - 1.0, r.mean(1) - 2.0);
  report(1, dmean < kMeanTol && r.bhattacharyya_12 < kBhattacharyyaTol && secs < kMvnSeconds,
         fmt("mean(theta1,theta2)=(%.4f,%.4f) dist %.4f<%.2f, B12 %.4g<%.2g, %.1fs<%.0fs",
             r.mean(0), r.mean(1), dmean, kMeanTol, r.bhattacharyya_12, kBhattacharyyaTol, secs,
             kMvnSeconds));
}

void mvn_tradeoff() {
  RunConfig c = default_config("mvn");
  c.svgd.kernel = {2.0, 1.0, BandwidthRule::kFixed};
  c.svgd.prior.lambda = 0.1;
  const MvnResult lo = run_mvn(c);
  c.svgd.prior.lambda = 1.0;
  const MvnResult hi = run_mvn(c);
  report(2, hi.l1_theta3 < lo.l1_theta3 && hi.bhattacharyya > lo.bhattacharyya,
         fmt("L1(theta3) %.4g (lambda=1) < %.4g (lambda=0.1); B %.4g > %.4g", hi.l1_theta3,
             lo.l1_theta3, hi.bhattacharyya, lo.bhattacharyya));
}

// ---------------------------------------------------------------- 3

void gradients() {
  Rng rng(2024);
  std::size_t coords = 0;
  double worst = 0.0;
  while (coords < kMinGradCoords) {
    const LayeredNet net = random_net({3, 8, 8, 1}, rng, 1.0, true);
    const auto x = random_vector(3, rng, -2.0, 2.0);
    const std::vector<double> up{1.0};
    const auto g = grad_params(net, x, up).values;
    const std::vector<double> theta(net.params().begin(), net.params().end());
    auto f = [&](const std::vector<double>& t) { return forward(net, t, x)[0]; };
    for (std::size_t i = 0; i < theta.size(); ++i, ++coords) {
      worst = std::max(worst, rel_err(g[i], central_diff(f, theta, i)));
    }
    const Eigen::MatrixXd j = grad_input(net, x);
    auto fx = [&](const std::vector<double>& xx) { return forward(net, xx)[0]; };
    for (std::size_t i = 0; i < 3; ++i, ++coords) {
      worst = std::max(worst, rel_err(j(0, static_cast<Eigen::Index>(i)), central_diff(fx, x, i)));
    }
  }
  report(3, worst < kGradRelTol,
         fmt("max rel err %.3g < %.0e over %zu coordinates", worst, kGradRelTol, coords));
}

// ---------------------------------------------------------------- 4

void prior_normalization() {
  const PriorSpec s{2.0, 1.0};
  const std::size_t n = 200000;
  const double lo = -10.0;
  const double h = 20.0 / static_cast<double>(n);
  double mass = 0.5 * (std::exp(prior_log_density(s, -10.0)) + std::exp(prior_log_density(s, 10.0)));
  for (std::size_t i = 1; i < n; ++i) mass += std::exp(prior_log_density(s, lo + h * static_cast<double>(i)));
  mass *= h;
  Rng rng(4);
  const auto theta = random_vector(1000, rng, -10.0, 10.0);
  const auto score = prior_score(s, theta);
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) worst = std::max(worst, std::abs(score[i] + theta[i]));
  report(4, std::abs(mass - 1.0) < kQuadratureTol && worst < kGaussianScoreTol,
         fmt("|mass-1| %.3g < %.0e, max|score+theta| %.3g < %.0e", std::abs(mass - 1.0),
             kQuadratureTol, worst, kGaussianScoreTol));
}

// ---------------------------------------------------------------- 5

double propagated_prune_bound(const LayeredNet& net, std::span<const double> x, double eps) {
  ForwardCache cache;
  forward(net, net.params(), x, cache);
  double b = 0.0;
  for (std::size_t k = 0; k < net.num_links(); ++k) {
    double row_sum = 0.0;
    for (std::size_t i = 0; i < net.widths()[k + 1]; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < net.widths()[k]; ++j) s += std::abs(net.weight(k, i, j));
      row_sum = std::max(row_sum, s);
    }
    double amax = 0.0;
    for (double a : cache.post[k]) amax = std::max(amax, std::abs(a));
    b = row_sum * b + eps * static_cast<double>(net.widths()[k]) * amax;
  }
  return b;
}

void condensation() {
  const LayeredNet shape = LayeredNet::softplus_chain({3, 8, 8, 1}, {false, true, true});
  Ensemble e = initialize_network_ensemble(shape, 8, 55);
  Rng rng(56);
  for (auto& p : e.particles) {
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double u = uniform01(rng);
      if (u < 0.2) p.values[i] = 0.0;
      else if (u < 0.5) p.values[i] = shape.is_nonneg_param(i) ? 9e-4 * uniform01(rng) : 1.8e-3 * (uniform01(rng) - 0.5);
    }
    // Keep one supra-threshold input per hidden node so that edge pruning,
    // not node removal, is what the fan-in bound measures.
    LayeredNet net = shape.with_params(p.values);
    for (std::size_t k = 0; k + 1 < net.num_links(); ++k) {
      for (std::size_t i = 0; i < net.widths()[k + 1]; ++i) net.weight(k, i, 0) = 0.5;
    }
    std::copy(net.params().begin(), net.params().end(), p.values.begin());
  }

  const Ensemble c0 = condense(e, 0.0);
  double preserve = 0.0;
  const Ensemble c1 = condense(e, kPruneEps);
  bool bounded = true;
  double worst_ratio = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto x = random_vector(3, rng, -3.0, 3.0);
    for (std::size_t a = 0; a < e.size(); ++a) {
      const double y = forward(shape, e.particles[a].values, x)[0];
      preserve = std::max(preserve, std::abs(forward(*c0.shape, c0.particles[a].values, x)[0] - y));
      const double d = std::abs(forward(*c1.shape, c1.particles[a].values, x)[0] - y);
      const double bound = propagated_prune_bound(shape.with_params(e.particles[a].values), x, kPruneEps);
      bounded &= d <= bound + kPreserveTol;
      worst_ratio = std::max(worst_ratio, d / bound);
    }
  }
  bool idempotent = true;
  for (const Ensemble* c : {&c0, &c1}) {
    const double eps = c == &c0 ? 0.0 : kPruneEps;
    const Ensemble again = condense(*c, eps);
    idempotent &= again.shape->widths() == c->shape->widths();
    for (std::size_t a = 0; a < c->size(); ++a) idempotent &= again.particles[a].values == c->particles[a].values;
  }
  const double n_e = mean_active_params(e, 0.0);
  const double n_0 = mean_active_params(c0, 0.0);
  const double n_1 = mean_active_params(c1, 0.0);
  const bool monotone = n_0 <= n_e && n_1 <= n_0 && n_1 < n_e;
  report(5, preserve <= kPreserveTol && idempotent && monotone && bounded,
         fmt("eps=0 max output change %.3g <= %.0e; idempotent %s; active %.1f -> %.1f (eps=0) -> "
             "%.1f (eps=%.0e); max change/bound %.3g <= 1",
             preserve, kPreserveTol, idempotent ? "yes" : "no", n_e, n_0, n_1, kPruneEps,
             worst_ratio));
}

// ---------------------------------------------------------------- 6

Mat3 random_strain(Rng& rng) {
  Mat3 F;
  do {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) F(i, j) = (i == j) + uniform(rng, -0.2, 0.2);
    }
  } while (F.determinant() <= 0.0);
  return green_lagrange(F);
}

double cycle_work(const InvariantPotential& p, const Mat3& A, const Mat3& B) {
  const int steps = 10000;
  const double dt = 2.0 * std::numbers::pi / steps;
  double w = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double t = (k + 0.5) * dt;
    const Mat3 E = A * std::cos(t) + B * std::sin(t);
    const Mat3 Ed = -A * std::sin(t) + B * std::cos(t);
    w += stress_from_potential(p, E).cwiseProduct(Ed).sum() * dt;
  }
  return w;
}

void zero_stress_reference() {
  Rng rng(66);
  double s0 = 0.0;
  for (int k = 0; k < 100; ++k) {
    const LayeredNet net = random_net({3, 30, 30, 1}, rng, 0.5, false, {false, true, true});
    const NetPotential phi(net, net.params());
    s0 = std::max(s0, stress_from_potential(phi, Mat3::Zero()).norm());
  }
  const TruthPotential truth({}, false);
  double fd = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Mat3 E = random_strain(rng);
    const Mat3 S = stress_from_potential(truth, E);
    const double h = 1e-4;
    for (int i = 0; i < 3; ++i) {
      for (int j = i; j < 3; ++j) {
        Mat3 dir = Mat3::Zero();
        dir(i, j) = dir(j, i) = 1.0;
        auto psi = [&](const Mat3& e) {
          const Invariants v = invariants(e);
          return truth_potential({}, v.i1, v.i2, v.i3);
        };
        double d = (-psi(E + 2 * h * dir) + 8 * psi(E + h * dir) - 8 * psi(E - h * dir) +
                    psi(E - 2 * h * dir)) /
                   (12.0 * h);
        if (i != j) d *= 0.5;
        fd = std::max(fd, rel_err(S(i, j), d, 1e-3));
      }
    }
  }
  const Mat3 A = 0.5 * random_strain(rng);
  const Mat3 B = 0.5 * random_strain(rng);
  const LayeredNet net = random_net({3, 30, 30, 1}, rng, 0.5, false, {false, true, true});
  const NetPotential phi(net, net.params());
  const double cyc = std::max(std::abs(cycle_work(truth, A, B)), std::abs(cycle_work(phi, A, B)));
  report(6, s0 < kStressFreeTol && fd < kTruthFdTol && cyc < kCycleTol,
         fmt("max |S(0)| %.3g < %.0e over 100 nets; truth FD rel err %.3g < %.0e; cycle work %.3g < %.0e",
             s0, kStressFreeTol, fd, kTruthFdTol, cyc, kCycleTol));
}

// ---------------------------------------------------------------- 7-11

struct Hyper {
  HyperelasticResult r;
  double seconds = 0.0;
};

Hyper hyper(const fs::path& root, const std::string& name, const std::function<void(RunConfig&)>& edit) {
  RunConfig c = default_config("hyperelastic");
  edit(c);
  const auto t0 = std::chrono::steady_clock::now();
  Hyper h{run_hyperelastic(c, root / name), 0.0};
  h.seconds = seconds_since(t0);
  std::printf("  run %-16s active %6.1f  W1 %9.4f  W1(E=0) %.2g  iterations %zu  %.0fs\n", name.c_str(),
              h.r.active_params, h.r.w1_sum, h.r.reference_w1, h.r.ensemble.iteration, h.seconds);
  std::fflush(stdout);
  return h;
}

void hyperelastic_suite(const fs::path& root) {
  const Hyper base = hyper(root, "base", [](RunConfig&) {});
  {
    const auto& w = base.r.stage_w1;
    const std::size_t n = w.size();
    const bool finite = std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); });
    const bool decreasing = n >= 3 && w[n - 1] < w[n - 2] && w[n - 2] < w[n - 3];
    report(7,
           base.r.active_params < kMaxActive && finite && decreasing &&
               base.r.ensemble.iteration <= kMaxIters && base.seconds < kHyperSeconds,
           fmt("active %.1f < %.0f; stage W1 ... %.4g, %.4g, %.4g (finite, decreasing); %zu <= %zu "
               "iterations; %.0fs",
               base.r.active_params, kMaxActive, n >= 3 ? w[n - 3] : NAN, n >= 2 ? w[n - 2] : NAN,
               n >= 1 ? w[n - 1] : NAN, base.r.ensemble.iteration, kMaxIters, base.seconds));
  }

  const Hyper a025 = hyper(root, "alpha_0.25", [](RunConfig& c) { c.svgd.prior.alpha = 0.25; });
  const Hyper a1 = hyper(root, "alpha_1", [](RunConfig& c) { c.svgd.prior.alpha = 1.0; });
  const Hyper a2 = hyper(root, "alpha_2", [](RunConfig& c) { c.svgd.prior.alpha = 2.0; });
  report(8, a025.r.active_params <= a1.r.active_params && a1.r.active_params < a2.r.active_params,
         fmt("active %.1f (0.25) <= %.1f (1) < %.1f (2)", a025.r.active_params, a1.r.active_params,
             a2.r.active_params));

  const Hyper n0 = hyper(root, "noise_0", [](RunConfig& c) { c.data.noise = 0.0; });
  const Hyper n2 = hyper(root, "noise_0.2", [](RunConfig& c) { c.data.noise = 0.2; });
  const double ref = std::max({n0.r.reference_w1, base.r.reference_w1, n2.r.reference_w1});
  report(9, n0.r.w1_sum < base.r.w1_sum && base.r.w1_sum < n2.r.w1_sum && ref < kReferenceW1Tol,
         fmt("W1 %.4g (0) < %.4g (0.1) < %.4g (0.2); W1 at E=0 %.3g < %.0e", n0.r.w1_sum,
             base.r.w1_sum, n2.r.w1_sum, ref, kReferenceW1Tol));

  const Hyper l001 = hyper(root, "lambda_0.01", [](RunConfig& c) { c.svgd.prior.lambda = 0.01; });
  const Hyper l01 = hyper(root, "lambda_0.1", [](RunConfig& c) { c.svgd.prior.lambda = 0.1; });
  const Hyper ad = hyper(root, "adaptive", [](RunConfig& c) {
    c.svgd.prior.lambda = 0.01;
    c.svgd.schedule = PenaltySchedule::kAdaptive;
  });
  {
    const double best = std::min({l001.r.w1_sum, base.r.w1_sum, l01.r.w1_sum});
    const double worst = std::max({l001.r.active_params, base.r.active_params, l01.r.active_params});
    std::string traj;
    for (double l : ad.r.report.lambda_trajectory) traj += fmt("%g ", l);
    report(10, ad.r.w1_sum <= kAdaptiveW1Factor * best && ad.r.active_params <= worst,
           fmt("adaptive W1 %.4g <= %.1f x %.4g; active %.1f <= %.1f; lambda path %s", ad.r.w1_sum,
               kAdaptiveW1Factor, best, ad.r.active_params, worst, traj.c_str()));
  }

  // Determinism: identical configs into fresh directories.
  const Hyper again = hyper(root, "base_rerun", [](RunConfig&) {});
  RunConfig m = default_config("mvn");
  run_mvn(m, root / "mvn_rerun");
  const bool same_h = slurp(root / "base" / "metrics.csv") == slurp(root / "base_rerun" / "metrics.csv") &&
                      !slurp(root / "base" / "metrics.csv").empty();
  const bool same_m = slurp(root / "mvn" / "metrics.csv") == slurp(root / "mvn_rerun" / "metrics.csv") &&
                      !slurp(root / "mvn" / "metrics.csv").empty();
  report(11, same_h && same_m && again.r.w1_sum == base.r.w1_sum,
         fmt("metrics.csv byte-identical: hyperelastic %s, mvn %s", same_h ? "yes" : "no",
             same_m ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");
  fs::remove_all(root);
  fs::create_directories(root);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    mvn_recovery(root);
    mvn_tradeoff();
    gradients();
    prior_normalization();
    condensation();
    zero_stress_reference();
    hyperelastic_suite(root);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d failing criteria, %.0fs total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
