#include "csvgd/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "csvgd/error.hpp"
#include "parallel.hpp"

namespace csvgd {

GaussianSummary summarize(const Ensemble& ensemble, std::span<const std::size_t> coords) {
  validate(ensemble);
  std::vector<std::size_t> idx(coords.begin(), coords.end());
  if (idx.empty()) {
    for (std::size_t p = 0; p < ensemble.dim(); ++p) idx.push_back(p);
  }
  const auto d = static_cast<Eigen::Index>(idx.size());
  const auto n = static_cast<Eigen::Index>(ensemble.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const std::size_t c = idx[static_cast<std::size_t>(j)];
      if (c >= ensemble.dim()) throw DomainError("coordinate " + std::to_string(c) + " out of range");
      x(a, j) = ensemble.particles[static_cast<std::size_t>(a)].values[c];
    }
  }
  GaussianSummary g;
  g.mean = x.colwise().mean().transpose();
  if (n < 2) {
    g.cov = Eigen::MatrixXd::Zero(d, d);
  } else {
    const Eigen::MatrixXd c = x.rowwise() - g.mean.transpose();
    g.cov = (c.transpose() * c) / static_cast<double>(n - 1);
  }
  return g;
}

GaussianSummary marginal(const GaussianSummary& g, std::span<const std::size_t> coords) {
  const auto d = static_cast<Eigen::Index>(coords.size());
  GaussianSummary m{Eigen::VectorXd(d), Eigen::MatrixXd(d, d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto ci = static_cast<Eigen::Index>(coords[static_cast<std::size_t>(i)]);
    if (ci >= g.mean.size()) throw DomainError("marginal coordinate out of range");
    m.mean(i) = g.mean(ci);
    for (Eigen::Index j = 0; j < d; ++j) {
      m.cov(i, j) = g.cov(ci, static_cast<Eigen::Index>(coords[static_cast<std::size_t>(j)]));
    }
  }
  return m;
}

namespace {

// log det of an SPD matrix via Cholesky.
double log_det(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw DomainError(std::string(what) + " is not positive definite after regularization");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

double bhattacharyya(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != a.mean.size() ||
      b.cov.rows() != b.mean.size() || a.cov.cols() != a.cov.rows() ||
      b.cov.cols() != b.cov.rows()) {
    throw ShapeError("Gaussian summaries differ in dimension");
  }
  const auto d = a.mean.size();
  const Eigen::MatrixXd jitter = kCovarianceJitter * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd sa = a.cov + jitter;
  const Eigen::MatrixXd sb = b.cov + jitter;
  const Eigen::MatrixXd avg = 0.5 * (sa + sb);
  Eigen::LLT<Eigen::MatrixXd> llt(avg);
  if (llt.info() != Eigen::Success) {
    throw DomainError("averaged covariance is singular after regularization");
  }
  const Eigen::VectorXd diff = a.mean - b.mean;
  const double quad = diff.dot(llt.solve(diff));
  return quad / 8.0 +
         0.5 * (log_det(avg, "averaged covariance") -
                0.5 * (log_det(sa, "covariance") + log_det(sb, "covariance")));
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("Wasserstein distance of an empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  if (x.size() == y.size()) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += std::abs(x[k] - y[k]);
    return s / static_cast<double>(x.size());
  }
  // Sweep the merged support; between consecutive points both CDFs are flat.
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double prev = std::min(x.front(), y.front());
  double total = 0.0;
  while (i < x.size() || j < y.size()) {
    const double next = (j >= y.size() || (i < x.size() && x[i] <= y[j])) ? x[i] : y[j];
    total += std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny) * (next - prev);
    while (i < x.size() && x[i] == next) ++i;
    while (j < y.size() && y[j] == next) ++j;
    prev = next;
  }
  return total;
}

double sparsity_l1(const Ensemble& ensemble, std::span<const std::size_t> coords) {
  validate(ensemble);
  double total = 0.0;
  for (const auto& p : ensemble.particles) {
    for (std::size_t c : coords) {
      if (c >= p.values.size()) throw DomainError("coordinate " + std::to_string(c) + " out of range");
      total += std::abs(p.values[c]);
    }
  }
  return total / static_cast<double>(ensemble.size());
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw DomainError("moving-average window must be positive");
  const std::size_t half = window / 2;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(values.size(), i + (window - half));
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += values[k];
    out[i] = s / static_cast<double>(hi - lo);
  }
  return out;
}

PushforwardW1 pushforward_w1(const Ensemble& ensemble, const RegressionModel& model,
                             const std::vector<std::vector<double>>& inputs,
                             const std::vector<std::vector<std::vector<double>>>& reference) {
  validate(ensemble);
  if (!ensemble.shape) throw ShapeError("pushforward needs a network ensemble");
  if (reference.size() != inputs.size()) throw ShapeError("one reference set per input is required");
  const std::size_t m = model.output_dim();
  PushforwardW1 out;
  out.per_point.assign(inputs.size(), 0.0);
  for (const auto& r : reference) {
    if (r.size() != m) throw ShapeError("reference component count mismatch");
  }
  detail::parallel_for(inputs.size(), [&](std::size_t i) {
    std::vector<std::vector<double>> samples(m);
    for (const auto& p : ensemble.particles) {
      const auto y = model.predict(*ensemble.shape, p.values, inputs[i]);
      for (std::size_t k = 0; k < m; ++k) samples[k].push_back(y[k]);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += wasserstein1(samples[k], reference[i][k]);
    out.per_point[i] = s / static_cast<double>(m);
  });
  for (double v : out.per_point) out.sum += v;
  return out;
}

std::vector<std::vector<std::vector<double>>> noisy_reference(
    const std::vector<std::vector<double>>& truth, double noise, std::size_t replicas, Rng& rng) {
  if (replicas == 0) throw DomainError("at least one reference replica is required");
  const std::size_t r = noise == 0.0 ? 1 : replicas;
  std::vector<std::vector<std::vector<double>>> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out[i].assign(truth[i].size(), std::vector<double>(r));
    for (std::size_t k = 0; k < truth[i].size(); ++k) {
      for (std::size_t q = 0; q < r; ++q) {
        out[i][k][q] = noise == 0.0 ? truth[i][k] : truth[i][k] * (1.0 + noise * standard_normal(rng));
      }
    }
  }
  return out;
}

}  // namespace csvgd
