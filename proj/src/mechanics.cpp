#include "csvgd/mechanics.hpp"

#include <Eigen/LU>
#include <cmath>

#include "csvgd/error.hpp"
#include "csvgd/random.hpp"

namespace csvgd {

namespace {

constexpr std::array<std::array<int, 2>, 6> kVoigtIndex = {
    {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};

constexpr double kReferenceWeights[3] = {2.0, 4.0, 2.0};

void check_symmetric(const Mat3& E) {
  const double scale = 1.0 + E.cwiseAbs().maxCoeff();
  if ((E - E.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError("strain tensor is not symmetric");
  }
}

void check_potential_net(const LayeredNet& shape) {
  if (shape.input_dim() != 3 || shape.output_dim() != 1) {
    throw ShapeError("energy network must map 3 invariants to a scalar");
  }
}

// dNN/dI at the given invariants, plus the forward cache for reuse.
Eigen::Vector3d net_gradient(const LayeredNet& shape, std::span<const double> theta,
                             const Invariants& inv, ForwardCache& cache) {
  const double x[3] = {inv.i1, inv.i2, inv.i3};
  forward(shape, theta, x, cache);
  const double one[1] = {1.0};
  const auto g = input_vjp(shape, theta, cache, one);
  return {g[0], g[1], g[2]};
}

// Everything the stress map needs at one strain state.
struct StrainPoint {
  Invariants inv;
  std::array<Voigt, 3> d;  // dI_i/dE in Voigt form
  double j = 1.0;
};

StrainPoint strain_point(std::span<const double> e_voigt) {
  const Mat3 E = from_voigt(e_voigt);
  StrainPoint p;
  p.inv = invariants(E);
  const auto d = invariant_derivatives(E);
  p.d = {to_voigt(d.d1), to_voigt(d.d2), to_voigt(d.d3)};
  p.j = std::sqrt(p.inv.i3);
  return p;
}

}  // namespace

Voigt to_voigt(const Mat3& m) {
  Voigt v{};
  for (std::size_t c = 0; c < 6; ++c) v[c] = m(kVoigtIndex[c][0], kVoigtIndex[c][1]);
  return v;
}

Mat3 from_voigt(std::span<const double> v) {
  if (v.size() != 6) throw ShapeError("Voigt vector must have 6 components");
  Mat3 m;
  for (std::size_t c = 0; c < 6; ++c) {
    m(kVoigtIndex[c][0], kVoigtIndex[c][1]) = v[c];
    m(kVoigtIndex[c][1], kVoigtIndex[c][0]) = v[c];
  }
  return m;
}

Mat3 green_lagrange(const Mat3& F) { return 0.5 * (F.transpose() * F - Mat3::Identity()); }

Invariants invariants(const Mat3& E) {
  check_symmetric(E);
  const Mat3 C = 2.0 * E + Mat3::Identity();
  const double tr = C.trace();
  return {tr, 0.5 * (tr * tr - (C * C).trace()), C.determinant()};
}

InvariantDerivatives invariant_derivatives(const Mat3& E) {
  const Invariants inv = invariants(E);
  if (!(inv.i3 > 0.0)) throw DomainError("det C must be positive");
  const Mat3 I = Mat3::Identity();
  const Mat3 C = 2.0 * E + I;
  Mat3 c_inv = C.inverse();
  c_inv = 0.5 * (c_inv + c_inv.transpose());
  return {2.0 * I, 2.0 * (inv.i1 * I - C), 2.0 * inv.i3 * c_inv};
}

Mat3 stress_from_potential(const InvariantPotential& phi, const Mat3& E) {
  const Invariants inv = invariants(E);
  const auto d = invariant_derivatives(E);
  const Eigen::Vector3d g = phi.gradient(inv);
  return g[0] * d.d1 + g[1] * d.d2 + g[2] * d.d3;
}

double truth_potential(const TruthParams& p, double i1, double i2, double i3) {
  if (!(p.jm > 0.0)) throw DomainError("locking stretch Jm must be positive");
  const double lock = 1.0 - (i1 - 3.0) / p.jm;
  if (!(lock > 0.0)) throw DomainError("I1 beyond the locking limit");
  if (!(i2 > 0.0) || !(i3 > 0.0)) throw DomainError("I2 and I3 must be positive");
  const double j = std::sqrt(i3);
  return -0.5 * p.theta1 * p.jm * std::log(lock) - p.theta2 * std::log(i2 / j) +
         p.theta3 * (0.5 * (j * j - 1.0) - std::log(j));
}

Eigen::Vector3d truth_potential_gradient(const TruthParams& p, const Invariants& inv) {
  const double lock = 1.0 - (inv.i1 - 3.0) / p.jm;
  if (!(lock > 0.0)) throw DomainError("I1 beyond the locking limit");
  if (!(inv.i2 > 0.0) || !(inv.i3 > 0.0)) throw DomainError("I2 and I3 must be positive");
  return {0.5 * p.theta1 / lock, -p.theta2 / inv.i2,
          0.5 * p.theta2 / inv.i3 + 0.5 * p.theta3 * (1.0 - 1.0 / inv.i3)};
}

TruthPotential::TruthPotential(TruthParams params, bool stress_free_reference)
    : params_(params), normalize_(stress_free_reference) {
  if (normalize_) {
    const auto g = truth_potential_gradient(params_, kReferenceInvariants);
    n_ = kReferenceWeights[0] * g[0] + kReferenceWeights[1] * g[1] + kReferenceWeights[2] * g[2];
    value_ref_ = truth_potential(params_, 3.0, 3.0, 1.0);
  }
}

double TruthPotential::value(const Invariants& inv) const {
  const double psi = truth_potential(params_, inv.i1, inv.i2, inv.i3);
  if (!normalize_) return psi;
  return psi - value_ref_ - n_ * (std::sqrt(inv.i3) - 1.0);
}

Eigen::Vector3d TruthPotential::gradient(const Invariants& inv) const {
  Eigen::Vector3d g = truth_potential_gradient(params_, inv);
  if (normalize_) g[2] -= 0.5 * n_ / std::sqrt(inv.i3);
  return g;
}

double stress_normalization(const LayeredNet& shape, std::span<const double> theta) {
  check_potential_net(shape);
  ForwardCache cache;
  const auto g = net_gradient(shape, theta, kReferenceInvariants, cache);
  return kReferenceWeights[0] * g[0] + kReferenceWeights[1] * g[1] + kReferenceWeights[2] * g[2];
}

NetPotential::NetPotential(const LayeredNet& shape, std::span<const double> theta)
    : shape_(shape), theta_(theta) {
  check_potential_net(shape_);
  ForwardCache cache;
  const auto g = net_gradient(shape_, theta_, kReferenceInvariants, cache);
  n_ = kReferenceWeights[0] * g[0] + kReferenceWeights[1] * g[1] + kReferenceWeights[2] * g[2];
  value_ref_ = cache.output()[0];
}

double NetPotential::value(const Invariants& inv) const {
  const double x[3] = {inv.i1, inv.i2, inv.i3};
  return forward(shape_, theta_, x)[0] - value_ref_ - n_ * (std::sqrt(inv.i3) - 1.0);
}

Eigen::Vector3d NetPotential::gradient(const Invariants& inv) const {
  ForwardCache cache;
  Eigen::Vector3d g = net_gradient(shape_, theta_, inv, cache);
  g[2] -= 0.5 * n_ / std::sqrt(inv.i3);
  return g;
}

double normalized_nn_potential(const LayeredNet& net, double i1, double i2, double i3) {
  return NetPotential(net, net.params()).value({i1, i2, i3});
}

std::vector<double> StressModel::predict(const LayeredNet& shape, std::span<const double> theta,
                                         std::span<const double> x) const {
  check_potential_net(shape);
  ForwardCache cache;
  const auto g_ref = net_gradient(shape, theta, kReferenceInvariants, cache);
  const double n = kReferenceWeights[0] * g_ref[0] + kReferenceWeights[1] * g_ref[1] +
                   kReferenceWeights[2] * g_ref[2];
  const StrainPoint p = strain_point(x);
  const auto g = net_gradient(shape, theta, p.inv, cache);
  std::vector<double> s(6);
  for (std::size_t c = 0; c < 6; ++c) {
    s[c] = g[0] * p.d[0][c] + g[1] * p.d[1][c] + (g[2] - 0.5 * n / p.j) * p.d[2][c];
  }
  return s;
}

void StressModel::accumulate_vjp(const LayeredNet& shape, std::span<const double> theta,
                                 std::span<const double> x, std::span<const double> upstream,
                                 std::span<double> grad) const {
  check_potential_net(shape);
  if (upstream.size() != 6) throw ShapeError("stress upstream must have 6 components");
  const StrainPoint p = strain_point(x);
  ForwardCache cache;
  const double xin[3] = {p.inv.i1, p.inv.i2, p.inv.i3};
  forward(shape, theta, xin, cache);
  double w[3] = {0.0, 0.0, 0.0};
  double w3_ref = 0.0;
  for (std::size_t c = 0; c < 6; ++c) {
    for (std::size_t i = 0; i < 3; ++i) w[i] += upstream[c] * p.d[i][c];
    w3_ref -= upstream[c] * p.d[2][c] * 0.5 / p.j;
  }
  const double one[1] = {1.0};
  accumulate_grad_params_directional(shape, theta, cache, w, one, grad);
  const double ref_in[3] = {3.0, 3.0, 1.0};
  forward(shape, theta, ref_in, cache);
  const double w_ref[3] = {w3_ref * kReferenceWeights[0], w3_ref * kReferenceWeights[1],
                           w3_ref * kReferenceWeights[2]};
  accumulate_grad_params_directional(shape, theta, cache, w_ref, one, grad);
}

double StressModel::accumulate_data_score(const LayeredNet& shape, std::span<const double> theta,
                                          const Dataset& data, double noise_var,
                                          std::span<double> grad) const {
  check_potential_net(shape);
  const double one[1] = {1.0};
  ForwardCache ref_cache;
  const auto g_ref = net_gradient(shape, theta, kReferenceInvariants, ref_cache);
  const double n = kReferenceWeights[0] * g_ref[0] + kReferenceWeights[1] * g_ref[1] +
                   kReferenceWeights[2] * g_ref[2];
  ForwardCache cache;
  double sse = 0.0;
  double w3_ref = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const StrainPoint p = strain_point(data.inputs[k]);
    const auto g = net_gradient(shape, theta, p.inv, cache);
    double w[3] = {0.0, 0.0, 0.0};
    for (std::size_t c = 0; c < 6; ++c) {
      const double s =
          g[0] * p.d[0][c] + g[1] * p.d[1][c] + (g[2] - 0.5 * n / p.j) * p.d[2][c];
      const double r = data.outputs[k][c] - s;
      sse += r * r;
      const double u = r / noise_var;
      for (std::size_t i = 0; i < 3; ++i) w[i] += u * p.d[i][c];
      w3_ref -= u * p.d[2][c] * 0.5 / p.j;
    }
    accumulate_grad_params_directional(shape, theta, cache, w, one, grad);
  }
  const double w_ref[3] = {w3_ref * kReferenceWeights[0], w3_ref * kReferenceWeights[1],
                           w3_ref * kReferenceWeights[2]};
  accumulate_grad_params_directional(shape, theta, ref_cache, w_ref, one, grad);
  return sse;
}

Mat3 uniaxial_path_deformation(double delta) {
  Mat3 F = Mat3::Zero();
  F(0, 0) = 1.0 + delta;
  F(1, 1) = std::sqrt(1.0 + delta);
  F(2, 2) = std::sqrt(1.0 + delta);
  return F;
}

MechanicsData generate_data(const TruthParams& params, const DataOptions& options) {
  if (options.delta < 0.0 || options.noise_level < 0.0) {
    throw DomainError("delta and noise level must be non-negative");
  }
  const TruthPotential truth(params, options.stress_free_reference);
  Rng rng(options.seed);
  MechanicsData out;
  const std::vector<std::string> e_names = {"E11", "E22", "E33", "E23", "E13", "E12"};
  const std::vector<std::string> s_names = {"S11", "S22", "S33", "S23", "S13", "S12"};
  out.train.input_names = out.test.input_names = e_names;
  out.train.output_names = out.test.output_names = s_names;

  double sum_sq = 0.0;
  for (std::size_t k = 0; k < options.n_train; ++k) {
    Mat3 F;
    int attempts = 0;
    do {
      if (++attempts > 100) throw DomainError("could not sample a deformation with det F > 0");
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          F(i, j) = (i == j ? 1.0 : 0.0) + uniform(rng, -options.delta, options.delta);
        }
      }
    } while (!(F.determinant() > 0.0));
    const Mat3 E = green_lagrange(F);
    const Voigt s = to_voigt(stress_from_potential(truth, E));
    std::vector<double> noisy(6);
    for (std::size_t c = 0; c < 6; ++c) {
      sum_sq += s[c] * s[c];
      noisy[c] = s[c] * (1.0 + options.noise_level * standard_normal(rng));
    }
    const Voigt e = to_voigt(E);
    out.train.inputs.emplace_back(e.begin(), e.end());
    out.train.outputs.push_back(std::move(noisy));
  }
  if (options.n_train > 0) {
    out.train_stress_rms = std::sqrt(sum_sq / static_cast<double>(6 * options.n_train));
  }

  for (std::size_t k = 0; k < options.n_test; ++k) {
    const double d = options.n_test == 1
                         ? 0.0
                         : -options.test_range + 2.0 * options.test_range * static_cast<double>(k) /
                                                     static_cast<double>(options.n_test - 1);
    const Mat3 E = green_lagrange(uniaxial_path_deformation(d));
    const Voigt e = to_voigt(E);
    const Voigt s = to_voigt(stress_from_potential(truth, E));
    out.test.inputs.emplace_back(e.begin(), e.end());
    out.test.outputs.emplace_back(s.begin(), s.end());
    out.test_delta.push_back(d);
  }
  return out;
}

}  // namespace csvgd
