#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include <Eigen/Geometry>

#include "csvgd/error.hpp"
#include "csvgd/likelihood.hpp"
#include "csvgd/mechanics.hpp"
#include "support.hpp"

using namespace csvgd;
using csvgd::testing::central_diff;
using csvgd::testing::random_net;
using csvgd::testing::random_vector;
using csvgd::testing::rel_err;

namespace {

Mat3 random_strain(Rng& rng, double delta = 0.2) {
  Mat3 F;
  do {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) F(i, j) = (i == j) + uniform(rng, -delta, delta);
    }
  } while (F.determinant() <= 0.0);
  return green_lagrange(F);
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(standard_normal(rng), standard_normal(rng), standard_normal(rng),
                       standard_normal(rng));
  return q.normalized().toRotationMatrix();
}

// ICNN-style potential net: unconstrained input link, nonneg hidden links.
LayeredNet icnn(Rng& rng, std::size_t width = 8) {
  return random_net({3, width, width, 1}, rng, 0.5, false, {false, true, true});
}

// Finite-difference stress of a scalar function of E: symmetric perturbation
// of (i, j) and (j, i) together, halved off the diagonal. Five-point stencil
// so that roundoff, not truncation, sets the floor.
template <class F>
Mat3 fd_stress(F&& phi, const Mat3& E) {
  const double h = 1e-4;
  Mat3 S;
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      Mat3 dir = Mat3::Zero();
      dir(i, j) = dir(j, i) = 1.0;
      const double d = (-phi(E + 2 * h * dir) + 8 * phi(E + h * dir) - 8 * phi(E - h * dir) +
                        phi(E - 2 * h * dir)) /
                       (12.0 * h);
      S(i, j) = S(j, i) = i == j ? d : 0.5 * d;
    }
  }
  return S;
}

double potential_of(const InvariantPotential& p, const Mat3& E) { return p.value(invariants(E)); }

// Stress power integrated over a closed ellipse E(t) = A cos t + B sin t.
double cycle_work(const InvariantPotential& p, const Mat3& A, const Mat3& B, int steps) {
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

Mat3 sym(const Mat3& m) { return 0.5 * (m + m.transpose()); }

struct ConstantPotential final : InvariantPotential {
  double value(const Invariants&) const override { return 4.2; }
  Eigen::Vector3d gradient(const Invariants&) const override { return Eigen::Vector3d::Zero(); }
};

struct FirstInvariant final : InvariantPotential {
  double value(const Invariants& i) const override { return i.i1; }
  Eigen::Vector3d gradient(const Invariants&) const override { return {1.0, 0.0, 0.0}; }
};

}  // namespace

TEST(Invariants, Examples) {
  const Invariants r = invariants(Mat3::Zero());
  EXPECT_EQ(r.i1, 3.0);
  EXPECT_EQ(r.i2, 3.0);
  EXPECT_EQ(r.i3, 1.0);
  const Mat3 E = 0.5 * (Eigen::Vector3d(4.0, 1.0, 1.0).asDiagonal().toDenseMatrix() - Mat3::Identity());
  const Invariants u = invariants(E);
  EXPECT_NEAR(u.i1, 6.0, 1e-15);
  EXPECT_NEAR(u.i2, 9.0, 1e-15);
  EXPECT_NEAR(u.i3, 4.0, 1e-15);
  Mat3 bad = Mat3::Zero();
  bad(0, 1) = 0.1;
  EXPECT_THROW(invariants(bad), DomainError);
}

TEST(Invariants, RotationInvariant) {
  Rng rng(31);
  for (int k = 0; k < 50; ++k) {
    const Mat3 E = random_strain(rng);
    const Mat3 Q = random_rotation(rng);
    const Invariants a = invariants(E);
    const Invariants b = invariants(sym(Q.transpose() * E * Q));
    EXPECT_NEAR(a.i1, b.i1, 1e-12);
    EXPECT_NEAR(a.i2, b.i2, 1e-12);
    EXPECT_NEAR(a.i3, b.i3, 1e-12);
  }
}

TEST(InvariantDerivatives, AtReference) {
  const auto d = invariant_derivatives(Mat3::Zero());
  EXPECT_EQ(d.d1, 2.0 * Mat3::Identity());
  EXPECT_EQ(d.d2, 4.0 * Mat3::Identity());
  EXPECT_EQ(d.d3, 2.0 * Mat3::Identity());
}

TEST(InvariantDerivatives, MatchFiniteDifferences) {
  Rng rng(32);
  for (int k = 0; k < 50; ++k) {
    const Mat3 E = random_strain(rng);
    const auto d = invariant_derivatives(E);
    const Mat3 f1 = fd_stress([](const Mat3& e) { return invariants(e).i1; }, E);
    const Mat3 f2 = fd_stress([](const Mat3& e) { return invariants(e).i2; }, E);
    const Mat3 f3 = fd_stress([](const Mat3& e) { return invariants(e).i3; }, E);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        EXPECT_LT(rel_err(d.d1(i, j), f1(i, j), 1e-3), 1e-6);
        EXPECT_LT(rel_err(d.d2(i, j), f2(i, j), 1e-3), 1e-6);
        EXPECT_LT(rel_err(d.d3(i, j), f3(i, j), 1e-3), 1e-6);
      }
    }
    EXPECT_LT((d.d3 - d.d3.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Truth, ReferenceValueAndLockup) {
  const TruthParams p;
  EXPECT_NEAR(truth_potential(p, 3.0, 3.0, 1.0), 0.75 * std::log(3.0), 1e-15);
  EXPECT_NEAR(truth_potential(p, 3.0, 3.0, 1.0), 0.82396, 1e-5);
  EXPECT_GT(truth_potential(p, 3.0 + p.jm * (1.0 - 1e-12), 3.0, 1.0), 1e3);
  EXPECT_THROW(truth_potential(p, 3.0 + p.jm, 3.0, 1.0), DomainError);
  EXPECT_THROW(truth_potential(p, 3.0, -1.0, 1.0), DomainError);
  EXPECT_THROW(truth_potential(p, 3.0, 3.0, 0.0), DomainError);
}

TEST(Truth, StressMatchesFiniteDifferences) {
  Rng rng(33);
  for (bool normalized : {false, true}) {
    const TruthPotential truth({}, normalized);
    for (int k = 0; k < 100; ++k) {
      const Mat3 E = random_strain(rng);
      const Mat3 S = stress_from_potential(truth, E);
      const Mat3 F = fd_stress([&](const Mat3& e) { return potential_of(truth, e); }, E);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) EXPECT_LT(rel_err(S(i, j), F(i, j), 1e-3), 1e-6);
      }
    }
  }
}

TEST(Truth, NormalizedIsStressFree) {
  const TruthPotential raw({}, false);
  const TruthPotential norm({}, true);
  EXPECT_GT(stress_from_potential(raw, Mat3::Zero()).norm(), 1.0);
  EXPECT_LT(stress_from_potential(norm, Mat3::Zero()).norm(), 1e-12);
  EXPECT_EQ(norm.value(kReferenceInvariants), 0.0);
}

TEST(Stress, SimplePotentials) {
  Rng rng(34);
  const Mat3 E = random_strain(rng);
  EXPECT_EQ(stress_from_potential(ConstantPotential{}, E), Mat3::Zero());
  EXPECT_EQ(stress_from_potential(FirstInvariant{}, E), 2.0 * Mat3::Identity());
}

TEST(Stress, ClosedCycleDoesNoWork) {
  Rng rng(35);
  const TruthPotential truth({}, true);
  for (int k = 0; k < 3; ++k) {
    const Mat3 A = 0.5 * sym(random_strain(rng));
    const Mat3 B = 0.5 * sym(random_strain(rng));
    EXPECT_LT(std::abs(cycle_work(truth, A, B, 10000)), 1e-6);
    const LayeredNet net = icnn(rng);
    const NetPotential phi(net, net.params());
    EXPECT_LT(std::abs(cycle_work(phi, A, B, 10000)), 1e-6);
  }
}

TEST(NetPotential, ZeroAtReferenceAndStressFree) {
  Rng rng(36);
  for (int k = 0; k < 100; ++k) {
    const LayeredNet net = icnn(rng, 30);
    EXPECT_EQ(normalized_nn_potential(net, 3.0, 3.0, 1.0), 0.0);
    const NetPotential phi(net, net.params());
    EXPECT_LT(stress_from_potential(phi, Mat3::Zero()).norm(), 1e-8);
    const Mat3 F = fd_stress([&](const Mat3& e) { return potential_of(phi, e); }, Mat3::Zero());
    EXPECT_LT(F.norm(), 1e-8);
    EXPECT_NEAR(phi.normalization(), stress_normalization(net, net.params()), 0.0);
  }
}

TEST(NetPotential, DiffersFromNetworkOnlyThroughI3) {
  Rng rng(37);
  const LayeredNet net = icnn(rng);
  const NetPotential phi(net, net.params());
  for (int k = 0; k < 20; ++k) {
    const Invariants inv = invariants(random_strain(rng));
    const double x[3] = {inv.i1, inv.i2, inv.i3};
    const Eigen::MatrixXd j = grad_input(net, x);
    const Eigen::Vector3d g = phi.gradient(inv);
    EXPECT_EQ(g[0], j(0, 0));
    EXPECT_EQ(g[1], j(0, 1));
  }
}

TEST(StressModel, PredictMatchesPotential) {
  Rng rng(38);
  const LayeredNet net = icnn(rng);
  const NetPotential phi(net, net.params());
  const StressModel model;
  for (int k = 0; k < 10; ++k) {
    const Mat3 E = random_strain(rng);
    const Voigt e = to_voigt(E);
    const auto s = model.predict(net, net.params(), e);
    const Voigt ref = to_voigt(stress_from_potential(phi, E));
    for (int c = 0; c < 6; ++c) EXPECT_NEAR(s[c], ref[c], 1e-12 * std::max(1.0, std::abs(ref[c])));
  }
}

TEST(StressModel, ScoreMatchesFiniteDifferences) {
  Rng rng(39);
  const LayeredNet net = icnn(rng, 5);
  Dataset d;
  for (int k = 0; k < 6; ++k) {
    const Voigt e = to_voigt(random_strain(rng));
    d.inputs.emplace_back(e.begin(), e.end());
    d.outputs.push_back(random_vector(6, rng));
  }
  const auto model = std::make_shared<StressModel>();
  const RegressionTarget target(d, 0.2, model);
  const std::vector<double> theta(net.params().begin(), net.params().end());
  const auto g = regression_score(target, net, theta);
  auto f = [&](const std::vector<double>& t) { return regression_log_likelihood(target, net, t); };
  for (std::size_t i = 0; i < theta.size(); ++i) {
    EXPECT_LT(rel_err(g[i], central_diff(f, theta, i)), 1e-5) << i;
  }
  // The per-sample vector-Jacobian product agrees with the batched score.
  std::vector<double> h(theta.size(), 0.0);
  for (std::size_t k = 0; k < d.size(); ++k) {
    const auto pred = model->predict(net, theta, d.inputs[k]);
    std::vector<double> up(6);
    for (int c = 0; c < 6; ++c) up[c] = (d.outputs[k][c] - pred[c]) / 0.2;
    model->accumulate_vjp(net, theta, d.inputs[k], up, h);
  }
  for (std::size_t i = 0; i < theta.size(); ++i) EXPECT_NEAR(h[i], g[i], 1e-10 * std::max(1.0, std::abs(g[i])));
}

TEST(Voigt, RoundTrip) {
  Rng rng(40);
  const Mat3 E = random_strain(rng);
  const Voigt v = to_voigt(E);
  EXPECT_EQ(v[3], E(1, 2));
  EXPECT_EQ(v[4], E(0, 2));
  EXPECT_EQ(v[5], E(0, 1));
  EXPECT_EQ(from_voigt(v), E);
  const std::vector<double> short_v{1.0};
  EXPECT_THROW(from_voigt(short_v), ShapeError);
}

TEST(Data, NoiselessOutputsAreTruth) {
  DataOptions o;
  o.n_train = 30;
  o.n_test = 11;
  o.seed = 5;
  const MechanicsData d = generate_data({}, o);
  const TruthPotential truth({}, true);
  ASSERT_EQ(d.train.size(), 30u);
  for (std::size_t k = 0; k < d.train.size(); ++k) {
    const Voigt s = to_voigt(stress_from_potential(truth, from_voigt(d.train.inputs[k])));
    for (int c = 0; c < 6; ++c) EXPECT_EQ(d.train.outputs[k][c], s[c]);
  }
  // 11 points on [-0.4, 0.4]: the middle one is the reference state.
  EXPECT_EQ(d.test_delta[5], 0.0);
  for (double e : d.test.inputs[5]) EXPECT_EQ(e, 0.0);
  for (double s : d.test.outputs[5]) EXPECT_LT(std::abs(s), 1e-12);
  EXPECT_EQ(d.test_delta.front(), -0.4);
  EXPECT_EQ(d.test_delta.back(), 0.4);
  EXPECT_EQ(uniaxial_path_deformation(0.0), Mat3::Identity());
}

TEST(Data, DeterministicAndNoisy) {
  DataOptions o;
  o.noise_level = 0.1;
  o.seed = 9;
  const MechanicsData a = generate_data({}, o);
  const MechanicsData b = generate_data({}, o);
  EXPECT_EQ(a.train.inputs, b.train.inputs);
  EXPECT_EQ(a.train.outputs, b.train.outputs);
  EXPECT_EQ(a.test.outputs, b.test.outputs);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.test.size(), 1000u);
  o.noise_level = 0.0;
  const MechanicsData c = generate_data({}, o);
  EXPECT_EQ(a.train.inputs, c.train.inputs);
  // Relative deviations have roughly the requested spread.
  double s2 = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < a.train.size(); ++k) {
    for (int j = 0; j < 6; ++j) {
      if (std::abs(c.train.outputs[k][j]) < 1e-3) continue;
      const double r = a.train.outputs[k][j] / c.train.outputs[k][j] - 1.0;
      s2 += r * r;
      ++n;
    }
  }
  EXPECT_NEAR(std::sqrt(s2 / static_cast<double>(n)), 0.1, 0.02);
  for (const auto& e : a.train.inputs) {
    EXPECT_GT(invariants(from_voigt(e)).i3, 0.0);
  }
  o.delta = -1.0;
  EXPECT_THROW(generate_data({}, o), DomainError);
}
