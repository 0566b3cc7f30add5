#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <memory>

#include "csvgd/error.hpp"
#include "csvgd/likelihood.hpp"
#include "support.hpp"

using namespace csvgd;
using csvgd::testing::central_diff;
using csvgd::testing::random_net;
using csvgd::testing::random_vector;
using csvgd::testing::rel_err;

namespace fs = std::filesystem;

namespace {

LayeredNet scalar_linear(double w) {
  LayeredNet net({1, 1}, {Activation::kIdentity}, {false}, false);
  net.weight(0, 0, 0) = w;
  return net;
}

RegressionTarget one_datum(double x, double y, double noise_var) {
  Dataset d{{"x"}, {"y"}, {{x}}, {{y}}};
  return RegressionTarget(d, noise_var, std::make_shared<NetRegressionModel>(1, 1));
}

}  // namespace

TEST(MvnScore, Examples) {
  const auto t = MvnTarget::illustrative();
  const std::vector<double> mu{1.0, 2.0, 3.0};
  EXPECT_EQ(mvn_score(t, mu).norm(), 0.0);
  const std::vector<double> a{2.0, 2.0, 3.0};
  const Eigen::VectorXd sa = mvn_score(t, a);
  EXPECT_EQ(sa(0), -2.0);
  EXPECT_EQ(sa(1), -1.0);
  EXPECT_EQ(sa(2), 0.0);
  const std::vector<double> b{1.0, 2.0, 4.0};
  const Eigen::VectorXd sb = mvn_score(t, b);
  EXPECT_EQ(sb(0), 0.0);
  EXPECT_EQ(sb(1), 0.0);
  EXPECT_NEAR(sb(2), -0.0025, 1e-18);
}

TEST(MvnScore, IsAffine) {
  const auto t = MvnTarget::illustrative();
  Rng rng(21);
  for (int k = 0; k < 20; ++k) {
    const auto x = random_vector(3, rng, -5, 5);
    const auto y = random_vector(3, rng, -5, 5);
    const double s = uniform(rng, -2.0, 2.0);
    std::vector<double> z(3);
    for (int i = 0; i < 3; ++i) z[i] = s * x[i] + (1.0 - s) * y[i];
    const Eigen::VectorXd lhs = mvn_score(t, z);
    const Eigen::VectorXd rhs = s * mvn_score(t, x) + (1.0 - s) * mvn_score(t, y);
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
  }
}

TEST(MvnTarget, ScoreAccumulatesAndMisfitMatches) {
  const auto t = MvnTarget::illustrative();
  const std::vector<double> th{0.0, 0.0, 0.0};
  std::vector<double> s{1.0, 1.0, 1.0};
  const double m = t.accumulate_score(th, nullptr, s);
  EXPECT_EQ(s[0], 1.0 + 4.0);
  EXPECT_EQ(s[1], 1.0 + 5.0);
  EXPECT_NEAR(s[2], 1.0 + 0.0075, 1e-15);
  EXPECT_NEAR(m, t.misfit(th, nullptr), 1e-15);
  EXPECT_NEAR(m, 0.5 * (2 + 8 + 2 * 2 * 1 * 1 + 0.0025 * 9), 1e-12);
}

TEST(MvnTarget, Validation) {
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 0.5, 0, 1;
  EXPECT_THROW(MvnTarget(Eigen::VectorXd::Zero(2), asym), DomainError);
  EXPECT_THROW(MvnTarget(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(2, 2)), ShapeError);
  const std::vector<double> th{0.0, 0.0};
  EXPECT_THROW(mvn_score(MvnTarget::illustrative(), th), ShapeError);
}

TEST(Regression, LogLikelihoodExamples) {
  const auto net = scalar_linear(1.0);
  const std::vector<double> theta{1.0};
  EXPECT_EQ(regression_log_likelihood(one_datum(1.0, 1.0, 1.0), net, theta), 0.0);
  EXPECT_EQ(regression_log_likelihood(one_datum(1.0, 3.0, 1.0), net, theta), -2.0);
  EXPECT_EQ(regression_log_likelihood(one_datum(1.0, 3.0, 2.0), net, theta), -1.0);
}

TEST(Regression, ScoreExamples) {
  const auto net = scalar_linear(0.0);
  const std::vector<double> perfect{2.0};
  for (double g : regression_score(one_datum(1.5, 3.0, 0.7), net, perfect)) EXPECT_EQ(g, 0.0);
  // y = theta a with a = 1.5, theta = 1, y_obs = 4: residual 2.5.
  const std::vector<double> theta{1.0};
  EXPECT_NEAR(regression_score(one_datum(1.5, 4.0, 0.5), net, theta)[0], 2.5 / 0.5 * 1.5, 1e-14);
}

TEST(Regression, ScoreMatchesFiniteDifferences) {
  Rng rng(22);
  const auto net = random_net({3, 5, 2}, rng, 1.0, true);
  Dataset d;
  for (int i = 0; i < 12; ++i) {
    d.inputs.push_back(random_vector(3, rng));
    d.outputs.push_back(random_vector(2, rng));
  }
  const RegressionTarget target(d, 0.3, std::make_shared<NetRegressionModel>(3, 2));
  const std::vector<double> theta(net.params().begin(), net.params().end());
  const auto g = regression_score(target, net, theta);
  auto f = [&](const std::vector<double>& t) { return regression_log_likelihood(target, net, t); };
  for (std::size_t i = 0; i < theta.size(); ++i) {
    EXPECT_LT(rel_err(g[i], central_diff(f, theta, i)), 1e-5) << i;
  }
  EXPECT_NEAR(target.misfit(theta, &net), target.sum_squared_residuals(net, theta) / 24.0, 1e-15);
}

TEST(Regression, Validation) {
  Dataset d{{"x"}, {"y"}, {{1.0}}, {{1.0}}};
  auto m = std::make_shared<NetRegressionModel>(1, 1);
  EXPECT_THROW(RegressionTarget(d, 0.0, m), DomainError);
  EXPECT_THROW(RegressionTarget(Dataset{}, 1.0, m), DomainError);
  EXPECT_THROW(RegressionTarget(d, 1.0, std::make_shared<NetRegressionModel>(2, 1)), ShapeError);
  const RegressionTarget t(d, 1.0, m);
  const std::vector<double> th{1.0};
  std::vector<double> s{0.0};
  EXPECT_THROW(t.accumulate_score(th, nullptr, s), ShapeError);
}

TEST(Dataset, CsvRoundTripIsExact) {
  Rng rng(23);
  Dataset d{{"a", "b"}, {"y"}, {}, {}};
  for (int i = 0; i < 5; ++i) {
    d.inputs.push_back(random_vector(2, rng));
    d.outputs.push_back({uniform01(rng) * 1e-17});
  }
  const fs::path p = fs::temp_directory_path() / "csvgd_dataset_roundtrip.csv";
  write_dataset_csv(d, p);
  const Dataset back = read_dataset_csv(p, 2);
  EXPECT_EQ(back.input_names, d.input_names);
  EXPECT_EQ(back.output_names, d.output_names);
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.outputs, d.outputs);
  {
    std::ofstream bad(p);
    bad << "a,b,y\n1,2\n";
  }
  EXPECT_THROW(read_dataset_csv(p, 2), FormatError);
  fs::remove(p);
  EXPECT_THROW(read_dataset_csv(p, 2), FormatError);
}
