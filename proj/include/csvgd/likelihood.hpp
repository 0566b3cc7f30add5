#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "csvgd/net.hpp"

namespace csvgd {

/// Input-output pairs. Rows of inputs and outputs align.
struct Dataset {
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> outputs;

  std::size_t size() const { return inputs.size(); }
};

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
/// The first n_inputs columns are inputs, the rest outputs.
Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t n_inputs);

/// Likelihood side of the posterior. The network shape is passed with every
/// call because condensation changes it between stages; targets that are not
/// networks ignore it.
class Target {
 public:
  virtual ~Target() = default;

  /// Adds grad_theta log pi(D | theta) into score and returns the data misfit
  /// (mean squared error for regression targets).
  virtual double accumulate_score(std::span<const double> theta, const LayeredNet* shape,
                                  std::span<double> score) const = 0;
  virtual double misfit(std::span<const double> theta, const LayeredNet* shape) const = 0;
};

/// Gaussian target with mean mu and precision P.
class MvnTarget final : public Target {
 public:
  MvnTarget(Eigen::VectorXd mean, Eigen::MatrixXd precision);

  /// mu = (1, 2, 3) with the weakly determined third coordinate.
  static MvnTarget illustrative();

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& precision() const { return precision_; }

  double accumulate_score(std::span<const double> theta, const LayeredNet* shape,
                          std::span<double> score) const override;
  /// 0.5 (theta - mu)^T P (theta - mu).
  double misfit(std::span<const double> theta, const LayeredNet* shape) const override;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd precision_;
};

/// -P (theta - mu).
Eigen::VectorXd mvn_score(const MvnTarget& target, std::span<const double> theta);

/// Pushforward map yhat(x; theta) of a regression problem.
class RegressionModel {
 public:
  virtual ~RegressionModel() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::vector<double> predict(const LayeredNet& shape, std::span<const double> theta,
                                      std::span<const double> x) const = 0;
  /// Adds upstream^T d yhat(x) / d theta into grad.
  virtual void accumulate_vjp(const LayeredNet& shape, std::span<const double> theta,
                              std::span<const double> x, std::span<const double> upstream,
                              std::span<double> grad) const = 0;

  /// Adds sum_i (y_i - yhat_i)^T d yhat_i / d theta / noise_var into grad and
  /// returns the sum of squared residuals. Models with shared intermediate
  /// state across samples override this.
  virtual double accumulate_data_score(const LayeredNet& shape, std::span<const double> theta,
                                       const Dataset& data, double noise_var,
                                       std::span<double> grad) const;
};

/// The network output itself is the prediction.
class NetRegressionModel final : public RegressionModel {
 public:
  NetRegressionModel(std::size_t input_dim, std::size_t output_dim)
      : input_dim_(input_dim), output_dim_(output_dim) {}

  std::size_t input_dim() const override { return input_dim_; }
  std::size_t output_dim() const override { return output_dim_; }
  std::vector<double> predict(const LayeredNet& shape, std::span<const double> theta,
                              std::span<const double> x) const override;
  void accumulate_vjp(const LayeredNet& shape, std::span<const double> theta,
                      std::span<const double> x, std::span<const double> upstream,
                      std::span<double> grad) const override;

 private:
  std::size_t input_dim_;
  std::size_t output_dim_;
};

/// Gaussian-noise regression: log pi(D | theta) = -|y - yhat|^2 / (2 sigma^2).
class RegressionTarget final : public Target {
 public:
  RegressionTarget(Dataset data, double noise_var, std::shared_ptr<const RegressionModel> model);

  const Dataset& data() const { return data_; }
  double noise_var() const { return noise_var_; }
  const RegressionModel& model() const { return *model_; }

  double accumulate_score(std::span<const double> theta, const LayeredNet* shape,
                          std::span<double> score) const override;
  double misfit(std::span<const double> theta, const LayeredNet* shape) const override;

  double sum_squared_residuals(const LayeredNet& shape, std::span<const double> theta) const;

 private:
  Dataset data_;
  double noise_var_;
  std::shared_ptr<const RegressionModel> model_;
};

double regression_log_likelihood(const RegressionTarget& target, const LayeredNet& shape,
                                 std::span<const double> theta);
std::vector<double> regression_score(const RegressionTarget& target, const LayeredNet& shape,
                                     std::span<const double> theta);

}  // namespace csvgd
