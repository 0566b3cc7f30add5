#include "csvgd/likelihood.hpp"

#include <fstream>

#include "csvgd/csv.hpp"
#include "csvgd/error.hpp"

namespace csvgd {

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::vector<std::string> header = data.input_names;
  header.insert(header.end(), data.output_names.begin(), data.output_names.end());
  CsvWriter csv(path, header);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.inputs[i]) csv << v;
    for (double v : data.outputs[i]) csv << v;
    csv.end_row();
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t n_inputs) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset " + path.string() + " is empty");
  const auto header = split_csv_line(line);
  if (header.size() <= n_inputs) throw FormatError("dataset has no output columns");
  Dataset data;
  data.input_names.assign(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(n_inputs));
  data.output_names.assign(header.begin() + static_cast<std::ptrdiff_t>(n_inputs), header.end());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("dataset row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " columns, expected " +
                        std::to_string(header.size()));
    }
    std::vector<double> x, y;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      (c < n_inputs ? x : y).push_back(parse_double(cells[c]));
    }
    data.inputs.push_back(std::move(x));
    data.outputs.push_back(std::move(y));
  }
  return data;
}

MvnTarget::MvnTarget(Eigen::VectorXd mean, Eigen::MatrixXd precision)
    : mean_(std::move(mean)), precision_(std::move(precision)) {
  if (precision_.rows() != mean_.size() || precision_.cols() != mean_.size()) {
    throw ShapeError("precision and mean dimensions disagree");
  }
  if (!precision_.isApprox(precision_.transpose(), 0.0)) {
    throw DomainError("precision matrix must be symmetric");
  }
}

MvnTarget MvnTarget::illustrative() {
  Eigen::Vector3d mu(1.0, 2.0, 3.0);
  Eigen::Matrix3d p;
  p << 2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0025;
  return MvnTarget(mu, p);
}

Eigen::VectorXd mvn_score(const MvnTarget& target, std::span<const double> theta) {
  if (static_cast<Eigen::Index>(theta.size()) != target.mean().size()) {
    throw ShapeError("theta dimension does not match the MVN target");
  }
  const Eigen::Map<const Eigen::VectorXd> t(theta.data(), static_cast<Eigen::Index>(theta.size()));
  return -(target.precision() * (t - target.mean()));
}

double MvnTarget::accumulate_score(std::span<const double> theta, const LayeredNet*,
                                   std::span<double> score) const {
  const Eigen::VectorXd s = mvn_score(*this, theta);
  if (score.size() != theta.size()) throw ShapeError("score buffer has wrong size");
  for (std::size_t i = 0; i < theta.size(); ++i) score[i] += s[static_cast<Eigen::Index>(i)];
  return misfit(theta, nullptr);
}

double MvnTarget::misfit(std::span<const double> theta, const LayeredNet*) const {
  if (static_cast<Eigen::Index>(theta.size()) != mean_.size()) {
    throw ShapeError("theta dimension does not match the MVN target");
  }
  const Eigen::Map<const Eigen::VectorXd> t(theta.data(), static_cast<Eigen::Index>(theta.size()));
  const Eigen::VectorXd d = t - mean_;
  return 0.5 * d.dot(precision_ * d);
}

double RegressionModel::accumulate_data_score(const LayeredNet& shape,
                                              std::span<const double> theta, const Dataset& data,
                                              double noise_var, std::span<double> grad) const {
  double sse = 0.0;
  std::vector<double> upstream(output_dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pred = predict(shape, theta, data.inputs[i]);
    for (std::size_t c = 0; c < pred.size(); ++c) {
      const double r = data.outputs[i][c] - pred[c];
      sse += r * r;
      upstream[c] = r / noise_var;
    }
    accumulate_vjp(shape, theta, data.inputs[i], upstream, grad);
  }
  return sse;
}

std::vector<double> NetRegressionModel::predict(const LayeredNet& shape,
                                                std::span<const double> theta,
                                                std::span<const double> x) const {
  return forward(shape, theta, x);
}

void NetRegressionModel::accumulate_vjp(const LayeredNet& shape, std::span<const double> theta,
                                        std::span<const double> x,
                                        std::span<const double> upstream,
                                        std::span<double> grad) const {
  ForwardCache cache;
  forward(shape, theta, x, cache);
  accumulate_grad_params(shape, theta, cache, upstream, grad);
}

RegressionTarget::RegressionTarget(Dataset data, double noise_var,
                                   std::shared_ptr<const RegressionModel> model)
    : data_(std::move(data)), noise_var_(noise_var), model_(std::move(model)) {
  if (!(noise_var_ > 0.0)) throw DomainError("noise variance must be positive");
  if (data_.size() == 0) throw DomainError("regression dataset is empty");
  if (!model_) throw DomainError("regression target needs a model");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_.inputs[i].size() != model_->input_dim() ||
        data_.outputs[i].size() != model_->output_dim()) {
      throw ShapeError("dataset row " + std::to_string(i) + " does not match the model");
    }
  }
}

double RegressionTarget::accumulate_score(std::span<const double> theta, const LayeredNet* shape,
                                          std::span<double> score) const {
  if (shape == nullptr) throw ShapeError("regression target needs a network shape");
  const double sse = model_->accumulate_data_score(*shape, theta, data_, noise_var_, score);
  return sse / static_cast<double>(data_.size() * model_->output_dim());
}

double RegressionTarget::sum_squared_residuals(const LayeredNet& shape,
                                               std::span<const double> theta) const {
  double sse = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto pred = model_->predict(shape, theta, data_.inputs[i]);
    for (std::size_t c = 0; c < pred.size(); ++c) {
      const double r = data_.outputs[i][c] - pred[c];
      sse += r * r;
    }
  }
  return sse;
}

double RegressionTarget::misfit(std::span<const double> theta, const LayeredNet* shape) const {
  if (shape == nullptr) throw ShapeError("regression target needs a network shape");
  return sum_squared_residuals(*shape, theta) /
         static_cast<double>(data_.size() * model_->output_dim());
}

double regression_log_likelihood(const RegressionTarget& target, const LayeredNet& shape,
                                 std::span<const double> theta) {
  return -target.sum_squared_residuals(shape, theta) / (2.0 * target.noise_var());
}

std::vector<double> regression_score(const RegressionTarget& target, const LayeredNet& shape,
                                     std::span<const double> theta) {
  std::vector<double> g(theta.size(), 0.0);
  target.accumulate_score(theta, &shape, g);
  return g;
}

}  // namespace csvgd
