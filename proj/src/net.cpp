#include "csvgd/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "csvgd/error.hpp"

namespace csvgd {

std::string to_string(Activation a) {
  return a == Activation::kSoftplus ? "softplus" : "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "softplus") return Activation::kSoftplus;
  if (s == "identity") return Activation::kIdentity;
  throw FormatError("unknown activation '" + s + "'");
}

std::size_t layout_size(const Layout& layout) {
  std::size_t n = 0;
  for (const auto& e : layout) n += e.rows * e.cols;
  return n;
}

LayeredNet::LayeredNet(std::vector<std::size_t> widths, std::vector<Activation> activations,
                       std::vector<bool> nonneg, bool with_bias)
    : widths_(std::move(widths)),
      activations_(std::move(activations)),
      nonneg_(std::move(nonneg)),
      with_bias_(with_bias) {
  if (widths_.size() < 2) throw ShapeError("network needs at least an input and output layer");
  if (activations_.size() != widths_.size() - 1 || nonneg_.size() != widths_.size() - 1) {
    throw ShapeError("activation and nonneg flags must have one entry per link");
  }
  if (widths_.front() == 0 || widths_.back() == 0) {
    throw ShapeError("input and output layers must be non-empty");
  }
  if (activations_.back() != Activation::kIdentity) {
    throw ShapeError("output activation must be the identity");
  }
  build_offsets();
  params_.assign(num_params_total_, 0.0);
}

void LayeredNet::build_offsets() {
  weight_offset_.resize(num_links());
  bias_offset_.resize(num_links());
  std::size_t off = 0;
  for (std::size_t k = 0; k < num_links(); ++k) {
    weight_offset_[k] = off;
    off += widths_[k + 1] * widths_[k];
    bias_offset_[k] = off;
    if (with_bias_) off += widths_[k + 1];
  }
  num_params_total_ = off;
}

LayeredNet LayeredNet::softplus_chain(std::vector<std::size_t> widths, std::vector<bool> nonneg,
                                      bool with_bias) {
  std::vector<Activation> acts(widths.size() - 1, Activation::kSoftplus);
  acts.back() = Activation::kIdentity;
  return LayeredNet(std::move(widths), std::move(acts), std::move(nonneg), with_bias);
}

bool LayeredNet::is_nonneg_param(std::size_t p) const {
  for (std::size_t k = 0; k < num_links(); ++k) {
    if (p >= weight_offset_[k] && p < bias_offset_[k]) return nonneg_[k];
  }
  return false;
}

bool LayeredNet::is_weight_param(std::size_t p) const {
  for (std::size_t k = 0; k < num_links(); ++k) {
    if (p >= weight_offset_[k] && p < bias_offset_[k]) return true;
  }
  return false;
}

Layout LayeredNet::layout() const {
  Layout out;
  for (std::size_t k = 0; k < num_links(); ++k) {
    out.push_back({"W" + std::to_string(k), widths_[k + 1], widths_[k]});
    if (with_bias_) out.push_back({"b" + std::to_string(k), widths_[k + 1], 1});
  }
  return out;
}

ParamVector LayeredNet::flatten() const { return {params_, layout()}; }

LayeredNet LayeredNet::with_params(std::span<const double> theta) const {
  if (theta.size() != params_.size()) {
    throw ShapeError("parameter vector has " + std::to_string(theta.size()) +
                     " entries, network expects " + std::to_string(params_.size()));
  }
  LayeredNet out = *this;
  std::copy(theta.begin(), theta.end(), out.params_.begin());
  return out;
}

bool LayeredNet::same_shape(const LayeredNet& other) const {
  return widths_ == other.widths_ && activations_ == other.activations_ &&
         nonneg_ == other.nonneg_ && with_bias_ == other.with_bias_;
}

LayeredNet unflatten(const LayeredNet& shape, const ParamVector& p) {
  if (p.layout != shape.layout()) throw ShapeError("parameter layout does not match network");
  return shape.with_params(p.values);
}

void validate(const LayeredNet& net) {
  if (net.activation(net.num_links() - 1) != Activation::kIdentity) {
    throw ShapeError("output activation must be the identity");
  }
  for (std::size_t k = 0; k < net.num_links(); ++k) {
    if (!net.nonneg(k)) continue;
    for (std::size_t i = 0; i < net.widths()[k + 1]; ++i) {
      for (std::size_t j = 0; j < net.widths()[k]; ++j) {
        if (net.weight(k, i, j) < 0.0) {
          std::ostringstream msg;
          msg << "negative weight in nonneg matrix W" << k << "(" << i << "," << j << ")";
          throw ShapeError(msg.str());
        }
      }
    }
  }
}

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void check_theta(const LayeredNet& shape, std::span<const double> theta) {
  if (theta.size() != shape.num_params()) {
    throw ShapeError("parameter vector has " + std::to_string(theta.size()) +
                     " entries, network expects " + std::to_string(shape.num_params()));
  }
}

// First and second derivative of the activation at z.
inline double act_d1(Activation a, double z) {
  return a == Activation::kSoftplus ? logistic(z) : 1.0;
}
inline double act_d2(Activation a, double z) {
  if (a == Activation::kIdentity) return 0.0;
  const double s = logistic(z);
  return s * (1.0 - s);
}

// Returns dL/d(pre) of every link given dL/dy. Also accumulates parameter
// gradients when grad is non-empty.
std::vector<std::vector<double>> backward(const LayeredNet& shape, std::span<const double> theta,
                                          const ForwardCache& cache,
                                          std::span<const double> upstream,
                                          std::span<double> grad,
                                          std::vector<double>* input_adjoint) {
  const auto& w = shape.widths();
  const std::size_t links = shape.num_links();
  std::vector<std::vector<double>> pre_adj(links);
  std::vector<double> post_adj(upstream.begin(), upstream.end());
  for (std::size_t kk = links; kk-- > 0;) {
    const std::size_t rows = w[kk + 1];
    const std::size_t cols = w[kk];
    auto& za = pre_adj[kk];
    za.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      za[i] = post_adj[i] * act_d1(shape.activation(kk), cache.pre[kk][i]);
    }
    const double* W = theta.data() + shape.weight_offset(kk);
    const auto& h = cache.post[kk];
    if (!grad.empty()) {
      double* gW = grad.data() + shape.weight_offset(kk);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) gW[i * cols + j] += za[i] * h[j];
      }
      if (shape.has_bias()) {
        double* gb = grad.data() + shape.bias_offset(kk);
        for (std::size_t i = 0; i < rows; ++i) gb[i] += za[i];
      }
    }
    if (kk == 0 && input_adjoint == nullptr) break;
    std::vector<double> next(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) next[j] += W[i * cols + j] * za[i];
    }
    post_adj = std::move(next);
  }
  if (input_adjoint != nullptr) *input_adjoint = std::move(post_adj);
  return pre_adj;
}

}  // namespace

void forward(const LayeredNet& shape, std::span<const double> theta, std::span<const double> x,
             ForwardCache& cache) {
  check_theta(shape, theta);
  const auto& w = shape.widths();
  if (x.size() != w.front()) {
    throw ShapeError("input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(w.front()));
  }
  const std::size_t links = shape.num_links();
  cache.pre.resize(links);
  cache.post.resize(links + 1);
  cache.post[0].assign(x.begin(), x.end());
  for (std::size_t k = 0; k < links; ++k) {
    const std::size_t rows = w[k + 1];
    const std::size_t cols = w[k];
    const double* W = theta.data() + shape.weight_offset(k);
    const auto& h = cache.post[k];
    auto& z = cache.pre[k];
    z.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = shape.has_bias() ? theta[shape.bias_offset(k) + i] : 0.0;
      const double* row = W + i * cols;
      for (std::size_t j = 0; j < cols; ++j) acc += row[j] * h[j];
      z[i] = acc;
    }
    auto& out = cache.post[k + 1];
    out.resize(rows);
    if (shape.activation(k) == Activation::kSoftplus) {
      for (std::size_t i = 0; i < rows; ++i) out[i] = softplus(z[i]);
    } else {
      out = z;
    }
  }
}

std::vector<double> forward(const LayeredNet& shape, std::span<const double> theta,
                            std::span<const double> x) {
  ForwardCache cache;
  forward(shape, theta, x, cache);
  return cache.post.back();
}

std::vector<double> forward(const LayeredNet& net, std::span<const double> x) {
  return forward(net, net.params(), x);
}

void accumulate_grad_params(const LayeredNet& shape, std::span<const double> theta,
                            const ForwardCache& cache, std::span<const double> upstream,
                            std::span<double> grad) {
  if (upstream.size() != shape.output_dim()) throw ShapeError("upstream has wrong dimension");
  if (grad.size() != shape.num_params()) throw ShapeError("gradient buffer has wrong size");
  backward(shape, theta, cache, upstream, grad, nullptr);
}

ParamVector grad_params(const LayeredNet& net, std::span<const double> x,
                        std::span<const double> upstream) {
  ForwardCache cache;
  forward(net, net.params(), x, cache);
  ParamVector out{std::vector<double>(net.num_params(), 0.0), net.layout()};
  accumulate_grad_params(net, net.params(), cache, upstream, out.values);
  return out;
}

std::vector<double> input_vjp(const LayeredNet& shape, std::span<const double> theta,
                              const ForwardCache& cache, std::span<const double> upstream) {
  if (upstream.size() != shape.output_dim()) throw ShapeError("upstream has wrong dimension");
  std::vector<double> adj;
  backward(shape, theta, cache, upstream, {}, &adj);
  return adj;
}

Eigen::MatrixXd grad_input(const LayeredNet& net, std::span<const double> x) {
  ForwardCache cache;
  forward(net, net.params(), x, cache);
  Eigen::MatrixXd jac(net.output_dim(), net.input_dim());
  std::vector<double> e(net.output_dim(), 0.0);
  for (std::size_t r = 0; r < net.output_dim(); ++r) {
    e.assign(net.output_dim(), 0.0);
    e[r] = 1.0;
    const auto row = input_vjp(net, net.params(), cache, e);
    for (std::size_t c = 0; c < row.size(); ++c) jac(r, c) = row[c];
  }
  return jac;
}

void accumulate_grad_params_directional(const LayeredNet& shape, std::span<const double> theta,
                                        const ForwardCache& cache,
                                        std::span<const double> direction,
                                        std::span<const double> upstream,
                                        std::span<double> grad) {
  check_theta(shape, theta);
  const auto& w = shape.widths();
  const std::size_t links = shape.num_links();
  if (direction.size() != w.front()) throw ShapeError("direction has wrong dimension");
  if (upstream.size() != w.back()) throw ShapeError("upstream has wrong dimension");
  if (grad.size() != shape.num_params()) throw ShapeError("gradient buffer has wrong size");

  // Tangent pass: tz[k] = d pre[k] / dt, th[k] = d post[k] / dt along x + t*direction.
  std::vector<std::vector<double>> tz(links);
  std::vector<std::vector<double>> th(links + 1);
  th[0].assign(direction.begin(), direction.end());
  for (std::size_t k = 0; k < links; ++k) {
    const std::size_t rows = w[k + 1];
    const std::size_t cols = w[k];
    const double* W = theta.data() + shape.weight_offset(k);
    tz[k].resize(rows);
    th[k + 1].resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      const double* row = W + i * cols;
      for (std::size_t j = 0; j < cols; ++j) acc += row[j] * th[k][j];
      tz[k][i] = acc;
      th[k + 1][i] = act_d1(shape.activation(k), cache.pre[k][i]) * acc;
    }
  }

  // Reverse through both passes. Seeds: adjoint of the output tangent is
  // upstream; the primal output does not enter the objective.
  std::vector<double> th_adj(upstream.begin(), upstream.end());
  std::vector<double> h_adj(w.back(), 0.0);
  std::vector<double> tz_adj;
  std::vector<double> z_adj;
  for (std::size_t kk = links; kk-- > 0;) {
    const std::size_t rows = w[kk + 1];
    const std::size_t cols = w[kk];
    const Activation act = shape.activation(kk);
    tz_adj.resize(rows);
    z_adj.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const double z = cache.pre[kk][i];
      const double d1 = act_d1(act, z);
      tz_adj[i] = th_adj[i] * d1;
      z_adj[i] = h_adj[i] * d1 + th_adj[i] * act_d2(act, z) * tz[kk][i];
    }
    const double* W = theta.data() + shape.weight_offset(kk);
    double* gW = grad.data() + shape.weight_offset(kk);
    const auto& h = cache.post[kk];
    const auto& t = th[kk];
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) gW[i * cols + j] += tz_adj[i] * t[j] + z_adj[i] * h[j];
    }
    if (shape.has_bias()) {
      double* gb = grad.data() + shape.bias_offset(kk);
      for (std::size_t i = 0; i < rows; ++i) gb[i] += z_adj[i];
    }
    if (kk == 0) break;
    std::vector<double> next_th(cols, 0.0);
    std::vector<double> next_h(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* row = W + i * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        next_th[j] += row[j] * tz_adj[i];
        next_h[j] += row[j] * z_adj[i];
      }
    }
    th_adj = std::move(next_th);
    h_adj = std::move(next_h);
  }
}

std::size_t param_count(std::span<const double> theta, double threshold) {
  return static_cast<std::size_t>(
      std::count_if(theta.begin(), theta.end(), [&](double v) { return std::abs(v) > threshold; }));
}

std::size_t param_count(const LayeredNet& net, double threshold) {
  return param_count(net.params(), threshold);
}

nlohmann::json to_json(const LayeredNet& net) {
  nlohmann::json j;
  j["layer_widths"] = net.widths();
  std::vector<std::string> acts;
  for (auto a : net.activations()) acts.push_back(to_string(a));
  j["activations"] = acts;
  j["nonneg_mask"] = net.nonneg_mask();
  j["has_bias"] = net.has_bias();
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t k = 0; k < net.num_links(); ++k) {
    const std::size_t n = net.widths()[k + 1] * net.widths()[k];
    auto first = net.params().begin() + static_cast<std::ptrdiff_t>(net.weight_offset(k));
    weights.push_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
    if (net.has_bias()) {
      auto b = net.params().begin() + static_cast<std::ptrdiff_t>(net.bias_offset(k));
      biases.push_back(
          std::vector<double>(b, b + static_cast<std::ptrdiff_t>(net.widths()[k + 1])));
    }
  }
  j["weights"] = weights;
  if (net.has_bias()) j["biases"] = biases;
  return j;
}

LayeredNet net_from_json(const nlohmann::json& j) {
  try {
    std::vector<Activation> acts;
    for (const auto& s : j.at("activations")) acts.push_back(activation_from_string(s));
    LayeredNet net(j.at("layer_widths").get<std::vector<std::size_t>>(), std::move(acts),
                   j.at("nonneg_mask").get<std::vector<bool>>(), j.at("has_bias").get<bool>());
    const auto& weights = j.at("weights");
    if (weights.size() != net.num_links()) throw FormatError("weights: wrong number of matrices");
    auto params = net.params();
    for (std::size_t k = 0; k < net.num_links(); ++k) {
      const auto w = weights[k].get<std::vector<double>>();
      if (w.size() != net.widths()[k + 1] * net.widths()[k]) {
        throw FormatError("weights: matrix " + std::to_string(k) + " has wrong size");
      }
      std::copy(w.begin(), w.end(), params.begin() + static_cast<std::ptrdiff_t>(net.weight_offset(k)));
      if (net.has_bias()) {
        const auto b = j.at("biases")[k].get<std::vector<double>>();
        if (b.size() != net.widths()[k + 1]) throw FormatError("biases: wrong size");
        std::copy(b.begin(), b.end(), params.begin() + static_cast<std::ptrdiff_t>(net.bias_offset(k)));
      }
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("malformed network: ") + e.what());
  }
}

}  // namespace csvgd
