#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace csvgd {

enum class Activation { kSoftplus, kIdentity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// One block of a flattened parameter vector.
struct LayoutEntry {
  std::string id;
  std::size_t rows = 0;
  std::size_t cols = 0;

  bool operator==(const LayoutEntry&) const = default;
};

using Layout = std::vector<LayoutEntry>;

std::size_t layout_size(const Layout& layout);

/// Flat view of every trainable value of one particle, with the block
/// structure needed to map it back onto a network.
struct ParamVector {
  std::vector<double> values;
  Layout layout;
};

/// Plain feed-forward chain y = W_L a(... a(W_0 x + b_0) ...) + b_L.
///
/// Layer k has widths()[k] nodes; link k maps layer k to layer k+1 through
/// the row-major matrix W_k (widths[k+1] x widths[k]) and optional bias b_k.
/// activation(k) is applied to the output of link k, and the last link is
/// always the identity. Parameters live in one contiguous buffer ordered
/// W_0, b_0, W_1, b_1, ...
class LayeredNet {
 public:
  LayeredNet() = default;
  LayeredNet(std::vector<std::size_t> widths, std::vector<Activation> activations,
             std::vector<bool> nonneg, bool with_bias);

  /// Softplus hidden layers, identity output, every weight zero.
  static LayeredNet softplus_chain(std::vector<std::size_t> widths,
                                   std::vector<bool> nonneg, bool with_bias = false);

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t num_links() const { return activations_.size(); }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  Activation activation(std::size_t link) const { return activations_[link]; }
  bool nonneg(std::size_t link) const { return nonneg_[link]; }
  const std::vector<bool>& nonneg_mask() const { return nonneg_; }
  const std::vector<Activation>& activations() const { return activations_; }
  bool has_bias() const { return with_bias_; }

  std::size_t weight_offset(std::size_t link) const { return weight_offset_[link]; }
  std::size_t bias_offset(std::size_t link) const { return bias_offset_[link]; }
  std::size_t num_params() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  double weight(std::size_t link, std::size_t row, std::size_t col) const {
    return params_[weight_offset_[link] + row * widths_[link] + col];
  }
  double& weight(std::size_t link, std::size_t row, std::size_t col) {
    return params_[weight_offset_[link] + row * widths_[link] + col];
  }
  double bias(std::size_t link, std::size_t row) const {
    return params_[bias_offset_[link] + row];
  }
  double& bias(std::size_t link, std::size_t row) {
    return params_[bias_offset_[link] + row];
  }

  /// True when params index p belongs to a weight matrix flagged nonneg.
  bool is_nonneg_param(std::size_t p) const;
  /// True when params index p is a weight (not a bias).
  bool is_weight_param(std::size_t p) const;

  Layout layout() const;
  ParamVector flatten() const;
  /// Same shape, parameters replaced by theta.
  LayeredNet with_params(std::span<const double> theta) const;

  bool same_shape(const LayeredNet& other) const;
  bool operator==(const LayeredNet& other) const = default;

 private:
  void build_offsets();

  std::vector<std::size_t> widths_;
  std::vector<Activation> activations_;
  std::vector<bool> nonneg_;
  bool with_bias_ = false;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::size_t num_params_total_ = 0;
  std::vector<double> params_;
};

LayeredNet unflatten(const LayeredNet& shape, const ParamVector& p);

/// Throws ShapeError unless every weight flagged nonneg is >= 0 and the
/// output activation is the identity.
void validate(const LayeredNet& net);

double softplus(double z);
double logistic(double z);

/// Intermediate values of one forward pass, kept for backpropagation.
/// pre[k] is the pre-activation of link k; post[k] is layer k's output
/// (post[0] is the input).
struct ForwardCache {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;

  std::span<const double> output() const { return post.back(); }
};

std::vector<double> forward(const LayeredNet& net, std::span<const double> x);
std::vector<double> forward(const LayeredNet& shape, std::span<const double> theta,
                            std::span<const double> x);
void forward(const LayeredNet& shape, std::span<const double> theta,
             std::span<const double> x, ForwardCache& cache);

/// d(upstream . forward(net, x)) / d theta.
ParamVector grad_params(const LayeredNet& net, std::span<const double> x,
                        std::span<const double> upstream);
/// Adds d(upstream . y)/d theta into grad for a cached forward pass.
void accumulate_grad_params(const LayeredNet& shape, std::span<const double> theta,
                            const ForwardCache& cache, std::span<const double> upstream,
                            std::span<double> grad);

/// Jacobian dy/dx, output_dim x input_dim.
Eigen::MatrixXd grad_input(const LayeredNet& net, std::span<const double> x);
/// upstream^T dy/dx for a cached forward pass.
std::vector<double> input_vjp(const LayeredNet& shape, std::span<const double> theta,
                              const ForwardCache& cache, std::span<const double> upstream);

/// Adds d/d theta [ upstream^T (dy/dx) direction ] into grad.
///
/// This is the parameter gradient of a directional input derivative, the
/// quantity needed when a loss is placed on the gradient of the network
/// (stress from a potential). Computed by propagating the input tangent
/// forward and then reversing through both the primal and tangent passes.
void accumulate_grad_params_directional(const LayeredNet& shape,
                                        std::span<const double> theta,
                                        const ForwardCache& cache,
                                        std::span<const double> direction,
                                        std::span<const double> upstream,
                                        std::span<double> grad);

/// Number of parameters with |w| > threshold.
std::size_t param_count(const LayeredNet& net, double threshold);
std::size_t param_count(std::span<const double> theta, double threshold);

nlohmann::json to_json(const LayeredNet& net);
LayeredNet net_from_json(const nlohmann::json& j);

}  // namespace csvgd
