#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "csvgd/likelihood.hpp"
#include "csvgd/net.hpp"

namespace csvgd {

using Mat3 = Eigen::Matrix3d;
using Voigt = std::array<double, 6>;

/// Voigt order (11, 22, 33, 23, 13, 12); tensor components, no factor 2.
Voigt to_voigt(const Mat3& m);
Mat3 from_voigt(std::span<const double> v);

/// E = (F^T F - I) / 2.
Mat3 green_lagrange(const Mat3& F);

struct Invariants {
  double i1 = 3.0;
  double i2 = 3.0;
  double i3 = 1.0;
};

inline constexpr Invariants kReferenceInvariants{3.0, 3.0, 1.0};

/// Invariants of C = 2E + I. Throws DomainError for asymmetric E.
Invariants invariants(const Mat3& E);

struct InvariantDerivatives {
  Mat3 d1;  // dI1/dE = 2 I
  Mat3 d2;  // dI2/dE = 2 (I1 I - C)
  Mat3 d3;  // dI3/dE = 2 I3 C^-1
};

InvariantDerivatives invariant_derivatives(const Mat3& E);

/// Scalar strain energy as a function of the three invariants.
class InvariantPotential {
 public:
  virtual ~InvariantPotential() = default;
  virtual double value(const Invariants& inv) const = 0;
  /// (dPhi/dI1, dPhi/dI2, dPhi/dI3).
  virtual Eigen::Vector3d gradient(const Invariants& inv) const = 0;
};

/// S = sum_i dPhi/dI_i dI_i/dE.
Mat3 stress_from_potential(const InvariantPotential& phi, const Mat3& E);

struct TruthParams {
  double jm = 77.931;
  double theta1 = 2.4195;
  double theta2 = -0.75;
  double theta3 = 1.20975;
};

/// Gent-type truth energy
///   -t1/2 Jm log(1 - (I1-3)/Jm) - t2 log(I2/J) + t3 (0.5 (J^2-1) - log J).
double truth_potential(const TruthParams& p, double i1, double i2, double i3);
Eigen::Vector3d truth_potential_gradient(const TruthParams& p, const Invariants& inv);

/// The truth energy, optionally shifted by the same volumetric
/// normalization applied to the network so that S(E = 0) = 0.
class TruthPotential final : public InvariantPotential {
 public:
  explicit TruthPotential(TruthParams params = {}, bool stress_free_reference = false);

  double value(const Invariants& inv) const override;
  Eigen::Vector3d gradient(const Invariants& inv) const override;

 private:
  TruthParams params_;
  bool normalize_;
  double n_ = 0.0;
  double value_ref_ = 0.0;
};

/// n = 2 dNN/dI1 + 4 dNN/dI2 + 2 dNN/dI3 at (3, 3, 1).
double stress_normalization(const LayeredNet& shape, std::span<const double> theta);

/// NN(I) - NN(3,3,1) - n (sqrt(I3) - 1).
double normalized_nn_potential(const LayeredNet& net, double i1, double i2, double i3);

/// Normalized network energy bound to one parameter vector. The referenced
/// shape and theta must outlive the object.
class NetPotential final : public InvariantPotential {
 public:
  NetPotential(const LayeredNet& shape, std::span<const double> theta);

  double value(const Invariants& inv) const override;
  Eigen::Vector3d gradient(const Invariants& inv) const override;
  double normalization() const { return n_; }

 private:
  const LayeredNet& shape_;
  std::span<const double> theta_;
  double n_;
  double value_ref_;
};

/// Maps strain (Voigt) to stress (Voigt) through the normalized network
/// energy of a scalar-output, three-input network.
class StressModel final : public RegressionModel {
 public:
  std::size_t input_dim() const override { return 6; }
  std::size_t output_dim() const override { return 6; }
  std::vector<double> predict(const LayeredNet& shape, std::span<const double> theta,
                              std::span<const double> x) const override;
  void accumulate_vjp(const LayeredNet& shape, std::span<const double> theta,
                      std::span<const double> x, std::span<const double> upstream,
                      std::span<double> grad) const override;
  double accumulate_data_score(const LayeredNet& shape, std::span<const double> theta,
                               const Dataset& data, double noise_var,
                               std::span<double> grad) const override;
};

struct DataOptions {
  std::size_t n_train = 80;
  std::size_t n_test = 1000;
  double delta = 0.2;        // training range of H entries
  double test_range = 0.4;   // test path delta in [-range, range]
  double noise_level = 0.0;  // relative multiplicative noise
  std::uint64_t seed = 0;
  bool stress_free_reference = true;
};

struct MechanicsData {
  Dataset train;
  Dataset test;  // noiseless truth on the uniaxial test path
  std::vector<double> test_delta;
  double train_stress_rms = 0.0;  // RMS of the noiseless training stresses
};

/// Training inputs F = I + H with H_ij ~ U[-delta, delta] (redrawn while
/// det F <= 0); outputs are truth stresses times (1 + noise * eta),
/// eta ~ N(0, 1) per Voigt component.
MechanicsData generate_data(const TruthParams& params, const DataOptions& options);

Mat3 uniaxial_path_deformation(double delta);

}  // namespace csvgd
