#pragma once

// Parametric stationary sources: Gaussian i.i.d., Gaussian autoregressive,
// and hidden Markov processes with fixed Gaussian emissions.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "ulc/rng.hpp"

namespace ulc {

enum class Family { GaussianIID, GaussianAR, HMM };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

/// Raised when a parameter vector violates its family's constraints.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation would produce a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point of the parameter space.
///
/// Coordinates by family:
///   GaussianIID  (mean, sigma), sigma > 0
///   GaussianAR   (a_1, ..., a_p) for X_t + sum_i a_i X_{t-i} = Y_t, Y_t ~ N(0,1)
///   HMM          the M x M transition matrix, row-major
struct ParamVector {
  Family family = Family::GaussianIID;
  Eigen::VectorXd coords;

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.family == b.family && a.coords.size() == b.coords.size() && a.coords == b.coords;
  }
};

ParamVector gaussian_iid(double mean, double sigma);
ParamVector gaussian_ar(const Eigen::VectorXd& coeffs);
ParamVector hmm_transition(const Eigen::MatrixXd& transition);

/// Transition matrix view of an HMM parameter vector.
Eigen::MatrixXd transition_matrix(const ParamVector& theta);

/// Declared envelope for the beta-mixing coefficients.
struct MixingDecay {
  enum class Kind { Independent, Exponential, Algebraic };
  Kind kind = Kind::Independent;
  /// gamma in (0,1) for Exponential, exponent r > 0 for Algebraic.
  double rate = 0.0;
  double scale = 1.0;

  /// beta(k). Independent sources have beta(k) = 0 for k >= 1.
  double beta(double lag) const;
};

/// Local Lipschitz data: d_n(theta, theta') <= sqrt(n) c ||theta - theta'||
/// whenever ||theta - theta'|| < radius.
struct Smoothness {
  double radius = 0.0;
  double constant = 0.0;
};

/// Isotropic Gaussian emission densities, one per hidden state.
struct EmissionSpec {
  Eigen::MatrixXd means;  // dim x M
  Eigen::VectorXd sd;     // M, all positive

  Eigen::Index dim() const { return means.rows(); }
  Eigen::Index states() const { return means.cols(); }
};

/// Everything about a family that is not part of the parameter vector.
struct FamilySpec {
  Family family = Family::GaussianIID;
  int ar_order = 1;
  EmissionSpec emissions;  // HMM only
  double a0 = 0.01;        // HMM transition floor

  /// Dimension of one source letter.
  Eigen::Index letter_dim() const { return family == Family::HMM ? emissions.dim() : 1; }
  /// Parameter-space dimension k.
  int param_dim() const;

  static FamilySpec gaussian_iid();
  static FamilySpec gaussian_ar(int order);
  /// Unit-variance scalar emissions at the given means.
  static FamilySpec hmm(const Eigen::VectorXd& means, double a0 = 0.01);
};

struct SourceModel {
  ParamVector theta;
  std::optional<EmissionSpec> emissions;
  std::optional<Smoothness> smoothness;
  MixingDecay mixing;
  double a0 = 0.0;

  Family family() const { return theta.family; }
  Eigen::Index letter_dim() const { return emissions ? emissions->dim() : 1; }
};

/// True when `theta` satisfies the constraints of `spec`.
bool is_valid_parameter(const FamilySpec& spec, const ParamVector& theta, std::string* why = nullptr);

/// Validates `theta` against `spec` and attaches the declared smoothness and
/// mixing envelopes. Throws ModelError on violation.
SourceModel make_model(const FamilySpec& spec, const ParamVector& theta);

/// A realised segment x_1..x_n; column i is letter i.
struct SampleBlock {
  Eigen::MatrixXd values;  // letter_dim x n
  std::uint64_t seed = 0;
  std::uint64_t offset = 0;

  Eigen::Index size() const { return values.cols(); }
  Eigen::Index dim() const { return values.rows(); }

  static SampleBlock scalar(const Eigen::VectorXd& v);
  SampleBlock segment(Eigen::Index start, Eigen::Index length) const;
};

struct DivergenceEstimate {
  double point_estimate = 0.0;
  double std_error = 0.0;
  std::int64_t sample_count = 0;
};

/// Draws stationary paths from one model, reusing factorisations.
class PathSampler {
 public:
  explicit PathSampler(const SourceModel& model);
  SampleBlock draw(Eigen::Index length, RandomStream& rng) const;
  const SourceModel& model() const { return model_; }

 private:
  SourceModel model_;
  Eigen::MatrixXd init_factor_;   // AR: lower Cholesky factor of R_p
  Eigen::VectorXd stationary_;    // HMM: pi
  Eigen::MatrixXd cumulative_;    // HMM: row-wise cumulative transition
};

/// Evaluates ln p_theta(x^n), reusing factorisations across calls.
class DensityEvaluator {
 public:
  explicit DensityEvaluator(const SourceModel& model);
  double operator()(const SampleBlock& block) const;
  const SourceModel& model() const { return model_; }

 private:
  double log_ar(const SampleBlock& block) const;
  double log_hmm(const SampleBlock& block) const;

  SourceModel model_;
  Eigen::VectorXd autocov_;       // AR: gamma(0..p-1)
  Eigen::VectorXd stationary_;    // HMM: pi
  Eigen::MatrixXd transition_;
};

SampleBlock sample_path(const SourceModel& model, Eigen::Index length, std::uint64_t seed);

double log_density(const SourceModel& model, const SampleBlock& block);

/// Per-letter (equivalently n-th order normalised) relative entropy between
/// two Gaussian i.i.d. sources.
double kl_rate_gaussian_iid(const ParamVector& theta, const ParamVector& theta_prime);

/// Monte Carlo estimate of the variational distance between the n-th order
/// marginals, 2 E_theta[(1 - p'/p)_+], computed with log-space ratios.
DivergenceEstimate variational_distance_mc(const SourceModel& theta, const SourceModel& theta_prime,
                                           Eigen::Index n, std::int64_t samples, std::uint64_t seed);

/// Closed-form lower bound 2(1 - BC^n) on d_n via the Bhattacharyya
/// coefficient BC. Available for Gaussian i.i.d. and AR models; returns
/// nullopt for HMMs.
std::optional<double> variational_lower_bound(const SourceModel& a, const SourceModel& b, Eigen::Index n);

/// Schur-Cohn step-down test: all roots of 1 + a_1 z + ... + a_p z^p lie
/// strictly outside the unit circle.
bool ar_stability_check(const Eigen::VectorXd& coeffs);

/// Autocovariances gamma(0..n-1) of the AR process with unit innovations.
Eigen::VectorXd ar_autocovariances(const Eigen::VectorXd& coeffs, Eigen::Index n);

/// n x n Toeplitz autocorrelation matrix R_n.
Eigen::MatrixXd ar_autocorrelation(const Eigen::VectorXd& coeffs, Eigen::Index n);

/// Stationary distribution of a strictly positive stochastic matrix.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition);

/// M (n - 1) beta(l_n): the blocking coupling penalty.
double mixing_gap_bound(std::int64_t n, std::int64_t l_n, const MixingDecay& decay, double bound_m);

}  // namespace ulc
