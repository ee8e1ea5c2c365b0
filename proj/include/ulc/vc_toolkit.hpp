#pragma once

// Shatter coefficients, VC-dimension search, and the Vapnik-Chervonenkis /
// Karpinski-Macintyre bounds, with Monte Carlo checks of uniform deviations.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ulc/rng.hpp"

namespace ulc {

/// Base of the logarithm in VC bounds; bits throughout.
inline constexpr double kVcLogBase = 2.0;

using Point = Eigen::VectorXd;

/// A parametrised family of sets A_xi = {z : membership(z, xi)}.
struct ConceptClass {
  std::string description;
  std::function<bool(const Point& z, const Eigen::VectorXd& xi)> membership;
  std::function<Eigen::VectorXd(RandomStream&)> sample_parameters;
  /// Optional: parameters realising every distinct trace on `points`. When
  /// present, shatter counts are exact.
  std::function<std::vector<Eigen::VectorXd>(const std::vector<Point>& points)> enumerate;
};

struct ShatterReport {
  int n = 0;
  std::uint64_t distinct_patterns = 0;
  bool shattered = false;
  bool exact = false;
  std::vector<Point> witness_points;
};

/// Half-lines {z <= t} on the real line.
ConceptClass half_lines();
/// Closed intervals [a, b] on the real line (the empty set included).
ConceptClass intervals();
/// Axis-parallel half-planes {z : s (z_axis - c) > 0} in the plane.
ConceptClass axis_half_planes();

/// Number of distinct membership patterns induced on `points`. Exact when the
/// class can enumerate its traces, otherwise a lower bound from
/// `concept_budget` sampled parameters. Requires at most 64 points.
ShatterReport shatter_coefficient(const ConceptClass& cls, const std::vector<Point>& points,
                                  std::int64_t concept_budget, std::uint64_t seed);

/// Largest n <= max_n for which some sampled n-point set was shattered; a
/// lower bound on V(C). Stops at the first size with no shattered sample.
int estimate_vc_dimension(const ConceptClass& cls, const std::function<Point(RandomStream&)>& point_sampler,
                          int max_n, int trials, std::uint64_t seed, std::int64_t concept_budget = 2000);

/// 2 k log(4 e s): VC bound for sets cut out by degree-s polynomials in k
/// parameters.
double km_bound(int k, int s);

/// 8 n^V exp(-n delta^2 / 32), clamped to [0, 1].
double vc_deviation_tail(std::int64_t n, double vc_dim, double delta);

struct DeviationStats {
  double mean = 0.0;
  double max = 0.0;
  /// mean / sqrt(V log n / n)
  double ratio = 0.0;
  /// Largest binomial standard error of the reference probabilities.
  double reference_error = 0.0;
  std::vector<double> per_trial;
};

/// sup over `concept_budget` sampled sets of |P_{Z^n}(A) - P(A)| for i.i.d.
/// Z_i, with P(A) estimated on an independent reference sample.
DeviationStats empirical_sup_deviation(const ConceptClass& cls, const std::function<Point(RandomStream&)>& sampler,
                                       std::int64_t n, std::int64_t concept_budget, int trials, std::uint64_t seed,
                                       double vc_dim, std::int64_t reference_size = 100000);

}  // namespace ulc
