#include "ulc/vc_toolkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace ulc {

namespace {

std::vector<double> sorted_coordinate(const std::vector<Point>& points, Eigen::Index axis) {
  std::vector<double> v;
  v.reserve(points.size());
  for (const auto& p : points) v.push_back(p(axis));
  std::sort(v.begin(), v.end());
  return v;
}

Eigen::VectorXd params(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

ConceptClass half_lines() {
  ConceptClass c;
  c.description = "half-lines {z <= t}";
  c.membership = [](const Point& z, const Eigen::VectorXd& xi) { return z(0) <= xi(0); };
  c.sample_parameters = [](RandomStream& rng) { return params({3.0 * rng.normal()}); };
  c.enumerate = [](const std::vector<Point>& pts) {
    std::vector<Eigen::VectorXd> out;
    const auto xs = sorted_coordinate(pts, 0);
    out.push_back(params({xs.empty() ? 0.0 : xs.front() - 1.0}));
    for (double x : xs) out.push_back(params({x}));
    return out;
  };
  return c;
}

ConceptClass intervals() {
  ConceptClass c;
  c.description = "intervals [a, b]";
  c.membership = [](const Point& z, const Eigen::VectorXd& xi) { return xi(0) <= z(0) && z(0) <= xi(1); };
  c.sample_parameters = [](RandomStream& rng) {
    const double a = 3.0 * rng.normal();
    const double b = 3.0 * rng.normal();
    return params({std::min(a, b), std::max(a, b)});
  };
  c.enumerate = [](const std::vector<Point>& pts) {
    std::vector<Eigen::VectorXd> out;
    const auto xs = sorted_coordinate(pts, 0);
    out.push_back(params({1.0, 0.0}));  // empty
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = i; j < xs.size(); ++j) out.push_back(params({xs[i], xs[j]}));
    return out;
  };
  return c;
}

ConceptClass axis_half_planes() {
  ConceptClass c;
  c.description = "axis-parallel half-planes";
  // xi = (axis, sign, cut)
  c.membership = [](const Point& z, const Eigen::VectorXd& xi) {
    const auto axis = static_cast<Eigen::Index>(xi(0));
    return xi(1) * (z(axis) - xi(2)) > 0.0;
  };
  c.sample_parameters = [](RandomStream& rng) {
    return params({static_cast<double>(rng.below(2)), rng.below(2) ? 1.0 : -1.0, 3.0 * rng.normal()});
  };
  c.enumerate = [](const std::vector<Point>& pts) {
    std::vector<Eigen::VectorXd> out;
    for (int axis = 0; axis < 2; ++axis) {
      const auto xs = sorted_coordinate(pts, axis);
      std::vector<double> cuts;
      if (!xs.empty()) cuts.push_back(xs.front() - 1.0);
      for (std::size_t i = 0; i + 1 < xs.size(); ++i) cuts.push_back(0.5 * (xs[i] + xs[i + 1]));
      if (!xs.empty()) cuts.push_back(xs.back() + 1.0);
      for (double cut : cuts)
        for (double sign : {1.0, -1.0}) out.push_back(params({static_cast<double>(axis), sign, cut}));
    }
    return out;
  };
  return c;
}

ShatterReport shatter_coefficient(const ConceptClass& cls, const std::vector<Point>& points,
                                  std::int64_t concept_budget, std::uint64_t seed) {
  if (points.size() > 64) throw std::invalid_argument("shatter_coefficient: at most 64 points supported");
  if (concept_budget < 1) throw std::invalid_argument("shatter_coefficient: concept_budget must be positive");
  ShatterReport report;
  report.n = static_cast<int>(points.size());
  report.witness_points = points;

  std::unordered_set<std::uint64_t> patterns;
  auto add = [&](const Eigen::VectorXd& xi) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (cls.membership(points[i], xi)) bits |= std::uint64_t{1} << i;
    patterns.insert(bits);
  };
  if (cls.enumerate) {
    report.exact = true;
    for (const auto& xi : cls.enumerate(points)) add(xi);
  } else {
    RandomStream rng(seed);
    for (std::int64_t b = 0; b < concept_budget; ++b) add(cls.sample_parameters(rng));
  }
  report.distinct_patterns = patterns.size();
  const double full = std::ldexp(1.0, report.n);
  report.shattered = static_cast<double>(report.distinct_patterns) == full;
  return report;
}

int estimate_vc_dimension(const ConceptClass& cls, const std::function<Point(RandomStream&)>& point_sampler,
                          int max_n, int trials, std::uint64_t seed, std::int64_t concept_budget) {
  if (max_n > 20) throw std::invalid_argument("estimate_vc_dimension: max_n must not exceed 20");
  const RandomStream root(seed);
  int best = 0;
  for (int n = 1; n <= max_n; ++n) {
    bool found = false;
    for (int t = 0; t < trials && !found; ++t) {
      RandomStream rng = root.derive({static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)});
      std::vector<Point> pts;
      for (int i = 0; i < n; ++i) pts.push_back(point_sampler(rng));
      found = shatter_coefficient(cls, pts, concept_budget, rng.next_u64()).shattered;
    }
    if (!found) break;
    best = n;
  }
  return best;
}

double km_bound(int k, int s) {
  if (k < 1 || s < 1) throw std::invalid_argument("km_bound: k and s must be positive");
  return 2.0 * k * std::log(4.0 * std::numbers::e * s) / std::log(kVcLogBase);
}

double vc_deviation_tail(std::int64_t n, double vc_dim, double delta) {
  if (n < 1 || !(delta > 0.0)) throw std::invalid_argument("vc_deviation_tail: need n >= 1 and delta > 0");
  const double nd = static_cast<double>(n);
  const double log_bound = std::log(8.0) + vc_dim * std::log(nd) - nd * delta * delta / 32.0;
  if (log_bound >= 0.0) return 1.0;
  return std::exp(log_bound);
}

DeviationStats empirical_sup_deviation(const ConceptClass& cls, const std::function<Point(RandomStream&)>& sampler,
                                       std::int64_t n, std::int64_t concept_budget, int trials, std::uint64_t seed,
                                       double vc_dim, std::int64_t reference_size) {
  if (n < 1 || trials < 1 || concept_budget < 1 || reference_size < 1)
    throw std::invalid_argument("empirical_sup_deviation: sizes must be positive");
  const RandomStream root(seed);
  RandomStream concept_rng = root.derive(1);
  std::vector<Eigen::VectorXd> concepts;
  concepts.reserve(static_cast<std::size_t>(concept_budget));
  for (std::int64_t b = 0; b < concept_budget; ++b) concepts.push_back(cls.sample_parameters(concept_rng));

  DeviationStats stats;
  std::vector<double> truth(concepts.size(), 0.0);
  RandomStream ref_rng = root.derive(2);
  for (std::int64_t r = 0; r < reference_size; ++r) {
    const Point z = sampler(ref_rng);
    for (std::size_t c = 0; c < concepts.size(); ++c) truth[c] += cls.membership(z, concepts[c]) ? 1.0 : 0.0;
  }
  for (double& t : truth) {
    t /= static_cast<double>(reference_size);
    stats.reference_error = std::max(stats.reference_error, std::sqrt(t * (1.0 - t) / static_cast<double>(reference_size)));
  }

  std::vector<double> counts(concepts.size());
  for (int t = 0; t < trials; ++t) {
    RandomStream rng = root.derive({3, static_cast<std::uint64_t>(t)});
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      const Point z = sampler(rng);
      for (std::size_t c = 0; c < concepts.size(); ++c) counts[c] += cls.membership(z, concepts[c]) ? 1.0 : 0.0;
    }
    double sup = 0.0;
    for (std::size_t c = 0; c < concepts.size(); ++c)
      sup = std::max(sup, std::abs(counts[c] / static_cast<double>(n) - truth[c]));
    stats.per_trial.push_back(sup);
    stats.max = std::max(stats.max, sup);
    stats.mean += sup;
  }
  stats.mean /= trials;
  const double nd = static_cast<double>(n);
  const double envelope = std::sqrt(vc_dim * std::log(nd) / std::log(kVcLogBase) / nd);
  stats.ratio = envelope > 0.0 ? stats.mean / envelope : 0.0;
  return stats;
}

}  // namespace ulc
