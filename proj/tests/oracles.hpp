#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the library routine it is checking.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// ln p(x^n) for an HMM by summing over all M^n state paths.
inline double hmm_path_sum_log_density(const Eigen::MatrixXd& a, const Eigen::VectorXd& pi,
                                       const Eigen::MatrixXd& means, const Eigen::VectorXd& sd,
                                       const Eigen::MatrixXd& x) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(x.cols());
  const double d = static_cast<double>(x.rows());
  auto emission = [&](int s, int t) {
    const double var = sd(s) * sd(s);
    return std::exp(-(x.col(t) - means.col(s)).squaredNorm() / (2 * var)) /
           std::pow(2 * std::numbers::pi * var, d / 2);
  };
  long long paths = 1;
  for (int i = 0; i < n; ++i) paths *= m;
  double total = 0.0;
  std::vector<int> s(n);
  for (long long code = 0; code < paths; ++code) {
    long long c = code;
    for (int t = 0; t < n; ++t) {
      s[t] = static_cast<int>(c % m);
      c /= m;
    }
    double prob = pi(s[0]) * emission(s[0], 0);
    for (int t = 1; t < n; ++t) prob *= a(s[t - 1], s[t]) * emission(s[t], t);
    total += prob;
  }
  return std::log(total);
}

/// Zero-mean multivariate normal log density via a dense inverse.
inline double mvn_log_density(const Eigen::MatrixXd& cov, const Eigen::VectorXd& x) {
  const double n = static_cast<double>(x.size());
  return -0.5 * (n * std::log(2 * std::numbers::pi) + std::log(cov.determinant()) +
                 x.dot(cov.inverse() * x));
}

/// True iff every eigenvalue of the AR companion matrix is inside the unit
/// disc, i.e. every root of 1 + a_1 z + ... + a_p z^p is outside it.
inline bool companion_stable(const Eigen::VectorXd& a) {
  const Eigen::Index p = a.size();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p, p);
  c.row(0) = -a.transpose();
  for (Eigen::Index i = 1; i < p; ++i) c(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(c, false);
  return es.eigenvalues().cwiseAbs().maxCoeff() < 1.0;
}

/// Composite Simpson rule on [lo, hi] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int panels) {
  if (panels % 2) ++panels;
  const double h = (hi - lo) / panels;
  double s = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Minimum-cost coupling by enumerating every basis of the transportation
/// polytope: choose |P|+|Q|-1 cells, solve the marginal equations on them,
/// keep nonnegative solutions. Exponential, tiny instances only.
inline double transport_by_vertex_enumeration(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                              const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(p.size());
  const int cols = static_cast<int>(q.size());
  const int cells = rows * cols;
  const int basis = rows + cols - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(basis);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == basis) {
      Eigen::MatrixXd eq = Eigen::MatrixXd::Zero(rows + cols, basis);
      for (int k = 0; k < basis; ++k) {
        eq(pick[k] / cols, k) = 1.0;
        eq(rows + pick[k] % cols, k) = 1.0;
      }
      Eigen::VectorXd rhs(rows + cols);
      rhs << p, q;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(eq);
      if (lu.rank() < basis) return;
      const Eigen::VectorXd sol = lu.solve(rhs);
      if ((eq * sol - rhs).norm() > 1e-9 || (sol.array() < -1e-12).any()) return;
      double c = 0.0;
      for (int k = 0; k < basis; ++k) c += sol(k) * cost(pick[k] / cols, pick[k] % cols);
      best = std::min(best, c);
      return;
    }
    for (int i = start; i <= cells - (basis - depth); ++i) {
      pick[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace oracle
