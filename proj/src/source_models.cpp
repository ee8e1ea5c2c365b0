#include "ulc/source_models.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ulc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2 pi)

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

double companion_spectral_radius(const Eigen::VectorXd& a) {
  const Eigen::Index p = a.size();
  if (p == 0) return 0.0;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  companion.row(0) = -a.transpose();
  for (Eigen::Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Dobrushin ergodicity coefficient: total-variation contraction of one step.
double dobrushin_coefficient(const Eigen::MatrixXd& a) {
  double min_overlap = 1.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.rows(); ++j) {
      min_overlap = std::min(min_overlap, a.row(i).cwiseMin(a.row(j)).sum());
    }
  }
  return std::clamp(1.0 - min_overlap, 0.0, 1.0);
}

double log_emission(const EmissionSpec& e, Eigen::Index state, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double sd = e.sd(state);
  const double d = static_cast<double>(e.dim());
  return -0.5 * d * (kLog2Pi + 2.0 * std::log(sd)) - (x - e.means.col(state)).squaredNorm() / (2.0 * sd * sd);
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::GaussianIID: return "gaussian_iid";
    case Family::GaussianAR: return "gaussian_ar";
    case Family::HMM: return "hmm";
  }
  return "unknown";
}

Family family_from_name(const std::string& name) {
  if (name == "gaussian_iid") return Family::GaussianIID;
  if (name == "gaussian_ar") return Family::GaussianAR;
  if (name == "hmm") return Family::HMM;
  throw ModelError("unknown family '" + name + "'");
}

ParamVector gaussian_iid(double mean, double sigma) {
  ParamVector p;
  p.family = Family::GaussianIID;
  p.coords = Eigen::Vector2d(mean, sigma);
  return p;
}

ParamVector gaussian_ar(const Eigen::VectorXd& coeffs) {
  return ParamVector{Family::GaussianAR, coeffs};
}

ParamVector hmm_transition(const Eigen::MatrixXd& transition) {
  ParamVector p;
  p.family = Family::HMM;
  p.coords.resize(transition.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < transition.rows(); ++i)
    for (Eigen::Index j = 0; j < transition.cols(); ++j) p.coords(k++) = transition(i, j);
  return p;
}

Eigen::MatrixXd transition_matrix(const ParamVector& theta) {
  const auto m = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(theta.coords.size()))));
  if (m * m != theta.coords.size()) throw ModelError("HMM parameter length is not a perfect square");
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = theta.coords(i * m + j);
  return a;
}

double MixingDecay::beta(double lag) const {
  if (lag < 1.0) return scale;
  switch (kind) {
    case Kind::Independent: return 0.0;
    case Kind::Exponential: return scale * std::pow(rate, lag);
    case Kind::Algebraic: return scale * std::pow(lag, -rate);
  }
  return 0.0;
}

int FamilySpec::param_dim() const {
  switch (family) {
    case Family::GaussianIID: return 2;
    case Family::GaussianAR: return ar_order;
    case Family::HMM: return static_cast<int>(emissions.states() * emissions.states());
  }
  return 0;
}

FamilySpec FamilySpec::gaussian_iid() { return FamilySpec{}; }

FamilySpec FamilySpec::gaussian_ar(int order) {
  FamilySpec s;
  s.family = Family::GaussianAR;
  s.ar_order = order;
  return s;
}

FamilySpec FamilySpec::hmm(const Eigen::VectorXd& means, double a0) {
  FamilySpec s;
  s.family = Family::HMM;
  s.emissions.means = means.transpose();
  s.emissions.sd = Eigen::VectorXd::Ones(means.size());
  s.a0 = a0;
  return s;
}

bool is_valid_parameter(const FamilySpec& spec, const ParamVector& theta, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (theta.family != spec.family) return fail("family mismatch");
  if (!theta.coords.allFinite()) return fail("non-finite coordinate");
  switch (spec.family) {
    case Family::GaussianIID:
      if (theta.coords.size() != 2) return fail("gaussian_iid expects (mean, sigma)");
      if (!(theta.coords(1) > 0.0)) return fail("sigma must be positive");
      return true;
    case Family::GaussianAR:
      if (theta.coords.size() != spec.ar_order || spec.ar_order < 1) return fail("AR order mismatch");
      if (!ar_stability_check(theta.coords)) return fail("AR polynomial has a root on or inside the unit circle");
      return true;
    case Family::HMM: {
      const Eigen::Index m = spec.emissions.states();
      if (m < 1 || theta.coords.size() != m * m) return fail("HMM transition size mismatch");
      if (spec.emissions.sd.size() != m || !(spec.emissions.sd.array() > 0.0).all())
        return fail("emission standard deviations must be positive");
      const Eigen::MatrixXd a = transition_matrix(theta);
      if (((a.rowwise().sum().array() - 1.0).abs() > 1e-9).any()) return fail("transition rows must sum to 1");
      if ((a.array() < spec.a0).any()) return fail("transition entries must be at least a0");
      return true;
    }
  }
  return fail("unknown family");
}

SourceModel make_model(const FamilySpec& spec, const ParamVector& theta) {
  std::string why;
  if (!is_valid_parameter(spec, theta, &why)) throw ModelError("invalid " + family_name(spec.family) + " parameter: " + why);
  SourceModel m;
  m.theta = theta;
  switch (spec.family) {
    case Family::GaussianIID: {
      const double sigma = theta.coords(1);
      const double radius = 0.5 * sigma;
      m.smoothness = Smoothness{radius, 3.0 / (sigma - radius)};
      m.mixing = MixingDecay{MixingDecay::Kind::Independent, 0.0, 1.0};
      break;
    }
    case Family::GaussianAR: {
      const double gamma = companion_spectral_radius(theta.coords);
      m.mixing = gamma > 0.0 ? MixingDecay{MixingDecay::Kind::Exponential, gamma, 1.0}
                             : MixingDecay{MixingDecay::Kind::Independent, 0.0, 1.0};
      break;
    }
    case Family::HMM: {
      m.emissions = spec.emissions;
      m.a0 = spec.a0;
      const double tau = dobrushin_coefficient(transition_matrix(theta));
      m.mixing = MixingDecay{MixingDecay::Kind::Exponential, tau, static_cast<double>(spec.emissions.states())};
      break;
    }
  }
  return m;
}

SampleBlock SampleBlock::scalar(const Eigen::VectorXd& v) {
  SampleBlock b;
  b.values = v.transpose();
  return b;
}

SampleBlock SampleBlock::segment(Eigen::Index start, Eigen::Index length) const {
  if (start < 0 || length < 0 || start + length > size()) throw std::out_of_range("SampleBlock::segment out of range");
  SampleBlock b;
  b.values = values.middleCols(start, length);
  b.seed = seed;
  b.offset = offset + static_cast<std::uint64_t>(start);
  return b;
}

// ---------------------------------------------------------------------------
// Sampling

PathSampler::PathSampler(const SourceModel& model) : model_(model) {
  switch (model_.family()) {
    case Family::GaussianIID: break;
    case Family::GaussianAR: {
      const Eigen::Index p = model_.theta.coords.size();
      Eigen::LLT<Eigen::MatrixXd> llt(ar_autocorrelation(model_.theta.coords, p));
      if (llt.info() != Eigen::Success) throw NumericError("AR stationary covariance is not positive definite");
      init_factor_ = llt.matrixL();
      break;
    }
    case Family::HMM: {
      if (!model_.emissions) throw ModelError("HMM model without emission spec");
      const Eigen::MatrixXd a = transition_matrix(model_.theta);
      stationary_ = stationary_distribution(a);
      cumulative_ = a;
      for (Eigen::Index j = 1; j < a.cols(); ++j) cumulative_.col(j) += cumulative_.col(j - 1);
      break;
    }
  }
}

namespace {
Eigen::Index draw_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& cumulative, double u) {
  const Eigen::Index last = cumulative.size() - 1;
  for (Eigen::Index s = 0; s < last; ++s) {
    if (u < cumulative(s)) return s;
  }
  return last;
}
}  // namespace

SampleBlock PathSampler::draw(Eigen::Index length, RandomStream& rng) const {
  if (length < 1) throw std::invalid_argument("sample_path: length must be at least 1");
  SampleBlock block;
  block.seed = rng.key();
  block.offset = rng.counter();
  switch (model_.family()) {
    case Family::GaussianIID: {
      const double m = model_.theta.coords(0);
      const double s = model_.theta.coords(1);
      block.values.resize(1, length);
      for (Eigen::Index i = 0; i < length; ++i) block.values(0, i) = m + s * rng.normal();
      break;
    }
    case Family::GaussianAR: {
      const Eigen::VectorXd& a = model_.theta.coords;
      const Eigen::Index p = a.size();
      block.values.resize(1, length);
      const Eigen::Index head = std::min(p, length);
      Eigen::VectorXd z(p);
      for (Eigen::Index i = 0; i < p; ++i) z(i) = rng.normal();
      const Eigen::VectorXd init = init_factor_ * z;
      for (Eigen::Index i = 0; i < head; ++i) block.values(0, i) = init(i);
      for (Eigen::Index t = p; t < length; ++t) {
        double v = rng.normal();
        for (Eigen::Index i = 0; i < p; ++i) v -= a(i) * block.values(0, t - 1 - i);
        block.values(0, t) = v;
      }
      break;
    }
    case Family::HMM: {
      const EmissionSpec& e = *model_.emissions;
      block.values.resize(e.dim(), length);
      Eigen::RowVectorXd pi_cum = stationary_.transpose();
      for (Eigen::Index j = 1; j < pi_cum.size(); ++j) pi_cum(j) += pi_cum(j - 1);
      Eigen::Index state = draw_categorical(pi_cum, rng.uniform());
      for (Eigen::Index t = 0; t < length; ++t) {
        if (t > 0) state = draw_categorical(cumulative_.row(state), rng.uniform());
        for (Eigen::Index r = 0; r < e.dim(); ++r) block.values(r, t) = e.means(r, state) + e.sd(state) * rng.normal();
      }
      break;
    }
  }
  return block;
}

SampleBlock sample_path(const SourceModel& model, Eigen::Index length, std::uint64_t seed) {
  RandomStream rng(seed);
  SampleBlock b = PathSampler(model).draw(length, rng);
  b.seed = seed;
  b.offset = 0;
  return b;
}

// ---------------------------------------------------------------------------
// Densities

DensityEvaluator::DensityEvaluator(const SourceModel& model) : model_(model) {
  switch (model_.family()) {
    case Family::GaussianIID: break;
    case Family::GaussianAR:
      autocov_ = ar_autocovariances(model_.theta.coords, model_.theta.coords.size());
      break;
    case Family::HMM:
      if (!model_.emissions) throw ModelError("HMM model without emission spec");
      transition_ = transition_matrix(model_.theta);
      stationary_ = stationary_distribution(transition_);
      break;
  }
}

double DensityEvaluator::operator()(const SampleBlock& block) const {
  if (block.size() < 1) throw std::invalid_argument("log_density: empty block");
  if (block.dim() != model_.letter_dim()) throw std::invalid_argument("log_density: letter dimension mismatch");
  double out = 0.0;
  switch (model_.family()) {
    case Family::GaussianIID: {
      const double m = model_.theta.coords(0);
      const double s = model_.theta.coords(1);
      const double n = static_cast<double>(block.size());
      const double ss = (block.values.row(0).array() - m).square().sum();
      out = -0.5 * n * (kLog2Pi + 2.0 * std::log(s)) - ss / (2.0 * s * s);
      break;
    }
    case Family::GaussianAR: out = log_ar(block); break;
    case Family::HMM: out = log_hmm(block); break;
  }
  require_finite(out, "log_density");
  return out;
}

// Causal factorisation: the first min(n,p) letters are jointly Gaussian with
// Toeplitz covariance; afterwards X_t | past ~ N(-sum a_i X_{t-i}, 1).
double DensityEvaluator::log_ar(const SampleBlock& block) const {
  const Eigen::VectorXd& a = model_.theta.coords;
  const Eigen::Index p = a.size();
  const Eigen::Index n = block.size();
  const Eigen::Index head = std::min(p, n);
  const auto x = block.values.row(0);

  Eigen::MatrixXd r(head, head);
  for (Eigen::Index i = 0; i < head; ++i)
    for (Eigen::Index j = 0; j < head; ++j) r(i, j) = autocov_(std::abs(i - j));
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (llt.info() != Eigen::Success) throw NumericError("AR covariance factorisation failed");
  const Eigen::VectorXd xh = x.head(head).transpose();
  const Eigen::VectorXd w = llt.matrixL().solve(xh);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  double out = -0.5 * (static_cast<double>(head) * kLog2Pi + log_det + w.squaredNorm());

  for (Eigen::Index t = p; t < n; ++t) {
    double resid = x(t);
    for (Eigen::Index i = 0; i < p; ++i) resid += a(i) * x(t - 1 - i);
    out += -0.5 * (kLog2Pi + resid * resid);
  }
  return out;
}

// Scaled forward recursion carried in log space.
double DensityEvaluator::log_hmm(const SampleBlock& block) const {
  const EmissionSpec& e = *model_.emissions;
  const Eigen::Index m = e.states();
  Eigen::VectorXd alpha = stationary_;
  Eigen::VectorXd le(m);
  double log_lik = 0.0;
  for (Eigen::Index t = 0; t < block.size(); ++t) {
    if (t > 0) alpha = transition_.transpose() * alpha;
    for (Eigen::Index s = 0; s < m; ++s) le(s) = log_emission(e, s, block.values.col(t));
    const double shift = le.maxCoeff();
    require_finite(shift, "HMM emission");
    alpha.array() *= (le.array() - shift).exp();
    const double norm = alpha.sum();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("HMM forward recursion underflow");
    alpha /= norm;
    log_lik += std::log(norm) + shift;
  }
  return log_lik;
}

double log_density(const SourceModel& model, const SampleBlock& block) {
  return DensityEvaluator(model)(block);
}

// ---------------------------------------------------------------------------
// Divergences

double kl_rate_gaussian_iid(const ParamVector& theta, const ParamVector& theta_prime) {
  if (theta.family != Family::GaussianIID || theta_prime.family != Family::GaussianIID)
    throw ModelError("kl_rate_gaussian_iid expects Gaussian i.i.d. parameters");
  const double m = theta.coords(0), s = theta.coords(1);
  const double mp = theta_prime.coords(0), sp = theta_prime.coords(1);
  if (!(s > 0.0) || !(sp > 0.0)) throw std::domain_error("kl_rate_gaussian_iid: sigma must be positive");
  const double ratio = s / sp;
  return 0.5 * (std::log(ratio * ratio) + (sp / s) * (sp / s) + (m - mp) * (m - mp) / (sp * sp) - 1.0);
}

DivergenceEstimate variational_distance_mc(const SourceModel& theta, const SourceModel& theta_prime, Eigen::Index n,
                                           std::int64_t samples, std::uint64_t seed) {
  if (theta.family() != theta_prime.family()) throw ModelError("variational_distance_mc: family mismatch");
  if (samples < 1) throw std::invalid_argument("variational_distance_mc: samples must be positive");
  DivergenceEstimate est;
  est.sample_count = samples;
  const bool same_emissions =
      theta.emissions.has_value() == theta_prime.emissions.has_value() &&
      (!theta.emissions || (theta.emissions->means == theta_prime.emissions->means &&
                            theta.emissions->sd == theta_prime.emissions->sd));
  if (theta.theta == theta_prime.theta && same_emissions) return est;
  const PathSampler sampler(theta);
  const DensityEvaluator p(theta), q(theta_prime);
  RandomStream rng(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (std::int64_t j = 0; j < samples; ++j) {
    const SampleBlock x = sampler.draw(n, rng);
    const double delta = q(x) - p(x);
    const double g = delta >= 0.0 ? 0.0 : std::clamp(-std::expm1(delta), 0.0, 1.0);
    sum += g;
    sum_sq += g * g;
  }
  const double k = static_cast<double>(samples);
  const double mean = sum / k;
  const double var = samples > 1 ? std::max(0.0, (sum_sq - k * mean * mean) / (k - 1.0)) : 0.0;
  est.point_estimate = std::clamp(2.0 * mean, 0.0, 2.0);
  est.std_error = 2.0 * std::sqrt(var / k);
  return est;
}

std::optional<double> variational_lower_bound(const SourceModel& a, const SourceModel& b, Eigen::Index n) {
  if (a.family() != b.family()) return std::nullopt;
  double log_bc = 0.0;
  switch (a.family()) {
    case Family::GaussianIID: {
      const double m1 = a.theta.coords(0), s1 = a.theta.coords(1);
      const double m2 = b.theta.coords(0), s2 = b.theta.coords(1);
      const double v = s1 * s1 + s2 * s2;
      const double per_letter = 0.5 * std::log(2.0 * s1 * s2 / v) - (m1 - m2) * (m1 - m2) / (4.0 * v);
      log_bc = static_cast<double>(n) * per_letter;
      break;
    }
    case Family::GaussianAR: {
      const Eigen::MatrixXd r1 = ar_autocorrelation(a.theta.coords, n);
      const Eigen::MatrixXd r2 = ar_autocorrelation(b.theta.coords, n);
      const Eigen::MatrixXd mid = 0.5 * (r1 + r2);
      auto logdet = [](const Eigen::MatrixXd& m) {
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      };
      log_bc = 0.25 * logdet(r1) + 0.25 * logdet(r2) - 0.5 * logdet(mid);
      break;
    }
    case Family::HMM: return std::nullopt;
  }
  return std::clamp(-2.0 * std::expm1(log_bc), 0.0, 2.0);
}

// ---------------------------------------------------------------------------
// Autoregressive helpers

bool ar_stability_check(const Eigen::VectorXd& coeffs) {
  if (coeffs.size() < 1 || !coeffs.allFinite()) return false;
  // Reversed polynomial z^p + a_1 z^{p-1} + ... + a_p must have all roots
  // inside the unit disc; step down through the reflection coefficients.
  Eigen::VectorXd c = coeffs;
  for (Eigen::Index order = c.size(); order >= 1; --order) {
    const double k = c(order - 1);
    if (!(std::abs(k) < 1.0)) return false;
    const double denom = 1.0 - k * k;
    Eigen::VectorXd next(order - 1);
    for (Eigen::Index i = 0; i < order - 1; ++i) next(i) = (c(i) - k * c(order - 2 - i)) / denom;
    c = next;
  }
  return true;
}

Eigen::VectorXd ar_autocovariances(const Eigen::VectorXd& coeffs, Eigen::Index n) {
  if (!ar_stability_check(coeffs)) throw ModelError("ar_autocorrelation: unstable AR coefficients");
  if (n < 1) throw std::invalid_argument("ar_autocorrelation: n must be at least 1");
  const Eigen::Index p = coeffs.size();
  // Yule-Walker: gamma(k) + sum_i a_i gamma(|k-i|) = [k == 0], k = 0..p.
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(p + 1, p + 1);
  for (Eigen::Index k = 0; k <= p; ++k) {
    sys(k, k) += 1.0;
    for (Eigen::Index i = 1; i <= p; ++i) sys(k, std::abs(k - i)) += coeffs(i - 1);
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + 1);
  rhs(0) = 1.0;
  const Eigen::VectorXd head = sys.fullPivLu().solve(rhs);

  Eigen::VectorXd gamma(std::max(n, p + 1));
  gamma.head(p + 1) = head;
  for (Eigen::Index k = p + 1; k < gamma.size(); ++k) {
    double v = 0.0;
    for (Eigen::Index i = 1; i <= p; ++i) v -= coeffs(i - 1) * gamma(k - i);
    gamma(k) = v;
  }
  if (!gamma.allFinite()) throw NumericError("ar_autocorrelation: non-finite autocovariance");
  return gamma.head(n);
}

Eigen::MatrixXd ar_autocorrelation(const Eigen::VectorXd& coeffs, Eigen::Index n) {
  const Eigen::VectorXd g = ar_autocovariances(coeffs, n);
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) r(i, j) = g(std::abs(i - j));
  return r;
}

// ---------------------------------------------------------------------------
// Markov chain helpers

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition) {
  if (transition.rows() != transition.cols() || transition.rows() < 1)
    throw ModelError("stationary_distribution: transition matrix must be square");
  if (!transition.allFinite() || (transition.array() <= 0.0).any())
    throw ModelError("stationary_distribution: entries must be strictly positive");
  if (((transition.rowwise().sum().array() - 1.0).abs() > 1e-9).any())
    throw ModelError("stationary_distribution: rows must sum to 1");

  const Eigen::Index m = transition.rows();
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(m, 1.0 / static_cast<double>(m));
  constexpr int kMaxIters = 10'000'000;
  for (int it = 0; it < kMaxIters; ++it) {
    Eigen::RowVectorXd next = pi * transition;
    next /= next.sum();
    const double step = (next - pi).lpNorm<1>();
    pi = next;
    if (step < 1e-14) break;
  }
  const double residual = (pi * transition - pi).lpNorm<1>();
  if (!(residual < 1e-12)) throw NumericError("stationary_distribution: power iteration did not converge");
  return pi.transpose();
}

double mixing_gap_bound(std::int64_t n, std::int64_t l_n, const MixingDecay& decay, double bound_m) {
  if (n <= 1) return 0.0;
  return bound_m * static_cast<double>(n - 1) * decay.beta(static_cast<double>(l_n));
}

}  // namespace ulc
