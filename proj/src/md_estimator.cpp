#include "ulc/md_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>

#include "ulc/parallel.hpp"

namespace ulc {

// ---------------------------------------------------------------------------
// Priors

ParamVector ParameterPrior::draw(const FamilySpec& family, RandomStream& rng) const {
  switch (family.family) {
    case Family::GaussianIID: {
      const double m = mean_center + mean_sd * rng.normal();
      const double s = std::exp(log_sigma_center + log_sigma_sd * rng.normal());
      return gaussian_iid(m, s);
    }
    case Family::GaussianAR: {
      const int p = family.ar_order;
      Eigen::VectorXd a(p);
      for (int attempt = 0; attempt < max_rejections; ++attempt) {
        for (int i = 0; i < p; ++i) a(i) = coeff_sd * rng.normal();
        if (ar_stability_check(a)) return gaussian_ar(a);
      }
      throw ModelError("AR prior: no stable draw within the rejection budget");
    }
    case Family::HMM: {
      const Eigen::Index m = family.emissions.states();
      Eigen::MatrixXd t(m, m);
      for (int attempt = 0; attempt < max_rejections; ++attempt) {
        for (Eigen::Index r = 0; r < m; ++r) {
          for (Eigen::Index c = 0; c < m; ++c) t(r, c) = logit_sd * rng.normal();
          t.row(r) = (t.row(r).array() - t.row(r).maxCoeff()).exp();
          t.row(r) /= t.row(r).sum();
        }
        if (t.minCoeff() >= family.a0) return hmm_transition(t);
      }
      throw ModelError("HMM prior: no draw above a0 within the rejection budget");
    }
  }
  throw ModelError("unknown family");
}

ParameterPrior ParameterPrior::from(const KeyValues& kv) {
  ParameterPrior p;
  p.mean_center = kv.number_or("prior.mean_center", p.mean_center);
  p.mean_sd = kv.number_or("prior.mean_sd", p.mean_sd);
  p.log_sigma_center = kv.number_or("prior.log_sigma_center", p.log_sigma_center);
  p.log_sigma_sd = kv.number_or("prior.log_sigma_sd", p.log_sigma_sd);
  p.coeff_sd = kv.number_or("prior.coeff_sd", p.coeff_sd);
  p.logit_sd = kv.number_or("prior.logit_sd", p.logit_sd);
  if (!(p.mean_sd > 0 && p.log_sigma_sd > 0 && p.coeff_sd > 0 && p.logit_sd > 0))
    throw SpecError("prior scales must be positive");
  return p;
}

void ParameterPrior::write(KeyValues& kv) const {
  kv.set("prior.mean_center", format_number(mean_center));
  kv.set("prior.mean_sd", format_number(mean_sd));
  kv.set("prior.log_sigma_center", format_number(log_sigma_center));
  kv.set("prior.log_sigma_sd", format_number(log_sigma_sd));
  kv.set("prior.coeff_sd", format_number(coeff_sd));
  kv.set("prior.logit_sd", format_number(logit_sd));
}

// ---------------------------------------------------------------------------
// Candidate sets

void CandidateSet::validate() const {
  if (members.empty()) throw ModelError("candidate set is empty");
  for (std::size_t i = 0; i < members.size(); ++i) {
    std::string why;
    if (!is_valid_parameter(family, members[i], &why))
      throw ModelError("candidate " + std::to_string(i) + " invalid: " + why);
    for (std::size_t j = 0; j < i; ++j) {
      if (members[i] == members[j]) throw ModelError("candidates " + std::to_string(j) + " and " +
                                                     std::to_string(i) + " coincide");
    }
  }
}

std::size_t CandidateSet::find(const ParamVector& theta) const {
  for (std::size_t i = 0; i < members.size(); ++i)
    if (members[i] == theta) return i;
  return members.size();
}

std::vector<double> GridAxis::values() const {
  if (steps < 1) throw SpecError("grid axis needs at least one step");
  std::vector<double> v(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) v[static_cast<std::size_t>(i)] = steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1);
  return v;
}

CandidateSet gaussian_grid(const GridAxis& mean, const GridAxis& log_sigma) {
  CandidateSet set;
  set.family = FamilySpec::gaussian_iid();
  set.generation = "grid";
  for (double m : mean.values())
    for (double ls : log_sigma.values()) set.members.push_back(gaussian_iid(m, std::exp(ls)));
  set.validate();
  return set;
}

CandidateSet ar_grid(int order, const GridAxis& coeff) {
  if (order < 1) throw ModelError("AR order must be positive");
  CandidateSet set;
  set.family = FamilySpec::gaussian_ar(order);
  set.generation = "grid";
  const auto axis = coeff.values();
  std::vector<std::size_t> digit(static_cast<std::size_t>(order), 0);
  for (;;) {
    Eigen::VectorXd a(order);
    for (int i = 0; i < order; ++i) a(i) = axis[digit[static_cast<std::size_t>(i)]];
    if (ar_stability_check(a)) set.members.push_back(gaussian_ar(a));
    std::size_t k = 0;
    while (k < digit.size() && ++digit[k] == axis.size()) digit[k++] = 0;
    if (k == digit.size()) break;
  }
  set.validate();
  return set;
}

CandidateSet hmm_grid(const FamilySpec& family, int steps) {
  if (family.family != Family::HMM) throw ModelError("hmm_grid needs an HMM family");
  if (steps < 1) throw SpecError("grid.steps must be positive");
  const Eigen::Index m = family.emissions.states();
  const double free_mass = 1.0 - static_cast<double>(m) * family.a0;
  if (free_mass < 0) throw ModelError("a0 too large for the number of states");

  // Every composition of `steps` into m nonnegative parts.
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<int> parts(static_cast<std::size_t>(m), 0);
  std::function<void(Eigen::Index, int)> compose = [&](Eigen::Index pos, int left) {
    if (pos == m - 1) {
      parts[static_cast<std::size_t>(pos)] = left;
      Eigen::RowVectorXd r(m);
      for (Eigen::Index c = 0; c < m; ++c) r(c) = family.a0 + free_mass * parts[static_cast<std::size_t>(c)] / steps;
      rows.push_back(r);
      return;
    }
    for (int k = 0; k <= left; ++k) {
      parts[static_cast<std::size_t>(pos)] = k;
      compose(pos + 1, left - k);
    }
  };
  compose(0, steps);

  CandidateSet set;
  set.family = family;
  set.generation = "grid";
  std::vector<std::size_t> digit(static_cast<std::size_t>(m), 0);
  for (;;) {
    Eigen::MatrixXd t(m, m);
    for (Eigen::Index r = 0; r < m; ++r) t.row(r) = rows[digit[static_cast<std::size_t>(r)]];
    set.members.push_back(hmm_transition(t));
    std::size_t k = 0;
    while (k < digit.size() && ++digit[k] == rows.size()) digit[k++] = 0;
    if (k == digit.size()) break;
  }
  set.validate();
  return set;
}

CandidateSet prior_candidates(const FamilySpec& family, const ParameterPrior& prior, std::size_t count,
                              std::uint64_t seed) {
  if (count == 0) throw ModelError("prior candidate count must be positive");
  CandidateSet set;
  set.family = family;
  set.generation = "prior_draws(" + std::to_string(seed) + ")";
  RandomStream rng(seed);
  while (set.members.size() < count) {
    ParamVector theta = prior.draw(family, rng);
    if (set.find(theta) == set.size()) set.members.push_back(std::move(theta));
  }
  set.validate();
  return set;
}

namespace {

GridAxis axis_from(const KeyValues& kv, const std::string& key) {
  const auto v = kv.numbers(key);
  if (v.size() != 3) throw SpecError("'" + key + "' expects lo,hi,steps");
  if (v[2] < 1 || v[2] != std::floor(v[2])) throw SpecError("'" + key + "' steps must be a positive integer");
  return {v[0], v[1], static_cast<int>(v[2])};
}

}  // namespace

CandidateSet candidate_set_from(const FamilySpec& family, const KeyValues& kv) {
  if (kv.has("candidates")) {
    CandidateSet set;
    set.family = family;
    set.generation = "explicit";
    const std::string& text = kv.get("candidates");
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t stop = text.find(';', start);
      if (stop == std::string::npos) stop = text.size();
      const auto c = parse_number_list(std::string_view(text).substr(start, stop - start));
      ParamVector p;
      p.family = family.family;
      p.coords = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
      set.members.push_back(std::move(p));
      start = stop + 1;
    }
    set.validate();
    return set;
  }
  if (kv.has("candidate_draws")) {
    return prior_candidates(family, ParameterPrior::from(kv), static_cast<std::size_t>(kv.integer("candidate_draws")),
                            static_cast<std::uint64_t>(kv.integer_or("candidate_seed", 1)));
  }
  switch (family.family) {
    case Family::GaussianIID:
      return gaussian_grid(kv.has("grid.mean") ? axis_from(kv, "grid.mean") : GridAxis{-2.0, 2.0, 9},
                           kv.has("grid.log_sigma") ? axis_from(kv, "grid.log_sigma") : GridAxis{-0.7, 0.7, 5});
    case Family::GaussianAR:
      return ar_grid(family.ar_order, kv.has("grid.coeff") ? axis_from(kv, "grid.coeff") : GridAxis{-0.9, 0.9, 7});
    case Family::HMM:
      return hmm_grid(family, static_cast<int>(kv.integer_or("grid.steps", 4)));
  }
  throw SpecError("unknown family");
}

void write_candidates(const CandidateSet& set, KeyValues& kv) {
  std::string text;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) text += ";";
    text += format_number_list(set.members[i].coords);
  }
  kv.set("candidates", text);
}

// ---------------------------------------------------------------------------
// Yatracos sets and layout

bool yatracos_membership(const YatracosSet& set, const FamilySpec& family, const SampleBlock& x) {
  if (set.theta.family != family.family || set.theta_prime.family != family.family)
    throw ModelError("Yatracos set family does not match");
  if (set.theta == set.theta_prime) throw ModelError("Yatracos set needs two distinct parameters");
  if (x.size() != set.n) throw ModelError("block length does not match the Yatracos set");
  const double a = log_density(make_model(family, set.theta), x);
  const double b = log_density(make_model(family, set.theta_prime), x);
  return a > b;
}

std::vector<Eigen::Index> BlockLayout::effective_memory_indices() const {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(n * n));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index t = 0; t < n; ++t) out.push_back(block_start(j) + t);
  return out;
}

Eigen::Index gap_length(Eigen::Index n, double eta, double r) {
  if (n < 1) throw ModelError("block length must be positive");
  if (!(eta > 0)) throw ModelError("eta must be positive");
  if (!(r > 0)) throw ModelError("mixing exponent must be positive");
  if (std::isinf(r)) return 1;
  const double v = std::pow(static_cast<double>(n), (2.0 + eta) / r);
  if (!std::isfinite(v) || v > 1e12) throw ModelError("gap length overflows");
  // Snap values that are integers up to rounding so ceil does not overshoot.
  const double near = std::round(v);
  const double snapped = std::abs(v - near) <= 1e-9 * std::max(1.0, v) ? near : v;
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(snapped)));
}

BlockLayout make_layout(Eigen::Index n, double eta, double r) { return BlockLayout{n, gap_length(n, eta, r)}; }

EmpiricalBlockDistribution extract_blocks(const SampleBlock& memory, const BlockLayout& layout) {
  if (memory.size() != layout.memory_length())
    throw ModelError("memory length " + std::to_string(memory.size()) + " does not match m_n = " +
                     std::to_string(layout.memory_length()));
  EmpiricalBlockDistribution out;
  out.blocks.reserve(static_cast<std::size_t>(layout.n));
  for (Eigen::Index j = 0; j < layout.n; ++j) out.blocks.push_back(memory.segment(layout.block_start(j), layout.n));
  return out;
}

// ---------------------------------------------------------------------------
// Set probabilities and the estimator

namespace {

// counts(i, j) += [ld_i > ld_j] for every ordered pair.
void accumulate_pairs(const Eigen::VectorXd& ld, Eigen::MatrixXi& counts) {
  const Eigen::Index k = ld.size();
  for (Eigen::Index j = 0; j < k; ++j) counts.col(j).array() += (ld.array() > ld(j)).cast<int>();
}

std::uint64_t theta_key(const ParamVector& theta) {
  return hash_doubles(std::span<const double>(theta.coords.data(), static_cast<std::size_t>(theta.coords.size())),
                      static_cast<std::uint64_t>(theta.family) + 1);
}

}  // namespace

YatracosTable::YatracosTable(CandidateSet candidates, Eigen::Index n, std::int64_t mc_samples, std::uint64_t seed,
                             unsigned threads, bool precompute_rows)
    : candidates_(std::move(candidates)), n_(n), mc_(mc_samples), seed_(seed) {
  candidates_.validate();
  if (n_ < 1) throw ModelError("block length must be positive");
  if (mc_ < 1) throw ModelError("mc_samples must be positive");
  evaluators_.reserve(candidates_.size());
  for (const auto& theta : candidates_.members) evaluators_.emplace_back(make_model(candidates_.family, theta));
  rows_.resize(candidates_.size());
  if (candidates_.size() < 2 || !precompute_rows) return;
  parallel_for(candidates_.size(), threads,
               [&](std::size_t k) { rows_[k] = probabilities_for(candidates_.members[k]); });
}

Eigen::VectorXd YatracosTable::log_densities(const SampleBlock& x) const {
  Eigen::VectorXd ld(static_cast<Eigen::Index>(evaluators_.size()));
  for (std::size_t i = 0; i < evaluators_.size(); ++i) ld(static_cast<Eigen::Index>(i)) = evaluators_[i](x);
  return ld;
}

SetProbabilities YatracosTable::probabilities_for(const ParamVector& theta) const {
  const auto k = static_cast<Eigen::Index>(candidates_.size());
  const PathSampler sampler(make_model(candidates_.family, theta));
  RandomStream rng = RandomStream(seed_).derive({theta_key(theta), static_cast<std::uint64_t>(n_)});
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(k, k);
  for (std::int64_t s = 0; s < mc_; ++s) accumulate_pairs(log_densities(sampler.draw(n_, rng)), counts);
  SetProbabilities out;
  out.p = counts.cast<double>() / static_cast<double>(mc_);
  out.p.diagonal().setZero();
  const double worst = (out.p.array() * (1.0 - out.p.array())).maxCoeff();
  out.mc_error = std::sqrt(worst / static_cast<double>(mc_));
  return out;
}

Eigen::MatrixXd YatracosTable::empirical(const EmpiricalBlockDistribution& blocks) const {
  if (blocks.size() == 0) throw ModelError("no blocks");
  const auto k = static_cast<Eigen::Index>(candidates_.size());
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(k, k);
  for (const auto& b : blocks.blocks) {
    if (b.size() != n_) throw ModelError("block length does not match the table");
    accumulate_pairs(log_densities(b), counts);
  }
  Eigen::MatrixXd p = counts.cast<double>() / static_cast<double>(blocks.size());
  p.diagonal().setZero();
  return p;
}

UStatistic YatracosTable::u_statistic(const SetProbabilities& probs, const Eigen::MatrixXd& empirical) const {
  UStatistic u;
  u.mc_error = probs.mc_error;
  u.value = -1.0;
  const Eigen::Index k = empirical.rows();
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      const double d = std::abs(probs.p(i, j) - empirical(i, j));
      if (d > u.value) {
        u.value = d;
        u.arg_i = static_cast<std::size_t>(i);
        u.arg_j = static_cast<std::size_t>(j);
      }
    }
  }
  if (u.value < 0) u.value = 0.0;  // single candidate: no sets
  return u;
}

UStatistic YatracosTable::u_statistic(const ParamVector& theta, const EmpiricalBlockDistribution& blocks) const {
  const std::size_t idx = candidates_.find(theta);
  const Eigen::MatrixXd emp = empirical(blocks);
  if (idx < candidates_.size() && rows_[idx].p.size() > 0) return u_statistic(rows_[idx], emp);
  return u_statistic(probabilities_for(theta), emp);
}

MdResult YatracosTable::estimate(const EmpiricalBlockDistribution& blocks) const {
  MdResult out;
  out.u_values.assign(candidates_.size(), 0.0);
  if (candidates_.size() == 1) {
    out.theta = candidates_.members[0];
    return out;
  }
  const Eigen::MatrixXd emp = empirical(blocks);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < candidates_.size(); ++k) {
    const UStatistic u =
        u_statistic(rows_[k].p.size() > 0 ? rows_[k] : probabilities_for(candidates_.members[k]), emp);
    out.u_values[k] = u.value;
    if (u.value < best) {
      best = u.value;
      out.index = k;
      out.u = u;
    }
  }
  out.theta = candidates_.members[out.index];
  return out;
}

UStatistic u_statistic(const ParamVector& theta, const EmpiricalBlockDistribution& blocks,
                       const CandidateSet& candidates, std::int64_t mc_samples, std::uint64_t seed) {
  if (candidates.size() < 2) throw ModelError("U statistic needs at least two candidates");
  if (blocks.size() == 0) throw ModelError("no blocks");
  // Only the row for theta is needed, so skip the full table.
  CandidateSet single = candidates;
  const YatracosTable shell(std::move(single), blocks.blocks.front().size(), mc_samples, seed, 1, false);
  return shell.u_statistic(theta, blocks);
}

ParamVector md_estimate(const EmpiricalBlockDistribution& blocks, const CandidateSet& candidates,
                        std::int64_t mc_samples, std::uint64_t seed) {
  if (candidates.size() == 1) {
    candidates.validate();
    return candidates.members[0];
  }
  if (blocks.size() == 0) throw ModelError("no blocks");
  const YatracosTable table(candidates, blocks.blocks.front().size(), mc_samples, seed);
  return table.estimate(blocks).theta;
}

ConceptClass yatracos_concept_class(const CandidateSet& candidates, Eigen::Index n) {
  candidates.validate();
  auto evals = std::make_shared<std::vector<DensityEvaluator>>();
  for (const auto& theta : candidates.members) evals->emplace_back(make_model(candidates.family, theta));
  const Eigen::Index dim = candidates.family.letter_dim();
  const std::size_t k = candidates.size();

  ConceptClass cls;
  cls.description = "Yatracos sets of " + std::to_string(k) + " " + family_name(candidates.family.family) +
                    " candidates, n=" + std::to_string(n);
  cls.membership = [evals, dim, n](const Point& z, const Eigen::VectorXd& xi) {
    SampleBlock b;
    b.values = Eigen::Map<const Eigen::MatrixXd>(z.data(), dim, n);
    const auto i = static_cast<std::size_t>(xi(0));
    const auto j = static_cast<std::size_t>(xi(1));
    return (*evals)[i](b) > (*evals)[j](b);
  };
  cls.sample_parameters = [k](RandomStream& rng) {
    const auto i = rng.below(k);
    auto j = rng.below(k - 1);
    if (j >= i) ++j;
    return Eigen::Vector2d(static_cast<double>(i), static_cast<double>(j)).eval();
  };
  // The class is finite, so listing every pair gives exact traces.
  cls.enumerate = [k](const std::vector<Point>&) {
    std::vector<Eigen::VectorXd> all;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j) all.emplace_back(Eigen::Vector2d(static_cast<double>(i), static_cast<double>(j)));
    return all;
  };
  return cls;
}

}  // namespace ulc
