#pragma once

// Minimum-distance estimation over a finite candidate set: Yatracos sets
// A_{i,j} = {x : p_i(x) > p_j(x)}, the blocked memory layout that feeds the
// estimator, and the statistic U_theta = max_A |P_theta(A) - P_Z(A)|.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "ulc/model_spec.hpp"
#include "ulc/quantizer_core.hpp"
#include "ulc/source_models.hpp"
#include "ulc/vc_toolkit.hpp"

namespace ulc {

/// Default priors over each family's parameter space.
///
/// GaussianIID: mean ~ N(mean_center, mean_sd), ln sigma ~ N(log_sigma_center, log_sigma_sd).
/// GaussianAR:  each a_i ~ N(0, coeff_sd), redrawn until stable.
/// HMM:         each row is softmax of i.i.d. N(0, logit_sd) logits, redrawn
///              until every entry is >= a0.
struct ParameterPrior {
  double mean_center = 0.0;
  double mean_sd = 1.0;
  double log_sigma_center = 0.0;
  double log_sigma_sd = 0.5;
  double coeff_sd = 0.5;
  double logit_sd = 1.0;
  /// Rejection attempts before giving up.
  int max_rejections = 100000;

  ParamVector draw(const FamilySpec& family, RandomStream& rng) const;

  /// Reads prior.* keys, falling back to the defaults above.
  static ParameterPrior from(const KeyValues& kv);
  void write(KeyValues& kv) const;
};

/// Finite skeleton of the parameter space searched by the estimator.
struct CandidateSet {
  FamilySpec family;
  std::vector<ParamVector> members;
  std::string generation;  // "grid", "prior_draws(<seed>)" or "explicit"

  std::size_t size() const { return members.size(); }
  /// Nonempty, valid, pairwise distinct. Throws ModelError.
  void validate() const;
  /// Index of an exactly equal member, or size() when absent.
  std::size_t find(const ParamVector& theta) const;
};

struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  int steps = 1;

  /// `steps` evenly spaced values from lo to hi (just lo when steps == 1).
  std::vector<double> values() const;
};

/// Rectangular grid in (mean, ln sigma).
CandidateSet gaussian_grid(const GridAxis& mean, const GridAxis& log_sigma);
/// Product grid in coefficient space, keeping only stable filters.
CandidateSet ar_grid(int order, const GridAxis& coeff);
/// Each row on the lattice a0 + (1 - M a0) k / steps with integer k summing to steps.
CandidateSet hmm_grid(const FamilySpec& family, int steps);
/// `count` distinct draws from `prior`.
CandidateSet prior_candidates(const FamilySpec& family, const ParameterPrior& prior, std::size_t count,
                              std::uint64_t seed);

/// Reads a candidate set from config keys:
///   candidates = <coords>;<coords>;...                 explicit members, or
///   grid.mean = lo,hi,steps   grid.log_sigma = lo,hi,steps   (gaussian_iid)
///   grid.coeff = lo,hi,steps                                 (gaussian_ar)
///   grid.steps = k                                           (hmm)
///   candidate_draws = count   candidate_seed = s             (prior draws)
CandidateSet candidate_set_from(const FamilySpec& family, const KeyValues& kv);
/// Writes the members explicitly under `candidates`.
void write_candidates(const CandidateSet& set, KeyValues& kv);

/// A_{theta, theta'} for blocks of length n.
struct YatracosSet {
  ParamVector theta;
  ParamVector theta_prime;
  Eigen::Index n = 0;
};

/// log p_theta(x) > log p_theta'(x); ties are not members.
bool yatracos_membership(const YatracosSet& set, const FamilySpec& family, const SampleBlock& x);

/// Block length n, gap l_n and memory length m_n = n (n + l_n). The memory
/// window alternates Z_1, Y_1, ..., Z_n, Y_n with |Z_j| = n and |Y_j| = l_n;
/// only the Z blocks are used.
struct BlockLayout {
  Eigen::Index n = 1;
  Eigen::Index gap = 1;

  Eigen::Index memory_length() const { return n * (n + gap); }
  /// Zero-based start of Z_j, j = 0..n-1.
  Eigen::Index block_start(Eigen::Index j) const { return j * (n + gap); }
  /// The n^2 zero-based positions of the Z blocks, in order.
  std::vector<Eigen::Index> effective_memory_indices() const;
};

/// l_n = ceil(n^((2 + eta) / r)); r = infinity (independent sources) gives 1.
Eigen::Index gap_length(Eigen::Index n, double eta, double r);
BlockLayout make_layout(Eigen::Index n, double eta, double r);

/// Z_1..Z_n, each with weight 1/n.
struct EmpiricalBlockDistribution {
  std::vector<SampleBlock> blocks;
  std::size_t size() const { return blocks.size(); }
};

EmpiricalBlockDistribution extract_blocks(const SampleBlock& memory, const BlockLayout& layout);

struct UStatistic {
  double value = 0.0;
  /// Candidate indices (i, j) of the maximising set A_{i,j}.
  std::size_t arg_i = 0;
  std::size_t arg_j = 0;
  /// Largest binomial standard error among the Monte Carlo set probabilities.
  double mc_error = 0.0;
};

/// Monte Carlo estimates P_theta(A_{i,j}) for every ordered candidate pair,
/// from one sample pool per theta (common random numbers across sets).
struct SetProbabilities {
  Eigen::MatrixXd p;  // K x K, diagonal zero
  double mc_error = 0.0;
};

struct MdResult {
  std::size_t index = 0;
  ParamVector theta;
  UStatistic u;
  std::vector<double> u_values;  // one per candidate
};

/// Set probabilities for a fixed candidate set and block length, computed
/// once per candidate and reused for every estimate.
///
/// The pool for theta is seeded from (seed, n, bits of theta), so a
/// candidate's row does not depend on its position in the set. Costs
/// O(K^2 mc) comparisons and O(K^2 mc n) density work per table.
class YatracosTable {
 public:
  /// With precompute_rows false only empirical counts and fresh pools are
  /// available; estimate() then computes rows on the fly.
  YatracosTable(CandidateSet candidates, Eigen::Index n, std::int64_t mc_samples, std::uint64_t seed,
                unsigned threads = 1, bool precompute_rows = true);

  const CandidateSet& candidates() const { return candidates_; }
  Eigen::Index block_length() const { return n_; }
  std::int64_t mc_samples() const { return mc_; }
  std::size_t size() const { return candidates_.size(); }

  const SetProbabilities& row(std::size_t k) const { return rows_[k]; }
  /// Fresh pool for an arbitrary theta (e.g. the true parameter).
  SetProbabilities probabilities_for(const ParamVector& theta) const;

  /// P_Z(A_{i,j}) counted exactly over the blocks.
  Eigen::MatrixXd empirical(const EmpiricalBlockDistribution& blocks) const;

  UStatistic u_statistic(const SetProbabilities& probs, const Eigen::MatrixXd& empirical) const;
  UStatistic u_statistic(const ParamVector& theta, const EmpiricalBlockDistribution& blocks) const;

  /// argmin_k U_k, smallest index on ties.
  MdResult estimate(const EmpiricalBlockDistribution& blocks) const;

 private:
  Eigen::VectorXd log_densities(const SampleBlock& x) const;

  CandidateSet candidates_;
  Eigen::Index n_;
  std::int64_t mc_;
  std::uint64_t seed_;
  std::vector<DensityEvaluator> evaluators_;
  std::vector<SetProbabilities> rows_;
};

/// U_theta over the Yatracos sets of `candidates` (at least two members).
UStatistic u_statistic(const ParamVector& theta, const EmpiricalBlockDistribution& blocks,
                       const CandidateSet& candidates, std::int64_t mc_samples, std::uint64_t seed);

/// Minimum-distance estimate; builds a YatracosTable.
ParamVector md_estimate(const EmpiricalBlockDistribution& blocks, const CandidateSet& candidates,
                        std::int64_t mc_samples, std::uint64_t seed);

/// The Yatracos class of `candidates` on flattened blocks of length n, for
/// the VC tools. A concept parameter is the index pair (i, j).
ConceptClass yatracos_concept_class(const CandidateSet& candidates, Eigen::Index n);

}  // namespace ulc
