#pragma once

// Variable-rate block quantizers scored by the Lagrangian D + lambda R, an
// entropy-constrained design loop, and small exact tools used to check the
// mismatch and pruning arguments (transport distance, brute-force optima,
// memory removal).

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ulc/bits.hpp"
#include "ulc/source_models.hpp"

namespace ulc {

/// A block x^n as a letter_dim x n matrix.
using Block = Eigen::MatrixXd;

class QuantizerError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-letter distortion rho(x, y) = min(base(x, y), rho_max).
///
/// truncated_absolute uses the l1 distance between letters and
/// truncated_euclidean the l2 distance; they coincide for scalar letters.
struct DistortionSpec {
  enum class Metric { TruncatedAbsolute, TruncatedEuclidean };
  double rho_max = 1.0;
  Metric base_metric = Metric::TruncatedAbsolute;

  double letter(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) const;
};

/// Mean per-letter truncated distortion between equal-length blocks.
double rho_n(const Block& x, const Block& xhat, const DistortionSpec& spec);
double rho_n(const SampleBlock& x, const SampleBlock& xhat, const DistortionSpec& spec);

/// Canonical prefix code for the given lengths: entries sorted by
/// (length, index) receive consecutive codewords. A single entry may have
/// length 0 (the empty string). Throws if Kraft fails.
std::vector<BitString> canonical_codewords(const std::vector<int>& lengths);

/// sum_i 2^-l_i
double kraft_sum(const std::vector<int>& lengths);

/// Reproduction blocks with canonical codewords of the given lengths.
class VariableRateCode {
 public:
  VariableRateCode() = default;
  /// Validates shapes and Kraft, then builds the canonical codewords.
  VariableRateCode(Eigen::Index n, Eigen::Index dim, std::vector<Block> reproductions, std::vector<int> lengths);

  Eigen::Index block_length() const { return n_; }
  Eigen::Index letter_dim() const { return dim_; }
  std::size_t size() const { return reproductions_.size(); }
  bool empty() const { return reproductions_.empty(); }

  const Block& reproduction(std::size_t i) const { return reproductions_[i]; }
  int length(std::size_t i) const { return lengths_[i]; }
  const std::vector<Block>& reproductions() const { return reproductions_; }
  const std::vector<int>& lengths() const { return lengths_; }
  const BitString& codeword(std::size_t i) const { return codewords_[i]; }
  const std::vector<BitString>& codewords() const { return codewords_; }

  /// Reads one codeword from `reader` and returns its entry index. Throws
  /// ParseError when the bits match no codeword.
  std::size_t decode_index(BitReader& reader) const;

  /// Pairwise prefix scan (quadratic; for tests and validation).
  bool is_prefix_free() const;

  friend bool operator==(const VariableRateCode& a, const VariableRateCode& b) {
    return a.n_ == b.n_ && a.dim_ == b.dim_ && a.lengths_ == b.lengths_ && a.reproductions_ == b.reproductions_;
  }

 private:
  Eigen::Index n_ = 0;
  Eigen::Index dim_ = 1;
  std::vector<Block> reproductions_;
  std::vector<int> lengths_;
  std::vector<BitString> codewords_;
  // Canonical decoding tables indexed by length.
  std::vector<std::size_t> by_length_;  // entry indices sorted by (length, index)
  std::vector<std::uint64_t> first_code_;
  std::vector<std::size_t> first_pos_;
  std::vector<std::size_t> count_;
};

/// Entry minimising rho_n(x, y_i) + lambda l_i / n; smallest index on ties.
std::size_t min_lagrangian_encode(const VariableRateCode& code, const Block& x, double lambda,
                                  const DistortionSpec& spec);

struct LagrangianReport {
  double distortion = 0.0;
  double rate = 0.0;  // bits per letter
  double lagrangian = 0.0;
  double lambda = 0.0;
  /// Standard error of the per-block Lagrangian over the evaluation set.
  double std_error = 0.0;
  std::int64_t blocks = 0;
};

/// Empirical D, R and L under min-Lagrangian encoding.
LagrangianReport lagrangian_performance(const VariableRateCode& code, const std::vector<Block>& eval_set,
                                        double lambda, const DistortionSpec& spec);

struct DesignOptions {
  double lambda = 0.1;
  std::size_t init_size = 16;
  std::uint64_t seed = 0;
  int max_iters = 50;
  /// Relative improvement below which the loop stops.
  double tolerance = 1e-10;
  /// Training points tried as the single codeword of the zero-rate
  /// competitor (all of them when the set is smaller).
  std::size_t zero_rate_candidates = 256;
  /// Cell members tried as the new reproduction (exact medoid when the cell
  /// is no larger). The current reproduction is always kept if better.
  std::size_t medoid_candidates = 128;
};

struct DesignResult {
  VariableRateCode code;
  /// Training Lagrangian after each full iteration (entry 0 is the
  /// initial code). Non-increasing.
  std::vector<double> history;
  int iterations = 0;
  bool used_zero_rate = false;
};

/// Largest codeword length any useful entry can have: floor(2 n rho_max / lambda).
int length_cap(Eigen::Index n, double lambda, const DistortionSpec& spec);

/// Entropy-constrained design by alternating partition, Shannon lengths and
/// medoid updates. Every output satisfies Kraft, l_i <= length_cap and
/// |entries| <= 2^length_cap.
DesignResult design_ecvq(const std::vector<Block>& training, Eigen::Index n, const DistortionSpec& spec,
                         const DesignOptions& options);

/// Finite-support distribution over blocks.
struct DiscreteDistribution {
  std::vector<Block> support;
  Eigen::VectorXd weights;

  /// Nonnegative weights summing to one within 1e-12.
  void validate() const;
  double entropy_bits() const;
};

/// Exact optimal transport cost under rho_n (successive shortest paths on
/// the transportation network). Requires |P| |Q| <= 25.
double wasserstein_exact_small(const DiscreteDistribution& p, const DiscreteDistribution& q,
                               const DistortionSpec& spec);

/// sum over the union support of |P(z) - Q(z)|; points match by exact equality.
double variational_distance_discrete(const DiscreteDistribution& p, const DiscreteDistribution& q);

/// Minimum of E_P min_i(rho_n + lambda l_i / n) over every nonempty subset of
/// at most four reproduction points and every Kraft-feasible assignment of
/// lengths from `length_menu`.
double brute_force_optimal_lagrangian(const DiscreteDistribution& p, const std::vector<Block>& reproduction_points,
                                      double lambda, const std::vector<int>& length_menu, const DistortionSpec& spec);

/// A code whose encoder also sees a memory state z from a finite set. The
/// source is restricted to a finite alphabet of blocks so the reachable
/// entries S(x) = {encoder[x][z]} can be listed.
struct MemoryCode {
  VariableRateCode code;
  std::vector<Block> source_alphabet;
  int memory_states = 0;
  /// encoder[x][z] is an entry index of `code`.
  std::vector<std::vector<std::size_t>> encoder;
};

/// The same entries with a memoryless encoder x -> argmin over S(x).
struct ZeroMemoryCode {
  VariableRateCode code;
  std::vector<std::size_t> encoder;  // one entry index per source letter
};

ZeroMemoryCode convert_memory_to_zero_memory(const MemoryCode& code, double lambda, const DistortionSpec& spec);

/// rho_n(x, y_i) + lambda l_i / n for one (block, entry) pair.
double entry_cost(const VariableRateCode& code, std::size_t entry, const Block& x, double lambda,
                  const DistortionSpec& spec);

/// Flat little-endian layout:
///   u64 entry count N, u32 block length n, u32 letter dim d,
///   N blocks of d*n f64 in column-major order,
///   N u8 canonical code lengths.
std::vector<std::uint8_t> serialize_codebook(const VariableRateCode& code);
VariableRateCode deserialize_codebook(const std::vector<std::uint8_t>& bytes);

}  // namespace ulc
