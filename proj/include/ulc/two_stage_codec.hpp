#pragma once

// The two-stage universal code. The first stage names a parameter by its
// waiting time in a shared random codebook drawn from a prior. The second
// stage codes the block with a quantizer trained for that parameter.
//
// Description bits: [flag][Elias delta of the waiting time, iff flag = 0]
// [canonical codeword]. Flag 1 means no entry was close enough within
// max_wait and the default entry 1 is used.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "ulc/bits.hpp"
#include "ulc/md_estimator.hpp"
#include "ulc/model_spec.hpp"
#include "ulc/quantizer_core.hpp"
#include "ulc/source_models.hpp"

namespace ulc {

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// VC bound for the family's Yatracos class via km_bound:
/// Gaussian i.i.d. (k=6, s=3), AR(p) (k=2p+2, s=2), HMM with M states (k=2M^2, s=n).
double family_vc_bound(const FamilySpec& family, Eigen::Index n);

/// scale * (sqrt(2048 (V + 1) ln n) / n + 6 / n^1.5)
double delta_n(Eigen::Index n, double vc_dim, double scale = 1.0);

struct CodecConfig {
  FamilySpec family;
  Eigen::Index n = 8;
  double eta = 1.0;
  /// Declared mixing exponent; infinity for independent sources.
  double r = std::numeric_limits<double>::infinity();
  double lambda = 0.1;
  double delta_scale = 1.0;
  ParameterPrior prior;
  std::uint64_t codebook_seed = 1;
  std::uint64_t max_wait = 100000;
  /// Samples per Monte Carlo d_n inside the waiting-time search.
  std::int64_t mc_samples = 2000;
  /// Samples per theta for the Yatracos set probabilities.
  std::int64_t md_mc_samples = 10000;
  std::uint64_t md_seed = 2;
  /// Training blocks per second-stage code.
  std::size_t train_size = 1000;
  std::size_t init_size = 16;
  int max_iters = 30;
  DistortionSpec distortion;
  CandidateSet candidates;
  unsigned threads = 1;

  Eigen::Index gap() const { return gap_length(n, eta, r); }
  BlockLayout layout() const { return BlockLayout{n, gap()}; }
  Eigen::Index memory_length() const { return layout().memory_length(); }
  double vc_dim() const { return family_vc_bound(family, n); }
  double delta() const { return delta_n(n, vc_dim(), delta_scale); }
  /// sqrt(n) delta_n: the waiting-time acceptance radius for d_n.
  double threshold() const { return std::sqrt(static_cast<double>(n)) * delta(); }

  /// Reads every field from config keys (see README for the key list).
  static CodecConfig from(const KeyValues& kv);
  /// Canonical key set; from(to_keyvalues()) reproduces the config.
  KeyValues to_keyvalues() const;
  /// Hash of the canonical key text, stored in containers.
  std::uint64_t hash() const;
};

/// Lazily generated, seeded stream of prior draws Theta(1), Theta(2), ...
class FirstStageCodebook {
 public:
  FirstStageCodebook(FamilySpec family, ParameterPrior prior, std::uint64_t seed)
      : family_(std::move(family)), prior_(prior), seed_(seed) {}

  /// Theta(i), i >= 1. Depends only on (seed, i).
  ParamVector entry(std::uint64_t i) const;
  const FamilySpec& family() const { return family_; }
  std::uint64_t seed() const { return seed_; }

 private:
  FamilySpec family_;
  ParameterPrior prior_;
  std::uint64_t seed_;
};

/// Whether codebook entry i is accepted for theta_tilde: a cheap lower bound
/// on d_n rules out clearly far entries, then a Monte Carlo estimate seeded
/// by (codebook seed, i) decides.
struct HitTest {
  bool hit = false;
  bool prefiltered = false;
  double lower_bound = 0.0;
  DivergenceEstimate distance;
};

HitTest test_entry(const ParamVector& candidate, const ParamVector& theta_tilde, std::uint64_t mc_seed,
                   const CodecConfig& config);

/// Smallest i <= max_wait whose entry is a hit; nullopt when none is.
std::optional<std::uint64_t> waiting_time(const ParamVector& theta_tilde, const FirstStageCodebook& codebook,
                                          const CodecConfig& config);

/// Fraction of `draws` fresh prior draws that are hits (same test as the
/// search, on a stream seeded by `seed`).
double estimate_hit_probability(const ParamVector& theta_tilde, const CodecConfig& config, std::int64_t draws,
                                std::uint64_t seed);

struct TwoStageDescription {
  /// true: no entry within max_wait, default entry 1 used, no Elias field.
  bool flag = false;
  std::uint64_t waiting_time = 0;  // 0 when flag is set
  BitString codeword;

  std::uint64_t entry_index() const { return flag ? 1 : waiting_time; }
  /// 1 + Elias length, or 1 when flag is set.
  std::size_t first_stage_bits() const;
  BitString to_bits() const;

  friend bool operator==(const TwoStageDescription&, const TwoStageDescription&) = default;
};

struct EncodeResult {
  TwoStageDescription description;
  ParamVector theta_tilde;
  ParamVector theta_hat;
  MdResult estimate;
  std::size_t codeword_index = 0;
  SampleBlock reproduction;
  double distortion = 0.0;

  std::size_t total_bits() const { return description.first_stage_bits() + description.codeword.size(); }
};

struct DecodeResult {
  ParamVector theta_hat;
  std::uint64_t entry_index = 1;
  std::size_t codeword_index = 0;
  SampleBlock reproduction;
  TwoStageDescription description;
};

/// Encoder and decoder state for one configuration. Holds the Yatracos table
/// and the per-entry second-stage codes; both are built on first use and
/// are safe to share across threads.
class Codec {
 public:
  explicit Codec(CodecConfig config);
  /// Reuses a table built for the same candidates, n, md_mc_samples and
  /// md_seed, e.g. across codecs that differ only in the codebook seed.
  Codec(CodecConfig config, std::shared_ptr<const YatracosTable> table);

  const CodecConfig& config() const { return config_; }
  const FirstStageCodebook& codebook() const { return codebook_; }
  const YatracosTable& table() const;
  std::shared_ptr<const YatracosTable> shared_table() const;

  /// Quantizer trained on train_size blocks drawn from Theta(index), with
  /// seeds derived from (codebook seed, index). Cached by index.
  std::shared_ptr<const VariableRateCode> second_stage_code(std::uint64_t index) const;
  /// Same construction for an arbitrary parameter (e.g. a matched baseline).
  VariableRateCode train_code(const ParamVector& theta, std::uint64_t seed) const;

  /// `memory` holds the m_n letters preceding `block`.
  EncodeResult encode(const SampleBlock& block, const SampleBlock& memory) const;

  DecodeResult decode(const TwoStageDescription& description) const;
  /// Parses one description starting at reader's position.
  DecodeResult decode(BitReader& reader) const;

 private:
  CodecConfig config_;
  FirstStageCodebook codebook_;
  mutable std::once_flag table_once_;
  mutable std::shared_ptr<const YatracosTable> table_;
  mutable std::shared_mutex cache_lock_;
  mutable std::map<std::uint64_t, std::shared_ptr<const VariableRateCode>> cache_;
};

struct IdentificationResult {
  ParamVector theta_hat;
  std::optional<std::uint64_t> waiting_time;
  DivergenceEstimate d_n_estimate;
};

/// Monte Carlo d_n between the true source and the identified parameter;
/// exactly zero when they coincide.
DivergenceEstimate identification_error(const FamilySpec& family, const ParamVector& theta0,
                                        const ParamVector& theta_hat, Eigen::Index n, std::int64_t mc_samples,
                                        std::uint64_t seed);

/// Container layout (little-endian):
///   4 bytes "ULCD", u16 version, u64 config hash, u32 description count,
///   u64 payload bit length, then the concatenated description bits packed
///   MSB-first and zero-padded to a whole byte.
inline constexpr std::uint16_t kContainerVersion = 1;

struct Container {
  std::uint64_t config_hash = 0;
  std::uint32_t count = 0;
  BitString payload;
};

std::vector<std::uint8_t> write_container(const Container& container);
Container read_container(const std::vector<std::uint8_t>& bytes);

}  // namespace ulc
