#pragma once

// Desk-scale experiments for the two-stage code: per (n, trial) encode a
// block using the preceding memory, decode it, and measure Lagrangian
// redundancy against a matched trained code plus the identification error.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ulc/model_spec.hpp"
#include "ulc/two_stage_codec.hpp"

namespace ulc {

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  /// Codec settings; `n` is replaced by each entry of n_list.
  CodecConfig codec;
  ParamVector theta0;
  std::vector<Eigen::Index> n_list{4};
  int trials = 1;
  std::uint64_t seed = 1;
  /// Fresh blocks from theta0 used to evaluate each trial's chosen code.
  std::int64_t eval_blocks = 2000;
  /// Monte Carlo samples for d_n(theta0, theta_hat).
  std::int64_t id_mc_samples = 4000;
  /// Seed for the matched baseline's training data, independent of the codebook.
  std::uint64_t baseline_seed = 17;
  /// Draw an independent first-stage codebook for every trial, so medians
  /// average over the codebook as well as the data. When false all trials
  /// share codec.codebook_seed.
  bool codebook_per_trial = true;
  /// Wall-clock runtimes are written only when set, so reruns stay byte-identical.
  bool record_runtime = false;
  std::string output;

  /// Codec keys plus theta0 (model keys), n_list, trials, seed, eval_blocks,
  /// id_mc_samples, baseline_seed, codebook_per_trial, record_runtime and output.
  static ExperimentConfig from(const KeyValues& kv);
  void validate() const;
};

/// One CSV row. Real fields are rounded to kCsvDecimals when produced so
/// that parse(emit(records)) == records exactly.
struct ExperimentRecord {
  std::string family;
  std::string theta0;  // coordinates joined by ';'
  Eigen::Index n = 0;
  int trial = 0;
  std::uint64_t trial_seed = 0;
  std::uint64_t codebook_seed = 0;
  /// "ok", or "error: <message>" for a trial that failed.
  std::string status = "ok";
  bool flag = false;
  /// 0 when the search gave up (flag set).
  std::uint64_t waiting_time = 0;
  std::int64_t first_stage_bits = 0;
  std::int64_t codeword_bits = 0;
  /// Bits spent on this trial's block.
  std::int64_t description_bits = 0;
  /// Per-letter figures of the chosen code on the evaluation blocks, with
  /// the first-stage bits charged to the rate.
  double distortion = 0.0;
  double rate = 0.0;
  double lagrangian = 0.0;
  double baseline_lagrangian = 0.0;
  double redundancy = 0.0;
  /// Paired standard error of the redundancy.
  double redundancy_std_error = 0.0;
  /// redundancy < -3 standard errors.
  bool redundancy_flagged = false;
  double d_n = 0.0;
  double d_n_std_error = 0.0;
  double u_statistic = 0.0;
  double runtime_seconds = 0.0;

  bool ok() const { return status == "ok"; }
  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr int kCsvDecimals = 9;
/// Column names in output order.
const std::vector<std::string>& csv_columns();

/// Records ordered by (n, trial). Failing trials become diagnostic rows.
std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& config);

std::string to_csv(const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> parse_csv(const std::string& text);
/// Throws ExperimentError when the file cannot be written.
void emit_csv(const std::vector<ExperimentRecord>& records, const std::string& path);

/// Sample paths as CSV: a "# ulc samples v1 dim=D" line, a "t,x0,..."
/// header, then one row per letter with full precision.
std::string samples_to_csv(const SampleBlock& path);
SampleBlock parse_samples_csv(const std::string& text);

struct SummaryRow {
  Eigen::Index n = 0;
  int trials = 0;
  int failed = 0;
  double flag_fraction = 0.0;
  double median_waiting_time = 0.0;
  double median_redundancy = 0.0, iqr_redundancy = 0.0;
  double median_d_n = 0.0, iqr_d_n = 0.0;
  double median_lagrangian = 0.0;
  double median_bits = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<ExperimentRecord>& records);
/// Fixed-width text table of summarize().
std::string emit_summary(const std::vector<ExperimentRecord>& records);

double median(std::vector<double> values);
/// Upper minus lower quartile (linear interpolation).
double interquartile_range(std::vector<double> values);

struct EnvelopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<Eigen::Index> n;
  std::vector<double> x;  // log sqrt(V_n log2 n / n)
  std::vector<double> y;  // log median metric
  std::vector<double> residuals;
};

using RecordMetric = std::function<double(const ExperimentRecord&)>;
using VcOfN = std::function<double(Eigen::Index)>;

/// Least squares of log(median metric over ok records) on
/// log(sqrt(V_n log2 n / n)). Needs three distinct n and positive medians
/// that are not all equal.
EnvelopeFit fit_rate_envelope(const std::vector<ExperimentRecord>& records, const RecordMetric& metric,
                              const VcOfN& vc_of_n);
/// Metric by column name: "d_n", "redundancy", "lagrangian", "distortion", "rate".
RecordMetric metric_by_name(const std::string& name);

}  // namespace ulc
