#include "ulc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "ulc/parallel.hpp"

namespace ulc {

namespace {

constexpr std::uint64_t kTagEval = 0x6576616cULL;
constexpr std::uint64_t kTagIdent = 0x6964ULL;
constexpr std::uint64_t kTagTrial = 0x747269616cULL;
constexpr std::uint64_t kTagBaseline = 0x62617365ULL;
constexpr std::uint64_t kTagCodebook = 0x636f6465ULL;

const char* kCsvMagic = "# ulc experiment csv";

double quantize(double x) {
  if (!std::isfinite(x)) return x;
  const double scale = std::pow(10.0, kCsvDecimals);
  return std::round(x * scale) / scale;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::string join_coords(const ParamVector& theta) {
  std::string out;
  for (Eigen::Index i = 0; i < theta.coords.size(); ++i) {
    if (i) out += ";";
    out += format_number(theta.coords(i));
  }
  return out;
}

struct TrialContext {
  const ExperimentConfig* config;
  const Codec* codec;
  const VariableRateCode* baseline;
  SourceModel model;
  Eigen::Index n;
};

ExperimentRecord run_trial(const TrialContext& ctx, int trial) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig& cfg = *ctx.config;
  const CodecConfig& cc = ctx.codec->config();
  ExperimentRecord rec;
  rec.family = family_name(cfg.theta0.family);
  rec.theta0 = join_coords(cfg.theta0);
  rec.n = ctx.n;
  rec.trial = trial;
  const RandomStream trial_stream =
      RandomStream(cfg.seed).derive({kTagTrial, static_cast<std::uint64_t>(ctx.n), static_cast<std::uint64_t>(trial)});
  rec.trial_seed = trial_stream.key();
  rec.codebook_seed = cc.codebook_seed;

  try {
    const Eigen::Index m = cc.memory_length();
    const SampleBlock path = sample_path(ctx.model, m + ctx.n, rec.trial_seed);
    const SampleBlock memory = path.segment(0, m);
    const SampleBlock block = path.segment(m, ctx.n);

    const EncodeResult enc = ctx.codec->encode(block, memory);
    const DecodeResult dec = ctx.codec->decode(enc.description);
    if (!(dec.theta_hat == enc.theta_hat) || dec.reproduction.values != enc.reproduction.values)
      throw ExperimentError("decoder disagrees with encoder");

    rec.flag = enc.description.flag;
    rec.waiting_time = enc.description.waiting_time;
    rec.first_stage_bits = static_cast<std::int64_t>(enc.description.first_stage_bits());
    rec.codeword_bits = static_cast<std::int64_t>(enc.description.codeword.size());
    rec.description_bits = static_cast<std::int64_t>(enc.total_bits());
    rec.u_statistic = enc.estimate.u.value;

    // Chosen code versus the matched baseline on the same fresh blocks.
    const auto chosen = ctx.codec->second_stage_code(enc.description.entry_index());
    const std::int64_t count = cfg.eval_blocks;
    const SampleBlock eval = sample_path(ctx.model, ctx.n * count, trial_stream.derive(kTagEval).key());
    const double nd = static_cast<double>(ctx.n);
    double dist = 0.0, bits = 0.0, base = 0.0, diff_sum = 0.0, diff_sq = 0.0;
    for (std::int64_t b = 0; b < count; ++b) {
      const Block x = eval.values.middleCols(b * ctx.n, ctx.n);
      const std::size_t i = min_lagrangian_encode(*chosen, x, cc.lambda, cc.distortion);
      const std::size_t j = min_lagrangian_encode(*ctx.baseline, x, cc.lambda, cc.distortion);
      const double d = rho_n(x, chosen->reproduction(i), cc.distortion);
      const double cost = d + cc.lambda * chosen->length(i) / nd;
      const double base_cost = entry_cost(*ctx.baseline, j, x, cc.lambda, cc.distortion);
      dist += d;
      bits += chosen->length(i);
      base += base_cost;
      diff_sum += cost - base_cost;
      diff_sq += (cost - base_cost) * (cost - base_cost);
    }
    const double cd = static_cast<double>(count);
    rec.distortion = dist / cd;
    rec.rate = (static_cast<double>(rec.first_stage_bits) + bits / cd) / nd;
    rec.lagrangian = rec.distortion + cc.lambda * rec.rate;
    rec.baseline_lagrangian = base / cd;
    rec.redundancy = rec.lagrangian - rec.baseline_lagrangian;
    const double mean_diff = diff_sum / cd;
    const double var = count > 1 ? std::max(0.0, (diff_sq - cd * mean_diff * mean_diff) / (cd - 1.0)) : 0.0;
    rec.redundancy_std_error = std::sqrt(var / cd);
    rec.redundancy_flagged = rec.redundancy < -3.0 * rec.redundancy_std_error;

    const auto id = identification_error(cc.family, cfg.theta0, enc.theta_hat, ctx.n, cfg.id_mc_samples,
                                         trial_stream.derive(kTagIdent).key());
    rec.d_n = id.point_estimate;
    rec.d_n_std_error = id.std_error;
  } catch (const std::exception& e) {
    ExperimentRecord bad;
    bad.family = rec.family;
    bad.theta0 = rec.theta0;
    bad.n = rec.n;
    bad.trial = rec.trial;
    bad.trial_seed = rec.trial_seed;
    bad.codebook_seed = rec.codebook_seed;
    bad.status = sanitize(std::string("error: ") + e.what());
    rec = bad;
  }

  for (double* v : {&rec.distortion, &rec.rate, &rec.lagrangian, &rec.baseline_lagrangian, &rec.redundancy,
                    &rec.redundancy_std_error, &rec.d_n, &rec.d_n_std_error, &rec.u_statistic})
    *v = quantize(*v);
  if (cfg.record_runtime)
    rec.runtime_seconds =
        quantize(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return rec;
}

bool flag_or(const KeyValues& kv, const std::string& key, bool fallback) {
  if (!kv.has(key)) return fallback;
  const std::string v = kv.get(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw SpecError("'" + key + "' must be true or false");
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::from(const KeyValues& kv) {
  ExperimentConfig c;
  c.codec = CodecConfig::from(kv);
  c.theta0 = param_vector_from(c.codec.family, kv);
  if (kv.has("n_list")) {
    c.n_list.clear();
    for (double v : kv.numbers("n_list")) {
      if (v != std::floor(v)) throw SpecError("n_list entries must be integers");
      c.n_list.push_back(static_cast<Eigen::Index>(v));
    }
  } else {
    c.n_list = {c.codec.n};
  }
  c.trials = static_cast<int>(kv.integer_or("trials", c.trials));
  c.seed = static_cast<std::uint64_t>(kv.integer_or("seed", static_cast<long long>(c.seed)));
  c.eval_blocks = kv.integer_or("eval_blocks", c.eval_blocks);
  c.id_mc_samples = kv.integer_or("id_mc_samples", c.id_mc_samples);
  c.baseline_seed = static_cast<std::uint64_t>(kv.integer_or("baseline_seed", static_cast<long long>(c.baseline_seed)));
  c.codebook_per_trial = flag_or(kv, "codebook_per_trial", c.codebook_per_trial);
  c.record_runtime = flag_or(kv, "record_runtime", c.record_runtime);
  c.output = kv.get_or("output", "");
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (n_list.empty()) throw SpecError("n_list is empty");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] < 2) throw SpecError("n_list entries must be at least 2");
    if (i && n_list[i] <= n_list[i - 1]) throw SpecError("n_list must be strictly ascending");
  }
  if (trials < 1) throw SpecError("trials must be at least 1");
  if (eval_blocks < 1 || id_mc_samples < 1) throw SpecError("eval_blocks and id_mc_samples must be positive");
  std::string why;
  if (!is_valid_parameter(codec.family, theta0, &why)) throw SpecError("invalid theta0: " + why);
}

// ---------------------------------------------------------------------------
// Runner

std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const SourceModel model = make_model(config.codec.family, config.theta0);
  const std::size_t trials = static_cast<std::size_t>(config.trials);

  std::vector<std::unique_ptr<Codec>> codecs;
  std::vector<VariableRateCode> baselines;
  for (Eigen::Index n : config.n_list) {
    CodecConfig cc = config.codec;
    cc.n = n;
    codecs.push_back(std::make_unique<Codec>(cc));
    codecs.back()->table();
    baselines.push_back(codecs.back()->train_code(
        config.theta0, RandomStream(config.baseline_seed).derive({kTagBaseline, static_cast<std::uint64_t>(n)}).key()));
  }

  std::vector<ExperimentRecord> records(config.n_list.size() * trials);
  parallel_for(records.size(), config.codec.threads, [&](std::size_t k) {
    const std::size_t ni = k / trials;
    const int trial = static_cast<int>(k % trials);
    const Eigen::Index n = config.n_list[ni];
    std::unique_ptr<Codec> own;
    const Codec* codec = codecs[ni].get();
    if (config.codebook_per_trial) {
      CodecConfig cc = codec->config();
      cc.codebook_seed = RandomStream(config.codec.codebook_seed)
                             .derive({kTagCodebook, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial)})
                             .key();
      own = std::make_unique<Codec>(cc, codec->shared_table());
      codec = own.get();
    }
    const TrialContext ctx{&config, codec, &baselines[ni], model, n};
    records[k] = run_trial(ctx, trial);
  });
  return records;
}

// ---------------------------------------------------------------------------
// CSV

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "family",      "theta0",         "n",           "trial",        "trial_seed",          "codebook_seed", "status",
      "flag",        "waiting_time",   "first_stage_bits", "codeword_bits", "description_bits", "distortion",
      "rate",        "lagrangian",     "baseline_lagrangian", "redundancy", "redundancy_std_error",
      "redundancy_flagged", "d_n",     "d_n_std_error", "u_statistic",  "runtime_seconds"};
  return cols;
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", kCsvDecimals, v);
  return buf;
}

std::string header_line() {
  return std::string(kCsvMagic) + " schema=" + std::to_string(kCsvSchemaVersion) +
         " columns=" + std::to_string(csv_columns().size()) +
         " baseline=matched_trained_code redundancy=lagrangian_minus_baseline";
}

double parse_real(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw ExperimentError("line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw ExperimentError("line " + std::to_string(line) + ": bad integer '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || s[0] == '-' || used != s.size())
    throw ExperimentError("line " + std::to_string(line) + ": bad unsigned integer '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, std::size_t line) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw ExperimentError("line " + std::to_string(line) + ": bad flag '" + s + "'");
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string to_csv(const std::vector<ExperimentRecord>& records) {
  std::ostringstream out;
  out << header_line() << "\n";
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : records) {
    out << r.family << ',' << r.theta0 << ',' << r.n << ',' << r.trial << ',' << r.trial_seed << ','
        << r.codebook_seed << ',' << sanitize(r.status) << ',' << (r.flag ? 1 : 0) << ',' << r.waiting_time << ',' << r.first_stage_bits
        << ',' << r.codeword_bits << ',' << r.description_bits << ',' << fixed(r.distortion) << ','
        << fixed(r.rate) << ',' << fixed(r.lagrangian) << ',' << fixed(r.baseline_lagrangian) << ','
        << fixed(r.redundancy) << ',' << fixed(r.redundancy_std_error) << ',' << (r.redundancy_flagged ? 1 : 0)
        << ',' << fixed(r.d_n) << ',' << fixed(r.d_n_std_error) << ',' << fixed(r.u_statistic) << ','
        << fixed(r.runtime_seconds) << "\n";
  }
  return out.str();
}

std::vector<ExperimentRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kCsvMagic, 0) != 0)
    throw ExperimentError("missing experiment CSV version header");
  const std::string want = "schema=" + std::to_string(kCsvSchemaVersion) + " ";
  if (line.find(want) == std::string::npos) throw ExperimentError("unsupported CSV schema: " + line);
  if (!std::getline(in, line) || split(line) != csv_columns()) throw ExperimentError("CSV column row does not match");

  std::vector<ExperimentRecord> out;
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != csv_columns().size())
      throw ExperimentError("line " + std::to_string(lineno) + ": expected " + std::to_string(csv_columns().size()) +
                            " fields, got " + std::to_string(f.size()));
    ExperimentRecord r;
    r.family = f[0];
    r.theta0 = f[1];
    r.n = static_cast<Eigen::Index>(parse_int(f[2], lineno));
    r.trial = static_cast<int>(parse_int(f[3], lineno));
    r.trial_seed = parse_uint(f[4], lineno);
    r.codebook_seed = parse_uint(f[5], lineno);
    r.status = f[6];
    r.flag = parse_bool(f[7], lineno);
    r.waiting_time = parse_uint(f[8], lineno);
    r.first_stage_bits = parse_int(f[9], lineno);
    r.codeword_bits = parse_int(f[10], lineno);
    r.description_bits = parse_int(f[11], lineno);
    r.distortion = parse_real(f[12], lineno);
    r.rate = parse_real(f[13], lineno);
    r.lagrangian = parse_real(f[14], lineno);
    r.baseline_lagrangian = parse_real(f[15], lineno);
    r.redundancy = parse_real(f[16], lineno);
    r.redundancy_std_error = parse_real(f[17], lineno);
    r.redundancy_flagged = parse_bool(f[18], lineno);
    r.d_n = parse_real(f[19], lineno);
    r.d_n_std_error = parse_real(f[20], lineno);
    r.u_statistic = parse_real(f[21], lineno);
    r.runtime_seconds = parse_real(f[22], lineno);
    out.push_back(std::move(r));
  }
  return out;
}

void emit_csv(const std::vector<ExperimentRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExperimentError("cannot open '" + path + "' for writing");
  out << to_csv(records);
  out.flush();
  if (!out) throw ExperimentError("failed writing '" + path + "'");
}

std::string samples_to_csv(const SampleBlock& path) {
  std::ostringstream out;
  out << "# ulc samples v1 dim=" << path.dim() << "\nt";
  for (Eigen::Index r = 0; r < path.dim(); ++r) out << ",x" << r;
  out << "\n";
  for (Eigen::Index t = 0; t < path.size(); ++t) {
    out << t;
    for (Eigen::Index r = 0; r < path.dim(); ++r) out << ',' << format_number(path.values(r, t));
    out << "\n";
  }
  return out.str();
}

SampleBlock parse_samples_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  const std::string magic = "# ulc samples v1 dim=";
  if (!std::getline(in, line) || line.rfind(magic, 0) != 0) throw ExperimentError("missing samples CSV header");
  const long long dim = parse_int(line.substr(magic.size()), 1);
  if (dim < 1) throw ExperimentError("samples CSV dimension must be positive");
  if (!std::getline(in, line) || split(line).size() != static_cast<std::size_t>(dim + 1))
    throw ExperimentError("samples CSV column row does not match dim");
  std::vector<double> flat;
  std::size_t lineno = 2;
  long long t = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != static_cast<std::size_t>(dim + 1))
      throw ExperimentError("line " + std::to_string(lineno) + ": wrong field count");
    if (parse_int(f[0], lineno) != t++) throw ExperimentError("line " + std::to_string(lineno) + ": t out of order");
    for (std::size_t r = 1; r < f.size(); ++r) flat.push_back(parse_real(f[r], lineno));
  }
  SampleBlock out;
  out.values = Eigen::Map<const Eigen::MatrixXd>(flat.data(), dim, static_cast<Eigen::Index>(t));
  return out;
}

// ---------------------------------------------------------------------------
// Summaries and fits

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

namespace {

double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::map<Eigen::Index, std::vector<const ExperimentRecord*>> by_n(const std::vector<ExperimentRecord>& records) {
  std::map<Eigen::Index, std::vector<const ExperimentRecord*>> groups;
  for (const auto& r : records) groups[r.n].push_back(&r);
  return groups;
}

}  // namespace

double interquartile_range(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  return quantile(v, 0.75) - quantile(v, 0.25);
}

std::vector<SummaryRow> summarize(const std::vector<ExperimentRecord>& records) {
  std::vector<SummaryRow> out;
  for (const auto& [n, group] : by_n(records)) {
    SummaryRow row;
    row.n = n;
    std::vector<double> red, dn, lag, bits, wait;
    int flagged = 0;
    for (const auto* r : group) {
      ++row.trials;
      if (!r->ok()) {
        ++row.failed;
        continue;
      }
      red.push_back(r->redundancy);
      dn.push_back(r->d_n);
      lag.push_back(r->lagrangian);
      bits.push_back(static_cast<double>(r->description_bits));
      if (r->flag) {
        ++flagged;
      } else {
        wait.push_back(static_cast<double>(r->waiting_time));
      }
    }
    const int ok = row.trials - row.failed;
    row.flag_fraction = ok ? static_cast<double>(flagged) / ok : 0.0;
    row.median_waiting_time = median(wait);
    row.median_redundancy = median(red);
    row.iqr_redundancy = interquartile_range(red);
    row.median_d_n = median(dn);
    row.iqr_d_n = interquartile_range(dn);
    row.median_lagrangian = median(lag);
    row.median_bits = median(bits);
    out.push_back(row);
  }
  return out;
}

std::string emit_summary(const std::vector<ExperimentRecord>& records) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%6s %6s %6s %6s %9s %12s %12s %10s %10s %10s %8s\n", "n", "trials", "failed",
                "flag", "med_T", "med_redund", "iqr_redund", "med_d_n", "iqr_d_n", "med_L", "med_bits");
  out += buf;
  for (const auto& r : summarize(records)) {
    std::snprintf(buf, sizeof buf, "%6lld %6d %6d %6.3f %9.1f %12.6f %12.6f %10.6f %10.6f %10.6f %8.1f\n",
                  static_cast<long long>(r.n), r.trials, r.failed, r.flag_fraction, r.median_waiting_time,
                  r.median_redundancy, r.iqr_redundancy, r.median_d_n, r.iqr_d_n, r.median_lagrangian,
                  r.median_bits);
    out += buf;
  }
  return out;
}

EnvelopeFit fit_rate_envelope(const std::vector<ExperimentRecord>& records, const RecordMetric& metric,
                              const VcOfN& vc_of_n) {
  EnvelopeFit fit;
  std::vector<double> medians;
  for (const auto& [n, group] : by_n(records)) {
    std::vector<double> values;
    for (const auto* r : group)
      if (r->ok()) values.push_back(metric(*r));
    if (values.empty()) continue;
    const double m = median(values);
    if (!(n >= 2)) throw ExperimentError("envelope fit needs n >= 2");
    const double nd = static_cast<double>(n);
    fit.n.push_back(n);
    fit.x.push_back(std::log(std::sqrt(vc_of_n(n) * std::log2(nd) / nd)));
    medians.push_back(m);
  }
  if (fit.n.size() < 3) throw ExperimentError("envelope fit needs at least three distinct n");
  if (std::all_of(medians.begin(), medians.end(), [&](double m) { return m == medians[0]; }))
    throw ExperimentError("envelope fit is degenerate: all medians are equal");
  for (double m : medians) {
    if (!(m > 0)) throw ExperimentError("envelope fit needs positive medians");
    fit.y.push_back(std::log(m));
  }

  const Eigen::Index k = static_cast<Eigen::Index>(fit.x.size());
  Eigen::MatrixXd a(k, 2);
  Eigen::VectorXd y(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    a(i, 0) = fit.x[static_cast<std::size_t>(i)];
    a(i, 1) = 1.0;
    y(i) = fit.y[static_cast<std::size_t>(i)];
  }
  if ((a.col(0).array() - a(0, 0)).abs().maxCoeff() == 0.0)
    throw ExperimentError("envelope fit is degenerate: the envelope is constant over n");
  const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(y);
  fit.slope = coef(0);
  fit.intercept = coef(1);
  const Eigen::VectorXd res = y - a * coef;
  fit.residuals.assign(res.data(), res.data() + res.size());
  return fit;
}

RecordMetric metric_by_name(const std::string& name) {
  if (name == "d_n") return [](const ExperimentRecord& r) { return r.d_n; };
  if (name == "redundancy") return [](const ExperimentRecord& r) { return r.redundancy; };
  if (name == "lagrangian") return [](const ExperimentRecord& r) { return r.lagrangian; };
  if (name == "distortion") return [](const ExperimentRecord& r) { return r.distortion; };
  if (name == "rate") return [](const ExperimentRecord& r) { return r.rate; };
  throw ExperimentError("unknown metric '" + name + "'");
}

}  // namespace ulc
