// Command-line front end: simulate, encode, decode, experiment, vc-bounds, fit.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ulc/experiment.hpp"
#include "ulc/two_stage_codec.hpp"
#include "ulc/vc_toolkit.hpp"

using namespace ulc;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw std::runtime_error("failed writing '" + path + "'");
}

// Config file plus command-line overrides; later sources win.
struct ConfigSource {
  std::string file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;

  void add(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "Config file (key = value lines)");
    cmd->add_option("--set", sets, "Override a config key, as key=value (repeatable)");
  }

  KeyValues load() const {
    KeyValues kv = file.empty() ? KeyValues{} : KeyValues::parse(read_text(file));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw SpecError("--set expects key=value, got '" + s + "'");
      kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) kv.set(k, v);
    return kv;
  }
};

// Registers a flag that overrides `key` when given.
void override_flag(CLI::App* cmd, ConfigSource& src, const std::string& flag, const std::string& key,
                   const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&src, key](const std::string& v) { src.flags.emplace_back(key, v); }, help);
}

FamilySpec family_of_record(const ExperimentRecord& r) {
  const auto dims = static_cast<int>(std::count(r.theta0.begin(), r.theta0.end(), ';') + 1);
  if (r.family == family_name(Family::GaussianIID)) return FamilySpec::gaussian_iid();
  if (r.family == family_name(Family::GaussianAR)) return FamilySpec::gaussian_ar(dims);
  if (r.family == family_name(Family::HMM)) {
    const int m = static_cast<int>(std::lround(std::sqrt(dims)));
    return FamilySpec::hmm(Eigen::VectorXd::LinSpaced(m, 0.0, 1.0));
  }
  throw std::runtime_error("unknown family '" + r.family + "' in CSV");
}

int cmd_simulate(const ConfigSource& src, long long length, std::uint64_t seed, const std::string& out) {
  const ModelSpec spec = model_spec_from(src.load());
  if (length < 1) throw std::runtime_error("--length must be positive");
  const SampleBlock path = sample_path(make_model(spec.family, spec.theta), length, seed);
  write_text(out, samples_to_csv(path));
  return 0;
}

int cmd_encode(const ConfigSource& src, const std::string& input, const std::string& out) {
  const CodecConfig cfg = CodecConfig::from(src.load());
  const SampleBlock path = parse_samples_csv(read_text(input));
  const Eigen::Index m = cfg.memory_length();
  if (path.size() < m + cfg.n)
    throw std::runtime_error("input has " + std::to_string(path.size()) + " letters; need at least m_n + n = " +
                             std::to_string(m + cfg.n));
  const Codec codec(cfg);
  Container box;
  box.config_hash = cfg.hash();
  double distortion = 0.0;
  const Eigen::Index blocks = (path.size() - m) / cfg.n;
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index start = m + b * cfg.n;
    const EncodeResult enc = codec.encode(path.segment(start, cfg.n), path.segment(start - m, m));
    box.payload.append(enc.description.to_bits());
    distortion += enc.distortion;
  }
  box.count = static_cast<std::uint32_t>(blocks);
  const auto bytes = write_container(box);
  write_text(out, std::string(bytes.begin(), bytes.end()));
  std::fprintf(stderr, "encoded %lld blocks of %lld letters: %zu bits (%.4f bits/letter), mean distortion %.6f\n",
               static_cast<long long>(blocks), static_cast<long long>(cfg.n), box.payload.size(),
               static_cast<double>(box.payload.size()) / static_cast<double>(blocks * cfg.n),
               distortion / static_cast<double>(blocks));
  return 0;
}

int cmd_decode(const ConfigSource& src, const std::string& input, const std::string& out) {
  const CodecConfig cfg = CodecConfig::from(src.load());
  const Container box = read_container(read_bytes(input));
  if (box.config_hash != cfg.hash())
    throw std::runtime_error("container was written with a different configuration (hash mismatch)");
  const Codec codec(cfg);
  BitReader reader(box.payload);
  SampleBlock recon;
  recon.values.resize(cfg.family.letter_dim(), static_cast<Eigen::Index>(box.count) * cfg.n);
  for (std::uint32_t k = 0; k < box.count; ++k) {
    const DecodeResult dec = codec.decode(reader);
    recon.values.middleCols(static_cast<Eigen::Index>(k) * cfg.n, cfg.n) = dec.reproduction.values;
  }
  if (!reader.at_end()) throw ParseError("trailing bits after the last description", reader.position());
  write_text(out, samples_to_csv(recon));
  return 0;
}

int cmd_experiment(const ConfigSource& src, bool summary, const std::string& fit_metric) {
  const ExperimentConfig cfg = ExperimentConfig::from(src.load());
  const auto records = run_experiment(cfg);
  if (!cfg.output.empty()) {
    emit_csv(records, cfg.output);
  } else {
    std::cout << to_csv(records);
  }
  if (summary) std::cerr << emit_summary(records);
  if (!fit_metric.empty()) {
    const auto fit = fit_rate_envelope(records, metric_by_name(fit_metric),
                                       [&](Eigen::Index n) { return family_vc_bound(cfg.codec.family, n); });
    std::fprintf(stderr, "envelope fit (%s): slope %.6f intercept %.6f\n", fit_metric.c_str(), fit.slope,
                 fit.intercept);
  }
  return 0;
}

int cmd_vc_bounds(const std::string& family, int ar_order, int states, long long n, double scale) {
  FamilySpec spec;
  if (family == "gaussian_iid") {
    spec = FamilySpec::gaussian_iid();
  } else if (family == "gaussian_ar") {
    spec = FamilySpec::gaussian_ar(ar_order);
  } else if (family == "hmm") {
    spec = FamilySpec::hmm(Eigen::VectorXd::LinSpaced(states, 0.0, 1.0));
  } else {
    throw std::runtime_error("unknown family '" + family + "'");
  }
  const double v = family_vc_bound(spec, static_cast<Eigen::Index>(n));
  std::printf("family %s\nn %lld\nvc_bound %.10g\n", family.c_str(), n, v);
  if (n >= 2) {
    const double d = delta_n(static_cast<Eigen::Index>(n), v, scale);
    std::printf("delta_n %.10g\nthreshold %.10g\n", d, std::sqrt(static_cast<double>(n)) * d);
  }
  return 0;
}

int cmd_fit(const std::string& input, const std::string& metric) {
  const auto records = parse_csv(read_text(input));
  if (records.empty()) throw std::runtime_error("no records in '" + input + "'");
  const FamilySpec spec = family_of_record(records.front());
  const auto fit =
      fit_rate_envelope(records, metric_by_name(metric), [&](Eigen::Index n) { return family_vc_bound(spec, n); });
  std::printf("metric %s\nslope %.9f\nintercept %.9f\n", metric.c_str(), fit.slope, fit.intercept);
  std::printf("n,log_envelope,log_median,residual\n");
  for (std::size_t i = 0; i < fit.n.size(); ++i)
    std::printf("%lld,%.9f,%.9f,%.9f\n", static_cast<long long>(fit.n[i]), fit.x[i], fit.y[i], fit.residuals[i]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage universal lossy coding toolkit"};
  app.require_subcommand(1);

  ConfigSource sim_src, enc_src, dec_src, exp_src;
  long long length = 1000;
  std::uint64_t seed = 1;
  std::string out, input, fit_metric, family = "gaussian_iid", metric = "d_n";
  bool summary = false;
  int ar_order = 1, states = 2;
  long long vc_n = 100;
  double scale = 1.0;

  auto* sim = app.add_subcommand("simulate", "Draw a sample path from the model in the config");
  sim_src.add(sim);
  sim->add_option("--length", length, "Number of letters")->capture_default_str();
  sim->add_option("--seed", seed, "Path seed")->capture_default_str();
  sim->add_option("-o,--out", out, "Output samples CSV (default stdout)");

  auto* enc = app.add_subcommand("encode", "Encode a samples CSV into a description container");
  enc_src.add(enc);
  enc->add_option("-i,--input", input, "Samples CSV")->required();
  enc->add_option("-o,--out", out, "Container file")->required();

  auto* dec = app.add_subcommand("decode", "Decode a container into reproduced samples");
  dec_src.add(dec);
  dec->add_option("-i,--input", input, "Container file")->required();
  dec->add_option("-o,--out", out, "Output samples CSV (default stdout)");

  auto* exp = app.add_subcommand("experiment", "Run the redundancy and identification experiment");
  exp_src.add(exp);
  override_flag(exp, exp_src, "--trials", "trials", "Trials per block length");
  override_flag(exp, exp_src, "--n-list", "n_list", "Block lengths, comma separated and ascending");
  override_flag(exp, exp_src, "--seed", "seed", "Experiment seed");
  override_flag(exp, exp_src, "--lambda", "lambda", "Lagrange multiplier");
  override_flag(exp, exp_src, "--delta-scale", "delta_scale", "Multiplier on delta_n");
  override_flag(exp, exp_src, "--mc-samples", "mc_samples", "Monte Carlo samples per waiting-time test");
  override_flag(exp, exp_src, "--md-mc-samples", "md_mc_samples", "Monte Carlo samples per Yatracos pool");
  override_flag(exp, exp_src, "--eval-blocks", "eval_blocks", "Evaluation blocks per trial");
  override_flag(exp, exp_src, "--codebook-seed", "codebook_seed", "First-stage codebook seed");
  override_flag(exp, exp_src, "--threads", "threads", "Worker threads (0 = all cores)");
  override_flag(exp, exp_src, "--out", "output", "Output CSV path (default stdout)");
  exp->add_flag("--summary", summary, "Print per-n medians and IQRs to stderr");
  exp->add_option("--fit", fit_metric, "Also fit the rate envelope for this metric (e.g. d_n)");

  auto* vc = app.add_subcommand("vc-bounds", "Print the VC bound and delta_n for a family");
  vc->add_option("--family", family, "gaussian_iid, gaussian_ar or hmm")->capture_default_str();
  vc->add_option("--ar-order", ar_order, "AR order")->capture_default_str();
  vc->add_option("--states", states, "HMM states")->capture_default_str();
  vc->add_option("-n,--n", vc_n, "Block length")->capture_default_str();
  vc->add_option("--delta-scale", scale, "Multiplier on delta_n")->capture_default_str();

  auto* fit = app.add_subcommand("fit", "Fit the rate envelope to an experiment CSV");
  fit->add_option("-i,--input", input, "Experiment CSV")->required();
  fit->add_option("--metric", metric, "d_n, redundancy, lagrangian, distortion or rate")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sim) return cmd_simulate(sim_src, length, seed, out);
    if (*enc) return cmd_encode(enc_src, input, out);
    if (*dec) return cmd_decode(dec_src, input, out);
    if (*exp) return cmd_experiment(exp_src, summary, fit_metric);
    if (*vc) return cmd_vc_bounds(family, ar_order, states, vc_n, scale);
    if (*fit) return cmd_fit(input, metric);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
