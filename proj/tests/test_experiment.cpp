#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ulc/experiment.hpp"

using namespace ulc;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig e;
  CodecConfig& c = e.codec;
  c.family = FamilySpec::gaussian_iid();
  c.lambda = 0.2;
  c.mc_samples = 300;
  c.md_mc_samples = 1000;
  c.train_size = 150;
  c.init_size = 8;
  c.max_iters = 10;
  c.max_wait = 2000;
  c.candidates = gaussian_grid({-1.5, 1.5, 5}, {-0.5, 0.5, 3});
  c.delta_scale = 0.6 / (2.0 * delta_n(4, c.vc_dim(), 1.0));
  e.theta0 = gaussian_iid(0.4, 0.8);
  e.n_list = {4};
  e.trials = 1;
  e.eval_blocks = 400;
  e.id_mc_samples = 1000;
  return e;
}

std::vector<ExperimentRecord> synthetic(const std::function<double(Eigen::Index)>& value) {
  std::vector<ExperimentRecord> out;
  for (Eigen::Index n : {4, 8, 16, 32, 64})
    for (int t = 0; t < 3; ++t) {
      ExperimentRecord r;
      r.n = n;
      r.trial = t;
      r.d_n = value(n);
      out.push_back(r);
    }
  return out;
}

double envelope(Eigen::Index n, double v) {
  const double nd = static_cast<double>(n);
  return std::sqrt(v * std::log2(nd) / nd);
}

}  // namespace

TEST_CASE("single trial produces one populated record") {
  const auto records = run_experiment(small_config());
  REQUIRE(records.size() == 1);
  const auto& r = records[0];
  CHECK(r.ok());
  CHECK(r.family == "gaussian_iid");
  CHECK(r.theta0 == "0.40000000000000002;0.80000000000000004");
  CHECK(r.n == 4);
  CHECK(r.description_bits == r.first_stage_bits + r.codeword_bits);
  CHECK(r.first_stage_bits >= 1);
  CHECK(r.distortion > 0);
  CHECK(r.rate >= 0);
  CHECK(r.lagrangian == doctest::Approx(r.distortion + 0.2 * r.rate).epsilon(1e-8));
  CHECK(r.baseline_lagrangian > 0);
  CHECK(r.redundancy == doctest::Approx(r.lagrangian - r.baseline_lagrangian).epsilon(1e-8));
  CHECK(r.redundancy_std_error > 0);
  CHECK(r.d_n >= 0);
  CHECK(r.u_statistic >= 0);
  CHECK(r.runtime_seconds == 0.0);
  if (!r.flag) CHECK(r.waiting_time >= 1);
}

TEST_CASE("reruns are byte-identical regardless of thread count") {
  ExperimentConfig e = small_config();
  e.n_list = {4, 6};
  e.trials = 4;
  const std::string first = to_csv(run_experiment(e));
  CHECK(to_csv(run_experiment(e)) == first);
  e.codec.threads = 4;
  CHECK(to_csv(run_experiment(e)) == first);

  const auto records = parse_csv(first);
  REQUIRE(records.size() == 8);
  for (std::size_t k = 1; k < records.size(); ++k) {
    const bool ordered = records[k - 1].n < records[k].n ||
                         (records[k - 1].n == records[k].n && records[k - 1].trial < records[k].trial);
    CHECK(ordered);
  }
}

TEST_CASE("failing trials become diagnostic rows") {
  ExperimentConfig e = small_config();
  e.codec.family = FamilySpec::gaussian_ar(2);
  e.codec.r = 3.0;
  e.codec.candidates = ar_grid(2, {-0.5, 0.5, 3});
  e.codec.delta_scale = 0.6 / (2.0 * delta_n(4, e.codec.vc_dim(), 1.0));
  // A prior that can almost never produce a stable draw in one attempt.
  e.codec.prior.coeff_sd = 50.0;
  e.codec.prior.max_rejections = 1;
  e.theta0 = gaussian_ar(Eigen::Vector2d(0.2, 0.1));
  e.trials = 2;
  const auto records = run_experiment(e);
  REQUIRE(records.size() == 2);
  for (const auto& r : records) {
    CHECK_FALSE(r.ok());
    CHECK(r.status.rfind("error: ", 0) == 0);
    CHECK(r.status.find(',') == std::string::npos);
  }
  CHECK(parse_csv(to_csv(records)) == records);
}

TEST_CASE("CSV schema, roundtrip and errors") {
  const std::string empty = to_csv({});
  std::istringstream lines(empty);
  std::string l1, l2, l3;
  std::getline(lines, l1);
  std::getline(lines, l2);
  CHECK_FALSE(std::getline(lines, l3));
  CHECK(l1.rfind("# ulc experiment csv schema=1 columns=23", 0) == 0);
  CHECK(csv_columns().size() == 23);
  CHECK(parse_csv(empty).empty());

  ExperimentConfig e = small_config();
  e.trials = 3;
  const auto records = run_experiment(e);
  CHECK(parse_csv(to_csv(records)) == records);

  CHECK_THROWS_AS(parse_csv("family,theta0\n"), ExperimentError);
  std::string bad = to_csv(records);
  bad += "gaussian_iid,0;1,4\n";
  CHECK_THROWS_AS(parse_csv(bad), ExperimentError);
  std::string future = to_csv({});
  future.replace(future.find("schema=1"), 8, "schema=9");
  CHECK_THROWS_AS(parse_csv(future), ExperimentError);

  CHECK_THROWS_AS(emit_csv(records, "/nonexistent-dir/out.csv"), ExperimentError);
  const auto path = std::filesystem::temp_directory_path() / "ulc_experiment_test.csv";
  emit_csv(records, path.string());
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == to_csv(records));
  std::filesystem::remove(path);
}

TEST_CASE("summary medians and quartiles") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(interquartile_range({1, 2, 3, 4, 5}) == 2.0);

  auto recs = synthetic([](Eigen::Index n) { return 1.0 / static_cast<double>(n); });
  recs[0].status = "error: x";
  const auto rows = summarize(recs);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].n == 4);
  CHECK(rows[0].failed == 1);
  CHECK(rows[1].median_d_n == 0.125);
  const std::string table = emit_summary(recs);
  CHECK(table.find("med_redund") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
}

TEST_CASE("rate envelope fits") {
  const double v = 12 * std::log2(12 * std::exp(1.0));
  const VcOfN vc = [v](Eigen::Index) { return v; };

  const auto exact = synthetic([&](Eigen::Index n) { return 0.3 * envelope(n, v); });
  const EnvelopeFit fit = fit_rate_envelope(exact, metric_by_name("d_n"), vc);
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::exp(fit.intercept) == doctest::Approx(0.3).epsilon(1e-6));
  for (double r : fit.residuals) CHECK(std::abs(r) < 1e-9);

  // Flat apart from a negligible wobble: slope 0.
  const auto flat = synthetic([](Eigen::Index n) { return 0.25 * (1.0 + ((n / 4) % 2 ? 1e-9 : -1e-9)); });
  CHECK(std::abs(fit_rate_envelope(flat, metric_by_name("d_n"), vc).slope) < 1e-6);

  const auto constant = synthetic([](Eigen::Index) { return 0.25; });
  CHECK_THROWS_AS(fit_rate_envelope(constant, metric_by_name("d_n"), vc), ExperimentError);

  auto two = synthetic([](Eigen::Index n) { return 1.0 / static_cast<double>(n); });
  two.resize(6);
  CHECK_THROWS_AS(fit_rate_envelope(two, metric_by_name("d_n"), vc), ExperimentError);
  CHECK_THROWS_AS(metric_by_name("bogus"), ExperimentError);
}

TEST_CASE("config parsing") {
  const auto kv = KeyValues::parse(
      "family = gaussian_iid\nmean = 0.5\nsigma = 1.5\nn_list = 4,8,16\ntrials = 7\nseed = 3\n"
      "delta_scale = 0.01\noutput = out.csv\n");
  const auto e = ExperimentConfig::from(kv);
  CHECK(e.n_list == std::vector<Eigen::Index>{4, 8, 16});
  CHECK(e.trials == 7);
  CHECK(e.theta0 == gaussian_iid(0.5, 1.5));
  CHECK(e.output == "out.csv");

  auto unsorted = kv;
  unsorted.set("n_list", "8,4");
  CHECK_THROWS_AS(ExperimentConfig::from(unsorted), SpecError);
  auto zero = kv;
  zero.set("trials", "0");
  CHECK_THROWS_AS(ExperimentConfig::from(zero), SpecError);
  auto bad_theta = kv;
  bad_theta.set("sigma", "-1");
  CHECK_THROWS(ExperimentConfig::from(bad_theta));
}

TEST_CASE("matched baseline beats a deliberately mismatched code") {
  const ExperimentConfig e = small_config();
  CodecConfig c = e.codec;
  c.train_size = 300;
  const Codec codec(c);
  const VariableRateCode matched = codec.train_code(e.theta0, 1);
  const VariableRateCode mismatched = codec.train_code(gaussian_iid(-1.5, 2.0), 2);
  const SampleBlock eval = sample_path(make_model(c.family, e.theta0), c.n * 3000, 5);
  std::vector<Block> blocks;
  for (Eigen::Index j = 0; j < 3000; ++j) blocks.push_back(eval.values.middleCols(j * c.n, c.n));
  const auto m = lagrangian_performance(matched, blocks, c.lambda, c.distortion);
  const auto x = lagrangian_performance(mismatched, blocks, c.lambda, c.distortion);
  CHECK(m.lagrangian <= x.lagrangian + 3.0 * std::hypot(m.std_error, x.std_error));
}

TEST_CASE("the waiting-time search beats the default entry on average") {
  ExperimentConfig e = small_config();
  // theta0 inside the candidate grid, far from the default entry; a small
  // lambda keeps the first-stage bits cheap next to the mismatch cost.
  e.theta0 = gaussian_iid(1.5, 0.6);
  e.codec.lambda = 0.05;
  e.codebook_per_trial = false;
  e.trials = 12;
  const FirstStageCodebook cb(e.codec.family, e.codec.prior, e.codec.codebook_seed);
  INFO("default entry " << cb.entry(1).coords.transpose());
  REQUIRE(variational_distance_mc(make_model(e.codec.family, e.theta0), make_model(e.codec.family, cb.entry(1)),
                                  4, 4000, 1)
              .point_estimate > 1.0);

  const auto search = run_experiment(e);
  e.codec.max_wait = 0;
  const auto fallback = run_experiment(e);
  double s = 0, f = 0;
  for (const auto& r : search) {
    REQUIRE(r.ok());
    s += r.redundancy;
  }
  for (const auto& r : fallback) {
    REQUIRE(r.ok());
    CHECK(r.flag);
    f += r.redundancy;
  }
  INFO("search " << s / 12 << " default " << f / 12);
  CHECK(f >= s);
}
