#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "ulc/md_estimator.hpp"

using namespace ulc;

namespace {

SampleBlock scalar(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return SampleBlock::scalar(v);
}

EmpiricalBlockDistribution iid_blocks(const SourceModel& model, Eigen::Index n, std::size_t count,
                                      std::uint64_t seed) {
  EmpiricalBlockDistribution out;
  const SampleBlock path = sample_path(model, n * static_cast<Eigen::Index>(count), seed);
  for (std::size_t j = 0; j < count; ++j) out.blocks.push_back(path.segment(static_cast<Eigen::Index>(j) * n, n));
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// log p(x) - log p'(x) for Gaussians from the sufficient statistics
// (sum x, sum x^2), written as the polynomial in the inverse variances.
double gaussian_polynomial(const SampleBlock& x, double m, double s, double mp, double sp) {
  const double n = static_cast<double>(x.size());
  const double sx = x.values.sum();
  const double sxx = x.values.squaredNorm();
  const double tau = 1.0 / (s * s), taup = 1.0 / (sp * sp);
  return 0.5 * n * (std::log(tau) - std::log(taup)) - 0.5 * tau * (sxx - 2 * m * sx + n * m * m) +
         0.5 * taup * (sxx - 2 * mp * sx + n * mp * mp);
}

}  // namespace

TEST_CASE("Yatracos membership") {
  const FamilySpec g = FamilySpec::gaussian_iid();
  const YatracosSet a{gaussian_iid(0, 1), gaussian_iid(2, 1), 4};
  const YatracosSet b{gaussian_iid(2, 1), gaussian_iid(0, 1), 4};
  CHECK(yatracos_membership(a, g, scalar({0, 0, 0, 0})));
  CHECK_FALSE(yatracos_membership(b, g, scalar({0, 0, 0, 0})));
  // x = 1 everywhere is equidistant: a tie, in neither set.
  CHECK_FALSE(yatracos_membership(a, g, scalar({1, 1, 1, 1})));
  CHECK_FALSE(yatracos_membership(b, g, scalar({1, 1, 1, 1})));
  CHECK_THROWS_AS(yatracos_membership({gaussian_iid(0, 1), gaussian_iid(0, 1), 4}, g, scalar({0, 0, 0, 0})),
                  ModelError);
  CHECK_THROWS_AS(yatracos_membership(a, FamilySpec::gaussian_ar(1), scalar({0, 0, 0, 0})), ModelError);

  RandomStream rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const double m = rng.normal(), mp = rng.normal();
    const double s = std::exp(0.5 * rng.normal()), sp = std::exp(0.5 * rng.normal());
    Eigen::VectorXd v(5);
    for (Eigen::Index i = 0; i < 5; ++i) v(i) = 1.5 * rng.normal();
    const SampleBlock x = SampleBlock::scalar(v);
    const YatracosSet ab{gaussian_iid(m, s), gaussian_iid(mp, sp), 5};
    const YatracosSet ba{gaussian_iid(mp, sp), gaussian_iid(m, s), 5};
    const bool in_ab = yatracos_membership(ab, g, x);
    const bool in_ba = yatracos_membership(ba, g, x);
    CHECK_FALSE((in_ab && in_ba));
    const double poly = gaussian_polynomial(x, m, s, mp, sp);
    if (std::abs(poly) > 1e-9) CHECK(in_ab == (poly > 0));
  }
}

TEST_CASE("block layout") {
  const BlockLayout l{2, 3};
  CHECK(l.memory_length() == 10);
  const auto idx = l.effective_memory_indices();
  CHECK(idx == std::vector<Eigen::Index>{0, 1, 5, 6});

  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(10, 1, 10);  // value = 1-based position
  const auto z = extract_blocks(SampleBlock::scalar(v), l);
  REQUIRE(z.size() == 2);
  CHECK(z.blocks[0].values(0, 0) == 1);
  CHECK(z.blocks[0].values(0, 1) == 2);
  CHECK(z.blocks[1].values(0, 0) == 6);
  CHECK(z.blocks[1].values(0, 1) == 7);
  CHECK_THROWS_AS(extract_blocks(SampleBlock::scalar(Eigen::VectorXd::Zero(9)), l), ModelError);

  const auto one = extract_blocks(scalar({4.0, 5.0}), BlockLayout{1, 1});
  REQUIRE(one.size() == 1);
  CHECK(one.blocks[0].values(0, 0) == 4.0);

  for (Eigen::Index n = 1; n <= 7; ++n) {
    const BlockLayout lay{n, 1 + n % 3};
    Eigen::VectorXd pos = Eigen::VectorXd::LinSpaced(lay.memory_length(), 0, lay.memory_length() - 1);
    const auto blocks = extract_blocks(SampleBlock::scalar(pos), lay);
    std::vector<Eigen::Index> seen;
    for (const auto& b : blocks.blocks)
      for (Eigen::Index t = 0; t < b.size(); ++t) seen.push_back(static_cast<Eigen::Index>(b.values(0, t)));
    CHECK(seen == lay.effective_memory_indices());
    CHECK(seen.size() == static_cast<std::size_t>(n * n));
  }

  CHECK(gap_length(4, 1.0, 3.0) == 4);
  CHECK(gap_length(10, 1.0, 6.0) == 4);  // sqrt(10) = 3.16
  CHECK(gap_length(100, 0.5, std::numeric_limits<double>::infinity()) == 1);
  CHECK(make_layout(8, 1.0, 3.0).memory_length() == 8 * (8 + 8));
}

TEST_CASE("candidate sets") {
  const auto g = gaussian_grid({-1, 1, 3}, {-0.5, 0.5, 2});
  CHECK(g.size() == 6);
  CHECK(g.members[0] == gaussian_iid(-1, std::exp(-0.5)));

  // Axis values stay off the stability boundary, where eigenvalue rounding
  // makes the companion oracle unreliable.
  const auto ar = ar_grid(2, {-1.3, 1.3, 6});
  for (const auto& t : ar.members) CHECK(oracle::companion_stable(t.coords));
  int stable = 0;
  for (double a : GridAxis{-1.3, 1.3, 6}.values())
    for (double b : GridAxis{-1.3, 1.3, 6}.values()) stable += oracle::companion_stable(Eigen::Vector2d(a, b));
  CHECK(static_cast<int>(ar.size()) == stable);

  const FamilySpec hmm = FamilySpec::hmm(Eigen::Vector2d(-1, 1), 0.05);
  const auto h = hmm_grid(hmm, 4);
  CHECK(h.size() == 25);
  for (const auto& t : h.members) {
    const Eigen::MatrixXd a = transition_matrix(t);
    CHECK(a.minCoeff() >= 0.05 - 1e-15);
    CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  const FamilySpec hmm3 = FamilySpec::hmm(Eigen::Vector3d(-1, 0, 1), 0.01);
  CHECK(hmm_grid(hmm3, 2).size() == 6 * 6 * 6);

  KeyValues kv;
  write_candidates(g, kv);
  const auto back = candidate_set_from(g.family, kv);
  CHECK(back.members == g.members);

  const auto kv2 = KeyValues::parse("grid.mean = -2, 2, 5\ngrid.log_sigma = 0, 0, 1\n");
  CHECK(candidate_set_from(FamilySpec::gaussian_iid(), kv2).size() == 5);
  const auto kv3 = KeyValues::parse("candidates = 0,1; 0,1\n");
  CHECK_THROWS_AS(candidate_set_from(FamilySpec::gaussian_iid(), kv3), ModelError);
}

TEST_CASE("prior draws") {
  const ParameterPrior prior;
  const auto fam = FamilySpec::gaussian_iid();
  RandomStream rng(5);
  const int draws = 10000;
  double s_m = 0, s_mm = 0, s_l = 0, s_ll = 0;
  for (int i = 0; i < draws; ++i) {
    const auto t = prior.draw(fam, rng);
    s_m += t.coords(0);
    s_mm += t.coords(0) * t.coords(0);
    const double l = std::log(t.coords(1));
    s_l += l;
    s_ll += l * l;
  }
  const double se_m = prior.mean_sd / std::sqrt(draws), se_l = prior.log_sigma_sd / std::sqrt(draws);
  CHECK(std::abs(s_m / draws - prior.mean_center) < 3 * se_m);
  CHECK(std::abs(s_l / draws - prior.log_sigma_center) < 3 * se_l);
  CHECK(std::sqrt(s_mm / draws) == doctest::Approx(prior.mean_sd).epsilon(0.05));
  CHECK(std::sqrt(s_ll / draws - (s_l / draws) * (s_l / draws)) == doctest::Approx(prior.log_sigma_sd).epsilon(0.05));

  const auto ar_fam = FamilySpec::gaussian_ar(3);
  for (int i = 0; i < 200; ++i) CHECK(oracle::companion_stable(prior.draw(ar_fam, rng).coords));
  const auto hmm = FamilySpec::hmm(Eigen::Vector3d(-2, 0, 2), 0.05);
  for (int i = 0; i < 200; ++i) CHECK(is_valid_parameter(hmm, prior.draw(hmm, rng)));

  const auto set = prior_candidates(fam, prior, 20, 3);
  CHECK(set.size() == 20);
  CHECK(set.generation == "prior_draws(3)");
  CHECK(prior_candidates(fam, prior, 20, 3).members == set.members);
}

TEST_CASE("U statistic") {
  const auto fam = FamilySpec::gaussian_iid();
  CandidateSet two{fam, {gaussian_iid(-1, 1), gaussian_iid(1, 1)}, "explicit"};

  SUBCASE("tie point lies in no set") {
    EmpiricalBlockDistribution z{{scalar({0.0})}};
    const std::int64_t mc = 100000;
    const auto u = u_statistic(two.members[0], z, two, mc, 7);
    // A_{0,1} = {x < 0} has P = Phi(1) under N(-1, 1); empirical mass is 0.
    const double p = oracle::normal_cdf(1.0);
    CHECK(std::abs(u.value - p) < 4 * std::sqrt(p * (1 - p) / mc));
    CHECK(u.arg_i == 0);
    CHECK(u.arg_j == 1);
    CHECK(u.mc_error > 0);
  }

  SUBCASE("range, order invariance and concentration") {
    const auto grid = gaussian_grid({-1, 1, 5}, {-0.3, 0.3, 3});
    const auto model = make_model(fam, gaussian_iid(0, 1));
    auto z = iid_blocks(model, 4, 4, 11);
    const YatracosTable table(grid, 4, 2000, 3);
    const auto u = table.u_statistic(gaussian_iid(0, 1), z);
    CHECK(u.value >= 0.0);
    CHECK(u.value <= 1.0);
    std::reverse(z.blocks.begin(), z.blocks.end());
    CHECK(table.u_statistic(gaussian_iid(0, 1), z).value == u.value);

    const auto many = iid_blocks(model, 4, 4000, 12);
    const YatracosTable big(grid, 4, 20000, 4);
    CHECK(big.u_statistic(gaussian_iid(0, 1), many).value < 0.05);
  }

  SUBCASE("candidate rows do not depend on position") {
    const auto grid = gaussian_grid({-1, 1, 3}, {0, 0, 1});
    CandidateSet reversed = grid;
    std::reverse(reversed.members.begin(), reversed.members.end());
    const YatracosTable a(grid, 3, 500, 9), b(reversed, 3, 500, 9);
    // P(A_{0,2}) in a is P(A_{2,0}) in b, computed from the same pool.
    CHECK(a.row(0).p(0, 2) == b.row(2).p(2, 0));
    CHECK(a.row(1).p(2, 1) == b.row(1).p(0, 1));
  }
}

TEST_CASE("minimum-distance estimate") {
  const auto fam = FamilySpec::gaussian_iid();
  CandidateSet single{fam, {gaussian_iid(0.3, 2)}, "explicit"};
  CHECK(md_estimate({{scalar({1, 2})}}, single, 100, 1) == gaussian_iid(0.3, 2));

  CandidateSet two{fam, {gaussian_iid(0, 1), gaussian_iid(5, 1)}, "explicit"};
  CandidateSet swapped{fam, {gaussian_iid(5, 1), gaussian_iid(0, 1)}, "explicit"};
  const YatracosTable t2(two, 8, 2000, 1), t2s(swapped, 8, 2000, 1);
  const auto model = make_model(fam, gaussian_iid(0, 1));
  const BlockLayout layout = make_layout(8, 1.0, std::numeric_limits<double>::infinity());
  int correct = 0, agree = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const auto z = extract_blocks(sample_path(model, layout.memory_length(), 1000 + trial), layout);
    const auto r = t2.estimate(z);
    correct += r.theta == gaussian_iid(0, 1);
    agree += t2s.estimate(z).theta == r.theta;
  }
  CHECK(correct >= 99);
  CHECK(agree == 100);
}

TEST_CASE("minimum-distance key inequality") {
  const std::int64_t mc = 3000;
  auto run = [&](const CandidateSet& grid, const ParamVector& theta0, Eigen::Index n, double r, int trials,
                 std::uint64_t seed) {
    const YatracosTable table(grid, n, mc, seed, 0);
    const auto model0 = make_model(grid.family, theta0);
    const auto truth = table.row(grid.find(theta0));
    const BlockLayout layout = make_layout(n, 1.0, r);
    std::size_t i0 = grid.find(theta0);
    for (int trial = 0; trial < trials; ++trial) {
      const auto z = extract_blocks(sample_path(model0, layout.memory_length(), seed * 1000 + trial), layout);
      const auto est = table.estimate(z);
      const auto emp = table.empirical(z);
      const auto u0 = table.u_statistic(truth, emp);
      // With the table's own estimates the inequality is exact.
      const double d_table = 2 * std::abs(table.row(est.index).p(est.index, i0) - truth.p(est.index, i0));
      CHECK(d_table <= 4 * u0.value + 1e-12);
      // Against an independent Monte Carlo distance.
      const auto d = variational_distance_mc(make_model(grid.family, est.theta), model0, n, 4000, seed + trial);
      const double combined = d.std_error + 4 * u0.mc_error;
      CHECK(d.point_estimate <= 4 * u0.value + 3.0 / n + 5 * combined);
    }
  };
  SUBCASE("i.i.d. Gaussian blocks") {
    const auto grid = gaussian_grid({-1, 1, 5}, {-0.4, 0.4, 3});
    const auto theta0 = grid.members[7];
    for (Eigen::Index n : {4, 8, 16}) run(grid, theta0, n, std::numeric_limits<double>::infinity(), 67, 10 + n);
  }
  SUBCASE("blocks extracted from a dependent AR path") {
    const auto grid = ar_grid(1, {-0.8, 0.8, 9});
    const auto theta0 = grid.members[2];
    for (Eigen::Index n : {4, 8}) run(grid, theta0, n, 3.0, 40, 20 + n);
  }
}

TEST_CASE("estimation error shrinks with n") {
  const auto grid = gaussian_grid({-1, 1, 9}, {-0.4, 0.4, 5});
  const auto theta0 = gaussian_iid(0.25, 1);
  REQUIRE(grid.find(theta0) < grid.size());
  const auto model0 = make_model(grid.family, theta0);
  // From n = 4 to 8 the distance between neighbouring grid points grows
  // faster than the estimate concentrates, so the trend starts at 8.
  std::vector<double> medians;
  for (Eigen::Index n : {8, 16, 32}) {
    const YatracosTable table(grid, n, 1500, 40 + n, 0);
    const BlockLayout layout = make_layout(n, 1.0, std::numeric_limits<double>::infinity());
    std::vector<double> d;
    for (int trial = 0; trial < 25; ++trial) {
      const auto z = extract_blocks(sample_path(model0, layout.memory_length(), 5000 * n + trial), layout);
      const auto est = table.estimate(z).theta;
      d.push_back(est == theta0 ? 0.0
                                : variational_distance_mc(make_model(grid.family, est), model0, n, 2000, trial)
                                      .point_estimate);
    }
    medians.push_back(median(d));
  }
  for (std::size_t k = 1; k < medians.size(); ++k) CHECK(medians[k] <= medians[k - 1] + 0.1);
  CHECK(medians.back() < medians.front());
}

TEST_CASE("Yatracos class as a concept class") {
  const auto grid = gaussian_grid({-1, 1, 3}, {0, 0, 1});
  const auto cls = yatracos_concept_class(grid, 2);
  RandomStream rng(8);
  std::vector<Point> pts;
  for (int i = 0; i < 6; ++i) pts.push_back(Eigen::Vector2d(rng.normal(), rng.normal()));
  const auto rep = shatter_coefficient(cls, pts, 1, 0);
  CHECK(rep.exact);
  CHECK(rep.distinct_patterns <= 6);  // K (K - 1) sets
  // Six sets give at most six patterns, fewer than 2^3, so no three points
  // are shattered.
  CHECK(estimate_vc_dimension(cls, [](RandomStream& r) { return Point(Eigen::Vector2d(r.normal(), r.normal())); }, 4,
                              30, 1) <= 2);
}
