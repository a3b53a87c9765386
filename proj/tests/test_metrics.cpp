#include "shgp/metrics.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace shgp;

namespace {

TEST(rmspe_metric, frozen_and_random_values) {
  Eigen::VectorXd same = Eigen::VectorXd::LinSpaced(5, 0, 4);
  EXPECT_DOUBLE_EQ(rmspe(same, same), 0.0);

  Eigen::VectorXd pred(2), obs(2);
  pred << 0.0, 0.0;
  obs << 3.0, 4.0;
  EXPECT_NEAR(rmspe(pred, obs), 3.5355339059327378, 1e-15);

  Rng rng(71);
  const Eigen::VectorXd a = rng.normal_vector(40), b = rng.normal_vector(40);
  double acc = 0.0;
  for (int i = 0; i < 40; ++i) acc += (a(i) - b(i)) * (a(i) - b(i));
  EXPECT_NEAR(rmspe(a, b), std::sqrt(acc / 40.0), 1e-13);
}

TEST(crps_metric, point_mass_at_truth_scores_zero) {
  Eigen::MatrixXd draws = Eigen::MatrixXd::Constant(3, 10, 2.5);
  Eigen::VectorXd obs = Eigen::VectorXd::Constant(3, 2.5);
  EXPECT_NEAR(crps(draws, obs).value, 0.0, 1e-14);
}

TEST(crps_metric, standard_normal_matches_closed_form) {
  // Closed-form Gaussian CRPS at y = 0, sigma = 1 is 0.2336950.
  Rng rng(72);
  const int m = 50000;
  Eigen::MatrixXd draws(1, m);
  for (int i = 0; i < m; ++i) draws(0, i) = rng.normal();
  const CrpsResult r = crps(draws, Eigen::VectorXd::Zero(1));
  EXPECT_GT(r.mc_se, 0.0);
  EXPECT_NEAR(r.value, 0.23369497725510907, 3.0 * r.mc_se);
}

TEST(crps_metric, translation_equivariance) {
  Rng rng(73);
  Eigen::MatrixXd draws(2, 500);
  for (int t = 0; t < 2; ++t)
    for (int i = 0; i < 500; ++i) draws(t, i) = rng.normal() + t;
  Eigen::VectorXd obs(2);
  obs << 0.3, -0.4;
  const double base = crps(draws, obs).value;
  const double c = 11.7;
  const double shifted =
      crps(draws.array() + c, obs.array() + c).value;
  EXPECT_NEAR(base, shifted, 1e-10);
}

TEST(crps_metric, estimator_converges_when_doubling_draws) {
  Rng rng(74);
  const int m = 20000;
  Eigen::MatrixXd big(1, 2 * m);
  for (int i = 0; i < 2 * m; ++i) big(0, i) = 0.7 * rng.normal() + 0.2;
  Eigen::VectorXd obs = Eigen::VectorXd::Constant(1, -0.1);
  const CrpsResult half = crps(big.leftCols(m), obs);
  const CrpsResult full = crps(big, obs);
  const double pooled =
      3.0 * std::sqrt(half.mc_se * half.mc_se + full.mc_se * full.mc_se);
  EXPECT_NEAR(half.value, full.value, pooled);
}

TEST(grs_metric, orientation_and_recomputation) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd var = Eigen::VectorXd::Ones(4);
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(4);
  EXPECT_DOUBLE_EQ(grs(mean, var, obs), 0.0);
  // Halving the variance at zero error increases the score.
  EXPECT_GT(grs(mean, 0.5 * var, obs), grs(mean, var, obs));
  // Matches a direct recomputation.
  Rng rng(75);
  const Eigen::VectorXd mu = rng.normal_vector(6);
  Eigen::VectorXd v(6);
  for (int i = 0; i < 6; ++i) v(i) = 0.2 + rng.uniform();
  const Eigen::VectorXd y = rng.normal_vector(6);
  double expected = 0.0;
  for (int i = 0; i < 6; ++i)
    expected -= std::log(v(i)) + (y(i) - mu(i)) * (y(i) - mu(i)) / v(i);
  EXPECT_NEAR(grs(mu, v, y), expected, 1e-12);
  // Zero predictive variance is rejected.
  Eigen::VectorXd degenerate = v;
  degenerate(2) = 0.0;
  EXPECT_THROW(grs(mu, degenerate, y), DataError);
}

TEST(coverage_metric, standard_cases) {
  // Point-mass draws at the observation: covered with zero width.
  Eigen::MatrixXd point = Eigen::MatrixXd::Constant(2, 50, 1.0);
  Eigen::VectorXd obs = Eigen::VectorXd::Constant(2, 1.0);
  auto [cov_pct, width] = coverage_and_width(point, obs, 0.95);
  EXPECT_DOUBLE_EQ(cov_pct, 100.0);
  EXPECT_DOUBLE_EQ(width, 0.0);

  // Observation far outside the draw range: zero coverage.
  Eigen::VectorXd far = Eigen::VectorXd::Constant(2, 100.0);
  auto [cov_far, width_far] = coverage_and_width(point, far, 0.95);
  EXPECT_DOUBLE_EQ(cov_far, 0.0);

  // Standard-normal draws: y=0 covered and width ~ 2 * 1.95996.
  Rng rng(76);
  const int m = 50000;
  Eigen::MatrixXd draws(1, m);
  for (int i = 0; i < m; ++i) draws(0, i) = rng.normal();
  auto [cov_n, width_n] = coverage_and_width(draws, Eigen::VectorXd::Zero(1), 0.95);
  EXPECT_DOUBLE_EQ(cov_n, 100.0);
  EXPECT_NEAR(width_n, 3.9199279690801085, 0.06);
}

TEST(gelfand_ghosh_metric, standard_cases) {
  // Replicates equal to the observations: G = P = 0.
  Eigen::VectorXd obs(3);
  obs << 1.0, -2.0, 0.5;
  Eigen::MatrixXd exact = obs.replicate(1, 20);
  const GelfandGhosh zero = gelfand_ghosh(exact, obs);
  EXPECT_NEAR(zero.G, 0.0, 1e-14);
  EXPECT_NEAR(zero.P, 0.0, 1e-14);

  // Observed + unit noise: G stays near zero, P near the target count.
  Rng rng(77);
  const int m = 20000, T = 30;
  Eigen::MatrixXd reps(T, m);
  Eigen::VectorXd y = rng.normal_vector(T);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < m; ++i) reps(t, i) = y(t) + rng.normal();
  const GelfandGhosh gg = gelfand_ghosh(reps, y);
  EXPECT_NEAR(gg.P, double(T), 3.0 * std::sqrt(2.0 * T / double(m)) + 0.5);
  EXPECT_LT(gg.G, 3.0 * T / double(m) * 10.0 + 0.1);
  EXPECT_DOUBLE_EQ(gg.D, gg.G + gg.P);

  // Doubling the replicate spread quadruples the penalty.
  Eigen::VectorXd means = reps.rowwise().mean();
  Eigen::MatrixXd doubled =
      ((reps.colwise() - means) * 2.0).colwise() + means;
  const GelfandGhosh gg2 = gelfand_ghosh(doubled, y);
  EXPECT_NEAR(gg2.P, 4.0 * gg.P, 1e-8 * gg.P);
}

TEST(quantiles, summary_is_consistent_with_raw_draws) {
  Rng rng(78);
  PredictiveDraws pd;
  pd.draws.resize(5, 400);
  for (int t = 0; t < 5; ++t)
    for (int i = 0; i < 400; ++i) pd.draws(t, i) = rng.normal() * (t + 1);
  pd.summarize();
  for (int t = 0; t < 5; ++t) {
    std::vector<double> row(400);
    for (int i = 0; i < 400; ++i) row[i] = pd.draws(t, i);
    EXPECT_DOUBLE_EQ(pd.median(t), stats::quantile(row, 0.5));
    EXPECT_DOUBLE_EQ(pd.q025(t), stats::quantile(row, 0.025));
    EXPECT_DOUBLE_EQ(pd.q975(t), stats::quantile(row, 0.975));
    EXPECT_LE(pd.q025(t), pd.median(t));
    EXPECT_LE(pd.median(t), pd.q975(t));
    EXPECT_DOUBLE_EQ(pd.width(t), pd.q975(t) - pd.q025(t));
  }
}

}  // namespace
