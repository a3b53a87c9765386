#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "shgp/collapsed.hpp"
#include "shgp/dataset.hpp"
#include "shgp/predict.hpp"
#include "shgp/priors.hpp"
#include "shgp/reduced_rank.hpp"
#include "shgp/sampler.hpp"

namespace shgp {

// Root mean squared prediction error between point predictions (medians) and
// the held-out observations.
inline double rmspe(const Eigen::VectorXd& predicted,
                    const Eigen::VectorXd& observed) {
  if (predicted.size() != observed.size())
    throw DataError("rmspe: prediction/observation length mismatch");
  return std::sqrt((predicted - observed).squaredNorm() /
                   static_cast<double>(predicted.size()));
}

struct CrpsResult {
  double value = 0.0;
  double mc_se = 0.0;  // Monte Carlo standard error of the estimator
};

// Sample CRPS, negatively oriented, summed over targets:
//   crps_t = mean_i |x_i - y_t| - 1/2 mean_{i,j} |x_i - x_j|.
// Sorting gives both pair sums and the per-draw influence values (for the MC
// standard error) in O(m log m) per target.
inline CrpsResult crps(const Eigen::MatrixXd& draws,
                       const Eigen::VectorXd& observed) {
  if (draws.rows() != observed.size())
    throw DataError("crps: draws must have one row per target");
  const auto m = draws.cols();
  if (m < 2) throw DataError("crps needs at least two draws per target");
  CrpsResult out;
  double se2 = 0.0;
  std::vector<double> x(static_cast<std::size_t>(m));
  for (Eigen::Index t = 0; t < draws.rows(); ++t) {
    for (Eigen::Index i = 0; i < m; ++i)
      x[static_cast<std::size_t>(i)] = draws(t, i);
    std::sort(x.begin(), x.end());
    const double y = observed(t);
    double prefix = 0.0, total = 0.0;
    for (double v : x) total += v;
    double abs_err = 0.0, pair_sum = 0.0;
    // Influence values g_i = |x_i - y| - mean_j |x_i - x_j| drive the
    // estimator's asymptotic variance.
    double g_mean = 0.0, g_sq = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double xk = x[static_cast<std::size_t>(k)];
      abs_err += std::abs(xk - y);
      const double below = static_cast<double>(k) * xk - prefix;
      const double above = (total - prefix - xk) -
                           static_cast<double>(m - 1 - k) * xk;
      pair_sum += below + above;
      const double g = std::abs(xk - y) - (below + above) / double(m);
      g_mean += g;
      g_sq += g * g;
      prefix += xk;
    }
    const double mean_abs_err = abs_err / double(m);
    const double mean_pair = pair_sum / (double(m) * double(m));
    out.value += mean_abs_err - 0.5 * mean_pair;
    g_mean /= double(m);
    const double g_var = std::max(0.0, g_sq / double(m) - g_mean * g_mean);
    se2 += g_var / double(m);
  }
  out.mc_se = std::sqrt(se2);
  return out;
}

// Gaussian rule score from per-target predictive moments (diagonal
// covariance), positively oriented: -sum_t [log var_t + (y_t - mu_t)^2/var_t].
inline double grs(const Eigen::VectorXd& predictive_mean,
                  const Eigen::VectorXd& predictive_var,
                  const Eigen::VectorXd& observed) {
  if (predictive_mean.size() != observed.size() ||
      predictive_var.size() != observed.size())
    throw DataError("grs: moment/observation length mismatch");
  if (!(predictive_var.array() > 0).all())
    throw DataError("grs: zero or negative predictive variance");
  double score = 0.0;
  for (Eigen::Index t = 0; t < observed.size(); ++t) {
    const double e = observed(t) - predictive_mean(t);
    score -= std::log(predictive_var(t)) + e * e / predictive_var(t);
  }
  return score;
}

inline double grs(const Eigen::MatrixXd& draws,
                  const Eigen::VectorXd& observed) {
  const auto m = draws.cols();
  Eigen::VectorXd mean = draws.rowwise().mean();
  Eigen::VectorXd var =
      (draws.colwise() - mean).rowwise().squaredNorm() / double(m - 1);
  return grs(mean, var, observed);
}

// Fraction of observations inside their equal-tailed predictive interval at
// `level`, plus the mean interval width.
inline std::pair<double, double> coverage_and_width(
    const Eigen::MatrixXd& draws, const Eigen::VectorXd& observed,
    double level) {
  if (draws.rows() != observed.size())
    throw DataError("coverage: draws must have one row per target");
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("coverage level must lie in (0, 1)");
  const double lo_p = 0.5 * (1.0 - level), hi_p = 1.0 - lo_p;
  int covered = 0;
  double width = 0.0;
  std::vector<double> row(static_cast<std::size_t>(draws.cols()));
  for (Eigen::Index t = 0; t < draws.rows(); ++t) {
    for (Eigen::Index i = 0; i < draws.cols(); ++i)
      row[static_cast<std::size_t>(i)] = draws(t, i);
    const double lo = stats::quantile(row, lo_p);
    const double hi = stats::quantile(row, hi_p);
    if (observed(t) >= lo && observed(t) <= hi) ++covered;
    width += hi - lo;
  }
  return {100.0 * covered / double(draws.rows()),
          width / double(draws.rows())};
}

struct GelfandGhosh {
  double G = 0.0;  // squared-error fit to the replicate means
  double P = 0.0;  // summed replicate variances (penalty)
  double D = 0.0;  // G + P
};

// Posterior predictive loss over the stacked (z, y) replicates.
inline GelfandGhosh gelfand_ghosh(const Eigen::MatrixXd& replicates,
                                  const Eigen::VectorXd& observed) {
  if (replicates.rows() != observed.size())
    throw DataError("gelfand_ghosh: replicates must have one row per observation");
  const auto m = replicates.cols();
  GelfandGhosh out;
  for (Eigen::Index i = 0; i < replicates.rows(); ++i) {
    const double mean = replicates.row(i).mean();
    const double var =
        (replicates.row(i).array() - mean).square().sum() / double(m - 1);
    out.G += (observed(i) - mean) * (observed(i) - mean);
    out.P += var;
  }
  out.D = out.G + out.P;
  return out;
}

struct DicResult {
  double dic = 0.0;
  double p_D = 0.0;
  double mean_deviance = 0.0;
  double deviance_at_mean = 0.0;
};

// Deviance information criterion over pooled chain draws. The plug-in
// deviance is evaluated at the posterior means taken on the sampling scale
// (log / logit) and back-transformed.
inline DicResult dic(std::span<const PosteriorChain> chains,
                     const JointDataset& data, const KnotSet& knots,
                     int max_samples = 0) {
  std::vector<std::pair<const PosteriorChain*, int>> rows;
  for (const auto& ch : chains)
    for (int r = 0; r < ch.draws.rows(); ++r) rows.push_back({&ch, r});
  if (rows.empty()) throw DataError("dic: empty chains");
  if (max_samples > 0 && static_cast<int>(rows.size()) > max_samples) {
    std::vector<std::pair<const PosteriorChain*, int>> kept;
    const double stride = double(rows.size()) / max_samples;
    for (int i = 0; i < max_samples; ++i)
      kept.push_back(rows[static_cast<std::size_t>(i * stride)]);
    rows = std::move(kept);
  }

  const StructureBuilder builder(data, knots);
  CollapsedWorkspace ws(CollapsedInputs::from(data));
  auto deviance = [&](const ModelParams& p) {
    const ReducedRankStructure rr = builder.build(p);
    if (ws.factorize(rr) != FactorStage::ok)
      throw NumericalError("collapsed factorization failed inside DIC");
    return -2.0 * ws.log_likelihood(p.beta_z, p.beta_y);
  };

  const BlockTransform tf{chains[0].n_x, chains[0].n_alpha};
  Eigen::VectorXd xi_mean = Eigen::VectorXd::Zero(tf.dim());
  Eigen::VectorXd beta_y_mean = Eigen::VectorXd::Zero(chains[0].p_y);
  Eigen::VectorXd beta_z_mean = Eigen::VectorXd::Zero(chains[0].p_z);
  DicResult out;
  for (const auto& [ch, r] : rows) {
    const ModelParams p = ch->params_at(r);
    out.mean_deviance += deviance(p);
    xi_mean += tf.to_sampling(p);
    beta_y_mean += p.beta_y;
    beta_z_mean += p.beta_z;
  }
  const double n = double(rows.size());
  out.mean_deviance /= n;
  xi_mean /= n;
  ModelParams at_mean = rows[0].first->params_at(rows[0].second);
  tf.from_sampling(xi_mean, at_mean);
  at_mean.beta_y = beta_y_mean / n;
  at_mean.beta_z = beta_z_mean / n;
  out.deviance_at_mean = deviance(at_mean);
  out.p_D = out.mean_deviance - out.deviance_at_mean;
  out.dic = out.mean_deviance + out.p_D;
  return out;
}

}  // namespace shgp
