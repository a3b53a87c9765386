#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "shgp/dataset.hpp"
#include "shgp/kernels.hpp"
#include "shgp/rng.hpp"
#include "shgp/types.hpp"

namespace shgp {

// Configuration for sampling a synthetic joint dataset from the full
// (non-reduced) model. The height weights alpha live on their own grid,
// which need not be a subset of the observed heights.
struct SimConfig {
  std::vector<PlanarPoint> locations;
  std::vector<double> heights;        // observed signal heights
  std::vector<double> alpha_heights;  // grid the alpha weights apply at
  ModelParams truth;                  // beta_z indexed by observed height
  std::uint64_t seed = 1;
  std::size_t dense_limit = 20000;  // cap on the single dense factorization
  bool allow_large = false;

  int n_s() const { return static_cast<int>(locations.size()); }
  int n_x() const { return static_cast<int>(heights.size()); }
};

// Latent truth kept alongside a simulated dataset for diagnostics.
struct SimTruth {
  ModelParams params;
  std::vector<SpaceHeightCoord> u_coords;  // coordinates u was drawn at
  Eigen::VectorXd u;
  Eigen::VectorXd v;  // per location
  std::vector<double> alpha_heights;
};

// Draws (u, v) from their dense Gaussian laws and assembles outcomes and
// signals:
//   z(l) = beta_z(x) + u(l) + N(0, tau_z^2(x))
//   y(s) = beta_y0 + sum_k alpha_k u(s, x_alpha_k) + v(s) + N(0, tau_y^2).
inline std::pair<JointDataset, SimTruth> simulate_joint(const SimConfig& cfg) {
  if (cfg.locations.empty() || cfg.heights.empty() ||
      cfg.alpha_heights.empty())
    throw ConfigError("simulation needs locations, heights and alpha heights");
  for (std::size_t k = 1; k < cfg.heights.size(); ++k)
    if (!(cfg.heights[k] > cfg.heights[k - 1]))
      throw ConfigError(
          "simulation heights must be strictly ascending (the truth profiles "
          "are indexed by height)");
  if (!cfg.truth.valid()) throw ConfigError("simulation truth parameters invalid");
  if (cfg.truth.tau2_z.size() != cfg.n_x())
    throw ConfigError("truth tau2_z must have one entry per observed height");
  if (cfg.truth.beta_z.size() != cfg.n_x())
    throw ConfigError("simulation uses height-specific intercepts: beta_z must "
                      "have one entry per observed height");
  if (cfg.truth.alpha.size() !=
      static_cast<Eigen::Index>(cfg.alpha_heights.size()))
    throw ConfigError("truth alpha must match the alpha height grid");

  // u is realized over locations x (observed heights U alpha heights).
  std::vector<double> all_heights = cfg.heights;
  all_heights.insert(all_heights.end(), cfg.alpha_heights.begin(),
                     cfg.alpha_heights.end());
  std::sort(all_heights.begin(), all_heights.end());
  all_heights.erase(std::unique(all_heights.begin(), all_heights.end()),
                    all_heights.end());
  const int n_h = static_cast<int>(all_heights.size());
  const int n_s = cfg.n_s(), n_x = cfg.n_x();
  const std::size_t n_sim = static_cast<std::size_t>(n_s) * n_h;
  if (n_sim > cfg.dense_limit && !cfg.allow_large)
    throw ConfigError("simulation needs a dense " + std::to_string(n_sim) +
                      "^2 factorization, above the cap of " +
                      std::to_string(cfg.dense_limit) +
                      "; set allow_large to override");

  SimTruth truth;
  truth.params = cfg.truth;
  truth.alpha_heights = cfg.alpha_heights;
  truth.u_coords.reserve(n_sim);
  for (const auto& s : cfg.locations)
    for (double x : all_heights) truth.u_coords.push_back({s, x});

  auto height_pos = [&](double x) {
    const auto it =
        std::lower_bound(all_heights.begin(), all_heights.end(), x);
    return static_cast<int>(it - all_heights.begin());
  };

  Rng rng(cfg.seed);
  const GneitingKernel ku{cfg.truth.sigma2_u, cfg.truth.a, cfg.truth.gamma,
                          cfg.truth.c};
  {
    Eigen::MatrixXd C_u = cov_matrix(ku, truth.u_coords);
    Eigen::MatrixXd L;
    try {
      L = chol_lower(std::move(C_u), ku.sigma2, "dense simulation covariance");
    } catch (NumericalError& e) {
      throw NumericalError(std::string(e.what()) +
                           "; consider fewer coincident coordinates or a "
                           "larger diagonal jitter");
    }
    truth.u = L.triangularView<Eigen::Lower>() *
              rng.normal_vector(static_cast<Eigen::Index>(n_sim));
  }
  {
    const ExponentialKernel kv{cfg.truth.sigma2_v, cfg.truth.phi_v};
    Eigen::MatrixXd C_v = cov_matrix(kv, cfg.locations);
    Eigen::MatrixXd L = chol_lower(std::move(C_v), kv.sigma2,
                                   "dense outcome-process covariance");
    truth.v = L.triangularView<Eigen::Lower>() * rng.normal_vector(n_s);
  }

  JointDataset data;
  data.plot_locations = cfg.locations;
  data.covariates.resize(n_s, 0);
  data.heights = cfg.heights;
  data.max_height = data.heights.back();
  data.balanced = true;
  const int n = n_s * n_x;
  data.signal_values.resize(n);
  data.Q_z = Eigen::MatrixXd::Zero(n, n_x);
  data.z_design_names.clear();
  for (int k = 0; k < n_x; ++k)
    data.z_design_names.push_back("h" + std::to_string(k + 1));
  int i = 0;
  for (int j = 0; j < n_s; ++j)
    for (int k = 0; k < n_x; ++k, ++i) {
      const double x = data.heights[k];
      data.signal_coords.push_back({cfg.locations[j], x});
      data.plot_index.push_back(j);
      data.height_index.push_back(k);
      data.Q_z(i, k) = 1.0;
      const double u_val =
          truth.u(static_cast<Eigen::Index>(j) * n_h + height_pos(x));
      data.signal_values(i) = cfg.truth.beta_z(k) + u_val +
                              std::sqrt(cfg.truth.tau2_z(k)) * rng.normal();
    }
  data.outcomes.resize(n_s);
  data.Q_y = Eigen::MatrixXd::Ones(n_s, 1);
  data.y_design_names = {"intercept"};
  for (int j = 0; j < n_s; ++j) {
    double shared = 0.0;
    for (std::size_t k = 0; k < cfg.alpha_heights.size(); ++k)
      shared += cfg.truth.alpha(static_cast<Eigen::Index>(k)) *
                truth.u(static_cast<Eigen::Index>(j) * n_h +
                        height_pos(cfg.alpha_heights[k]));
    data.outcomes(j) = cfg.truth.beta_y(0) + shared + truth.v(j) +
                       std::sqrt(cfg.truth.tau2_y) * rng.normal();
  }
  return {std::move(data), std::move(truth)};
}

// The simulation-experiment configuration: a regular grid over [0,4]^2 with
// heights in [0,5], five equally spaced alpha heights and the documented
// truth values. `scale` divides both grid sizes for desk-scale runs.
inline SimConfig table1_experiment(int scale = 1, std::uint64_t seed = 1) {
  if (scale < 1) throw ConfigError("scale factor must be >= 1");
  const int n_side = static_cast<int>(std::llround(20.0 / scale));
  const int n_x = static_cast<int>(std::llround(50.0 / scale));
  if (n_side < 2 || n_x < 2)
    throw ConfigError("scale factor " + std::to_string(scale) +
                      " leaves too small a grid");
  SimConfig cfg;
  cfg.seed = seed;
  for (int i = 0; i < n_side; ++i)
    for (int j = 0; j < n_side; ++j)
      cfg.locations.push_back({4.0 * i / (n_side - 1), 4.0 * j / (n_side - 1)});
  for (int k = 0; k < n_x; ++k) cfg.heights.push_back(5.0 * k / (n_x - 1));
  for (int k = 0; k < 5; ++k) cfg.alpha_heights.push_back(5.0 * k / 4.0);

  ModelParams& t = cfg.truth;
  t.sigma2_u = 0.2;
  t.a = 12.0;
  t.gamma = 0.9;
  t.c = 5.0;
  t.sigma2_v = 0.5;
  t.phi_v = 2.0;
  t.tau2_y = 0.1;
  t.alpha = Eigen::VectorXd(5);
  t.alpha << -2.0, 0.0, 2.0, 1.0, 5.0;
  t.beta_y = Eigen::VectorXd::Constant(1, 20.0);
  // Smooth height profiles standing in for the unpublished truth curves: a
  // Gaussian bump for the intercepts and a slowly varying noise floor.
  t.beta_z.resize(n_x);
  t.tau2_z.resize(n_x);
  for (int k = 0; k < n_x; ++k) {
    const double x = cfg.heights[k];
    t.beta_z(k) = 0.5 + 3.0 * std::exp(-0.5 * (x - 2.0) * (x - 2.0));
    t.tau2_z(k) = 0.05 * (1.0 + 0.5 * std::sin(M_PI * x / 5.0));
  }
  return cfg;
}

}  // namespace shgp
