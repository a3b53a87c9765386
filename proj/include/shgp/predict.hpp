#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "shgp/collapsed.hpp"
#include "shgp/dataset.hpp"
#include "shgp/kernels.hpp"
#include "shgp/reduced_rank.hpp"
#include "shgp/rng.hpp"
#include "shgp/sampler.hpp"

namespace shgp {

namespace stats {
// Type-7 quantile (linear interpolation) on an unsorted copy.
inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double idx = p * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(idx));
  const double h = idx - static_cast<double>(lo);
  return (1.0 - h) * v[lo] + h * v[hi];
}
}  // namespace stats

// Posterior predictive draws per target plus the standard summaries.
struct PredictiveDraws {
  Eigen::MatrixXd draws;  // targets x samples
  Eigen::VectorXd median, q025, q975, width;

  void summarize() {
    const auto T = draws.rows();
    median.resize(T);
    q025.resize(T);
    q975.resize(T);
    width.resize(T);
    std::vector<double> row(static_cast<std::size_t>(draws.cols()));
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index s = 0; s < draws.cols(); ++s)
        row[static_cast<std::size_t>(s)] = draws(t, s);
      median(t) = stats::quantile(row, 0.5);
      q025(t) = stats::quantile(row, 0.025);
      q975(t) = stats::quantile(row, 0.975);
      width(t) = q975(t) - q025(t);
    }
  }
};

struct PredictionConfig {
  int max_samples = 0;  // cap on posterior samples used (0 = every latent draw)
  bool interpolate_tau = false;  // linear in height instead of nearest
  int max_threads = 0;
  std::uint64_t seed = 7;
};

// Signal targets carrying observed values, used when conditioning outcome
// prediction on signals at the prediction locations.
struct SignalTargets {
  std::vector<SpaceHeightCoord> coords;
  Eigen::VectorXd values;
  Eigen::MatrixXd Q_z;
  std::vector<int> height_index;  // into the training height grid
};

struct OutcomeTargets {
  std::vector<PlanarPoint> locations;
  Eigen::MatrixXd Q_y;
};

namespace detail {

// One pooled posterior sample that carries recovered latents.
struct LatentSample {
  const PosteriorChain* chain;
  int latent_row;
};

inline std::vector<LatentSample> pooled_latents(
    std::span<const PosteriorChain> chains, int max_samples) {
  std::vector<LatentSample> all;
  for (const auto& ch : chains)
    for (int r = 0; r < ch.latents.rows(); ++r) all.push_back({&ch, r});
  if (all.empty())
    throw DataError("chains carry no recovered latent draws; fit with a "
                    "positive thinning stride first");
  if (max_samples > 0 && static_cast<int>(all.size()) > max_samples) {
    std::vector<LatentSample> kept;
    const double stride = double(all.size()) / max_samples;
    for (int i = 0; i < max_samples; ++i)
      kept.push_back(all[static_cast<std::size_t>(i * stride)]);
    all = std::move(kept);
  }
  return all;
}

// tau_z^2 looked up at each target height: nearest observed height, or
// linear interpolation when requested.
inline double tau2_at_height(const Eigen::VectorXd& tau2_z,
                             const std::vector<double>& heights, double x,
                             bool interpolate) {
  const auto it = std::lower_bound(heights.begin(), heights.end(), x);
  if (it == heights.begin()) return tau2_z(0);
  if (it == heights.end()) return tau2_z(tau2_z.size() - 1);
  const auto hi = static_cast<Eigen::Index>(it - heights.begin());
  const auto lo = hi - 1;
  if (interpolate) {
    const double f = (x - heights[lo]) / (heights[hi] - heights[lo]);
    return (1.0 - f) * tau2_z(lo) + f * tau2_z(hi);
  }
  return (x - heights[lo] <= heights[hi] - x) ? tau2_z(lo) : tau2_z(hi);
}

// Basis rows and residual variances for arbitrary targets given the knot
// factor L and precomputed knot-target separations.
struct CrossBasis {
  Eigen::MatrixXd basis;   // targets x knots
  Eigen::VectorXd delta2;  // per target
};

inline CrossBasis basis_under(const Eigen::MatrixXd& L, double sigma2,
                              Eigen::MatrixXd cross_cov) {
  CrossBasis out;
  L.triangularView<Eigen::Lower>().solveInPlace(cross_cov);
  out.delta2 = (sigma2 - cross_cov.colwise().squaredNorm().array())
                   .max(0.0)
                   .matrix();
  L.transpose().triangularView<Eigen::Upper>().solveInPlace(cross_cov);
  out.basis = cross_cov.transpose();
  return out;
}

// Runs fn(sample_index) over a thread pool; every sample gets its own derived
// RNG stream so results do not depend on scheduling.
template <class Fn>
void parallel_samples(int n_samples, int max_threads, Fn&& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int n_threads = static_cast<int>(
      std::min<unsigned>(max_threads > 0 ? max_threads : hw,
                         static_cast<unsigned>(n_samples)));
  if (n_threads <= 1) {
    for (int i = 0; i < n_samples; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n_threads);
  std::vector<std::thread> threads;
  for (int t = 0; t < n_threads; ++t)
    threads.emplace_back([&, t] {
      try {
        for (int i = t; i < n_samples; i += n_threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Posterior predictive draws for the signal z(l0) at arbitrary space-height
// targets: for each stored posterior sample, z ~ N(q_z'beta_z + b_u(l0)'u*,
// tau_z^2(x) + delta_u^2(l0)) with the basis rebuilt under that sample's
// covariance parameters.
inline PredictiveDraws predict_signal(std::span<const PosteriorChain> chains,
                                      const JointDataset& train,
                                      const KnotSet& knots,
                                      std::span<const SpaceHeightCoord> targets,
                                      const Eigen::MatrixXd& Q_z_targets,
                                      const PredictionConfig& cfg = {}) {
  for (const auto& l : targets) validate_height(l.x, train.max_height);
  if (Q_z_targets.rows() != static_cast<Eigen::Index>(targets.size()))
    throw DataError("target design must have one row per target");
  if (!Q_z_targets.allFinite())
    throw DataError("target design contains non-finite values");
  const auto samples = detail::pooled_latents(chains, cfg.max_samples);
  const auto joint = knots.joint_u();
  const auto sep_kk = separations(joint, joint);
  const auto sep_kt = separations(joint, targets);

  PredictiveDraws out;
  out.draws.resize(targets.size(), samples.size());
  detail::parallel_samples(
      static_cast<int>(samples.size()), cfg.max_threads, [&](int si) {
        const auto& smp = samples[static_cast<std::size_t>(si)];
        const ModelParams p =
            smp.chain->params_at(smp.chain->latent_rows[smp.latent_row]);
        const Eigen::VectorXd u_star =
            smp.chain->latents.row(smp.latent_row).head(smp.chain->n_star);
        const GneitingKernel ku{p.sigma2_u, p.a, p.gamma, p.c};
        const Eigen::MatrixXd L = chol_lower(cov_matrix(ku, sep_kk), ku.sigma2,
                                             "knot covariance in prediction");
        const auto cb = detail::basis_under(L, ku.sigma2, cov_matrix(ku, sep_kt));
        Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(si)));
        for (std::size_t t = 0; t < targets.size(); ++t) {
          const double mean =
              Q_z_targets.row(static_cast<Eigen::Index>(t)).dot(p.beta_z) +
              cb.basis.row(static_cast<Eigen::Index>(t)).dot(u_star);
          const double var =
              detail::tau2_at_height(p.tau2_z, train.heights, targets[t].x,
                                     cfg.interpolate_tau) +
              cb.delta2(static_cast<Eigen::Index>(t));
          out.draws(static_cast<Eigen::Index>(t), si) =
              mean + std::sqrt(var) * rng.normal();
        }
      });
  out.summarize();
  return out;
}

// Posterior predictive draws for the outcome y(s0):
// y ~ N(q_y'beta_y + alpha'B(s0)u* + b_v(s0)'v*, d_y^2(s0)).
inline PredictiveDraws predict_outcome(std::span<const PosteriorChain> chains,
                                       const JointDataset& train,
                                       const KnotSet& knots,
                                       const OutcomeTargets& targets,
                                       const PredictionConfig& cfg = {}) {
  const auto n_t = targets.locations.size();
  if (targets.Q_y.rows() != static_cast<Eigen::Index>(n_t))
    throw DataError("target design must have one row per target");
  if (!targets.Q_y.allFinite())
    throw DataError("missing covariate value at an outcome prediction target");
  const auto samples = detail::pooled_latents(chains, cfg.max_samples);
  const auto joint = knots.joint_u();
  const int n_x_star = knots.n_x_star();
  // u basis is needed at every (target, height-knot) pair.
  std::vector<SpaceHeightCoord> u_targets;
  for (const auto& s : targets.locations)
    for (double x : knots.heights) u_targets.push_back({s, x});
  const auto sep_kk = separations(joint, joint);
  const auto sep_kt = separations(joint, u_targets);
  const Eigen::MatrixXd dist_kk_v =
      spatial_distances(knots.spatial_v, knots.spatial_v);
  const Eigen::MatrixXd dist_kt_v =
      spatial_distances(knots.spatial_v, targets.locations);

  PredictiveDraws out;
  out.draws.resize(n_t, samples.size());
  detail::parallel_samples(
      static_cast<int>(samples.size()), cfg.max_threads, [&](int si) {
        const auto& smp = samples[static_cast<std::size_t>(si)];
        const ModelParams p =
            smp.chain->params_at(smp.chain->latent_rows[smp.latent_row]);
        const Eigen::VectorXd u_star =
            smp.chain->latents.row(smp.latent_row).head(smp.chain->n_star);
        const Eigen::VectorXd v_star =
            smp.chain->latents.row(smp.latent_row).tail(smp.chain->n_v_star);
        const GneitingKernel ku{p.sigma2_u, p.a, p.gamma, p.c};
        const ExponentialKernel kv{p.sigma2_v, p.phi_v};
        const Eigen::MatrixXd L_u = chol_lower(
            cov_matrix(ku, sep_kk), ku.sigma2, "knot covariance in prediction");
        const auto cb_u =
            detail::basis_under(L_u, ku.sigma2, cov_matrix(ku, sep_kt));
        const Eigen::MatrixXd L_v =
            chol_lower(cov_matrix(kv, dist_kk_v), kv.sigma2,
                       "spatial knot covariance in prediction");
        const auto cb_v =
            detail::basis_under(L_v, kv.sigma2, cov_matrix(kv, dist_kt_v));
        Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(si)));
        for (std::size_t t = 0; t < n_t; ++t) {
          const auto i = static_cast<Eigen::Index>(t);
          double shared = 0.0, d2 = p.tau2_y;
          for (int k = 0; k < n_x_star; ++k) {
            const auto row = static_cast<Eigen::Index>(t) * n_x_star + k;
            shared += p.alpha(k) * cb_u.basis.row(row).dot(u_star);
            d2 += p.alpha(k) * p.alpha(k) * cb_u.delta2(row);
          }
          d2 += cb_v.delta2(i);
          const double mean = targets.Q_y.row(i).dot(p.beta_y) + shared +
                              cb_v.basis.row(i).dot(v_star);
          out.draws(i, si) = mean + std::sqrt(d2) * rng.normal();
        }
      });
  out.summarize();
  return out;
}

// Outcome prediction conditioned on observed signals at the prediction
// locations: for each stored posterior sample the latent knot effects are
// re-drawn exactly, conditioning on the training data augmented with the
// targets' signals, before the outcome draw.
inline PredictiveDraws predict_outcome_given_signal(
    std::span<const PosteriorChain> chains, const JointDataset& train,
    const KnotSet& knots, const SignalTargets& observed,
    const OutcomeTargets& targets, const PredictionConfig& cfg = {}) {
  for (const auto& l : observed.coords) validate_height(l.x, train.max_height);
  if (observed.Q_z.rows() != static_cast<Eigen::Index>(observed.coords.size()))
    throw DataError("observed-signal design must have one row per signal");
  const auto samples = detail::pooled_latents(chains, cfg.max_samples);

  // Geometry for the augmented signal set (train + targets), built once.
  std::vector<SpaceHeightCoord> aug_coords = train.signal_coords;
  aug_coords.insert(aug_coords.end(), observed.coords.begin(),
                    observed.coords.end());
  std::vector<int> aug_height_index = train.height_index;
  aug_height_index.insert(aug_height_index.end(),
                          observed.height_index.begin(),
                          observed.height_index.end());
  const StructureBuilder builder(aug_coords, aug_height_index,
                                 train.plot_locations, knots);
  CollapsedInputs inputs;
  inputs.z.resize(train.n() + observed.values.size());
  inputs.z << train.signal_values, observed.values;
  inputs.y = train.outcomes;
  inputs.Q_z.resize(train.Q_z.rows() + observed.Q_z.rows(), train.Q_z.cols());
  inputs.Q_z << train.Q_z, observed.Q_z;
  inputs.Q_y = train.Q_y;

  // Outcome-side geometry at the prediction targets.
  const auto n_t = targets.locations.size();
  const int n_x_star = knots.n_x_star();
  std::vector<SpaceHeightCoord> u_targets;
  for (const auto& s : targets.locations)
    for (double x : knots.heights) u_targets.push_back({s, x});
  const auto joint = knots.joint_u();
  const auto sep_kt = separations(joint, u_targets);
  const Eigen::MatrixXd dist_kt_v =
      spatial_distances(knots.spatial_v, targets.locations);

  PredictiveDraws out;
  out.draws.resize(n_t, samples.size());
  detail::parallel_samples(
      static_cast<int>(samples.size()), cfg.max_threads, [&](int si) {
        const auto& smp = samples[static_cast<std::size_t>(si)];
        const ModelParams p =
            smp.chain->params_at(smp.chain->latent_rows[smp.latent_row]);
        Rng rng(Rng::derive(cfg.seed ^ 0x9e3779b9ULL,
                            static_cast<std::uint64_t>(si)));
        const ReducedRankStructure rr = builder.build(p);
        CollapsedWorkspace ws(inputs);
        if (ws.factorize(rr) != FactorStage::ok)
          throw NumericalError(
              "collapsed factorization failed in conditional prediction");
        const auto [u_star, v_star] =
            ws.recover_latents(p.beta_z, p.beta_y, rng);
        const GneitingKernel ku{p.sigma2_u, p.a, p.gamma, p.c};
        const ExponentialKernel kv{p.sigma2_v, p.phi_v};
        const auto cb_u =
            detail::basis_under(rr.L_u, ku.sigma2, cov_matrix(ku, sep_kt));
        const auto cb_v =
            detail::basis_under(rr.L_v, kv.sigma2, cov_matrix(kv, dist_kt_v));
        for (std::size_t t = 0; t < n_t; ++t) {
          const auto i = static_cast<Eigen::Index>(t);
          double shared = 0.0, d2 = p.tau2_y;
          for (int k = 0; k < n_x_star; ++k) {
            const auto row = static_cast<Eigen::Index>(t) * n_x_star + k;
            shared += p.alpha(k) * cb_u.basis.row(row).dot(u_star);
            d2 += p.alpha(k) * p.alpha(k) * cb_u.delta2(row);
          }
          d2 += cb_v.delta2(i);
          const double mean = targets.Q_y.row(i).dot(p.beta_y) + shared +
                              cb_v.basis.row(i).dot(v_star);
          out.draws(i, si) = mean + std::sqrt(d2) * rng.normal();
        }
      });
  out.summarize();
  return out;
}

// Replicated data at every observed coordinate (z stacked over y), the input
// to the goodness-of-fit criteria.
inline PredictiveDraws replicate_data(std::span<const PosteriorChain> chains,
                                      const JointDataset& train,
                                      const KnotSet& knots,
                                      const PredictionConfig& cfg = {}) {
  const auto samples = detail::pooled_latents(chains, cfg.max_samples);
  const StructureBuilder builder(train, knots);
  PredictiveDraws out;
  out.draws.resize(train.n() + train.n_s(), samples.size());
  detail::parallel_samples(
      static_cast<int>(samples.size()), cfg.max_threads, [&](int si) {
        const auto& smp = samples[static_cast<std::size_t>(si)];
        const ModelParams p =
            smp.chain->params_at(smp.chain->latent_rows[smp.latent_row]);
        const Eigen::VectorXd u_star =
            smp.chain->latents.row(smp.latent_row).head(smp.chain->n_star);
        const Eigen::VectorXd v_star =
            smp.chain->latents.row(smp.latent_row).tail(smp.chain->n_v_star);
        const ReducedRankStructure rr = builder.build(p);
        Rng rng(Rng::derive(cfg.seed ^ 0x517cc1b7ULL,
                            static_cast<std::uint64_t>(si)));
        Eigen::VectorXd mean_z = train.Q_z * p.beta_z;
        mean_z.noalias() += rr.B_u * u_star;
        Eigen::VectorXd mean_y = train.Q_y * p.beta_y;
        mean_y.noalias() += rr.G * u_star;
        mean_y.noalias() += rr.B_v * v_star;
        for (int i = 0; i < train.n(); ++i)
          out.draws(i, si) = mean_z(i) + std::sqrt(rr.d_z2(i)) * rng.normal();
        for (int j = 0; j < train.n_s(); ++j)
          out.draws(train.n() + j, si) =
              mean_y(j) + std::sqrt(rr.d_y2(j)) * rng.normal();
      });
  out.summarize();
  return out;
}

}  // namespace shgp
