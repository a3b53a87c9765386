#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "shgp/collapsed.hpp"
#include "shgp/dataset.hpp"
#include "shgp/priors.hpp"
#include "shgp/reduced_rank.hpp"
#include "shgp/rng.hpp"

namespace shgp {

struct SamplerConfig {
  int n_iter = 50000;
  int n_burn = 5000;
  int n_chains = 3;
  int thin = 10;  // latent recovery stride over post-burn-in iterations
  std::uint64_t seed = 1;
  // Per-coordinate proposal standard deviations on the sampling scale; sized
  // by the block transform when left empty.
  Eigen::VectorXd proposal_sd;
  double proposal_scale = 0.0;  // 0 -> 2.38 / sqrt(dim)
  int adapt_window = 100;
  bool adapt_shape = true;  // rescale coordinates from burn-in variances
  bool update_block = true;  // false: Gibbs on beta only (conjugate runs)
  int max_threads = 0;       // 0 -> hardware concurrency

  void validate() const {
    if (n_iter <= 0 || n_burn < 0 || n_burn >= n_iter)
      throw ConfigError("sampler needs 0 <= n_burn < n_iter");
    if (thin <= 0 || n_chains <= 0 || adapt_window <= 0)
      throw ConfigError("sampler thin, chains and adapt_window must be positive");
    if (proposal_sd.size() > 0 && !(proposal_sd.array() > 0).all())
      throw ConfigError("proposal standard deviations must be positive");
  }
};

// Ordered posterior draws of one chain (burn-in already discarded), plus the
// latent knot effects recovered at the thinning stride. Immutable once
// returned.
struct PosteriorChain {
  std::vector<std::string> param_names;
  Eigen::MatrixXd draws;               // stored iterations x parameters
  Eigen::MatrixXd latents;             // latent draws x (n* + n_v*)
  std::vector<int> latent_rows;        // row of `draws` each latent belongs to
  Eigen::VectorXd log_target_trace;    // per stored iteration
  long accepted = 0;
  long proposed = 0;
  long numerical_failures = 0;
  int n_x = 0, n_alpha = 0, p_y = 0, p_z = 0;
  int n_star = 0, n_v_star = 0;

  int col(const std::string& name) const {
    auto it = std::find(param_names.begin(), param_names.end(), name);
    if (it == param_names.end())
      throw DataError("chain has no parameter named '" + name + "'");
    return static_cast<int>(it - param_names.begin());
  }

  ModelParams params_at(int row) const {
    ModelParams p;
    const auto& d = draws.row(row);
    p.sigma2_u = d(0);
    p.a = d(1);
    p.gamma = d(2);
    p.c = d(3);
    p.sigma2_v = d(4);
    p.phi_v = d(5);
    p.tau2_y = d(6);
    p.tau2_z = d.segment(7, n_x).transpose();
    p.alpha = d.segment(7 + n_x, n_alpha).transpose();
    p.beta_y = d.segment(7 + n_x + n_alpha, p_y).transpose();
    p.beta_z = d.segment(7 + n_x + n_alpha + p_y, p_z).transpose();
    return p;
  }

  double acceptance_rate() const {
    return proposed > 0 ? double(accepted) / double(proposed) : 0.0;
  }

  static std::vector<std::string> names_for(int n_x, int n_alpha, int p_y,
                                            int p_z) {
    std::vector<std::string> names = {"sigma2_u", "a",     "gamma", "c",
                                      "sigma2_v", "phi_v", "tau2_y"};
    for (int k = 0; k < n_x; ++k)
      names.push_back("tau2_z_" + std::to_string(k + 1));
    for (int k = 0; k < n_alpha; ++k)
      names.push_back("alpha_" + std::to_string(k + 1));
    for (int k = 0; k < p_y; ++k)
      names.push_back("beta_y_" + std::to_string(k + 1));
    for (int k = 0; k < p_z; ++k)
      names.push_back("beta_z_" + std::to_string(k + 1));
    return names;
  }
};

// Burn-in proposal adaptation: multiplicative update toward the 0.234
// acceptance target.
inline double adapt_scale(double scale, double window_acceptance_rate) {
  return scale * std::exp(window_acceptance_rate - 0.234);
}

// Log target density of the Metropolis block on the sampling scale:
// collapsed log likelihood + block log prior + transform Jacobians.
// Returns -infinity outside the prior support or on numerical failure.
inline double log_target(const ModelParams& params,
                         const ReducedRankStructure& rr,
                         const JointDataset& data, const PriorSpec& priors) {
  const double lp = priors.log_block_prior(params);
  if (!std::isfinite(lp)) return lp;
  const LikelihoodResult lik = log_collapsed_likelihood(params, rr, data);
  if (!lik.ok) return -std::numeric_limits<double>::infinity();
  const BlockTransform tf{static_cast<int>(params.tau2_z.size()),
                          static_cast<int>(params.alpha.size())};
  return lik.log_likelihood + lp + tf.log_jacobian(tf.to_sampling(params));
}

// Data-informed starting point: moment-based variance splits, effective-range
// heuristics for the decay parameters, OLS regression coefficients.
inline ModelParams default_init(const JointDataset& data, int n_alpha,
                                const PriorSpec& priors) {
  ModelParams p;
  const int n_x = data.n_x();
  Eigen::VectorXd height_var = Eigen::VectorXd::Constant(n_x, 1.0);
  for (int k = 0; k < n_x; ++k) {
    std::vector<double> vals;
    for (int i = 0; i < data.n(); ++i)
      if (data.height_index[i] == k) vals.push_back(data.signal_values(i));
    if (vals.size() > 1) {
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= vals.size();
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      height_var(k) = std::max(var / (vals.size() - 1), 1e-6);
    }
  }
  p.tau2_z = 0.5 * height_var;
  p.sigma2_u = std::max(0.5 * height_var.mean(), 1e-6);
  double mean_dist = 0.0;
  int pairs = 0;
  for (int i = 0; i < data.n_s(); ++i)
    for (int j = i + 1; j < data.n_s(); ++j) {
      mean_dist += distance(data.plot_locations[i], data.plot_locations[j]);
      ++pairs;
    }
  mean_dist = pairs > 0 ? mean_dist / pairs : 1.0;
  auto clip = [](double v, const UniformPrior& u) {
    const double pad = 1e-6 * (u.hi - u.lo);
    return std::min(std::max(v, u.lo + pad), u.hi - pad);
  };
  p.a = clip(1.0, priors.a);
  p.gamma = clip(0.5, priors.gamma);
  p.c = clip(3.0 / mean_dist, priors.c);
  p.phi_v = clip(3.0 / mean_dist, priors.phi_v);
  const double y_var = std::max(
      (data.outcomes.array() - data.outcomes.mean()).square().sum() /
          std::max(1, data.n_s() - 1),
      1e-6);
  p.tau2_y = 0.25 * y_var;
  p.sigma2_v = 0.25 * y_var;
  p.alpha = Eigen::VectorXd::Zero(n_alpha);
  p.beta_y = data.Q_y.colPivHouseholderQr().solve(data.outcomes);
  p.beta_z = data.Q_z.colPivHouseholderQr().solve(data.signal_values);
  return p;
}

// Blocked random-walk Metropolis over {theta_u, theta_v, alpha, tau2_y,
// tau2_z} with a Gibbs step for beta and exact latent recovery at the
// thinning stride. One instance per chain.
class ChainSampler {
 public:
  ChainSampler(const JointDataset& data, const KnotSet& knots,
               const PriorSpec& priors, const SamplerConfig& config)
      : data_(data),
        priors_(priors),
        cfg_(config),
        builder_(data, knots),
        tf_{data.n_x(), knots.n_x_star()},
        ws_cur_(CollapsedInputs::from(data)),
        ws_prop_(CollapsedInputs::from(data)) {
    cfg_.validate();
    priors_.validate();
    sd_ = cfg_.proposal_sd.size() > 0
              ? cfg_.proposal_sd
              : Eigen::VectorXd::Constant(tf_.dim(), 0.1);
    if (sd_.size() != tf_.dim())
      throw ConfigError("proposal_sd has length " + std::to_string(sd_.size()) +
                        ", block dimension is " + std::to_string(tf_.dim()));
    scale_ = cfg_.proposal_scale > 0 ? cfg_.proposal_scale
                                     : 2.38 / std::sqrt(double(tf_.dim()));
  }

  void initialize(const ModelParams& start) {
    params_ = start;
    if (params_.tau2_z.size() != data_.n_x())
      throw ConfigError("initial tau2_z length does not match observed heights");
    xi_ = tf_.to_sampling(params_);
    const ReducedRankStructure rr = builder_.build(params_);
    if (ws_cur_.factorize(rr) != FactorStage::ok)
      throw NumericalError("collapsed factorization failed at the initial state");
    loglik_ = ws_cur_.log_likelihood(params_.beta_z, params_.beta_y);
    log_target_ = loglik_ + priors_.log_block_prior(params_) +
                  tf_.log_jacobian(xi_);
    if (!std::isfinite(log_target_))
      throw NumericalError("initial state has non-finite log target");
  }

  // One joint Gaussian random-walk proposal on the sampling scale; numerical
  // failures count as rejections. Returns true when accepted.
  bool metropolis_block_step(Rng& rng) {
    const Eigen::VectorXd step =
        scale_ * sd_.cwiseProduct(rng.normal_vector(tf_.dim()));
    // Draw the acceptance uniform unconditionally to keep the stream aligned
    // across accept/reject paths.
    const double log_u = std::log(rng.uniform());
    const Eigen::VectorXd xi_prop = xi_ + step;
    ModelParams prop = params_;
    tf_.from_sampling(xi_prop, prop);
    const double lp = priors_.log_block_prior(prop);
    if (!std::isfinite(lp)) return false;
    double loglik_prop;
    try {
      const ReducedRankStructure rr = builder_.build(prop);
      if (ws_prop_.factorize(rr) != FactorStage::ok) {
        ++failures_;
        return false;
      }
      loglik_prop = ws_prop_.log_likelihood(prop.beta_z, prop.beta_y);
    } catch (const NumericalError&) {
      ++failures_;
      return false;
    }
    const double lt_prop = loglik_prop + lp + tf_.log_jacobian(xi_prop);
    if (log_u < lt_prop - log_target_) {
      xi_ = xi_prop;
      params_ = std::move(prop);
      loglik_ = loglik_prop;
      log_target_ = lt_prop;
      std::swap(ws_cur_, ws_prop_);
      return true;
    }
    return false;
  }

  void gibbs_beta(Rng& rng) {
    const Eigen::VectorXd beta = ws_cur_.sample_beta(priors_.beta, rng);
    params_.beta_z = beta.head(data_.Q_z.cols());
    params_.beta_y = beta.tail(data_.Q_y.cols());
    loglik_ = ws_cur_.log_likelihood(params_.beta_z, params_.beta_y);
    log_target_ = loglik_ + priors_.log_block_prior(params_) +
                  tf_.log_jacobian(xi_);
  }

  PosteriorChain run(Rng& rng) {
    const int n_stored = cfg_.n_iter - cfg_.n_burn;
    PosteriorChain chain;
    chain.n_x = data_.n_x();
    chain.n_alpha = tf_.n_alpha;
    chain.p_y = static_cast<int>(data_.Q_y.cols());
    chain.p_z = static_cast<int>(data_.Q_z.cols());
    chain.param_names =
        PosteriorChain::names_for(chain.n_x, chain.n_alpha, chain.p_y, chain.p_z);
    chain.draws.resize(n_stored, static_cast<int>(chain.param_names.size()));
    chain.log_target_trace.resize(n_stored);

    std::vector<Eigen::VectorXd> latent_u, latent_v;
    std::vector<int> latent_rows;

    long window_accepts = 0, window_failures = 0;
    std::vector<Eigen::VectorXd> window_draws;
    for (int t = 1; t <= cfg_.n_iter; ++t) {
      if (cfg_.update_block) {
        ++chain.proposed;
        const long failures_before = failures_;
        const bool accepted = metropolis_block_step(rng);
        if (accepted) {
          ++chain.accepted;
          ++window_accepts;
        }
        window_failures += failures_ - failures_before;
        if (cfg_.adapt_shape) window_draws.push_back(xi_);
      }
      gibbs_beta(rng);

      if (cfg_.update_block && t % cfg_.adapt_window == 0) {
        if (2 * window_failures > cfg_.adapt_window)
          throw NumericalError(
              "over half of the proposals in an adaptation window failed "
              "numerically (window ending at iteration " + std::to_string(t) +
              "); check knot configuration and priors");
        if (t <= cfg_.n_burn) {
          const double rate =
              double(window_accepts) / double(cfg_.adapt_window);
          scale_ = adapt_scale(scale_, rate);
          if (cfg_.adapt_shape && window_draws.size() > 10) rescale_shape(window_draws);
        }
        window_accepts = 0;
        window_failures = 0;
        window_draws.clear();
      }

      if (t > cfg_.n_burn) {
        const int row = t - cfg_.n_burn - 1;
        store_row(chain, row);
        if ((t - cfg_.n_burn) % cfg_.thin == 0) {
          auto [u_star, v_star] =
              ws_cur_.recover_latents(params_.beta_z, params_.beta_y, rng);
          latent_u.push_back(std::move(u_star));
          latent_v.push_back(std::move(v_star));
          latent_rows.push_back(row);
        }
      }
    }

    chain.numerical_failures = failures_;
    chain.latent_rows = std::move(latent_rows);
    if (!latent_u.empty()) {
      chain.n_star = static_cast<int>(latent_u[0].size());
      chain.n_v_star = static_cast<int>(latent_v[0].size());
      chain.latents.resize(latent_u.size(), chain.n_star + chain.n_v_star);
      for (std::size_t r = 0; r < latent_u.size(); ++r)
        chain.latents.row(r) << latent_u[r].transpose(), latent_v[r].transpose();
    }
    return chain;
  }

  const ModelParams& params() const { return params_; }
  double current_log_target() const { return log_target_; }
  double proposal_scale() const { return scale_; }
  const Eigen::VectorXd& proposal_sd() const { return sd_; }

 private:
  void store_row(PosteriorChain& chain, int row) {
    Eigen::VectorXd r(chain.draws.cols());
    r.head(7) << params_.sigma2_u, params_.a, params_.gamma, params_.c,
        params_.sigma2_v, params_.phi_v, params_.tau2_y;
    r.segment(7, tf_.n_x) = params_.tau2_z;
    r.segment(7 + tf_.n_x, tf_.n_alpha) = params_.alpha;
    r.segment(7 + tf_.n_x + tf_.n_alpha, params_.beta_y.size()) = params_.beta_y;
    r.tail(params_.beta_z.size()) = params_.beta_z;
    chain.draws.row(row) = r.transpose();
    chain.log_target_trace(row) = log_target_;
  }

  // Shape adaptation: blend the per-coordinate proposal sd toward the
  // empirical spread of the window's draws (burn-in only).
  void rescale_shape(const std::vector<Eigen::VectorXd>& window_draws) {
    const int d = tf_.dim();
    const auto n = static_cast<Eigen::Index>(window_draws.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& v : window_draws) mean += v;
    mean /= double(n);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& v : window_draws) var += (v - mean).array().square().matrix();
    var /= double(n - 1);
    for (int i = 0; i < d; ++i) {
      const double sd = std::sqrt(var(i));
      if (sd > 1e-12) sd_(i) = std::sqrt(sd_(i) * sd);  // geometric blend
    }
  }

  const JointDataset& data_;
  PriorSpec priors_;
  SamplerConfig cfg_;
  StructureBuilder builder_;
  BlockTransform tf_;
  CollapsedWorkspace ws_cur_, ws_prop_;
  ModelParams params_;
  Eigen::VectorXd xi_;
  double loglik_ = 0.0, log_target_ = 0.0;
  Eigen::VectorXd sd_;
  double scale_ = 1.0;
  long failures_ = 0;
};

inline PosteriorChain run_chain(const JointDataset& data, const KnotSet& knots,
                                const PriorSpec& priors,
                                const SamplerConfig& config, Rng& rng,
                                const ModelParams& init) {
  ChainSampler sampler(data, knots, priors, config);
  sampler.initialize(init);
  return sampler.run(rng);
}

// Independent chains with substreams derived from the master seed; chains run
// concurrently, results ordered by chain index regardless of scheduling.
inline std::vector<PosteriorChain> run_chains(const JointDataset& data,
                                              const KnotSet& knots,
                                              const PriorSpec& priors,
                                              const SamplerConfig& config,
                                              const ModelParams& init) {
  const int n_chains = config.n_chains;
  std::vector<PosteriorChain> chains(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned max_threads =
      config.max_threads > 0 ? static_cast<unsigned>(config.max_threads) : hw;
  for (int base = 0; base < n_chains;
       base += static_cast<int>(max_threads)) {
    std::vector<std::thread> threads;
    for (int ci = base;
         ci < std::min(n_chains, base + static_cast<int>(max_threads)); ++ci)
      threads.emplace_back([&, ci] {
        try {
          Rng rng(Rng::derive(config.seed, static_cast<std::uint64_t>(ci)));
          chains[ci] = run_chain(data, knots, priors, config, rng, init);
        } catch (...) {
          errors[ci] = std::current_exception();
        }
      });
    for (auto& th : threads) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return chains;
}

// Potential scale reduction factor over two or more chains for one stored
// parameter column.
inline double gelman_rubin(const std::vector<PosteriorChain>& chains,
                           const std::string& param) {
  if (chains.size() < 2)
    throw ConfigError("Gelman-Rubin needs at least two chains");
  const int m = static_cast<int>(chains.size());
  const auto n = chains[0].draws.rows();
  Eigen::VectorXd means(m), vars(m);
  for (int cidx = 0; cidx < m; ++cidx) {
    const auto col = chains[cidx].draws.col(chains[cidx].col(param));
    means(cidx) = col.mean();
    vars(cidx) = (col.array() - means(cidx)).square().sum() / double(n - 1);
  }
  const double grand = means.mean();
  const double B = double(n) / (m - 1) * (means.array() - grand).square().sum();
  const double W = vars.mean();
  const double var_plus = double(n - 1) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

}  // namespace shgp
