#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "shgp/dataset.hpp"
#include "shgp/types.hpp"

namespace shgp {

struct InverseGammaPrior {
  double shape = 2.0;
  double scale = 1.0;

  double log_pdf(double v) const {
    if (v <= 0.0) return -std::numeric_limits<double>::infinity();
    return shape * std::log(scale) - std::lgamma(shape) -
           (shape + 1.0) * std::log(v) - scale / v;
  }
};

struct UniformPrior {
  double lo = 0.0;
  double hi = 1.0;

  bool contains(double v) const { return v > lo && v < hi; }
  double log_pdf(double v) const {
    return contains(v) ? -std::log(hi - lo)
                       : -std::numeric_limits<double>::infinity();
  }
};

// Priors for everything updated by the blocked Metropolis step plus the
// Gaussian priors used by the beta Gibbs step. Defaults follow standard
// weakly-informative choices; the paper reports none.
struct PriorSpec {
  InverseGammaPrior sigma2_u{2.0, 1.0};
  InverseGammaPrior sigma2_v{2.0, 1.0};
  InverseGammaPrior tau2_y{2.0, 1.0};
  InverseGammaPrior tau2_z{2.0, 1.0};  // shared across heights
  UniformPrior a{1e-3, 1e3};
  UniformPrior c{1e-3, 1e3};
  UniformPrior gamma{0.0, 1.0};
  UniformPrior phi_v{1e-3, 1e3};
  GaussianPrior alpha;
  GaussianPrior beta;
  // Improper flat prior over the block support; testing hook that reduces the
  // Metropolis target to the pure likelihood.
  bool flat = false;

  void validate() const {
    auto ig_ok = [](const InverseGammaPrior& p) {
      return p.shape > 0 && p.scale > 0;
    };
    if (!(ig_ok(sigma2_u) && ig_ok(sigma2_v) && ig_ok(tau2_y) && ig_ok(tau2_z)))
      throw ConfigError("inverse-gamma hyperparameters must be positive");
    auto iv_ok = [](const UniformPrior& p) { return p.hi > p.lo; };
    if (!(iv_ok(a) && iv_ok(c) && iv_ok(gamma) && iv_ok(phi_v)))
      throw ConfigError("uniform prior supports must be nonempty");
    if (gamma.lo < 0.0 || gamma.hi > 1.0)
      throw ConfigError("gamma prior support must lie within [0, 1]");
  }

  // phi_v support spans effective ranges from the maximum down to the minimum
  // nonzero inter-plot distance.
  static PriorSpec defaults(const JointDataset& data, int n_alpha) {
    PriorSpec p;
    double d_min = std::numeric_limits<double>::infinity(), d_max = 0.0;
    for (int i = 0; i < data.n_s(); ++i)
      for (int j = i + 1; j < data.n_s(); ++j) {
        const double d = distance(data.plot_locations[i], data.plot_locations[j]);
        if (d > 0.0) d_min = std::min(d_min, d);
        d_max = std::max(d_max, d);
      }
    if (d_max > 0.0 && std::isfinite(d_min)) {
      double lo = 3.0 / d_max, hi = 3.0 / d_min;
      if (!(hi > lo)) {  // all pairs equidistant
        lo *= 0.5;
        hi = 4.0 * lo;
      }
      p.phi_v = {lo, hi};
    }
    p.alpha = GaussianPrior::isotropic(n_alpha, 100.0);
    p.beta = GaussianPrior::isotropic(data.Q_y.cols() + data.Q_z.cols(), 1e6);
    return p;
  }

  // Log prior for the Metropolis block {theta_u, theta_v, alpha, tau2_y,
  // tau2_z}; the beta prior enters only the Gibbs step.
  double log_block_prior(const ModelParams& params) const {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    if (!(a.contains(params.a) && c.contains(params.c) &&
          gamma.contains(params.gamma) && phi_v.contains(params.phi_v)))
      return neg_inf;
    if (!(params.sigma2_u > 0 && params.sigma2_v > 0 && params.tau2_y > 0 &&
          (params.tau2_z.array() > 0).all()))
      return neg_inf;
    if (flat) return 0.0;
    double lp = sigma2_u.log_pdf(params.sigma2_u) +
                sigma2_v.log_pdf(params.sigma2_v) +
                tau2_y.log_pdf(params.tau2_y) + a.log_pdf(params.a) +
                c.log_pdf(params.c) + gamma.log_pdf(params.gamma) +
                phi_v.log_pdf(params.phi_v);
    for (Eigen::Index k = 0; k < params.tau2_z.size(); ++k)
      lp += tau2_z.log_pdf(params.tau2_z(k));
    lp += alpha.log_pdf(params.alpha);
    return lp;
  }
};

// Sampling-scale block layout:
//   [log s2u, log a, logit gamma, log c, log s2v, log phi_v, log t2y,
//    log t2z_1..n_x, alpha_1..n_alpha]
// matching the chain CSV column order for the non-regression parameters.
struct BlockTransform {
  int n_x = 0;
  int n_alpha = 0;

  int dim() const { return 7 + n_x + n_alpha; }

  Eigen::VectorXd to_sampling(const ModelParams& p) const {
    Eigen::VectorXd xi(dim());
    xi(0) = std::log(p.sigma2_u);
    xi(1) = std::log(p.a);
    xi(2) = std::log(p.gamma) - std::log1p(-p.gamma);
    xi(3) = std::log(p.c);
    xi(4) = std::log(p.sigma2_v);
    xi(5) = std::log(p.phi_v);
    xi(6) = std::log(p.tau2_y);
    xi.segment(7, n_x) = p.tau2_z.array().log();
    xi.tail(n_alpha) = p.alpha;
    return xi;
  }

  void from_sampling(const Eigen::VectorXd& xi, ModelParams& p) const {
    p.sigma2_u = std::exp(xi(0));
    p.a = std::exp(xi(1));
    p.gamma = 1.0 / (1.0 + std::exp(-xi(2)));
    p.c = std::exp(xi(3));
    p.sigma2_v = std::exp(xi(4));
    p.phi_v = std::exp(xi(5));
    p.tau2_y = std::exp(xi(6));
    p.tau2_z = xi.segment(7, n_x).array().exp();
    p.alpha = xi.tail(n_alpha);
  }

  // log |d(natural)/d(sampling)|: xi for log-transformed coordinates,
  // log g(1-g) for the logit coordinate, zero for alpha.
  double log_jacobian(const Eigen::VectorXd& xi) const {
    double lj = xi(0) + xi(1) + xi(3) + xi(4) + xi(5) + xi(6) +
                xi.segment(7, n_x).sum();
    const double g = 1.0 / (1.0 + std::exp(-xi(2)));
    lj += std::log(g) + std::log1p(-g);
    return lj;
  }
};

}  // namespace shgp
