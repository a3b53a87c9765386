#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "shgp/errors.hpp"

namespace shgp {

// Planar coordinate in the data's native units. All distances are Euclidean.
struct PlanarPoint {
  double s1 = 0.0;
  double s2 = 0.0;

  friend bool operator==(const PlanarPoint& a, const PlanarPoint& b) {
    return a.s1 == b.s1 && a.s2 == b.s2;
  }
};

inline double distance(const PlanarPoint& a, const PlanarPoint& b) {
  return std::hypot(a.s1 - b.s1, a.s2 - b.s2);
}

// Space-height coordinate: planar location plus a height in [0, M].
struct SpaceHeightCoord {
  PlanarPoint s;
  double x = 0.0;

  friend bool operator==(const SpaceHeightCoord& a, const SpaceHeightCoord& b) {
    return a.s == b.s && a.x == b.x;
  }
};

inline void validate_height(double x, double max_height) {
  if (!std::isfinite(x) || x < 0.0)
    throw DataError("height must be finite and nonnegative, got " +
                    std::to_string(x));
  if (x > max_height)
    throw DataError("height " + std::to_string(x) +
                    " exceeds declared maximum " + std::to_string(max_height));
}

// Multivariate Gaussian prior with dense covariance.
struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  static GaussianPrior isotropic(Eigen::Index dim, double variance) {
    return {Eigen::VectorXd::Zero(dim),
            variance * Eigen::MatrixXd::Identity(dim, dim)};
  }

  double log_pdf(const Eigen::VectorXd& v) const {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw NumericalError("Gaussian prior covariance is not positive definite");
    const Eigen::VectorXd r = llt.matrixL().solve(v - mean);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
      log_det += std::log(llt.matrixL()(i, i));
    return -0.5 * cov.rows() * std::log(2.0 * M_PI) - log_det -
           0.5 * r.squaredNorm();
  }
};

// All model unknowns except the latent processes.
struct ModelParams {
  // Space-height process u: variance, height scale, interaction, spatial decay.
  double sigma2_u = 1.0;
  double a = 1.0;
  double gamma = 0.5;
  double c = 1.0;
  // Outcome-specific spatial process v.
  double sigma2_v = 1.0;
  double phi_v = 1.0;
  // Noise variances: scalar for the outcome, one per observed height for the
  // signal.
  double tau2_y = 1.0;
  Eigen::VectorXd tau2_z;
  // Height weights coupling u into the outcome (one per height knot).
  Eigen::VectorXd alpha;
  // Regression coefficients.
  Eigen::VectorXd beta_y;
  Eigen::VectorXd beta_z;

  bool valid() const {
    const bool pos = sigma2_u > 0 && a > 0 && c > 0 && sigma2_v > 0 &&
                     phi_v > 0 && tau2_y > 0 && (tau2_z.array() > 0).all();
    return pos && gamma >= 0.0 && gamma <= 1.0;
  }
};

}  // namespace shgp
