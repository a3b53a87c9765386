#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "shgp/errors.hpp"
#include "shgp/types.hpp"

namespace shgp {

// Nonseparable space-height covariance
//   C(l, l') = sigma2 * (a|dx|^2 + 1)^(-gamma) * exp(-c ||ds|| (a|dx|^2 + 1)^(-gamma/2)).
// gamma = 0 removes the height dependence entirely (separable boundary).
struct GneitingKernel {
  double sigma2 = 1.0;
  double a = 1.0;
  double gamma = 0.5;
  double c = 1.0;

  bool valid() const {
    return sigma2 > 0 && a > 0 && c > 0 && gamma >= 0.0 && gamma <= 1.0;
  }

  double from_separation(double spatial_dist, double height_gap) const {
    const double p = a * height_gap * height_gap + 1.0;
    const double pg = std::pow(p, -gamma);
    return sigma2 * pg * std::exp(-c * spatial_dist * std::sqrt(pg));
  }

  double operator()(const SpaceHeightCoord& l1,
                    const SpaceHeightCoord& l2) const {
    return from_separation(distance(l1.s, l2.s), std::abs(l1.x - l2.x));
  }
};

// Isotropic exponential covariance sigma2 * exp(-phi ||ds||).
struct ExponentialKernel {
  double sigma2 = 1.0;
  double phi = 1.0;

  bool valid() const { return sigma2 > 0 && phi > 0; }

  double from_separation(double spatial_dist) const {
    return sigma2 * std::exp(-phi * spatial_dist);
  }

  double operator()(const PlanarPoint& s1, const PlanarPoint& s2) const {
    return from_separation(distance(s1, s2));
  }
};

inline double gneiting_cov(const GneitingKernel& k, const SpaceHeightCoord& l1,
                           const SpaceHeightCoord& l2) {
  return k(l1, l2);
}

inline double exp_cov(const ExponentialKernel& k, const PlanarPoint& s1,
                      const PlanarPoint& s2) {
  return k(s1, s2);
}

// Separation tables between two coordinate lists, computed once and reused
// across covariance evaluations at different parameter values.
struct SpaceHeightSeparations {
  Eigen::MatrixXd spatial_dist;  // rows index A, columns index B
  Eigen::MatrixXd height_gap2;   // squared height differences
};

inline SpaceHeightSeparations separations(
    std::span<const SpaceHeightCoord> coords_a,
    std::span<const SpaceHeightCoord> coords_b) {
  SpaceHeightSeparations sep;
  const Eigen::Index na = static_cast<Eigen::Index>(coords_a.size());
  const Eigen::Index nb = static_cast<Eigen::Index>(coords_b.size());
  sep.spatial_dist.resize(na, nb);
  sep.height_gap2.resize(na, nb);
  for (Eigen::Index j = 0; j < nb; ++j)
    for (Eigen::Index i = 0; i < na; ++i) {
      sep.spatial_dist(i, j) = distance(coords_a[i].s, coords_b[j].s);
      const double dx = coords_a[i].x - coords_b[j].x;
      sep.height_gap2(i, j) = dx * dx;
    }
  return sep;
}

inline Eigen::MatrixXd spatial_distances(std::span<const PlanarPoint> a,
                                         std::span<const PlanarPoint> b) {
  Eigen::MatrixXd d(a.size(), b.size());
  for (Eigen::Index j = 0; j < d.cols(); ++j)
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      d(i, j) = distance(a[i], b[j]);
  return d;
}

// Vectorized evaluation over precomputed separations. Written as
// sigma2 * exp(-gamma*t - c*d*exp(-gamma*t/2)) with t = log(a*dx^2 + 1), which
// needs three transcendental passes instead of per-entry pow calls.
inline Eigen::MatrixXd cov_matrix(const GneitingKernel& k,
                                  const SpaceHeightSeparations& sep) {
  const Eigen::ArrayXXd t = (k.a * sep.height_gap2.array() + 1.0).log();
  return (k.sigma2 *
          (-k.gamma * t - k.c * sep.spatial_dist.array() * (-0.5 * k.gamma * t).exp())
              .exp())
      .matrix();
}

inline Eigen::MatrixXd cov_matrix(const ExponentialKernel& k,
                                  const Eigen::MatrixXd& spatial_dist) {
  return (k.sigma2 * (-k.phi * spatial_dist.array()).exp()).matrix();
}

inline Eigen::MatrixXd cov_matrix(const GneitingKernel& k,
                                  std::span<const SpaceHeightCoord> a,
                                  std::span<const SpaceHeightCoord> b) {
  return cov_matrix(k, separations(a, b));
}

inline Eigen::MatrixXd cov_matrix(const GneitingKernel& k,
                                  std::span<const SpaceHeightCoord> a) {
  return cov_matrix(k, a, a);
}

inline Eigen::MatrixXd cov_matrix(const ExponentialKernel& k,
                                  std::span<const PlanarPoint> a,
                                  std::span<const PlanarPoint> b) {
  return cov_matrix(k, spatial_distances(a, b));
}

inline Eigen::MatrixXd cov_matrix(const ExponentialKernel& k,
                                  std::span<const PlanarPoint> a) {
  return cov_matrix(k, a, a);
}

// Lower Cholesky factor of a covariance matrix. On failure (near-duplicate
// coordinates) adds jitter * scale to the diagonal once and retries; a second
// failure raises NumericalError naming the context.
inline Eigen::MatrixXd chol_lower(Eigen::MatrixXd M, double scale,
                                  const std::string& context,
                                  double jitter = 1e-8) {
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  M.diagonal().array() += jitter * scale;
  llt.compute(M);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  throw NumericalError("Cholesky factorization failed for " + context +
                       " even after jitter " + std::to_string(jitter * scale));
}

}  // namespace shgp
