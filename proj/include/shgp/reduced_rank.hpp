#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "shgp/dataset.hpp"
#include "shgp/errors.hpp"
#include "shgp/kernels.hpp"
#include "shgp/types.hpp"

namespace shgp {

// Knot sets anchoring the reduced-rank representation. The joint space-height
// knots enumerate spatial_u x heights location-major: index = j * n_x_star + k.
struct KnotSet {
  std::vector<PlanarPoint> spatial_u;
  std::vector<PlanarPoint> spatial_v;
  std::vector<double> heights;

  int n_u_star() const { return static_cast<int>(spatial_u.size()); }
  int n_v_star() const { return static_cast<int>(spatial_v.size()); }
  int n_x_star() const { return static_cast<int>(heights.size()); }
  int n_star() const { return n_u_star() * n_x_star(); }

  std::vector<SpaceHeightCoord> joint_u() const {
    std::vector<SpaceHeightCoord> out;
    out.reserve(n_star());
    for (const auto& s : spatial_u)
      for (double x : heights) out.push_back({s, x});
    return out;
  }

  void validate() const {
    if (spatial_u.empty() || spatial_v.empty() || heights.empty())
      throw ConfigError("knot sets must be nonempty");
    if (!std::is_sorted(heights.begin(), heights.end()))
      throw ConfigError("height knots must be sorted ascending");
    for (std::size_t i = 1; i < heights.size(); ++i)
      if (heights[i] == heights[i - 1])
        throw ConfigError("duplicate height knot " + std::to_string(heights[i]));
    auto check_distinct = [](const std::vector<PlanarPoint>& pts,
                             const char* which) {
      for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
          if (pts[i] == pts[j])
            throw ConfigError(std::string("duplicate ") + which +
                              " spatial knot (" + format_double(pts[i].s1) +
                              ", " + format_double(pts[i].s2) + ")");
    };
    check_distinct(spatial_u, "u");
    check_distinct(spatial_v, "v");
  }
};

// Basis rows solve C* b(t) = c*(t); delta2(t) = C(t,t) - c*(t)' b(t) is the
// variance lost by the rank reduction (clamped at zero within round-off).
struct BasisResult {
  Eigen::MatrixXd basis;   // targets x knots
  Eigen::VectorXd delta2;  // per target
  Eigen::MatrixXd L;       // lower Cholesky factor of the knot covariance
};

namespace detail {

inline void name_closest_pair(const Eigen::MatrixXd& knot_cov,
                              std::string& context) {
  // On factorization failure report the most correlated knot pair.
  Eigen::Index bi = 0, bj = 1;
  double best = -1.0;
  for (Eigen::Index i = 0; i < knot_cov.rows(); ++i)
    for (Eigen::Index j = i + 1; j < knot_cov.cols(); ++j)
      if (std::abs(knot_cov(i, j)) > best) {
        best = std::abs(knot_cov(i, j));
        bi = i;
        bj = j;
      }
  context += " (most correlated knot pair: " + std::to_string(bi) + ", " +
             std::to_string(bj) + ")";
}

// Shared core: one knot-matrix factorization, then triangular solves for all
// targets. `diag` holds C(t,t) per target.
inline BasisResult basis_from_cov(Eigen::MatrixXd knot_cov,
                                  Eigen::MatrixXd cross_cov,
                                  const Eigen::VectorXd& diag, double scale,
                                  const std::string& context) {
  BasisResult out;
  try {
    out.L = chol_lower(knot_cov, scale, context);
  } catch (NumericalError&) {
    std::string ctx = context;
    name_closest_pair(knot_cov, ctx);
    throw NumericalError("singular knot covariance for " + ctx);
  }
  // cross_cov becomes V = L^{-1} C*, whose column norms give delta2; a second
  // solve turns it into the basis.
  out.L.triangularView<Eigen::Lower>().solveInPlace(cross_cov);
  out.delta2 = diag - cross_cov.colwise().squaredNorm().transpose();
  for (Eigen::Index t = 0; t < out.delta2.size(); ++t) {
    const double tol = 1e-12 * std::max(diag(t), scale);
    if (out.delta2(t) < -tol)
      throw NumericalError("negative bias-adjustment variance " +
                           std::to_string(out.delta2(t)) + " at target " +
                           std::to_string(t) + " for " + context);
    out.delta2(t) = std::max(out.delta2(t), 0.0);
  }
  out.L.transpose().triangularView<Eigen::Upper>().solveInPlace(cross_cov);
  out.basis = cross_cov.transpose();
  return out;
}

}  // namespace detail

inline BasisResult build_basis(const GneitingKernel& kernel,
                               std::span<const SpaceHeightCoord> knots,
                               std::span<const SpaceHeightCoord> targets) {
  return detail::basis_from_cov(
      cov_matrix(kernel, knots), cov_matrix(kernel, knots, targets),
      Eigen::VectorXd::Constant(targets.size(), kernel.sigma2), kernel.sigma2,
      "space-height knot covariance");
}

inline BasisResult build_basis(const ExponentialKernel& kernel,
                               std::span<const PlanarPoint> knots,
                               std::span<const PlanarPoint> targets) {
  return detail::basis_from_cov(
      cov_matrix(kernel, knots), cov_matrix(kernel, knots, targets),
      Eigen::VectorXd::Constant(targets.size(), kernel.sigma2), kernel.sigma2,
      "spatial knot covariance");
}

// Everything the collapsed likelihood needs from the reduced-rank model at
// one parameter value.
struct ReducedRankStructure {
  // u side: basis over signal coordinates and over (plot, height-knot) pairs.
  Eigen::MatrixXd B_u;            // n x n*
  Eigen::MatrixXd B_plot;         // (n_s * n_x*) x n*, rows grouped by plot
  Eigen::VectorXd delta2_u;       // n
  Eigen::MatrixXd delta2_u_plot;  // n_s x n_x*
  Eigen::MatrixXd C_u_star;       // n* x n*
  Eigen::MatrixXd L_u;            // chol(C_u_star)
  // v side.
  Eigen::MatrixXd B_v;       // n_s x n_v*
  Eigen::VectorXd delta2_v;  // n_s
  Eigen::MatrixXd C_v_star;  // n_v* x n_v*
  Eigen::MatrixXd L_v;
  // alpha-weighted plot basis G with rows alpha' B(s_j).
  Eigen::MatrixXd G;  // n_s x n*
  // Collapsed noise variances.
  Eigen::VectorXd d_z2;  // tau_z^2(x_k) + delta2_u, per signal row
  Eigen::VectorXd d_y2;  // tau_y^2 + sum_k alpha_k^2 delta2_u(s_j, x_k*) + delta2_v
  int n_x_star = 0;

  int n_star() const { return static_cast<int>(C_u_star.rows()); }
  int n_v_star() const { return static_cast<int>(C_v_star.rows()); }
};

// Precomputes the knot/target separation tables once so that repeated builds
// at new parameter values (every MCMC proposal) only pay for covariance
// evaluation and the linear algebra. Deterministic regardless of threading.
class StructureBuilder {
 public:
  StructureBuilder(std::span<const SpaceHeightCoord> signal_coords,
                   std::span<const int> signal_height_index,
                   std::span<const PlanarPoint> plot_locations,
                   const KnotSet& knots)
      : n_(static_cast<int>(signal_coords.size())),
        n_s_(static_cast<int>(plot_locations.size())),
        n_x_star_(knots.n_x_star()),
        height_index_(signal_height_index.begin(), signal_height_index.end()) {
    knots.validate();
    const auto joint = knots.joint_u();
    // u targets: all signal coordinates followed by plot x height-knot pairs.
    std::vector<SpaceHeightCoord> targets(signal_coords.begin(),
                                          signal_coords.end());
    for (const auto& s : plot_locations)
      for (double x : knots.heights) targets.push_back({s, x});
    sep_kk_u_ = separations(joint, joint);
    sep_kt_u_ = separations(joint, targets);
    dist_kk_v_ = spatial_distances(knots.spatial_v, knots.spatial_v);
    dist_kt_v_ = spatial_distances(knots.spatial_v, plot_locations);
  }

  StructureBuilder(const JointDataset& data, const KnotSet& knots)
      : StructureBuilder(data.signal_coords, data.height_index,
                         data.plot_locations, knots) {}

  ReducedRankStructure build(const ModelParams& params) const {
    ReducedRankStructure rr;
    rr.n_x_star = n_x_star_;
    const GneitingKernel ku{params.sigma2_u, params.a, params.gamma, params.c};
    const ExponentialKernel kv{params.sigma2_v, params.phi_v};

    rr.C_u_star = cov_matrix(ku, sep_kk_u_);
    const int total_u = n_ + n_s_ * n_x_star_;
    BasisResult bu = detail::basis_from_cov(
        rr.C_u_star, cov_matrix(ku, sep_kt_u_),
        Eigen::VectorXd::Constant(total_u, ku.sigma2), ku.sigma2,
        "space-height knot covariance");
    rr.L_u = std::move(bu.L);
    rr.B_u = bu.basis.topRows(n_);
    rr.B_plot = bu.basis.bottomRows(n_s_ * n_x_star_);
    rr.delta2_u = bu.delta2.head(n_);
    rr.delta2_u_plot =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>(
            bu.delta2.data() + n_, n_s_, n_x_star_);

    rr.C_v_star = cov_matrix(kv, dist_kk_v_);
    BasisResult bv = detail::basis_from_cov(
        rr.C_v_star, cov_matrix(kv, dist_kt_v_),
        Eigen::VectorXd::Constant(n_s_, kv.sigma2), kv.sigma2,
        "spatial knot covariance");
    rr.L_v = std::move(bv.L);
    rr.B_v = std::move(bv.basis);
    rr.delta2_v = std::move(bv.delta2);

    if (params.alpha.size() != n_x_star_)
      throw ConfigError("alpha has length " + std::to_string(params.alpha.size()) +
                        " but there are " + std::to_string(n_x_star_) +
                        " height knots");
    rr.G.resize(n_s_, rr.n_star());
    for (int j = 0; j < n_s_; ++j)
      rr.G.row(j) = params.alpha.transpose() *
                    rr.B_plot.middleRows(j * n_x_star_, n_x_star_);

    rr.d_z2.resize(n_);
    for (int i = 0; i < n_; ++i)
      rr.d_z2(i) = params.tau2_z(height_index_[i]) + rr.delta2_u(i);
    rr.d_y2 = Eigen::VectorXd::Constant(n_s_, params.tau2_y) +
              (rr.delta2_u_plot * params.alpha.array().square().matrix()) +
              rr.delta2_v;
    return rr;
  }

 private:
  int n_, n_s_, n_x_star_;
  std::vector<int> height_index_;
  SpaceHeightSeparations sep_kk_u_, sep_kt_u_;
  Eigen::MatrixXd dist_kk_v_, dist_kt_v_;
};

// One-shot convenience for the repeated-build class above.
inline ReducedRankStructure assemble_structure(const ModelParams& params,
                                               const JointDataset& data,
                                               const KnotSet& knots) {
  return StructureBuilder(data, knots).build(params);
}

}  // namespace shgp
