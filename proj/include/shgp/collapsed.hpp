#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "shgp/dataset.hpp"
#include "shgp/errors.hpp"
#include "shgp/reduced_rank.hpp"
#include "shgp/rng.hpp"
#include "shgp/types.hpp"

namespace shgp {

// Stage at which a collapsed-likelihood factorization can fail.
enum class FactorStage {
  ok,
  chol_capacitance,  // chol(J^{-1} + W'W)
  chol_residual,     // chol(I - H H')
};

inline const char* to_string(FactorStage s) {
  switch (s) {
    case FactorStage::ok: return "ok";
    case FactorStage::chol_capacitance: return "chol(J^-1 + W'W)";
    case FactorStage::chol_residual: return "chol(I - HH')";
  }
  return "?";
}

struct LikelihoodResult {
  bool ok = false;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  FactorStage stage = FactorStage::ok;
};

// Data-side inputs of the collapsed Gaussian model: the stacked observation
// vector w = (z, y) and the block-diagonal design Q.
struct CollapsedInputs {
  Eigen::VectorXd z, y;
  Eigen::MatrixXd Q_z, Q_y;

  static CollapsedInputs from(const JointDataset& data) {
    return {data.signal_values, data.outcomes, data.Q_z, data.Q_y};
  }

  int n() const { return static_cast<int>(z.size()); }
  int n_s() const { return static_cast<int>(y.size()); }
  int p_z() const { return static_cast<int>(Q_z.cols()); }
  int p_y() const { return static_cast<int>(Q_y.cols()); }
};

// Factorization workspace for one chain. Evaluates the collapsed likelihood
// N(w | Q beta, A J A' + D) without ever forming an (n+n_s)^2 matrix:
//   W = D^{-1/2} A,  L = chol(J^{-1} + W'W),  H = L^{-1} W',
//   (A J A' + D)^{-1} = D^{-1/2} (I - H'H) D^{-1/2}.
// The same factors serve the beta full conditional and exact latent recovery.
// One chain = one workspace; never shared across threads.
class CollapsedWorkspace {
 public:
  explicit CollapsedWorkspace(CollapsedInputs inputs)
      : in_(std::move(inputs)) {
    const int N = in_.n() + in_.n_s();
    w_.resize(N);
    w_ << in_.z, in_.y;
    Q_ = Eigen::MatrixXd::Zero(N, in_.p_z() + in_.p_y());
    Q_.topLeftCorner(in_.n(), in_.p_z()) = in_.Q_z;
    Q_.bottomRightCorner(in_.n_s(), in_.p_y()) = in_.Q_y;
  }

  // Builds all parameter-dependent factors for the given structure. Returns
  // the failing stage instead of throwing: the sampler treats failures as
  // proposal rejections.
  FactorStage factorize(const ReducedRankStructure& rr) {
    const int n = in_.n(), n_s = in_.n_s();
    const int mu = rr.n_star(), mv = rr.n_v_star();
    const int N = n + n_s, m = mu + mv;
    factorized_ = false;

    d_diag_.resize(N);
    d_diag_ << rr.d_z2, rr.d_y2;
    if (!(d_diag_.array() > 0).all())
      throw NumericalError("collapsed noise variance D must be positive");
    d_inv_sqrt_ = d_diag_.array().rsqrt();
    sum_log_d_ = d_diag_.array().log().sum();

    // W' = A' D^{-1/2}, stored transposed so products read along columns.
    Wt_.resize(m, N);
    Wt_.topLeftCorner(mu, n).noalias() =
        rr.B_u.transpose() * d_inv_sqrt_.head(n).asDiagonal();
    Wt_.topRightCorner(mu, n_s).noalias() =
        rr.G.transpose() * d_inv_sqrt_.tail(n_s).asDiagonal();
    Wt_.bottomLeftCorner(mv, n).setZero();
    Wt_.bottomRightCorner(mv, n_s).noalias() =
        rr.B_v.transpose() * d_inv_sqrt_.tail(n_s).asDiagonal();

    WtW_ = Eigen::MatrixXd::Zero(m, m);
    WtW_.selfadjointView<Eigen::Lower>().rankUpdate(Wt_);
    WtW_ = WtW_.selfadjointView<Eigen::Lower>();

    // Blockwise J^{-1} from the knot Cholesky factors.
    J_inv_ = Eigen::MatrixXd::Zero(m, m);
    {
      Eigen::MatrixXd Li = Eigen::MatrixXd::Identity(mu, mu);
      rr.L_u.triangularView<Eigen::Lower>().solveInPlace(Li);
      J_inv_.topLeftCorner(mu, mu).noalias() = Li.transpose() * Li;
      Eigen::MatrixXd Lv = Eigen::MatrixXd::Identity(mv, mv);
      rr.L_v.triangularView<Eigen::Lower>().solveInPlace(Lv);
      J_inv_.bottomRightCorner(mv, mv).noalias() = Lv.transpose() * Lv;
    }
    C_u_star_ = rr.C_u_star;
    C_v_star_ = rr.C_v_star;

    Eigen::MatrixXd M = J_inv_ + WtW_;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) {
      // Survive ill-conditioned knot sets: one retry with jitter scaled to
      // the average knot variance tr(J)/dim(J).
      const double jitter =
          1e-10 * (C_u_star_.trace() + C_v_star_.trace()) / m;
      M.diagonal().array() += jitter;
      llt.compute(M);
      if (llt.info() != Eigen::Success) return FactorStage::chol_capacitance;
    }
    L_ = llt.matrixL();

    // I - H H' = L^{-1} J^{-1} L^{-T}, computed from J^{-1} directly so the
    // argument passed to the Cholesky stays symmetric PD up to round-off.
    Eigen::MatrixXd R = J_inv_;
    L_.triangularView<Eigen::Lower>().solveInPlace(R);
    R.transposeInPlace();
    L_.triangularView<Eigen::Lower>().solveInPlace(R);
    Eigen::LLT<Eigen::MatrixXd> lltT(R);
    if (lltT.info() != Eigen::Success) return FactorStage::chol_residual;
    T_ = lltT.matrixL();
    sum_log_t_ = T_.diagonal().array().log().sum();

    factorized_ = true;
    return FactorStage::ok;
  }

  bool factorized() const { return factorized_; }

  // log N(w | Q beta, A J A' + D) using the current factors.
  double log_likelihood(const Eigen::VectorXd& beta_z,
                        const Eigen::VectorXd& beta_y) const {
    require_factorized();
    const Eigen::VectorXd m_vec = residual_whitened(beta_z, beta_y);
    Eigen::VectorXd n_vec = Wt_ * m_vec;
    L_.triangularView<Eigen::Lower>().solveInPlace(n_vec);
    const double quad = m_vec.squaredNorm() - n_vec.squaredNorm();
    const double N = static_cast<double>(w_.size());
    return -0.5 * N * std::log(2.0 * M_PI) - 0.5 * sum_log_d_ + sum_log_t_ -
           0.5 * quad;
  }

  // Exact draw from the beta full conditional N(Bb, B) with
  // B^{-1} = V_beta^{-1} + Q' V_w^{-1} Q, via X = D^{-1/2} Q and H X.
  Eigen::VectorXd sample_beta(const GaussianPrior& prior, Rng& rng) const {
    require_factorized();
    const int p = static_cast<int>(Q_.cols());
    if (prior.mean.size() != p || prior.cov.rows() != p)
      throw ConfigError("beta prior dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> prior_llt(prior.cov);
    if (prior_llt.info() != Eigen::Success)
      throw NumericalError("beta prior covariance is not positive definite");
    const Eigen::MatrixXd V_beta_inv =
        prior_llt.solve(Eigen::MatrixXd::Identity(p, p));

    const Eigen::MatrixXd X = d_inv_sqrt_.asDiagonal() * Q_;
    const Eigen::VectorXd x = d_inv_sqrt_.cwiseProduct(w_);
    Eigen::MatrixXd Xt = Wt_ * X;  // becomes H X
    L_.triangularView<Eigen::Lower>().solveInPlace(Xt);
    Eigen::VectorXd xt = Wt_ * x;  // becomes H x
    L_.triangularView<Eigen::Lower>().solveInPlace(xt);

    Eigen::MatrixXd B_inv = V_beta_inv;
    B_inv.noalias() += X.transpose() * X;
    B_inv.noalias() -= Xt.transpose() * Xt;
    Eigen::VectorXd b = V_beta_inv * prior.mean;
    b.noalias() += X.transpose() * x;
    b.noalias() -= Xt.transpose() * xt;

    Eigen::LLT<Eigen::MatrixXd> llt(B_inv);
    if (llt.info() != Eigen::Success)
      throw NumericalError("beta full-conditional precision is not positive definite");
    const Eigen::MatrixXd L_B = llt.matrixL();
    Eigen::VectorXd mean = b;
    L_B.triangularView<Eigen::Lower>().solveInPlace(mean);
    L_B.transpose().triangularView<Eigen::Upper>().solveInPlace(mean);
    Eigen::VectorXd noise = rng.normal_vector(p);
    L_B.transpose().triangularView<Eigen::Upper>().solveInPlace(noise);
    return mean + noise;
  }

  // One exact draw of the knot effects g = (u*, v*) from
  // N(Bb, B), B = (J^{-1} + A'D^{-1}A)^{-1}, b = A'D^{-1}(w - Q beta),
  // via B = K - K (J + K)^{-1} K with K^{-1} = A'D^{-1}A, which avoids
  // forming J^{-1} and stays stable for ill-conditioned knot covariances.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> recover_latents(
      const Eigen::VectorXd& beta_z, const Eigen::VectorXd& beta_y,
      Rng& rng) const {
    require_factorized();
    const int mu = static_cast<int>(C_u_star_.rows());
    const int mv = static_cast<int>(C_v_star_.rows());
    const int m = mu + mv;

    Eigen::LLT<Eigen::MatrixXd> k_llt(WtW_);  // K^{-1} = W'W
    if (k_llt.info() != Eigen::Success) {
      std::string unused;
      for (int j = 0; j < m; ++j)
        if (Wt_.row(j).squaredNorm() == 0.0)
          unused += (unused.empty() ? "" : ", ") + std::to_string(j);
      throw NumericalError("singular K^-1 = A'D^-1A in latent recovery" +
                           (unused.empty() ? std::string()
                                           : " (knots with empty basis column: " +
                                                 unused + ")"));
    }
    const Eigen::MatrixXd K = k_llt.solve(Eigen::MatrixXd::Identity(m, m));

    Eigen::MatrixXd JpK = K;
    JpK.topLeftCorner(mu, mu) += C_u_star_;
    JpK.bottomRightCorner(mv, mv) += C_v_star_;
    const Eigen::MatrixXd L2 =
        chol_lower(std::move(JpK), (C_u_star_.trace() + C_v_star_.trace()) / m,
                   "J + K in latent recovery");
    Eigen::MatrixXd W2 = K;
    L2.triangularView<Eigen::Lower>().solveInPlace(W2);
    Eigen::MatrixXd B = K;
    B.noalias() -= W2.transpose() * W2;
    const Eigen::MatrixXd L_B =
        chol_lower(std::move(B), K.trace() / m, "latent conditional covariance",
                   1e-12);

    const Eigen::VectorXd b = Wt_ * residual_whitened(beta_z, beta_y);
    Eigen::VectorXd g = rng.normal_vector(m);
    g.noalias() += L_B.transpose() * b;
    g = L_B * g;
    return {g.head(mu), g.tail(mv)};
  }

  // Accessors used by tests and the identity checks.
  const Eigen::VectorXd& w() const { return w_; }
  const Eigen::MatrixXd& Q() const { return Q_; }
  const Eigen::VectorXd& D_diag() const { return d_diag_; }
  const Eigen::MatrixXd& Wt() const { return Wt_; }
  const Eigen::MatrixXd& L() const { return L_; }
  const Eigen::MatrixXd& T() const { return T_; }
  const Eigen::MatrixXd& WtW() const { return WtW_; }
  Eigen::MatrixXd A() const {
    // A = D^{1/2} W recovers the block basis matrix [B_u 0; G B_v].
    return d_diag_.array().sqrt().matrix().asDiagonal() * Wt_.transpose();
  }
  Eigen::MatrixXd J() const {
    const int mu = static_cast<int>(C_u_star_.rows());
    const int mv = static_cast<int>(C_v_star_.rows());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(mu + mv, mu + mv);
    J.topLeftCorner(mu, mu) = C_u_star_;
    J.bottomRightCorner(mv, mv) = C_v_star_;
    return J;
  }

 private:
  void require_factorized() const {
    if (!factorized_)
      throw NumericalError("collapsed workspace used before factorize()");
  }

  Eigen::VectorXd residual_whitened(const Eigen::VectorXd& beta_z,
                                    const Eigen::VectorXd& beta_y) const {
    Eigen::VectorXd e = w_;
    e.head(in_.n()).noalias() -= in_.Q_z * beta_z;
    e.tail(in_.n_s()).noalias() -= in_.Q_y * beta_y;
    return d_inv_sqrt_.cwiseProduct(e);
  }

  CollapsedInputs in_;
  Eigen::VectorXd w_;
  Eigen::MatrixXd Q_;
  bool factorized_ = false;
  Eigen::VectorXd d_diag_, d_inv_sqrt_;
  double sum_log_d_ = 0.0, sum_log_t_ = 0.0;
  Eigen::MatrixXd Wt_, WtW_, J_inv_, L_, T_;
  Eigen::MatrixXd C_u_star_, C_v_star_;
};

// One-shot forms of the three operations above.
inline LikelihoodResult log_collapsed_likelihood(const ModelParams& params,
                                                 const ReducedRankStructure& rr,
                                                 const JointDataset& data) {
  CollapsedWorkspace ws(CollapsedInputs::from(data));
  const FactorStage stage = ws.factorize(rr);
  if (stage != FactorStage::ok) return {false, -std::numeric_limits<double>::infinity(), stage};
  return {true, ws.log_likelihood(params.beta_z, params.beta_y),
          FactorStage::ok};
}

inline Eigen::VectorXd sample_beta(const ModelParams& params,
                                   const ReducedRankStructure& rr,
                                   const JointDataset& data,
                                   const GaussianPrior& prior, Rng& rng) {
  CollapsedWorkspace ws(CollapsedInputs::from(data));
  if (ws.factorize(rr) != FactorStage::ok)
    throw NumericalError("collapsed factorization failed in sample_beta");
  return ws.sample_beta(prior, rng);
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> recover_latents(
    const ModelParams& params, const ReducedRankStructure& rr,
    const JointDataset& data, Rng& rng) {
  CollapsedWorkspace ws(CollapsedInputs::from(data));
  if (ws.factorize(rr) != FactorStage::ok)
    throw NumericalError("collapsed factorization failed in recover_latents");
  return ws.recover_latents(params.beta_z, params.beta_y, rng);
}

}  // namespace shgp
