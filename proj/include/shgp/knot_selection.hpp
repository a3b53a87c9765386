#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "shgp/errors.hpp"
#include "shgp/kernels.hpp"
#include "shgp/types.hpp"

namespace shgp {

namespace detail {

template <class Kernel, class Coord>
Eigen::MatrixXd small_cov(const Kernel& k, const std::vector<Coord>& a,
                          const std::vector<Coord>& b) {
  Eigen::MatrixXd M(a.size(), b.size());
  for (std::size_t j = 0; j < b.size(); ++j)
    for (std::size_t i = 0; i < a.size(); ++i)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          k(a[i], b[j]);
  return M;
}

// Sum over targets of the residual predictive-process variance
// C(t,t) - c*(t)' C*^{-1} c*(t) for a given knot list.
template <class Kernel, class Coord>
double residual_variance_objective(const Kernel& k,
                                   const std::vector<Coord>& knots,
                                   const std::vector<Coord>& targets) {
  Eigen::MatrixXd C = small_cov(k, knots, knots);
  Eigen::MatrixXd L = chol_lower(std::move(C), k.sigma2, "knot covariance");
  Eigen::MatrixXd V = small_cov(k, knots, targets);
  L.triangularView<Eigen::Lower>().solveInPlace(V);
  double obj = 0.0;
  for (Eigen::Index t = 0; t < V.cols(); ++t)
    obj += std::max(0.0, k.sigma2 - V.col(t).squaredNorm());
  return obj;
}

inline std::size_t binomial_capped(int n, int r, std::size_t cap) {
  if (r < 0 || r > n) return 0;
  r = std::min(r, n - r);
  std::size_t result = 1;
  for (int i = 1; i <= r; ++i) {
    result = result * static_cast<std::size_t>(n - r + i) /
             static_cast<std::size_t>(i);
    if (result > cap) return cap + 1;
  }
  return result;
}

}  // namespace detail

struct HeightKnotSelection {
  std::vector<double> heights;
  double objective = 0.0;
  bool exhaustive = true;  // false when the greedy fallback was used
};

// Chooses n_x_star height knots from the observed heights by minimizing the
// summed residual variance of the height slice of the process. Stationarity
// makes the objective location-free, so it is evaluated at an arbitrary s.
inline HeightKnotSelection select_height_knots(
    const GneitingKernel& kernel, const std::vector<double>& candidates,
    int n_x_star, std::size_t exhaustive_limit = 1000000) {
  const int n = static_cast<int>(candidates.size());
  if (n_x_star < 1 || n_x_star > n)
    throw ConfigError("cannot select " + std::to_string(n_x_star) +
                      " height knots from " + std::to_string(n) +
                      " candidates");
  const PlanarPoint origin{0.0, 0.0};
  std::vector<SpaceHeightCoord> cand(n);
  for (int i = 0; i < n; ++i) cand[i] = {origin, candidates[i]};

  auto objective = [&](const std::vector<int>& idx) {
    std::vector<SpaceHeightCoord> knots;
    knots.reserve(idx.size());
    for (int i : idx) knots.push_back(cand[i]);
    return detail::residual_variance_objective(kernel, knots, cand);
  };

  HeightKnotSelection out;
  if (detail::binomial_capped(n, n_x_star, exhaustive_limit) <=
      exhaustive_limit) {
    // Lexicographic enumeration; strict improvement keeps the earliest
    // subset, which breaks ties toward lower indices.
    std::vector<int> idx(n_x_star);
    for (int i = 0; i < n_x_star; ++i) idx[i] = i;
    std::vector<int> best = idx;
    double best_obj = objective(idx);
    while (true) {
      int pos = n_x_star - 1;
      while (pos >= 0 && idx[pos] == n - n_x_star + pos) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int i = pos + 1; i < n_x_star; ++i) idx[i] = idx[i - 1] + 1;
      const double obj = objective(idx);
      if (obj < best_obj) {
        best_obj = obj;
        best = idx;
      }
    }
    for (int i : best) out.heights.push_back(candidates[i]);
    out.objective = best_obj;
    out.exhaustive = true;
  } else {
    // Greedy forward selection on the same objective.
    std::vector<int> chosen;
    std::vector<char> used(n, 0);
    for (int step = 0; step < n_x_star; ++step) {
      int best_i = -1;
      double best_obj = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        if (used[i]) continue;
        auto trial = chosen;
        trial.push_back(i);
        std::sort(trial.begin(), trial.end());
        const double obj = objective(trial);
        if (obj < best_obj) {
          best_obj = obj;
          best_i = i;
        }
      }
      used[best_i] = 1;
      chosen.push_back(best_i);
      out.objective = best_obj;
    }
    std::sort(chosen.begin(), chosen.end());
    for (int i : chosen) out.heights.push_back(candidates[i]);
    out.exhaustive = false;
  }
  std::sort(out.heights.begin(), out.heights.end());
  return out;
}

struct SpatialKnotSelection {
  std::vector<PlanarPoint> knots;
  std::vector<double> objective_trace;  // objective after each greedy step
};

namespace detail {

// Greedy sequential search: repeatedly add the candidate block giving the
// largest decrease of the summed residual variance over the targets.
// Ties break toward the lower candidate index.
template <class Kernel, class Coord>
SpatialKnotSelection greedy_block_selection(
    const Kernel& kernel, const std::vector<std::vector<Coord>>& blocks,
    const std::vector<PlanarPoint>& block_locations,
    const std::vector<Coord>& targets, int n_select) {
  const int n_cand = static_cast<int>(blocks.size());
  if (n_select < 1 || n_select > n_cand)
    throw ConfigError("cannot select " + std::to_string(n_select) +
                      " knots from " + std::to_string(n_cand) + " candidates");
  const Eigen::Index T = static_cast<Eigen::Index>(targets.size());

  SpatialKnotSelection out;
  std::vector<Coord> chosen_coords;
  std::vector<char> used(n_cand, 0);
  Eigen::MatrixXd L(0, 0);  // chol of the chosen-knot covariance
  Eigen::MatrixXd V(0, T);  // L^{-1} C(chosen, targets)
  double objective = kernel.sigma2 * static_cast<double>(T);

  for (int step = 0; step < n_select; ++step) {
    int best_i = -1;
    double best_dec = -1.0;
    Eigen::MatrixXd best_U, best_Ls, best_R;
    for (int i = 0; i < n_cand; ++i) {
      if (used[i]) continue;
      const auto& blk = blocks[i];
      Eigen::MatrixXd Ccc = small_cov(kernel, blk, blk);
      Eigen::MatrixXd U(L.rows(), Ccc.rows());
      if (L.rows() > 0) {
        U = small_cov(kernel, chosen_coords, blk);
        L.triangularView<Eigen::Lower>().solveInPlace(U);
        Ccc.noalias() -= U.transpose() * U;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(Ccc);
      if (llt.info() != Eigen::Success) continue;  // coincident with chosen
      Eigen::MatrixXd R = small_cov(kernel, blk, targets);
      if (L.rows() > 0) R.noalias() -= U.transpose() * V;
      Eigen::MatrixXd Ls = llt.matrixL();
      Ls.triangularView<Eigen::Lower>().solveInPlace(R);
      const double dec = R.squaredNorm();
      if (dec > best_dec) {
        best_dec = dec;
        best_i = i;
        best_U = std::move(U);
        best_Ls = std::move(Ls);
        best_R = std::move(R);
      }
    }
    if (best_i < 0)
      throw NumericalError(
          "all remaining knot candidates coincide with chosen knots");
    used[best_i] = 1;
    out.knots.push_back(block_locations[best_i]);
    // Append the block to the factorization: L <- [[L,0],[U',Ls]].
    const auto& blk = blocks[best_i];
    const Eigen::Index m = L.rows(), h = static_cast<Eigen::Index>(blk.size());
    Eigen::MatrixXd L_new = Eigen::MatrixXd::Zero(m + h, m + h);
    L_new.topLeftCorner(m, m) = L;
    if (m > 0) L_new.bottomLeftCorner(h, m) = best_U.transpose();
    L_new.bottomRightCorner(h, h) = best_Ls;
    L = std::move(L_new);
    Eigen::MatrixXd V_new(m + h, T);
    V_new.topRows(m) = V;
    V_new.bottomRows(h) = best_R;
    V = std::move(V_new);
    chosen_coords.insert(chosen_coords.end(), blk.begin(), blk.end());
    objective -= best_dec;
    out.objective_trace.push_back(std::max(objective, 0.0));
  }
  return out;
}

}  // namespace detail

// Spatial knots for the shared process: with the height knots fixed, each
// candidate location contributes one knot per height knot and the objective
// is the double sum of delta2_u over plots and height knots.
inline SpatialKnotSelection select_spatial_knots_u(
    const GneitingKernel& kernel, std::span<const PlanarPoint> plot_locations,
    const std::vector<double>& heights_star,
    std::span<const PlanarPoint> candidates, int n_u_star) {
  std::vector<std::vector<SpaceHeightCoord>> blocks;
  std::vector<PlanarPoint> locs(candidates.begin(), candidates.end());
  for (const auto& s : candidates) {
    std::vector<SpaceHeightCoord> blk;
    for (double x : heights_star) blk.push_back({s, x});
    blocks.push_back(std::move(blk));
  }
  std::vector<SpaceHeightCoord> targets;
  for (const auto& s : plot_locations)
    for (double x : heights_star) targets.push_back({s, x});
  return detail::greedy_block_selection(kernel, blocks, locs, targets,
                                        n_u_star);
}

// Spatial knots for the outcome-specific process: scalar blocks, objective
// sum of delta2_v over plot locations.
inline SpatialKnotSelection select_spatial_knots_v(
    const ExponentialKernel& kernel, std::span<const PlanarPoint> plot_locations,
    std::span<const PlanarPoint> candidates, int n_v_star) {
  std::vector<std::vector<PlanarPoint>> blocks;
  std::vector<PlanarPoint> locs(candidates.begin(), candidates.end());
  for (const auto& s : candidates) blocks.push_back({s});
  std::vector<PlanarPoint> targets(plot_locations.begin(),
                                   plot_locations.end());
  return detail::greedy_block_selection(kernel, blocks, locs, targets,
                                        n_v_star);
}

// Uniform candidate grid over the bounding box of the given locations.
inline std::vector<PlanarPoint> candidate_grid(
    std::span<const PlanarPoint> locations, int per_side) {
  if (per_side < 1) throw ConfigError("candidate grid needs per_side >= 1");
  double lo1 = locations[0].s1, hi1 = lo1, lo2 = locations[0].s2, hi2 = lo2;
  for (const auto& p : locations) {
    lo1 = std::min(lo1, p.s1);
    hi1 = std::max(hi1, p.s1);
    lo2 = std::min(lo2, p.s2);
    hi2 = std::max(hi2, p.s2);
  }
  std::vector<PlanarPoint> grid;
  for (int i = 0; i < per_side; ++i)
    for (int j = 0; j < per_side; ++j) {
      const double f1 = per_side == 1 ? 0.5 : double(i) / (per_side - 1);
      const double f2 = per_side == 1 ? 0.5 : double(j) / (per_side - 1);
      grid.push_back({lo1 + f1 * (hi1 - lo1), lo2 + f2 * (hi2 - lo2)});
    }
  return grid;
}

}  // namespace shgp
