#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "shgp/csv.hpp"
#include "shgp/errors.hpp"
#include "shgp/rng.hpp"
#include "shgp/types.hpp"

namespace shgp {

// Design formulas. The outcome side accepts "1" or "1+<column>"; the signal
// side additionally accepts "height" (one intercept per observed height).
struct DesignSpec {
  std::string y = "1";
  std::string z = "1";
};

// Misaligned joint data: scalar outcomes at plot locations plus signal values
// over space-height coordinates at those locations. Immutable after assembly;
// safe to share across threads.
struct JointDataset {
  std::vector<PlanarPoint> plot_locations;          // n_s
  Eigen::VectorXd outcomes;                         // y, length n_s
  std::vector<SpaceHeightCoord> signal_coords;      // enumeration of size n
  Eigen::VectorXd signal_values;                    // z, length n
  std::vector<double> heights;                      // sorted distinct, n_x
  Eigen::MatrixXd Q_y;                              // n_s x p_y
  Eigen::MatrixXd Q_z;                              // n x p_z
  std::vector<int> height_index;                    // signal row -> k in [0, n_x)
  std::vector<int> plot_index;                      // signal row -> j in [0, n_s)
  double max_height = 0.0;                          // M
  bool balanced = false;                            // n == n_s * n_x with full grid
  std::vector<std::string> y_design_names;
  std::vector<std::string> z_design_names;
  // Plot covariate columns kept for holdout splitting and serialization.
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariates;                       // n_s x (#covariates)
  // Present when outcomes were standardized at ingestion.
  bool y_standardized = false;
  double y_mean = 0.0;
  double y_sd = 1.0;

  int n_s() const { return static_cast<int>(plot_locations.size()); }
  int n() const { return static_cast<int>(signal_coords.size()); }
  int n_x() const { return static_cast<int>(heights.size()); }
};

namespace detail {

inline int height_position(const std::vector<double>& heights, double x) {
  auto it = std::lower_bound(heights.begin(), heights.end(), x);
  if (it == heights.end() || *it != x) return -1;
  return static_cast<int>(it - heights.begin());
}

// "1" -> intercept; "1+Name" -> intercept plus the named covariate.
inline std::pair<std::vector<std::string>, bool> parse_formula(
    const std::string& formula) {
  if (formula == "1") return {{}, false};
  if (formula.rfind("1+", 0) == 0) return {{formula.substr(2)}, false};
  throw ConfigError("unsupported design formula '" + formula +
                    "' (expected \"1\", \"1+<column>\" or \"height\")");
}

inline void check_full_rank(const Eigen::MatrixXd& Q, const std::string& which) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Q);
  if (qr.rank() < Q.cols())
    throw DataError(which + " design matrix is rank deficient (" +
                    std::to_string(qr.rank()) + " < " +
                    std::to_string(Q.cols()) + ")");
}

}  // namespace detail

// Builds the joint dataset from a plot table (s1,s2,y[,covariates...]) and a
// signal table (s1,s2,x,z). Signals are grouped by plot location, each group
// sorted by height; with balanced sampling the flattened index is
// i = j * n_x + k.
inline JointDataset assemble_dataset(const CsvTable& plots,
                                     const CsvTable& signals,
                                     const DesignSpec& design = {},
                                     bool standardize_y = false) {
  JointDataset data;
  const int ps1 = plots.col("s1"), ps2 = plots.col("s2"), py = plots.col("y");
  for (const auto& name : plots.columns)
    if (name != "s1" && name != "s2" && name != "y")
      data.covariate_names.push_back(name);

  const int n_s = static_cast<int>(plots.n_rows());
  if (n_s == 0) throw DataError("plot table has no rows");
  data.plot_locations.resize(n_s);
  data.outcomes.resize(n_s);
  data.covariates.resize(n_s, static_cast<int>(data.covariate_names.size()));
  std::map<std::pair<double, double>, int> plot_of;
  for (int j = 0; j < n_s; ++j) {
    const auto& row = plots.rows[j];
    if (!std::isfinite(row[ps1]) || !std::isfinite(row[ps2]))
      throw DataError("non-finite plot coordinate in row " + std::to_string(j + 1));
    data.plot_locations[j] = {row[ps1], row[ps2]};
    data.outcomes(j) = row[py];
    for (std::size_t cidx = 0; cidx < data.covariate_names.size(); ++cidx)
      data.covariates(j, static_cast<int>(cidx)) =
          row[plots.col(data.covariate_names[cidx])];
    auto key = std::make_pair(row[ps1], row[ps2]);
    if (!plot_of.emplace(key, j).second)
      throw DataError("duplicate plot location (" + format_double(row[ps1]) +
                      ", " + format_double(row[ps2]) + ")");
  }

  const int ss1 = signals.col("s1"), ss2 = signals.col("s2");
  const int sx = signals.col("x"), sz = signals.col("z");
  // Group signal rows by plot, then sort each group by height.
  std::vector<std::vector<std::pair<double, double>>> groups(n_s);  // (x, z)
  for (std::size_t r = 0; r < signals.n_rows(); ++r) {
    const auto& row = signals.rows[r];
    if (!std::isfinite(row[ss1]) || !std::isfinite(row[ss2]) ||
        !std::isfinite(row[sx]))
      throw DataError("non-finite signal coordinate in row " +
                      std::to_string(r + 2));
    auto it = plot_of.find({row[ss1], row[ss2]});
    if (it == plot_of.end())
      throw DataError("signal location (" + format_double(row[ss1]) + ", " +
                      format_double(row[ss2]) + ") matches no plot location");
    groups[it->second].emplace_back(row[sx], row[sz]);
  }
  std::vector<double> all_heights;
  for (int j = 0; j < n_s; ++j) {
    auto& g = groups[j];
    if (g.empty())
      throw DataError("plot (" + format_double(data.plot_locations[j].s1) +
                      ", " + format_double(data.plot_locations[j].s2) +
                      ") has no signal values");
    std::sort(g.begin(), g.end());
    for (std::size_t k = 1; k < g.size(); ++k)
      if (g[k].first == g[k - 1].first)
        throw DataError("duplicate signal coordinate (s=(" +
                        format_double(data.plot_locations[j].s1) + ", " +
                        format_double(data.plot_locations[j].s2) +
                        "), x=" + format_double(g[k].first) + ")");
    for (const auto& [x, z] : g) all_heights.push_back(x);
  }
  std::sort(all_heights.begin(), all_heights.end());
  all_heights.erase(std::unique(all_heights.begin(), all_heights.end()),
                    all_heights.end());
  data.heights = all_heights;
  data.max_height = all_heights.back();
  for (double x : data.heights) validate_height(x, data.max_height);

  const int n_x = data.n_x();
  data.balanced = true;
  for (int j = 0; j < n_s; ++j) {
    if (static_cast<int>(groups[j].size()) != n_x) data.balanced = false;
    for (const auto& [x, z] : groups[j]) {
      data.signal_coords.push_back({data.plot_locations[j], x});
      data.plot_index.push_back(j);
      data.height_index.push_back(detail::height_position(data.heights, x));
    }
  }
  const int n = data.n();
  data.signal_values.resize(n);
  {
    int i = 0;
    for (int j = 0; j < n_s; ++j)
      for (const auto& [x, z] : groups[j]) data.signal_values(i++) = z;
  }

  if (standardize_y) {
    data.y_standardized = true;
    data.y_mean = data.outcomes.mean();
    const double var =
        (data.outcomes.array() - data.y_mean).square().sum() /
        std::max(1, n_s - 1);
    data.y_sd = var > 0 ? std::sqrt(var) : 1.0;
    data.outcomes = (data.outcomes.array() - data.y_mean) / data.y_sd;
  }

  // Outcome design.
  {
    auto [covars, _] = detail::parse_formula(design.y);
    data.Q_y.resize(n_s, 1 + static_cast<int>(covars.size()));
    data.Q_y.col(0).setOnes();
    data.y_design_names = {"intercept"};
    for (std::size_t cidx = 0; cidx < covars.size(); ++cidx) {
      auto it = std::find(data.covariate_names.begin(),
                          data.covariate_names.end(), covars[cidx]);
      if (it == data.covariate_names.end())
        throw DataError("design requires covariate '" + covars[cidx] +
                        "' which the plot table does not provide");
      data.Q_y.col(1 + static_cast<int>(cidx)) = data.covariates.col(
          static_cast<int>(it - data.covariate_names.begin()));
      data.y_design_names.push_back(covars[cidx]);
    }
  }
  // Signal design.
  if (design.z == "height") {
    data.Q_z = Eigen::MatrixXd::Zero(n, n_x);
    for (int i = 0; i < n; ++i) data.Q_z(i, data.height_index[i]) = 1.0;
    for (int k = 0; k < n_x; ++k)
      data.z_design_names.push_back("h" + std::to_string(k + 1));
  } else {
    auto [covars, _] = detail::parse_formula(design.z);
    data.Q_z.resize(n, 1 + static_cast<int>(covars.size()));
    data.Q_z.col(0).setOnes();
    data.z_design_names = {"intercept"};
    for (std::size_t cidx = 0; cidx < covars.size(); ++cidx) {
      auto it = std::find(data.covariate_names.begin(),
                          data.covariate_names.end(), covars[cidx]);
      if (it == data.covariate_names.end())
        throw DataError("design requires covariate '" + covars[cidx] +
                        "' which the plot table does not provide");
      const int col = static_cast<int>(it - data.covariate_names.begin());
      for (int i = 0; i < n; ++i)
        data.Q_z(i, 1 + static_cast<int>(cidx)) =
            data.covariates(data.plot_index[i], col);
      data.z_design_names.push_back(covars[cidx]);
    }
  }
  detail::check_full_rank(data.Q_y, "outcome");
  detail::check_full_rank(data.Q_z, "signal");
  return data;
}

// Serialization back to the CSV schemas accepted by assemble_dataset.
inline CsvTable to_plot_table(const JointDataset& data) {
  CsvTable t;
  t.columns = {"s1", "s2", "y"};
  for (const auto& c : data.covariate_names) t.columns.push_back(c);
  for (int j = 0; j < data.n_s(); ++j) {
    std::vector<double> row = {data.plot_locations[j].s1,
                               data.plot_locations[j].s2,
                               data.y_standardized
                                   ? data.outcomes(j) * data.y_sd + data.y_mean
                                   : data.outcomes(j)};
    for (int c = 0; c < data.covariates.cols(); ++c)
      row.push_back(data.covariates(j, c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable to_signal_table(const JointDataset& data) {
  CsvTable t;
  t.columns = {"s1", "s2", "x", "z"};
  for (int i = 0; i < data.n(); ++i)
    t.rows.push_back({data.signal_coords[i].s.s1, data.signal_coords[i].s.s2,
                      data.signal_coords[i].x, data.signal_values(i)});
  return t;
}

namespace detail {
inline JointDataset subset_plots(const JointDataset& data,
                                 const std::vector<int>& keep) {
  JointDataset out;
  out.max_height = data.max_height;
  out.heights = data.heights;
  out.y_design_names = data.y_design_names;
  out.z_design_names = data.z_design_names;
  out.covariate_names = data.covariate_names;
  out.y_standardized = data.y_standardized;
  out.y_mean = data.y_mean;
  out.y_sd = data.y_sd;
  const int m = static_cast<int>(keep.size());
  out.plot_locations.resize(m);
  out.outcomes.resize(m);
  out.Q_y.resize(m, data.Q_y.cols());
  out.covariates.resize(m, data.covariates.cols());
  std::vector<int> new_index(data.n_s(), -1);
  for (int r = 0; r < m; ++r) {
    const int j = keep[r];
    new_index[j] = r;
    out.plot_locations[r] = data.plot_locations[j];
    out.outcomes(r) = data.outcomes(j);
    out.Q_y.row(r) = data.Q_y.row(j);
    out.covariates.row(r) = data.covariates.row(j);
  }
  std::vector<int> signal_rows;
  for (int i = 0; i < data.n(); ++i)
    if (new_index[data.plot_index[i]] >= 0) signal_rows.push_back(i);
  const int n = static_cast<int>(signal_rows.size());
  out.signal_values.resize(n);
  out.Q_z.resize(n, data.Q_z.cols());
  for (int r = 0; r < n; ++r) {
    const int i = signal_rows[r];
    out.signal_coords.push_back(data.signal_coords[i]);
    out.signal_values(r) = data.signal_values(i);
    out.Q_z.row(r) = data.Q_z.row(i);
    out.plot_index.push_back(new_index[data.plot_index[i]]);
    out.height_index.push_back(data.height_index[i]);
  }
  out.balanced = (n == m * out.n_x());
  return out;
}
}  // namespace detail

// Random partition of plot locations into (train, holdout). Each side carries
// its own outcomes and the signals at its own locations; partitions are
// disjoint and their union reconstructs the input.
inline std::pair<JointDataset, JointDataset> holdout_split(
    const JointDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("holdout fraction must lie in (0, 1)");
  const int n_s = data.n_s();
  const int n_hold = static_cast<int>(std::llround(fraction * n_s));
  if (n_hold == 0 || n_hold == n_s)
    throw ConfigError("holdout fraction " + std::to_string(fraction) +
                      " yields an empty partition for " + std::to_string(n_s) +
                      " locations");
  std::vector<int> perm(n_s);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (int i = n_s - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.integer(static_cast<std::uint64_t>(i + 1))]);
  std::vector<int> hold(perm.begin(), perm.begin() + n_hold);
  std::vector<int> train(perm.begin() + n_hold, perm.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  return {detail::subset_plots(data, train), detail::subset_plots(data, hold)};
}

}  // namespace shgp
