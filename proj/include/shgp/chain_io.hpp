#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "shgp/csv.hpp"
#include "shgp/errors.hpp"
#include "shgp/reduced_rank.hpp"
#include "shgp/sampler.hpp"

namespace shgp {

// Chain persistence: one CSV per chain (header = parameter names, one row per
// stored iteration) and a companion CSV for the recovered (u*, v*) draws.
inline void write_chain_csv(const std::string& path,
                            const PosteriorChain& chain) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (std::size_t i = 0; i < chain.param_names.size(); ++i)
    out << (i ? "," : "") << chain.param_names[i];
  out << "\n";
  for (Eigen::Index r = 0; r < chain.draws.rows(); ++r) {
    for (Eigen::Index c = 0; c < chain.draws.cols(); ++c)
      out << (c ? "," : "") << format_double(chain.draws(r, c));
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

inline void write_latent_csv(const std::string& path,
                             const PosteriorChain& chain) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  out << "iteration";
  for (int k = 0; k < chain.n_star; ++k) out << ",u_star_" << (k + 1);
  for (int k = 0; k < chain.n_v_star; ++k) out << ",v_star_" << (k + 1);
  out << "\n";
  for (Eigen::Index r = 0; r < chain.latents.rows(); ++r) {
    out << chain.latent_rows[static_cast<std::size_t>(r)] + 1;
    for (Eigen::Index c = 0; c < chain.latents.cols(); ++c)
      out << "," << format_double(chain.latents(r, c));
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

namespace detail {
inline int count_prefixed(const std::vector<std::string>& names,
                          const std::string& prefix) {
  int n = 0;
  for (const auto& s : names)
    if (s.rfind(prefix, 0) == 0) ++n;
  return n;
}
}  // namespace detail

inline PosteriorChain read_chain_csv(const std::string& chain_path,
                                     const std::string& latent_path) {
  const CsvTable t = read_csv(chain_path);
  PosteriorChain chain;
  chain.param_names = t.columns;
  chain.n_x = detail::count_prefixed(t.columns, "tau2_z_");
  chain.n_alpha = detail::count_prefixed(t.columns, "alpha_");
  chain.p_y = detail::count_prefixed(t.columns, "beta_y_");
  chain.p_z = detail::count_prefixed(t.columns, "beta_z_");
  if (7 + chain.n_x + chain.n_alpha + chain.p_y + chain.p_z !=
      static_cast<int>(t.columns.size()))
    throw DataError(chain_path + ": unexpected chain header layout");
  chain.draws.resize(t.n_rows(), t.columns.size());
  for (std::size_t r = 0; r < t.n_rows(); ++r)
    for (std::size_t c = 0; c < t.columns.size(); ++c)
      chain.draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          t.rows[r][c];

  const CsvTable lt = read_csv(latent_path);
  chain.n_star = detail::count_prefixed(lt.columns, "u_star_");
  chain.n_v_star = detail::count_prefixed(lt.columns, "v_star_");
  chain.latents.resize(lt.n_rows(), chain.n_star + chain.n_v_star);
  for (std::size_t r = 0; r < lt.n_rows(); ++r) {
    chain.latent_rows.push_back(static_cast<int>(lt.rows[r][0]) - 1);
    for (int c = 0; c < chain.n_star + chain.n_v_star; ++c)
      chain.latents(static_cast<Eigen::Index>(r), c) = lt.rows[r][c + 1];
  }
  return chain;
}

// Knot persistence: spatial knots as s1,s2 rows; height knots as x rows.
inline void write_spatial_knots_csv(const std::string& path,
                                    std::span<const PlanarPoint> knots) {
  CsvTable t;
  t.columns = {"s1", "s2"};
  for (const auto& p : knots) t.rows.push_back({p.s1, p.s2});
  write_csv(path, t);
}

inline std::vector<PlanarPoint> read_spatial_knots_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c1 = t.col("s1"), c2 = t.col("s2");
  std::vector<PlanarPoint> out;
  for (const auto& row : t.rows) out.push_back({row[c1], row[c2]});
  return out;
}

inline void write_height_knots_csv(const std::string& path,
                                   std::span<const double> heights) {
  CsvTable t;
  t.columns = {"x"};
  for (double x : heights) t.rows.push_back({x});
  write_csv(path, t);
}

inline std::vector<double> read_height_knots_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c = t.col("x");
  std::vector<double> out;
  for (const auto& row : t.rows) out.push_back(row[c]);
  return out;
}

}  // namespace shgp
