// Command-line front end: simulate | select-knots | fit | predict | score.
// Every run writes a manifest (the fully resolved configuration) from which
// the run can be reproduced bit for bit.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "shgp/shgp.hpp"

namespace fs = std::filesystem;
using namespace shgp;

namespace {

constexpr const char* kVersion = "0.1.0";

// Files written by the current run, removed again if the run fails.
class FileTracker {
 public:
  std::string path(const fs::path& p) {
    written_.push_back(p);
    return p.string();
  }
  void discard_all() {
    for (const auto& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

 private:
  std::vector<fs::path> written_;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir;  // overrides [output] dir
  long seed = -1;       // overrides [run] seed
  int chains = 0;       // overrides [sampler] chains
};

std::uint64_t resolve_seed(const Config& cfg, const CommonArgs& args) {
  if (args.seed >= 0) return static_cast<std::uint64_t>(args.seed);
  return static_cast<std::uint64_t>(cfg.integer_or("run", "seed", 1));
}

fs::path resolve_out_dir(const Config& cfg, const CommonArgs& args) {
  const std::string dir = !args.out_dir.empty()
                              ? args.out_dir
                              : cfg.str_or("output", "dir", "shgp_out");
  fs::create_directories(dir);
  return dir;
}

void write_manifest(Config cfg, const CommonArgs& args,
                    const std::string& subcommand, double wall_seconds,
                    const fs::path& out_dir, FileTracker& files) {
  cfg.set("run", "seed", std::to_string(resolve_seed(cfg, args)));
  cfg.set("output", "dir", out_dir.string());
  if (args.chains > 0) cfg.set("sampler", "chains", std::to_string(args.chains));
  cfg.set("manifest", "subcommand", subcommand);
  cfg.set("manifest", "version", kVersion);
  cfg.set("manifest", "wall_seconds", format_double(wall_seconds));
  std::ofstream out(files.path(out_dir / "run_manifest.txt"));
  if (!out) throw DataError("cannot write manifest");
  out << cfg.emit();
}

// ---------------------------------------------------------------------------
// Data loading
// ---------------------------------------------------------------------------

JointDataset load_dataset(const Config& cfg, const std::string& plots_key,
                          const std::string& signals_key) {
  const std::string plots_path = cfg.str("data", plots_key);
  const std::string signals_path = cfg.str("data", signals_key);
  CsvTable signals = read_csv(signals_path);
  if (cfg.has("data", "max_height") || cfg.flag_or("data", "smooth", false)) {
    const double max_h = cfg.num_or("data", "max_height",
                                    std::numeric_limits<double>::infinity());
    signals = preprocess_signals(signals, max_h,
                                 cfg.flag_or("data", "smooth", false))
                  .signals;
  }
  DesignSpec design;
  design.y = cfg.str_or("data", "design_y", "1");
  design.z = cfg.str_or("data", "design_z", "1");
  return assemble_dataset(read_csv(plots_path), signals, design,
                          cfg.flag_or("data", "standardize_y", false));
}

// Plug-in covariance parameters used by knot selection before any fit.
std::pair<GneitingKernel, ExponentialKernel> knot_theta(const Config& cfg,
                                                        const JointDataset& data) {
  double mean_dist = 0.0;
  int pairs = 0;
  for (int i = 0; i < data.n_s(); ++i)
    for (int j = i + 1; j < data.n_s(); ++j) {
      mean_dist += distance(data.plot_locations[i], data.plot_locations[j]);
      ++pairs;
    }
  mean_dist = pairs > 0 ? mean_dist / pairs : 1.0;
  std::vector<double> fallback = {1.0, 1.0, 0.5, 3.0 / mean_dist,
                                  1.0, 3.0 / mean_dist};
  const auto theta = cfg.list_or("knots", "knot_theta", fallback);
  if (theta.size() != 6)
    throw ConfigError(
        "knot_theta needs 6 values: sigma2_u,a,gamma,c,sigma2_v,phi_v");
  const GneitingKernel ku{theta[0], theta[1], theta[2], theta[3]};
  const ExponentialKernel kv{theta[4], theta[5]};
  if (!ku.valid() || !kv.valid())
    throw ConfigError("knot_theta values outside the valid parameter ranges");
  return {ku, kv};
}

std::vector<double> equally_spaced(double lo, double hi, int k) {
  std::vector<double> out;
  for (int i = 0; i < k; ++i)
    out.push_back(k == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (k - 1));
  return out;
}

// Knot specification grammar:
//   heights:   data | equal:<k> | select:<k> | file:<path>
//   spatial_*: data | grid:<per_side>:<k> | file:<path>
KnotSet resolve_knots(const Config& cfg, const JointDataset& data) {
  KnotSet knots;
  auto parse = [](const std::string& spec)
      -> std::pair<std::string, std::vector<std::string>> {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    const std::string head = parts.empty() ? "" : parts.front();
    if (!parts.empty()) parts.erase(parts.begin());
    return {head, parts};
  };

  const auto [h_kind, h_args] = parse(cfg.str_or("knots", "heights", "data"));
  if (h_kind == "data") {
    knots.heights = data.heights;
  } else if (h_kind == "equal" && h_args.size() == 1) {
    knots.heights = equally_spaced(data.heights.front(), data.heights.back(),
                                   std::stoi(h_args[0]));
  } else if (h_kind == "select" && h_args.size() == 1) {
    const auto [ku, kv] = knot_theta(cfg, data);
    knots.heights =
        select_height_knots(ku, data.heights, std::stoi(h_args[0])).heights;
  } else if (h_kind == "file" && h_args.size() == 1) {
    knots.heights = read_height_knots_csv(h_args[0]);
  } else {
    throw ConfigError("bad height knot spec '" +
                      cfg.str_or("knots", "heights", "data") + "'");
  }

  auto resolve_spatial = [&](const std::string& key, bool for_u) {
    const auto [kind, args] = parse(cfg.str_or("knots", key, "data"));
    if (kind == "data") return std::vector<PlanarPoint>(data.plot_locations);
    if (kind == "file" && args.size() == 1)
      return read_spatial_knots_csv(args[0]);
    if (kind == "grid" && args.size() == 2) {
      const auto grid = candidate_grid(data.plot_locations, std::stoi(args[0]));
      const int count = std::stoi(args[1]);
      const auto [ku, kv] = knot_theta(cfg, data);
      if (for_u)
        return select_spatial_knots_u(ku, data.plot_locations, knots.heights,
                                      grid, count)
            .knots;
      return select_spatial_knots_v(kv, data.plot_locations, grid, count).knots;
    }
    throw ConfigError("bad spatial knot spec for " + key);
  };
  knots.spatial_u = resolve_spatial("spatial_u", true);
  knots.spatial_v = resolve_spatial("spatial_v", false);
  knots.validate();
  return knots;
}

PriorSpec resolve_priors(const Config& cfg, const JointDataset& data,
                         int n_alpha) {
  PriorSpec p = PriorSpec::defaults(data, n_alpha);
  auto ig = [&](const std::string& name, InverseGammaPrior& prior) {
    prior.shape = cfg.num_or("priors", name + "_shape", prior.shape);
    prior.scale = cfg.num_or("priors", name + "_scale", prior.scale);
  };
  ig("sigma2_u", p.sigma2_u);
  ig("sigma2_v", p.sigma2_v);
  ig("tau2_y", p.tau2_y);
  ig("tau2_z", p.tau2_z);
  auto interval = [&](const std::string& name, UniformPrior& prior) {
    prior.lo = cfg.num_or("priors", name + "_lo", prior.lo);
    prior.hi = cfg.num_or("priors", name + "_hi", prior.hi);
  };
  interval("a", p.a);
  interval("c", p.c);
  interval("gamma", p.gamma);
  interval("phi_v", p.phi_v);
  const double alpha_var = cfg.num_or("priors", "alpha_var", 100.0);
  p.alpha = GaussianPrior::isotropic(n_alpha, alpha_var);
  const double beta_var = cfg.num_or("priors", "beta_var", 1e6);
  p.beta =
      GaussianPrior::isotropic(data.Q_z.cols() + data.Q_y.cols(), beta_var);
  p.validate();
  return p;
}

SamplerConfig resolve_sampler(const Config& cfg, const CommonArgs& args,
                              std::uint64_t seed) {
  SamplerConfig s;
  s.n_iter = static_cast<int>(cfg.integer_or("sampler", "iterations", 50000));
  s.n_burn = static_cast<int>(cfg.integer_or("sampler", "burn_in", 5000));
  s.n_chains = args.chains > 0
                   ? args.chains
                   : static_cast<int>(cfg.integer_or("sampler", "chains", 3));
  s.thin = static_cast<int>(cfg.integer_or("sampler", "thin", 10));
  s.adapt_window =
      static_cast<int>(cfg.integer_or("sampler", "adapt_window", 100));
  s.adapt_shape = cfg.flag_or("sampler", "adapt_shape", true);
  s.proposal_scale = cfg.num_or("sampler", "proposal_scale", 0.0);
  s.max_threads =
      static_cast<int>(cfg.integer_or("sampler", "max_threads", 0));
  s.seed = seed;
  s.validate();
  return s;
}

ModelParams resolve_init(const Config& cfg, const JointDataset& data,
                         int n_alpha, const PriorSpec& priors) {
  ModelParams init = default_init(data, n_alpha, priors);
  init.sigma2_u = cfg.num_or("init", "sigma2_u", init.sigma2_u);
  init.a = cfg.num_or("init", "a", init.a);
  init.gamma = cfg.num_or("init", "gamma", init.gamma);
  init.c = cfg.num_or("init", "c", init.c);
  init.sigma2_v = cfg.num_or("init", "sigma2_v", init.sigma2_v);
  init.phi_v = cfg.num_or("init", "phi_v", init.phi_v);
  init.tau2_y = cfg.num_or("init", "tau2_y", init.tau2_y);
  if (cfg.has("init", "tau2_z")) {
    const auto vals = cfg.list_or("init", "tau2_z");
    if (vals.size() == 1)
      init.tau2_z.setConstant(vals[0]);
    else if (static_cast<int>(vals.size()) == data.n_x())
      for (int k = 0; k < data.n_x(); ++k) init.tau2_z(k) = vals[k];
    else
      throw ConfigError("init tau2_z needs 1 or n_x values");
  }
  if (cfg.has("init", "alpha")) {
    const auto vals = cfg.list_or("init", "alpha");
    if (static_cast<int>(vals.size()) != n_alpha)
      throw ConfigError("init alpha needs one value per height knot");
    for (int k = 0; k < n_alpha; ++k) init.alpha(k) = vals[k];
  }
  return init;
}

// ---------------------------------------------------------------------------
// Prediction target loading
// ---------------------------------------------------------------------------

int nearest_height_index(const std::vector<double>& heights, double x) {
  const auto it = std::lower_bound(heights.begin(), heights.end(), x);
  if (it == heights.begin()) return 0;
  if (it == heights.end()) return static_cast<int>(heights.size()) - 1;
  const auto hi = it - heights.begin();
  return (x - heights[hi - 1] <= heights[hi] - x) ? static_cast<int>(hi - 1)
                                                  : static_cast<int>(hi);
}

Eigen::MatrixXd design_rows_y(const JointDataset& train, const CsvTable& t) {
  Eigen::MatrixXd Q(t.n_rows(), train.Q_y.cols());
  Q.col(0).setOnes();
  for (std::size_t c = 1; c < train.y_design_names.size(); ++c) {
    const int col = t.col(train.y_design_names[c]);
    for (std::size_t r = 0; r < t.n_rows(); ++r)
      Q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          t.rows[r][col];
  }
  return Q;
}

Eigen::MatrixXd design_rows_z(const JointDataset& train, const CsvTable& t,
                              const std::vector<double>& target_heights) {
  const bool height_design =
      !train.z_design_names.empty() && train.z_design_names[0] != "intercept";
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(t.n_rows(), train.Q_z.cols());
  if (height_design) {
    for (std::size_t r = 0; r < t.n_rows(); ++r)
      Q(static_cast<Eigen::Index>(r),
        nearest_height_index(train.heights, target_heights[r])) = 1.0;
    return Q;
  }
  Q.col(0).setOnes();
  for (std::size_t c = 1; c < train.z_design_names.size(); ++c) {
    const int col = t.col(train.z_design_names[c]);
    for (std::size_t r = 0; r < t.n_rows(); ++r)
      Q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          t.rows[r][col];
  }
  return Q;
}

SignalTargets load_signal_targets(const JointDataset& train,
                                  const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c1 = t.col("s1"), c2 = t.col("s2"), cx = t.col("x"),
            cz = t.col("z");
  SignalTargets out;
  std::vector<double> xs;
  out.values.resize(t.n_rows());
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    out.coords.push_back({{t.rows[r][c1], t.rows[r][c2]}, t.rows[r][cx]});
    out.values(static_cast<Eigen::Index>(r)) = t.rows[r][cz];
    out.height_index.push_back(
        nearest_height_index(train.heights, t.rows[r][cx]));
    xs.push_back(t.rows[r][cx]);
  }
  out.Q_z = design_rows_z(train, t, xs);
  return out;
}

std::vector<PosteriorChain> load_chains(const Config& cfg,
                                        const std::string& section) {
  const std::string dir = cfg.str(section, "chains_dir");
  std::vector<PosteriorChain> chains;
  for (int i = 1;; ++i) {
    const fs::path chain_path =
        fs::path(dir) / ("chain_" + std::to_string(i) + ".csv");
    const fs::path latent_path =
        fs::path(dir) / ("latents_" + std::to_string(i) + ".csv");
    if (!fs::exists(chain_path)) break;
    chains.push_back(read_chain_csv(chain_path.string(), latent_path.string()));
  }
  if (chains.empty()) throw DataError("no chain CSVs found under " + dir);
  return chains;
}

void write_predictions(const std::string& path, const CsvTable& targets_meta,
                       const PredictiveDraws& draws, bool with_height) {
  CsvTable out;
  out.columns = with_height
                    ? std::vector<std::string>{"s1", "s2", "x", "median",
                                               "q025", "q975", "width"}
                    : std::vector<std::string>{"s1", "s2", "median", "q025",
                                               "q975", "width"};
  for (std::size_t r = 0; r < targets_meta.n_rows(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    std::vector<double> row = {targets_meta.rows[r][0],
                               targets_meta.rows[r][1]};
    if (with_height) row.push_back(targets_meta.rows[r][2]);
    row.insert(row.end(), {draws.median(i), draws.q025(i), draws.q975(i),
                           draws.width(i)});
    out.rows.push_back(std::move(row));
  }
  write_csv(path, out);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_simulate(const Config& cfg, const CommonArgs& args,
                  FileTracker& files) {
  const auto out_dir = resolve_out_dir(cfg, args);
  const std::uint64_t seed = resolve_seed(cfg, args);
  const int scale = static_cast<int>(cfg.integer_or("simulate", "scale", 1));
  SimConfig sim = table1_experiment(scale, seed);
  sim.allow_large = cfg.flag_or("simulate", "allow_large", false);
  const auto [data, truth] = simulate_joint(sim);

  write_csv(files.path(out_dir / "plots.csv"), to_plot_table(data));
  write_csv(files.path(out_dir / "signals.csv"), to_signal_table(data));

  // Truth sidecar: every generating value, so each experiment is
  // self-describing.
  std::ofstream truth_out(files.path(out_dir / "truth_params.txt"));
  auto put = [&](const std::string& name, double v) {
    truth_out << name << " = " << format_double(v) << "\n";
  };
  put("beta_y_1", truth.params.beta_y(0));
  for (int k = 0; k < truth.params.alpha.size(); ++k)
    put("alpha_" + std::to_string(k + 1), truth.params.alpha(k));
  put("sigma2_u", truth.params.sigma2_u);
  put("a", truth.params.a);
  put("gamma", truth.params.gamma);
  put("c", truth.params.c);
  put("sigma2_v", truth.params.sigma2_v);
  put("phi_v", truth.params.phi_v);
  put("tau2_y", truth.params.tau2_y);
  for (int k = 0; k < truth.params.beta_z.size(); ++k)
    put("beta_z_" + std::to_string(k + 1), truth.params.beta_z(k));
  for (int k = 0; k < truth.params.tau2_z.size(); ++k)
    put("tau2_z_" + std::to_string(k + 1), truth.params.tau2_z(k));
  for (std::size_t k = 0; k < truth.alpha_heights.size(); ++k)
    put("alpha_height_" + std::to_string(k + 1), truth.alpha_heights[k]);

  CsvTable latents;
  latents.columns = {"s1", "s2", "x", "u"};
  for (std::size_t i = 0; i < truth.u_coords.size(); ++i)
    latents.rows.push_back({truth.u_coords[i].s.s1, truth.u_coords[i].s.s2,
                            truth.u_coords[i].x,
                            truth.u(static_cast<Eigen::Index>(i))});
  write_csv(files.path(out_dir / "truth_latents_u.csv"), latents);
  CsvTable v_lat;
  v_lat.columns = {"s1", "s2", "v"};
  for (int j = 0; j < data.n_s(); ++j)
    v_lat.rows.push_back(
        {data.plot_locations[j].s1, data.plot_locations[j].s2, truth.v(j)});
  write_csv(files.path(out_dir / "truth_latents_v.csv"), v_lat);

  if (cfg.has("simulate", "holdout_fraction")) {
    const double fraction = cfg.num("simulate", "holdout_fraction");
    const std::uint64_t hseed = static_cast<std::uint64_t>(
        cfg.integer_or("simulate", "holdout_seed", 7));
    const auto [train, hold] = holdout_split(data, fraction, hseed);
    write_csv(files.path(out_dir / "train_plots.csv"), to_plot_table(train));
    write_csv(files.path(out_dir / "train_signals.csv"),
              to_signal_table(train));
    write_csv(files.path(out_dir / "holdout_plots.csv"), to_plot_table(hold));
    write_csv(files.path(out_dir / "holdout_signals.csv"),
              to_signal_table(hold));
  }
  std::cout << "simulated " << data.n_s() << " locations x " << data.n_x()
            << " heights (n = " << data.n() << ") into " << out_dir.string()
            << "\n";
}

void cmd_select_knots(const Config& cfg, const CommonArgs& args,
                      FileTracker& files) {
  const auto out_dir = resolve_out_dir(cfg, args);
  const JointDataset data = load_dataset(cfg, "plots", "signals");
  const auto [ku, kv] = knot_theta(cfg, data);

  const int n_x_star =
      static_cast<int>(cfg.integer_or("knots", "n_x", data.n_x()));
  const auto heights = select_height_knots(ku, data.heights, n_x_star);
  write_height_knots_csv(files.path(out_dir / "knots_heights.csv"),
                         heights.heights);

  const int per_side =
      static_cast<int>(cfg.integer_or("knots", "candidate_grid", 12));
  const auto grid = candidate_grid(data.plot_locations, per_side);
  const int n_u = static_cast<int>(cfg.integer_or("knots", "n_u", data.n_s()));
  const int n_v = static_cast<int>(cfg.integer_or("knots", "n_v", data.n_s()));
  const bool from_data = cfg.flag_or("knots", "candidates_from_data", false);
  std::span<const PlanarPoint> candidates =
      from_data ? std::span<const PlanarPoint>(data.plot_locations)
                : std::span<const PlanarPoint>(grid);
  const auto sel_u = select_spatial_knots_u(ku, data.plot_locations,
                                            heights.heights, candidates, n_u);
  const auto sel_v =
      select_spatial_knots_v(kv, data.plot_locations, candidates, n_v);
  write_spatial_knots_csv(files.path(out_dir / "knots_spatial_u.csv"),
                          sel_u.knots);
  write_spatial_knots_csv(files.path(out_dir / "knots_spatial_v.csv"),
                          sel_v.knots);

  CsvTable trace;
  trace.columns = {"step", "objective_u", "objective_v"};
  const std::size_t steps =
      std::max(sel_u.objective_trace.size(), sel_v.objective_trace.size());
  for (std::size_t i = 0; i < steps; ++i)
    trace.rows.push_back(
        {double(i + 1),
         i < sel_u.objective_trace.size() ? sel_u.objective_trace[i] : 0.0,
         i < sel_v.objective_trace.size() ? sel_v.objective_trace[i] : 0.0});
  write_csv(files.path(out_dir / "knot_objective_trace.csv"), trace);
  std::cout << "selected " << heights.heights.size() << " height knots ("
            << (heights.exhaustive ? "exhaustive" : "greedy") << "), "
            << sel_u.knots.size() << " u knots, " << sel_v.knots.size()
            << " v knots\n";
}

void cmd_fit(const Config& cfg, const CommonArgs& args, FileTracker& files) {
  const auto out_dir = resolve_out_dir(cfg, args);
  const std::uint64_t seed = resolve_seed(cfg, args);
  const JointDataset data = load_dataset(cfg, "plots", "signals");
  const KnotSet knots = resolve_knots(cfg, data);
  const PriorSpec priors = resolve_priors(cfg, data, knots.n_x_star());
  const SamplerConfig sampler_cfg = resolve_sampler(cfg, args, seed);
  const ModelParams init = resolve_init(cfg, data, knots.n_x_star(), priors);

  const auto chains = run_chains(data, knots, priors, sampler_cfg, init);
  for (std::size_t i = 0; i < chains.size(); ++i) {
    write_chain_csv(
        files.path(out_dir / ("chain_" + std::to_string(i + 1) + ".csv")),
        chains[i]);
    write_latent_csv(
        files.path(out_dir / ("latents_" + std::to_string(i + 1) + ".csv")),
        chains[i]);
    std::cout << "chain " << (i + 1) << ": acceptance "
              << chains[i].acceptance_rate() << ", numerical failures "
              << chains[i].numerical_failures << "\n";
  }
  // Persist the knots actually used so downstream commands can reload them.
  write_height_knots_csv(files.path(out_dir / "knots_heights.csv"),
                         knots.heights);
  write_spatial_knots_csv(files.path(out_dir / "knots_spatial_u.csv"),
                          knots.spatial_u);
  write_spatial_knots_csv(files.path(out_dir / "knots_spatial_v.csv"),
                          knots.spatial_v);
  if (chains.size() >= 2)
    std::cout << "gelman-rubin sigma2_u: " << gelman_rubin(chains, "sigma2_u")
              << "\n";
}

PredictionConfig resolve_predict_cfg(const Config& cfg,
                                     const std::string& section,
                                     std::uint64_t seed) {
  PredictionConfig p;
  p.max_samples = static_cast<int>(cfg.integer_or(section, "max_samples", 0));
  p.interpolate_tau = cfg.flag_or(section, "interpolate_tau", false);
  p.max_threads = static_cast<int>(cfg.integer_or(section, "max_threads", 0));
  p.seed = seed;
  return p;
}

void cmd_predict(const Config& cfg, const CommonArgs& args,
                 FileTracker& files) {
  const auto out_dir = resolve_out_dir(cfg, args);
  const std::uint64_t seed = resolve_seed(cfg, args);
  const JointDataset train = load_dataset(cfg, "plots", "signals");
  const KnotSet knots = resolve_knots(cfg, train);
  const auto chains = load_chains(cfg, "predict");
  const PredictionConfig pcfg = resolve_predict_cfg(cfg, "predict", seed);
  const int batch =
      static_cast<int>(cfg.integer_or("predict", "batch_size", 2048));
  const std::string mode = cfg.str("predict", "mode");

  if (mode == "z") {
    const CsvTable t = read_csv(cfg.str("predict", "targets"));
    const int c1 = t.col("s1"), c2 = t.col("s2"), cx = t.col("x");
    PredictiveDraws all;
    all.median.resize(t.n_rows());
    all.q025.resize(t.n_rows());
    all.q975.resize(t.n_rows());
    all.width.resize(t.n_rows());
    // Prediction grids are processed in batches to bound memory.
    for (std::size_t start = 0; start < t.n_rows();
         start += static_cast<std::size_t>(batch)) {
      const std::size_t stop =
          std::min(t.n_rows(), start + static_cast<std::size_t>(batch));
      std::vector<SpaceHeightCoord> coords;
      CsvTable chunk;
      chunk.columns = t.columns;
      std::vector<double> xs;
      for (std::size_t r = start; r < stop; ++r) {
        coords.push_back({{t.rows[r][c1], t.rows[r][c2]}, t.rows[r][cx]});
        xs.push_back(t.rows[r][cx]);
        chunk.rows.push_back(t.rows[r]);
      }
      const Eigen::MatrixXd Qz = design_rows_z(train, chunk, xs);
      const PredictiveDraws part =
          predict_signal(chains, train, knots, coords, Qz, pcfg);
      const auto n = static_cast<Eigen::Index>(stop - start);
      all.median.segment(static_cast<Eigen::Index>(start), n) = part.median;
      all.q025.segment(static_cast<Eigen::Index>(start), n) = part.q025;
      all.q975.segment(static_cast<Eigen::Index>(start), n) = part.q975;
      all.width.segment(static_cast<Eigen::Index>(start), n) = part.width;
    }
    write_predictions(files.path(out_dir / "predictions_z.csv"), t, all, true);
    std::cout << "predicted signal at " << t.n_rows() << " coordinates\n";
    return;
  }

  const CsvTable t = read_csv(cfg.str("predict", "targets"));
  const int c1 = t.col("s1"), c2 = t.col("s2");
  OutcomeTargets targets;
  for (const auto& row : t.rows)
    targets.locations.push_back({row[c1], row[c2]});
  targets.Q_y = design_rows_y(train, t);

  if (mode == "y") {
    const PredictiveDraws out =
        predict_outcome(chains, train, knots, targets, pcfg);
    write_predictions(files.path(out_dir / "predictions_y.csv"), t, out,
                      false);
    std::cout << "predicted outcome at " << t.n_rows() << " locations\n";
    return;
  }
  if (mode == "y_given_z") {
    const SignalTargets observed =
        load_signal_targets(train, cfg.str("predict", "signals"));
    const PredictiveDraws out = predict_outcome_given_signal(
        chains, train, knots, observed, targets, pcfg);
    write_predictions(files.path(out_dir / "predictions_y_given_z.csv"), t,
                      out, false);
    std::cout << "predicted outcome given observed signals at " << t.n_rows()
              << " locations\n";
    return;
  }
  throw ConfigError("predict mode must be one of z, y, y_given_z");
}

void cmd_score(const Config& cfg, const CommonArgs& args, FileTracker& files) {
  const auto out_dir = resolve_out_dir(cfg, args);
  const std::uint64_t seed = resolve_seed(cfg, args);
  const JointDataset train = load_dataset(cfg, "plots", "signals");
  const KnotSet knots = resolve_knots(cfg, train);
  const auto chains = load_chains(cfg, "score");
  const PredictionConfig pcfg = resolve_predict_cfg(cfg, "score", seed);

  Config hold_cfg = cfg;
  hold_cfg.set("data", "plots", cfg.str("score", "holdout_plots"));
  hold_cfg.set("data", "signals", cfg.str("score", "holdout_signals"));
  const JointDataset hold = load_dataset(hold_cfg, "plots", "signals");

  // Joint prediction over the stacked (z, y) holdout vector, z first.
  Eigen::MatrixXd QzH;
  {
    const bool height_design = train.z_design_names[0] != "intercept";
    if (height_design) {
      QzH = Eigen::MatrixXd::Zero(hold.n(), train.Q_z.cols());
      for (int i = 0; i < hold.n(); ++i)
        QzH(i, nearest_height_index(train.heights, hold.signal_coords[i].x)) =
            1.0;
    } else {
      QzH = hold.Q_z;
    }
  }
  const PredictiveDraws z_pred =
      predict_signal(chains, train, knots, hold.signal_coords, QzH, pcfg);
  OutcomeTargets y_targets{hold.plot_locations, hold.Q_y};
  const PredictiveDraws y_pred =
      predict_outcome(chains, train, knots, y_targets, pcfg);

  Eigen::MatrixXd joint_draws(z_pred.draws.rows() + y_pred.draws.rows(),
                              z_pred.draws.cols());
  joint_draws << z_pred.draws, y_pred.draws;
  Eigen::VectorXd joint_obs(hold.n() + hold.n_s());
  joint_obs << hold.signal_values, hold.outcomes;
  Eigen::VectorXd joint_median(joint_draws.rows());
  joint_median << z_pred.median, y_pred.median;

  const double rmspe_joint = rmspe(joint_median, joint_obs);
  const CrpsResult crps_joint = crps(joint_draws, joint_obs);
  const double grs_joint = grs(joint_draws, joint_obs);
  const auto [cov_joint, width_joint] =
      coverage_and_width(joint_draws, joint_obs, 0.95);

  // Outcome prediction conditioned on the holdout locations' own signals.
  SignalTargets observed;
  observed.coords = hold.signal_coords;
  observed.values = hold.signal_values;
  observed.Q_z = QzH;
  for (int i = 0; i < hold.n(); ++i)
    observed.height_index.push_back(
        nearest_height_index(train.heights, hold.signal_coords[i].x));
  const PredictiveDraws y_cond = predict_outcome_given_signal(
      chains, train, knots, observed, y_targets, pcfg);
  const double rmspe_cond = rmspe(y_cond.median, hold.outcomes);
  const CrpsResult crps_cond = crps(y_cond.draws, hold.outcomes);
  const double grs_cond = grs(y_cond.draws, hold.outcomes);
  const auto [cov_cond, width_cond] =
      coverage_and_width(y_cond.draws, hold.outcomes, 0.95);

  // Goodness of fit on the training data.
  const int fit_samples =
      static_cast<int>(cfg.integer_or("score", "fit_samples", 400));
  PredictionConfig rep_cfg = pcfg;
  rep_cfg.max_samples = fit_samples;
  const PredictiveDraws reps = replicate_data(chains, train, knots, rep_cfg);
  Eigen::VectorXd train_obs(train.n() + train.n_s());
  train_obs << train.signal_values, train.outcomes;
  const GelfandGhosh gg = gelfand_ghosh(reps.draws, train_obs);
  const DicResult dic_result = dic(chains, train, knots, fit_samples);

  std::ofstream out(files.path(out_dir / "metrics.txt"));
  auto put = [&](const std::string& key, double v) {
    out << key << " = " << format_double(v) << "\n";
  };
  put("DIC", dic_result.dic);
  put("p_D", dic_result.p_D);
  put("G", gg.G);
  put("P", gg.P);
  put("D", gg.D);
  put("RMSPE_joint", rmspe_joint);
  put("CRPS_joint", crps_joint.value);
  put("GRS_joint", grs_joint);
  put("coverage95_joint_pct", cov_joint);
  put("width95_joint", width_joint);
  put("RMSPE_y_given_signal", rmspe_cond);
  put("CRPS_y_given_signal", crps_cond.value);
  put("GRS_y_given_signal", grs_cond);
  put("coverage95_y_given_signal_pct", cov_cond);
  put("width95_y_given_signal", width_cond);
  // GRS is the diagonal Gaussian density score from the predictive moments.
  out << "# GRS = diagonal Gaussian density score from predictive moments\n";

  write_predictions(files.path(out_dir / "holdout_y_predictions.csv"),
                    to_plot_table(hold), y_pred, false);
  write_predictions(files.path(out_dir / "holdout_y_given_z_predictions.csv"),
                    to_plot_table(hold), y_cond, false);
  write_predictions(files.path(out_dir / "holdout_z_predictions.csv"),
                    to_signal_table(hold), z_pred, true);
  std::cout << "scored " << hold.n_s() << " holdout locations ("
            << hold.n() + hold.n_s() << " joint targets)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint space-height signal / spatial outcome hierarchical GP"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs args;
  std::string subcommand;
  for (const auto& name :
       {"simulate", "select-knots", "fit", "predict", "score"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config_path, "configuration file")
        ->required();
    sub->add_option("--seed", args.seed, "override [run] seed");
    sub->add_option("--out", args.out_dir, "override [output] dir");
    sub->add_option("--chains", args.chains, "override [sampler] chains");
    sub->callback([&subcommand, name] { subcommand = name; });
  }
  CLI11_PARSE(app, argc, argv);

  FileTracker files;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Config cfg = Config::parse_file(args.config_path);
    if (subcommand == "simulate")
      cmd_simulate(cfg, args, files);
    else if (subcommand == "select-knots")
      cmd_select_knots(cfg, args, files);
    else if (subcommand == "fit")
      cmd_fit(cfg, args, files);
    else if (subcommand == "predict")
      cmd_predict(cfg, args, files);
    else if (subcommand == "score")
      cmd_score(cfg, args, files);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(cfg, args, subcommand, wall, resolve_out_dir(cfg, args),
                   files);
  } catch (const ConfigError& e) {
    files.discard_all();
    std::fprintf(stderr, "error[E2] config: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    files.discard_all();
    std::fprintf(stderr, "error[E3] data: %s\n", e.what());
    return 3;
  } catch (const NumericalError& e) {
    files.discard_all();
    std::fprintf(stderr, "error[E4] numerical: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    files.discard_all();
    std::fprintf(stderr, "error[E1] %s\n", e.what());
    return 1;
  }
  return 0;
}
