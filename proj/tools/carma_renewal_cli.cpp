#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "carma_renewal/asymptotics.hpp"
#include "carma_renewal/experiments.hpp"
#include "carma_renewal/path_simulator.hpp"
#include "carma_renewal/whittle.hpp"

namespace cr = carma_renewal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFailures = 3;

cr::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cr::ExperimentError("cannot open config " + path);
  return cr::ExperimentConfig::from_json(nlohmann::json::parse(in));
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

struct GridOptions {
  double du = 0.01;
  double u_max = 100.0;
  void attach(CLI::App* app) {
    app->add_option("--du", du, "frequency grid step");
    app->add_option("--umax", u_max, "frequency grid cutoff");
  }
  cr::QuadratureRule rule() const { return cr::QuadratureRule(du, u_max); }
};

int cmd_estimate(const std::string& series_path, const std::string& config_path,
                 const std::string& out_path, const GridOptions& grid,
                 int starts, bool with_covariance) {
  cr::ExperimentConfig cfg = load_config(config_path);
  cr::SampledSeries series = cr::load_series(series_path);
  cr::WhittleContext ctx(cfg.p, cfg.q, cfg.make_sampling(), grid.rule());
  cr::EstimateConfig est;
  est.starts = starts > 0 ? starts : cfg.starts;
  est.seed = cfg.seed;
  cr::EstimationResult result = cr::estimate(ctx, series, cfg.effective_box(), est);

  nlohmann::json out;
  out["theta_hat"] = result.theta_hat;
  out["sigma_L2_hat"] = result.sigma_L2_hat;
  out["objective_value"] = result.objective_value;
  out["n_obs"] = result.n_obs;
  out["mode"] =
      result.mode.kind == cr::SamplingMode::Kind::count ? "fixed_n" : "fixed_T";
  out["on_boundary"] = result.on_boundary;
  out["plateau"] = result.plateau;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : result.trace)
    trace.push_back({{"start", t.start},
                     {"arg", t.arg},
                     {"value", t.value},
                     {"evals", t.evals},
                     {"valid", t.valid}});
  out["trace"] = trace;
  if (with_covariance) {
    cr::AsymptoticCovariance cov = cr::plug_in_covariance(
        ctx, result.theta_hat, cfg.make_noise(), result.sigma_L2_hat);
    out["cond_W"] = cov.cond_w;
    if (cov.available) {
      out["Sigma0"] = matrix_to_json(cov.sigma0);
      out["std_errors"] = cr::standard_errors(cov, result.n_obs);
    } else {
      out["Sigma0"] = nullptr;
    }
  }
  std::ofstream os(out_path);
  os << out.dump(2) << '\n';
  std::cout << "estimate written to " << out_path << '\n';
  return kExitOk;
}

int cmd_spectrum(const std::string& config_path, const std::string& out_path,
                 const GridOptions& grid) {
  cr::ExperimentConfig cfg = load_config(config_path);
  cr::CarmaModel model = cfg.make_model();
  cr::SamplingSpec sampling = cfg.make_sampling();
  cr::QuadratureRule rule = grid.rule();
  cr::SampledSpectrum spectrum(model, sampling);
  std::vector<double> phi = spectrum.on_grid(rule);
  cr::GData g = cr::rescaled_density_g(model, sampling, rule);
  std::ofstream os(out_path);
  os << "u,phi_z,g\n" << std::setprecision(12);
  for (std::size_t i = 0; i < rule.size(); ++i)
    os << rule.u[i] << ',' << phi[i] << ',' << g.g[i] << '\n';
  std::cout << "spectrum written to " << out_path << '\n';
  return kExitOk;
}

int cmd_diagnose_aliasing(const std::string& config_path,
                          const GridOptions& grid, int grid_points) {
  cr::ExperimentConfig cfg = load_config(config_path);
  cr::WhittleContext ctx(cfg.p, cfg.q, cfg.make_sampling(), grid.rule());
  cr::ParamBox box = cfg.effective_box();
  std::vector<std::vector<double>> thetas;
  for (int i = 0; i < grid_points; ++i) {
    std::vector<double> theta(box.dim());
    for (std::size_t d = 0; d < box.dim(); ++d)
      theta[d] = box.lower[d] +
                 (box.upper[d] - box.lower[d]) * (i + 1.0) / (grid_points + 1.0);
    thetas.push_back(std::move(theta));
  }
  cr::AliasingReport report = cr::aliasing_diagnostic(ctx, thetas);
  nlohmann::json out;
  out["n_points"] = report.n_points;
  out["min_gap"] = report.min_gap;
  out["min_pair"] = {report.min_pair.first, report.min_pair.second};
  out["warning"] = report.warning;
  std::cout << out.dump(2) << '\n';
  if (report.warning)
    std::cerr << "warning: rescaled densities nearly coincide; "
                 "identifiability may fail on this box\n";
  return kExitOk;
}

int cmd_asymptotics(const std::string& config_path, const std::string& out_path,
                    const GridOptions& grid, int caps, bool monte_carlo,
                    int mc_reps) {
  cr::ExperimentConfig cfg = load_config(config_path);
  cr::WhittleContext ctx(cfg.p, cfg.q, cfg.make_sampling(), grid.rule());
  std::vector<cr::DerivativeWeight> dw = cr::derivative_weights(ctx, cfg.theta0);
  cr::CarmaModel model = cfg.make_model();
  Eigen::MatrixXd W = cr::matrix_w(ctx, model, dw);

  nlohmann::json out;
  out["W"] = matrix_to_json(W);
  cr::SeriesQConfig qcfg;
  qcfg.j_max = qcfg.k_max = qcfg.l_max = caps;
  Eigen::MatrixXd Q;
  if (monte_carlo) {
    cr::MonteCarloQResult mc = cr::monte_carlo_q(ctx, model, cfg.make_noise(),
                                                 dw, cfg.n, mc_reps, cfg.seed,
                                                 cfg.h);
    Q = mc.Q;
    out["Q"] = matrix_to_json(mc.Q);
    out["Q_se"] = matrix_to_json(mc.se);
    out["method"] = "monte_carlo";
    out["reps"] = mc.reps;
  } else {
    cr::SeriesQResult sq = cr::matrix_q(ctx, model, cfg.make_noise(), dw, qcfg);
    Q = sq.Q;
    out["Q"] = matrix_to_json(sq.Q);
    out["tail_estimates"] = matrix_to_json(sq.tail_estimate);
    out["tail_warning"] = sq.tail_warning;
    out["method"] = "series";
    out["truncation"] = {{"j_max", qcfg.j_max},
                         {"k_max", qcfg.k_max},
                         {"l_max", qcfg.l_max}};
  }
  cr::AsymptoticCovariance cov =
      cr::asymptotic_covariance(W, Q, monte_carlo ? "monte_carlo" : "series");
  out["cond_W"] = cov.cond_w;
  out["Sigma0"] = cov.available ? matrix_to_json(cov.sigma0) : nlohmann::json();
  std::ofstream os(out_path);
  os << out.dump(2) << '\n';
  std::cout << "asymptotics report written to " << out_path << '\n';
  return kExitOk;
}

int cmd_run(const std::string& config_path) {
  cr::ExperimentReport report = cr::run_experiment(load_config(config_path));
  std::cout << "rows: " << report.rows_path << "\nsummary: " << report.summary_path
            << "\nfailures: " << report.failures << '\n';
  for (std::size_t i = 0; i < report.theta_summary.size(); ++i)
    std::cout << "theta_" << (i + 1) << ": mean "
              << report.theta_summary[i].mean << " variance "
              << report.theta_summary[i].variance << " sd "
              << report.theta_summary[i].sd << '\n';
  return kExitOk;
}

int cmd_tables(const std::string& out_dir, bool fast) {
  cr::TablesResult tables = cr::reproduce_tables(out_dir, fast);
  for (const auto& p : tables.table_paths) std::cout << "table: " << p << '\n';
  return kExitOk;
}

int cmd_coverage(const std::string& config_path, const std::string& mode) {
  cr::ExperimentConfig cfg = load_config(config_path);
  if (mode == "T" && cfg.mode == "fixed_n") {
    cfg.mode = "fixed_T";
    cfg.T = static_cast<double>(cfg.n) / cfg.beta;
  }
  cr::CoverageReport report = cr::coverage_study(cfg);
  nlohmann::json out;
  out["coverage"] = report.coverage;
  out["binomial_se"] = report.binomial_se;
  out["n_ok"] = report.n_ok;
  out["residual_mean"] = report.residual_mean;
  out["residual_variance"] = report.residual_variance;
  out["residual_skew"] = report.residual_skew;
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path) {
  cr::ExperimentConfig cfg = load_config(config_path);
  cr::SampledSeries series =
      cr::simulate_series(cfg.make_model(), cfg.make_noise(), cfg.make_sampling(),
                          cfg.make_mode(), cfg.h, cfg.seed);
  cr::save_series(series, out_path);
  std::cout << "series (" << series.n() << " observations) written to "
            << out_path << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whittle-type estimation for renewal-sampled CARMA processes"};
  app.require_subcommand(1);

  GridOptions grid;
  std::string config_path, series_path, out_path = "out.json";
  std::string out_dir = "tables";
  std::string mode = "n";
  int starts = 0, caps = 30, mc_reps = 400, alias_points = 5;
  bool with_cov = false, fast = false, monte_carlo = false;

  auto* est = app.add_subcommand("estimate", "fit a series CSV");
  est->add_option("--series", series_path, "input series CSV")->required();
  est->add_option("--config", config_path, "experiment config JSON")->required();
  est->add_option("--out", out_path, "output JSON path");
  est->add_option("--starts", starts, "optimizer starts (0 = config value)");
  est->add_flag("--covariance", with_cov, "attach plug-in Sigma0");
  grid.attach(est);

  auto* spec = app.add_subcommand("spectrum", "tabulate phi_Z and g");
  spec->add_option("--config", config_path)->required();
  spec->add_option("--out", out_path, "output CSV path");
  grid.attach(spec);

  auto* alias = app.add_subcommand("diagnose-aliasing",
                                   "pairwise gaps of g over a parameter grid");
  alias->add_option("--config", config_path)->required();
  alias->add_option("--points", alias_points, "grid points per axis");
  grid.attach(alias);

  auto* asy = app.add_subcommand("asymptotics", "W, Q and Sigma0 report");
  asy->add_option("--config", config_path)->required();
  asy->add_option("--out", out_path);
  asy->add_option("--caps", caps, "series truncation caps");
  asy->add_flag("--monte-carlo", monte_carlo, "Monte Carlo Q instead of series");
  asy->add_option("--reps", mc_reps, "Monte Carlo replications");
  grid.attach(asy);

  auto* run = app.add_subcommand("run", "Monte Carlo cell from a config");
  run->add_option("--config", config_path)->required();

  auto* tab = app.add_subcommand("tables", "full 16-cell simulation grid");
  tab->add_option("--out", out_dir, "output directory");
  tab->add_flag("--fast", fast, "coarser step size h = 1e-2");

  auto* cov = app.add_subcommand("coverage", "Wald CI coverage study");
  cov->add_option("--config", config_path)->required();
  cov->add_option("--mode", mode, "n (fixed count) or T (fixed horizon)");

  auto* sim = app.add_subcommand("simulate", "draw one series to CSV");
  sim->add_option("--config", config_path)->required();
  sim->add_option("--out", out_path, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (est->parsed())
      return cmd_estimate(series_path, config_path, out_path, grid, starts, with_cov);
    if (spec->parsed()) return cmd_spectrum(config_path, out_path, grid);
    if (alias->parsed()) return cmd_diagnose_aliasing(config_path, grid, alias_points);
    if (asy->parsed())
      return cmd_asymptotics(config_path, out_path, grid, caps, monte_carlo, mc_reps);
    if (run->parsed()) return cmd_run(config_path);
    if (tab->parsed()) return cmd_tables(out_dir, fast);
    if (cov->parsed()) return cmd_coverage(config_path, mode);
    if (sim->parsed()) return cmd_simulate(config_path, out_path);
  } catch (const cr::ExcessFailures& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailures;
  } catch (const cr::ExperimentError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
