#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "carma_renewal/asymptotics.hpp"
#include "carma_renewal/carma_model.hpp"
#include "carma_renewal/levy_noise.hpp"
#include "carma_renewal/parallel.hpp"
#include "carma_renewal/path_simulator.hpp"
#include "carma_renewal/renewal_sampling.hpp"
#include "carma_renewal/whittle.hpp"

namespace carma_renewal {

struct ExperimentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when more than the tolerated fraction of replications fail.
struct ExcessFailures : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Single JSON document describing one Monte Carlo cell. Every default is
/// materialized back out via to_json() so persisted reports are
/// self-describing.
struct ExperimentConfig {
  int p = 1;
  int q = 0;
  std::vector<double> theta0{1.0};
  double sigma_L2 = 1.0;

  std::string noise = "brownian";  // brownian | gamma | compound_poisson
  double noise_shape = 0.2;
  double noise_rate = 0.3;
  double cp_rate = 1.0;
  double cp_value = 1.0;
  double cp_prob = 0.5;

  std::string sampling = "exponential";  // exponential | gamma
  double beta = 1.0;
  double sampling_shape = 1.0;

  std::string mode = "fixed_n";  // fixed_n | fixed_T
  std::size_t n = 1000;
  double T = 0.0;

  int replications = 100;
  double h = 1e-3;
  double du = 0.01;
  double u_max = 100.0;
  std::string tail = "closure";  // closure | truncated
  int starts = 5;
  std::uint64_t seed = 1;
  std::vector<double> box_lower, box_upper;
  double time_budget_s = 0.0;  // 0 disables the guard
  std::string out_prefix = "experiment";

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.p = j.value("p", c.p);
    c.q = j.value("q", c.q);
    c.theta0 = j.value("theta0", c.theta0);
    c.sigma_L2 = j.value("sigma_L2", c.sigma_L2);
    c.noise = j.value("noise", c.noise);
    c.noise_shape = j.value("noise_shape", c.noise_shape);
    c.noise_rate = j.value("noise_rate", c.noise_rate);
    c.cp_rate = j.value("cp_rate", c.cp_rate);
    c.cp_value = j.value("cp_value", c.cp_value);
    c.cp_prob = j.value("cp_prob", c.cp_prob);
    c.sampling = j.value("sampling", c.sampling);
    c.beta = j.value("beta", c.beta);
    c.sampling_shape = j.value("sampling_shape", c.sampling_shape);
    c.mode = j.value("mode", c.mode);
    c.n = j.value("n", c.n);
    c.T = j.value("T", c.T);
    c.replications = j.value("replications", c.replications);
    c.h = j.value("h", c.h);
    c.du = j.value("du", c.du);
    c.u_max = j.value("u_max", c.u_max);
    c.tail = j.value("tail", c.tail);
    c.starts = j.value("starts", c.starts);
    if (!j.contains("seed"))
      throw ExperimentError("config: seed is required");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.box_lower = j.value("box_lower", c.box_lower);
    c.box_upper = j.value("box_upper", c.box_upper);
    c.time_budget_s = j.value("time_budget_s", c.time_budget_s);
    c.out_prefix = j.value("out_prefix", c.out_prefix);
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["p"] = p;
    j["q"] = q;
    j["theta0"] = theta0;
    j["sigma_L2"] = sigma_L2;
    j["noise"] = noise;
    j["noise_shape"] = noise_shape;
    j["noise_rate"] = noise_rate;
    j["cp_rate"] = cp_rate;
    j["cp_value"] = cp_value;
    j["cp_prob"] = cp_prob;
    j["sampling"] = sampling;
    j["beta"] = beta;
    j["sampling_shape"] = sampling_shape;
    j["mode"] = mode;
    j["n"] = n;
    j["T"] = T;
    j["replications"] = replications;
    j["h"] = h;
    j["du"] = du;
    j["u_max"] = u_max;
    j["tail"] = tail;
    j["starts"] = starts;
    j["seed"] = seed;
    j["box_lower"] = effective_box().lower;
    j["box_upper"] = effective_box().upper;
    j["time_budget_s"] = time_budget_s;
    j["out_prefix"] = out_prefix;
    return j;
  }

  void validate() const {
    if (replications < 1) throw ExperimentError("config: replications < 1");
    if (h <= 0) throw ExperimentError("config: h <= 0");
    if (mode != "fixed_n" && mode != "fixed_T")
      throw ExperimentError("config: unknown mode " + mode);
    if (mode == "fixed_T" && T <= 0)
      throw ExperimentError("config: fixed_T requires T > 0");
    if (tail != "closure" && tail != "truncated")
      throw ExperimentError("config: unknown tail policy " + tail);
    make_model();
    make_noise();
    make_sampling();
    effective_box();
  }

  CarmaModel make_model() const {
    return CarmaModel::validate(CarmaParams::from_theta(p, q, theta0, sigma_L2));
  }

  NoiseSpec make_noise() const {
    if (noise == "brownian") return NoiseSpec::brownian(sigma_L2);
    if (noise == "gamma") return NoiseSpec::gamma(noise_shape, noise_rate);
    if (noise == "compound_poisson")
      return NoiseSpec::compound_poisson(
          cp_rate, NoiseSpec::JumpLaw{NoiseSpec::JumpLaw::Kind::two_point, 0, 1,
                                      cp_value, cp_prob});
    throw ExperimentError("config: unknown noise kind " + noise);
  }

  SamplingSpec make_sampling() const {
    if (sampling == "exponential") return SamplingSpec::exponential(beta);
    if (sampling == "gamma")
      return SamplingSpec::gamma(sampling_shape, sampling_shape * beta);
    throw ExperimentError("config: unknown sampling kind " + sampling);
  }

  SamplingMode make_mode() const {
    return mode == "fixed_n" ? SamplingMode::count(n) : SamplingMode::horizon(T);
  }

  ParamBox effective_box() const {
    if (!box_lower.empty() || !box_upper.empty()) {
      if (box_lower.size() != theta0.size() || box_upper.size() != theta0.size())
        throw ExperimentError("config: box dimension != p + q");
      return ParamBox(box_lower, box_upper);
    }
    std::vector<double> lo(theta0.size()), hi(theta0.size());
    for (std::size_t i = 0; i < theta0.size(); ++i) {
      if (std::abs(theta0[i]) >= 0.5) {
        lo[i] = theta0[i] > 0 ? theta0[i] / 8.0 : theta0[i] * 8.0;
        hi[i] = theta0[i] > 0 ? theta0[i] * 8.0 : theta0[i] / 8.0;
      } else {
        lo[i] = theta0[i] - 4.0;
        hi[i] = theta0[i] + 4.0;
      }
    }
    return ParamBox(lo, hi);
  }

  QuadratureRule make_rule() const {
    return QuadratureRule(du, u_max,
                          tail == "truncated" ? TailPolicy::truncated
                                              : TailPolicy::analytic);
  }
};

struct ReplicationRow {
  int replication = 0;
  std::uint64_t seed = 0;
  std::string status;  // ok | error:<what> | budget
  std::vector<double> theta_hat;
  double sigma_L2_hat = 0.0;
  double objective = 0.0;
  double wall_ms = 0.0;
};

struct ParameterSummary {
  double mean = 0.0;
  double variance = 0.0;
  double sd = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReplicationRow> rows;
  std::vector<ParameterSummary> theta_summary;
  ParameterSummary sigma_summary;
  int failures = 0;
  bool budget_hit = false;
  std::string rows_path, summary_path, header_path;
};

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string row_to_csv(const ReplicationRow& row) {
  std::ostringstream os;
  os << row.replication << ',' << row.seed << ',' << row.status;
  for (double t : row.theta_hat) os << ',' << format_double(t);
  os << ',' << format_double(row.sigma_L2_hat) << ','
     << format_double(row.objective) << ',' << format_double(row.wall_ms);
  return os.str();
}

inline ReplicationRow row_from_csv(const std::string& line, std::size_t dim) {
  std::istringstream is(line);
  std::string field;
  ReplicationRow row;
  std::getline(is, field, ',');
  row.replication = std::stoi(field);
  std::getline(is, field, ',');
  row.seed = std::stoull(field);
  std::getline(is, row.status, ',');
  row.theta_hat.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    std::getline(is, field, ',');
    row.theta_hat[i] = std::stod(field);
  }
  std::getline(is, field, ',');
  row.sigma_L2_hat = std::stod(field);
  std::getline(is, field, ',');
  row.objective = std::stod(field);
  std::getline(is, field, ',');
  row.wall_ms = std::stod(field);
  return row;
}

inline ParameterSummary summarize(const std::vector<double>& values,
                                  double truth) {
  ParameterSummary s;
  if (values.empty()) return s;
  double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double sq = 0.0, mse = 0.0;
  for (double v : values) {
    sq += (v - s.mean) * (v - s.mean);
    mse += (v - truth) * (v - truth);
  }
  s.variance = values.size() > 1 ? sq / (n - 1.0) : 0.0;
  s.sd = std::sqrt(s.variance);
  s.bias = s.mean - truth;
  s.rmse = std::sqrt(mse / n);
  return s;
}

}  // namespace detail

/// Runs one replication end to end: simulate, estimate, noise variance.
inline ReplicationRow run_replication(const ExperimentConfig& config, int r) {
  ReplicationRow row;
  row.replication = r;
  row.seed = mix_seed(config.seed, static_cast<std::uint64_t>(r));
  auto t0 = std::chrono::steady_clock::now();
  try {
    CarmaModel model = config.make_model();
    NoiseSpec noise = config.make_noise();
    SamplingSpec sampling = config.make_sampling();
    SampledSeries series = simulate_series(model, noise, sampling,
                                           config.make_mode(), config.h, row.seed);
    WhittleContext ctx(config.p, config.q, sampling, config.make_rule());
    EstimateConfig est;
    est.starts = config.starts;
    est.seed = row.seed;
    EstimationResult result = estimate(ctx, series, config.effective_box(), est);
    row.theta_hat = result.theta_hat;
    row.sigma_L2_hat = result.sigma_L2_hat;
    row.objective = result.objective_value;
    row.status = "ok";
  } catch (const std::exception& e) {
    row.status = std::string("error:") + e.what();
    row.theta_hat.assign(config.theta0.size(),
                         std::numeric_limits<double>::quiet_NaN());
    row.sigma_L2_hat = std::numeric_limits<double>::quiet_NaN();
    row.objective = std::numeric_limits<double>::quiet_NaN();
  }
  row.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return row;
}

/// Monte Carlo harness for one cell. Rows are appended to disk as they
/// complete; rerunning with an existing rows file resumes the missing
/// replications. The summary is recomputed from the persisted rows so it is
/// bit-stable across resume.
inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;
  report.config = config;
  report.rows_path = config.out_prefix + "_rows.csv";
  report.summary_path = config.out_prefix + "_summary.csv";
  report.header_path = config.out_prefix + "_config.json";
  std::size_t dim = config.theta0.size();

  {
    std::ofstream header(report.header_path);
    header << config.to_json().dump(2) << '\n';
  }

  std::map<int, std::string> persisted;
  if (std::filesystem::exists(report.rows_path)) {
    std::ifstream in(report.rows_path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ReplicationRow row = detail::row_from_csv(line, dim);
      persisted.emplace(row.replication, line);
    }
  }

  std::ofstream rows_out;
  if (persisted.empty()) {
    rows_out.open(report.rows_path);
    rows_out << "replication,seed,status";
    for (std::size_t i = 0; i < dim; ++i) rows_out << ",theta_hat_" << (i + 1);
    rows_out << ",sigma_L2_hat,objective,wall_ms\n";
    rows_out.flush();
  } else {
    rows_out.open(report.rows_path, std::ios::app);
  }

  std::vector<int> todo;
  for (int r = 0; r < config.replications; ++r)
    if (!persisted.count(r)) todo.push_back(r);

  std::mutex write_mutex;
  auto started = std::chrono::steady_clock::now();
  bool budget_hit = false;
  parallel_for(todo.size(), [&](std::size_t idx) {
    int r = todo[idx];
    ReplicationRow row;
    double elapsed = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - started)
                         .count();
    if (config.time_budget_s > 0 && elapsed > config.time_budget_s) {
      row.replication = r;
      row.seed = mix_seed(config.seed, static_cast<std::uint64_t>(r));
      row.status = "budget";
      row.theta_hat.assign(dim, std::numeric_limits<double>::quiet_NaN());
      row.sigma_L2_hat = row.objective =
          std::numeric_limits<double>::quiet_NaN();
    } else {
      row = run_replication(config, r);
    }
    std::string line = detail::row_to_csv(row);
    std::lock_guard<std::mutex> lock(write_mutex);
    if (row.status == "budget") budget_hit = true;
    persisted.emplace(r, line);
    rows_out << line << '\n';
    rows_out.flush();
  });
  rows_out.close();
  report.budget_hit = budget_hit;

  // summary from the persisted text, so resume and rerun agree bit-exactly
  std::vector<std::vector<double>> theta_cols(dim);
  std::vector<double> sigma_col;
  for (const auto& [r, line] : persisted) {
    ReplicationRow row = detail::row_from_csv(line, dim);
    report.rows.push_back(row);
    if (row.status == "ok") {
      for (std::size_t i = 0; i < dim; ++i)
        theta_cols[i].push_back(row.theta_hat[i]);
      sigma_col.push_back(row.sigma_L2_hat);
    } else {
      ++report.failures;
    }
  }
  report.theta_summary.resize(dim);
  for (std::size_t i = 0; i < dim; ++i)
    report.theta_summary[i] =
        detail::summarize(theta_cols[i], config.theta0[i]);
  report.sigma_summary = detail::summarize(sigma_col, config.sigma_L2);

  {
    std::ofstream out(report.summary_path);
    out << "parameter,truth,mean,variance,sd,bias,rmse,n_ok,n_fail\n"
        << std::setprecision(17);
    for (std::size_t i = 0; i < dim; ++i) {
      const auto& s = report.theta_summary[i];
      out << "theta_" << (i + 1) << ',' << config.theta0[i] << ',' << s.mean
          << ',' << s.variance << ',' << s.sd << ',' << s.bias << ',' << s.rmse
          << ',' << theta_cols[i].size() << ',' << report.failures << '\n';
    }
    const auto& s = report.sigma_summary;
    out << "sigma_L2," << config.sigma_L2 << ',' << s.mean << ',' << s.variance
        << ',' << s.sd << ',' << s.bias << ',' << s.rmse << ','
        << sigma_col.size() << ',' << report.failures << '\n';
  }

  if (report.failures * 10 > config.replications)
    throw ExcessFailures("run_experiment: " + std::to_string(report.failures) +
                         " of " + std::to_string(config.replications) +
                         " replications failed; see " + report.rows_path);
  return report;
}

/// The 16-cell simulation grid: two drivers, beta in {0.5, 1, 2, 5},
/// n in {100, 1000}, 100 replications each. Emits one CSV per driver in the
/// rows-by-beta, columns-by-n layout.
struct TablesResult {
  // [driver][beta index][n index] summaries for theta_1
  std::vector<std::vector<std::vector<ParameterSummary>>> cells;
  std::vector<std::string> table_paths;
};

inline TablesResult reproduce_tables(const std::string& out_dir,
                                     bool fast = false,
                                     std::uint64_t base_seed = 0xCA51E) {
  std::filesystem::create_directories(out_dir);
  const std::vector<std::string> drivers{"brownian", "gamma"};
  const std::vector<double> betas{0.5, 1.0, 2.0, 5.0};
  const std::vector<std::size_t> sizes{100, 1000};

  TablesResult result;
  result.cells.assign(2, std::vector<std::vector<ParameterSummary>>(
                             betas.size(), std::vector<ParameterSummary>(2)));
  int cell_index = 0;
  for (std::size_t d = 0; d < drivers.size(); ++d) {
    for (std::size_t b = 0; b < betas.size(); ++b) {
      for (std::size_t s = 0; s < sizes.size(); ++s, ++cell_index) {
        ExperimentConfig cfg;
        cfg.noise = drivers[d];
        cfg.beta = betas[b];
        cfg.n = sizes[s];
        cfg.replications = 100;
        cfg.h = fast ? 1e-2 : 1e-3;
        // Study convention: plain truncated objective at a moderate cutoff.
        // The analytic tail closure is the better estimator, but the finite
        // cutoff without closure is what the benchmark columns tabulate.
        cfg.tail = "truncated";
        cfg.u_max = 12.0;
        cfg.seed = mix_seed(base_seed, cell_index);
        cfg.out_prefix = out_dir + "/cell_" + drivers[d] + "_beta" +
                         std::to_string(betas[b]).substr(0, 3) + "_n" +
                         std::to_string(sizes[s]);
        ExperimentReport report = run_experiment(cfg);
        result.cells[d][b][s] = report.theta_summary[0];
      }
    }
  }

  for (std::size_t d = 0; d < drivers.size(); ++d) {
    std::string path = out_dir + "/table_" + drivers[d] + ".csv";
    std::ofstream out(path);
    out << "beta,mean_n100,variance_n100,sd_n100,mean_n1000,variance_n1000,sd_n1000\n"
        << std::setprecision(6);
    for (std::size_t b = 0; b < betas.size(); ++b) {
      const auto& c100 = result.cells[d][b][0];
      const auto& c1000 = result.cells[d][b][1];
      out << betas[b] << ',' << c100.mean << ',' << c100.variance << ','
          << c100.sd << ',' << c1000.mean << ',' << c1000.variance << ','
          << c1000.sd << '\n';
    }
    result.table_paths.push_back(path);
  }
  return result;
}

struct CoverageRow {
  int replication = 0;
  std::vector<double> theta_hat;
  std::vector<double> se;
  bool covered = false;       // first component CI
  double std_residual = 0.0;  // (theta_hat_1 - theta0_1) / se_1
  std::string status;
};

struct CoverageReport {
  double coverage = 0.0;
  double binomial_se = 0.0;
  double residual_mean = 0.0;
  double residual_variance = 0.0;
  double residual_skew = 0.0;
  int n_ok = 0;
  std::vector<CoverageRow> rows;
};

/// Wald-interval coverage study: per replication, estimate, plug the estimate
/// into Sigma0 = W^-1 Q W^-1, and check theta0 against the 95% CI.
inline CoverageReport coverage_study(const ExperimentConfig& config,
                                     const SeriesQConfig& q_cfg = [] {
                                       SeriesQConfig c;
                                       c.j_max = c.k_max = c.l_max = 16;
                                       c.nodes = {32, 16, 10};
                                       return c;
                                     }()) {
  config.validate();
  CoverageReport report;
  report.rows.resize(config.replications);
  NoiseSpec noise = config.make_noise();
  SamplingSpec sampling = config.make_sampling();
  CarmaModel model = config.make_model();

  parallel_for(static_cast<std::size_t>(config.replications), [&](std::size_t r) {
    CoverageRow row;
    row.replication = static_cast<int>(r);
    try {
      std::uint64_t seed = mix_seed(config.seed, r);
      SampledSeries series = simulate_series(model, noise, sampling,
                                             config.make_mode(), config.h, seed);
      WhittleContext ctx(config.p, config.q, sampling, config.make_rule());
      EstimateConfig est;
      est.starts = config.starts;
      est.seed = seed;
      EstimationResult result = estimate(ctx, series, config.effective_box(), est);
      AsymptoticCovariance cov = plug_in_covariance(
          ctx, result.theta_hat, noise, result.sigma_L2_hat, q_cfg);
      if (!cov.available)
        throw std::runtime_error("W near singular (cond " +
                                 std::to_string(cov.cond_w) + ")");
      row.theta_hat = result.theta_hat;
      row.se = standard_errors(cov, result.n_obs);
      double delta = row.theta_hat[0] - config.theta0[0];
      row.covered = std::abs(delta) <= 1.96 * row.se[0];
      row.std_residual = delta / row.se[0];
      row.status = "ok";
    } catch (const std::exception& e) {
      row.status = std::string("error:") + e.what();
    }
    report.rows[r] = row;
  });

  std::vector<double> residuals;
  int covered = 0;
  for (const auto& row : report.rows) {
    if (row.status != "ok") continue;
    ++report.n_ok;
    if (row.covered) ++covered;
    residuals.push_back(row.std_residual);
  }
  if (report.n_ok == 0) throw ExperimentError("coverage_study: no successful replications");
  if (report.n_ok * 10 < config.replications * 9)
    throw ExcessFailures("coverage_study: more than 10% of replications failed");
  report.coverage = static_cast<double>(covered) / report.n_ok;
  report.binomial_se =
      std::sqrt(report.coverage * (1.0 - report.coverage) / report.n_ok);
  double m = 0.0;
  for (double v : residuals) m += v;
  m /= residuals.size();
  double v2 = 0.0, v3 = 0.0;
  for (double v : residuals) {
    v2 += (v - m) * (v - m);
    v3 += (v - m) * (v - m) * (v - m);
  }
  v2 /= residuals.size();
  v3 /= residuals.size();
  report.residual_mean = m;
  report.residual_variance = v2;
  report.residual_skew = v2 > 0 ? v3 / std::pow(v2, 1.5) : 0.0;
  return report;
}

}  // namespace carma_renewal
