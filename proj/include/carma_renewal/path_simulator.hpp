#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "carma_renewal/carma_model.hpp"
#include "carma_renewal/levy_noise.hpp"
#include "carma_renewal/renewal_sampling.hpp"
#include "carma_renewal/rng.hpp"

namespace carma_renewal {

/// Euler-discretized state path X(jh), j = 0..floor(t_end/h).
struct GridPath {
  double h = 0.0;
  double t_end = 0.0;
  std::vector<Eigen::VectorXd> values;
};

/// Where the state starts. stationary_gaussian draws X_0 ~ N(0, sigma_L^2
/// Sigma), which is the exact stationary law under a Brownian driver; for
/// other drivers start at zero and discard an initial stretch long enough for
/// the exponential memory of A to fade.
struct InitPolicy {
  enum class Kind { stationary_gaussian, burn_in } kind = Kind::stationary_gaussian;
  double T_b = 0.0;

  static InitPolicy stationary_gaussian() { return {Kind::stationary_gaussian, 0.0}; }
  static InitPolicy burn_in(double T_b) {
    if (T_b < 0) throw std::invalid_argument("burn_in: T_b < 0");
    return {Kind::burn_in, T_b};
  }
  /// stationary_gaussian for Brownian noise, otherwise burn_in with
  /// T_b = 20 / |spectral abscissa|.
  static InitPolicy default_for(const CarmaModel& model, const NoiseSpec& noise) {
    if (noise.kind() == NoiseSpec::Kind::brownian) return stationary_gaussian();
    return burn_in(20.0 / std::abs(model.spectral_abscissa()));
  }
};

/// Observation pairs (tau_k, Y(tau_k)) with the generating configuration
/// attached so a series on disk can be traced back to its seed.
struct SampledSeries {
  std::vector<double> times;
  std::vector<double> values;
  SamplingMode mode;
  struct Provenance {
    std::vector<double> theta;
    int p = 1, q = 0;
    double sigma_L2 = 1.0;
    std::string noise;
    std::string sampling;
    std::uint64_t seed = 0;
    double h = 0.0;
  } provenance;

  std::size_t n() const { return times.size(); }
};

/// Euler recursion X_{j+1} = X_j + h A X_j + e_p dL_j. The burn-in stretch is
/// simulated and dropped, so values[0] is already (approximately) stationary.
inline GridPath simulate_path(const CarmaModel& model, const NoiseSpec& noise,
                              double h, double t_end, const InitPolicy& init,
                              Rng& rng) {
  if (h <= 0 || t_end < h)
    throw std::invalid_argument("simulate_path: need h > 0 and t_end >= h");
  int p = model.p();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  std::size_t burn_steps = 0;
  if (init.kind == InitPolicy::Kind::stationary_gaussian) {
    Eigen::LLT<Eigen::MatrixXd> llt(model.params().sigma_L2 * model.Sigma());
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("simulate_path: stationary covariance is not positive definite");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(p);
    for (int i = 0; i < p; ++i) z[i] = gauss(rng);
    x = llt.matrixL() * z;
  } else {
    burn_steps = static_cast<std::size_t>(std::ceil(init.T_b / h));
  }

  std::size_t keep_steps = static_cast<std::size_t>(std::floor(t_end / h));
  GridPath path;
  path.h = h;
  path.t_end = t_end;
  path.values.reserve(keep_steps + 1);

  const Eigen::MatrixXd& A = model.A();
  Eigen::VectorXd drift(p);
  for (std::size_t j = 0; j < burn_steps + keep_steps; ++j) {
    if (j >= burn_steps) path.values.push_back(x);
    drift.noalias() = A * x;
    x += h * drift;
    x[p - 1] += noise.sample_increment(h, rng);
    if (!x.allFinite())
      throw std::runtime_error("simulate_path: state overflow at t = " +
                               std::to_string((j + 1) * h));
  }
  path.values.push_back(x);
  return path;
}

/// Y(tau_k) = b' X(tau_k) with componentwise linear interpolation between
/// grid nodes.
inline SampledSeries sample_at_times(const GridPath& path,
                                     const ArrivalTimes& arrivals,
                                     const CarmaModel& model) {
  SampledSeries out;
  out.mode = arrivals.mode;
  out.times = arrivals.tau;
  out.values.reserve(arrivals.tau.size());
  const Eigen::VectorXd& b = model.b_vec();
  std::size_t last = path.values.size() - 1;
  for (std::size_t k = 0; k < arrivals.tau.size(); ++k) {
    double t = arrivals.tau[k];
    if (t > path.t_end + 1e-12 * std::max(1.0, path.t_end))
      throw std::invalid_argument("sample_at_times: arrival " + std::to_string(k + 1) +
                                  " at t = " + std::to_string(t) +
                                  " lies beyond the simulated horizon");
    double x = t / path.h;
    std::size_t j = std::min(static_cast<std::size_t>(x), last - 1);
    double frac = x - j;
    Eigen::VectorXd xi =
        (1.0 - frac) * path.values[j] + frac * path.values[j + 1];
    out.values.push_back(b.dot(xi));
  }
  return out;
}

/// End-to-end draw of one observed series: arrivals first, then a path long
/// enough to cover them (t_end = tau_n + h in count mode).
inline SampledSeries simulate_series(const CarmaModel& model,
                                     const NoiseSpec& noise,
                                     const SamplingSpec& sampling,
                                     const SamplingMode& mode, double h,
                                     std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  ArrivalTimes arrivals = sample_arrivals(sampling, mode, rng);
  if (arrivals.tau.empty())
    throw std::runtime_error("simulate_series: no arrivals within the horizon");
  double t_end = mode.kind == SamplingMode::Kind::count
                     ? arrivals.tau.back() + h
                     : mode.T;
  InitPolicy init = InitPolicy::default_for(model, noise);
  GridPath path = simulate_path(model, noise, h, t_end, init, rng);
  SampledSeries series = sample_at_times(path, arrivals, model);
  series.provenance.theta = model.params().theta();
  series.provenance.p = model.p();
  series.provenance.q = model.q();
  series.provenance.sigma_L2 = model.params().sigma_L2;
  series.provenance.noise = noise.describe();
  series.provenance.sampling = sampling.describe();
  series.provenance.seed = seed;
  series.provenance.h = h;
  return series;
}

/// CSV with header (k, tau, y) plus a JSON sidecar <path>.meta.json holding
/// the provenance.
inline void save_series(const SampledSeries& series, const std::string& path) {
  std::ofstream csv(path);
  if (!csv) throw std::runtime_error("cannot write " + path);
  csv << "k,tau,y\n" << std::setprecision(17);
  for (std::size_t k = 0; k < series.n(); ++k)
    csv << (k + 1) << ',' << series.times[k] << ',' << series.values[k] << '\n';

  nlohmann::json meta;
  meta["theta"] = series.provenance.theta;
  meta["p"] = series.provenance.p;
  meta["q"] = series.provenance.q;
  meta["sigma_L2"] = series.provenance.sigma_L2;
  meta["noise"] = series.provenance.noise;
  meta["sampling"] = series.provenance.sampling;
  meta["seed"] = series.provenance.seed;
  meta["h"] = series.provenance.h;
  meta["mode"] = series.mode.kind == SamplingMode::Kind::count ? "count" : "horizon";
  meta["n"] = series.n();
  if (series.mode.kind == SamplingMode::Kind::horizon) meta["T"] = series.mode.T;
  std::ofstream side(path + ".meta.json");
  if (!side) throw std::runtime_error("cannot write " + path + ".meta.json");
  side << meta.dump(2) << '\n';
}

inline SampledSeries load_series(const std::string& path) {
  std::ifstream csv(path);
  if (!csv) throw std::runtime_error("cannot open " + path);
  SampledSeries series;
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string k, tau, y;
    if (!std::getline(row, k, ',') || !std::getline(row, tau, ',') ||
        !std::getline(row, y))
      throw std::runtime_error("malformed series row in " + path);
    series.times.push_back(std::stod(tau));
    series.values.push_back(std::stod(y));
  }
  if (series.times.empty()) throw std::runtime_error("empty series in " + path);
  for (std::size_t k = 1; k < series.times.size(); ++k)
    if (series.times[k] <= series.times[k - 1])
      throw std::runtime_error("series times not strictly increasing in " + path);
  series.mode = SamplingMode::count(series.times.size());

  std::ifstream side(path + ".meta.json");
  if (side) {
    nlohmann::json meta = nlohmann::json::parse(side);
    series.provenance.theta = meta.value("theta", std::vector<double>{});
    series.provenance.p = meta.value("p", 1);
    series.provenance.q = meta.value("q", 0);
    series.provenance.sigma_L2 = meta.value("sigma_L2", 1.0);
    series.provenance.noise = meta.value("noise", std::string{});
    series.provenance.sampling = meta.value("sampling", std::string{});
    series.provenance.seed = meta.value("seed", std::uint64_t{0});
    series.provenance.h = meta.value("h", 0.0);
    if (meta.value("mode", "count") == "horizon")
      series.mode = SamplingMode::horizon(meta.value("T", series.times.back()));
  }
  return series;
}

}  // namespace carma_renewal
