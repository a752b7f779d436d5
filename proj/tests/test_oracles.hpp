#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace test_oracles {

/// Matrix exponential by scaling-and-squaring over a plain Taylor series;
/// slow but independent of the library's implementation.
inline Eigen::MatrixXd taylor_expm(const Eigen::MatrixXd& a, double t) {
  Eigen::MatrixXd at = a * t;
  int squarings = 0;
  while (at.cwiseAbs().maxCoeff() > 0.5) {
    at *= 0.5;
    ++squarings;
  }
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd term = result;
  for (int k = 1; k <= 30; ++k) {
    term = term * at / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

inline double mean(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
}

inline double variance(const std::vector<double>& xs) {
  double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / (xs.size() - 1);
}

/// Standard error of the sample mean.
inline double se_mean(const std::vector<double>& xs) {
  return std::sqrt(variance(xs) / xs.size());
}

/// Exact stationary sample of an OU process at given times: Gaussian AR(1)
/// with coefficient exp(-theta * dt) and innovation variance
/// (1 - exp(-2 theta dt)) * gamma0.
inline std::vector<double> exact_ou_at_times(double theta, double sigma_L2,
                                             const std::vector<double>& times,
                                             std::mt19937_64& rng) {
  double gamma0 = sigma_L2 / (2.0 * theta);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> y(times.size());
  double prev_t = 0.0;
  double prev_y = std::sqrt(gamma0) * gauss(rng);  // value at time 0
  for (std::size_t k = 0; k < times.size(); ++k) {
    double dt = times[k] - prev_t;
    double rho = std::exp(-theta * dt);
    prev_y = rho * prev_y + std::sqrt(gamma0 * (1.0 - rho * rho)) * gauss(rng);
    prev_t = times[k];
    y[k] = prev_y;
  }
  return y;
}

}  // namespace test_oracles
