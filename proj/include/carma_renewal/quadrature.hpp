#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace carma_renewal {

/// How integrals handle the mass beyond u_max: the analytic closure adds the
/// exact 1/(1+u^2) tail against the integrand's flat large-u level, while the
/// truncated policy is the plain trapezoid on [-u_max, u_max] and nothing else.
enum class TailPolicy { analytic, truncated };

/// Symmetric trapezoidal rule on [-u_max, u_max] for even integrands,
/// stored as the half grid u_m = m * du, m = 0..M. The weights fold the
/// negative axis in, so integrate() returns the integral over the whole line
/// (up to the truncation at u_max). tail_factor() is the exact mass of
/// 1/(1+u^2) beyond the grid, used for the analytic tail closure; it is zero
/// under the truncated policy, which drops the closure on data integrals.
struct QuadratureRule {
  double du = 0.01;
  double u_max = 100.0;
  TailPolicy tail_policy = TailPolicy::analytic;
  std::vector<double> u;       // half grid, u[0] = 0
  std::vector<double> weight;  // folded trapezoid weights

  QuadratureRule(double du_ = 0.01, double u_max_ = 100.0,
                 TailPolicy tail_policy_ = TailPolicy::analytic)
      : du(du_), u_max(u_max_), tail_policy(tail_policy_) {
    if (du <= 0 || u_max < 50 * du)
      throw std::invalid_argument("QuadratureRule: need du > 0 and u_max >= 50*du");
    std::size_t m = static_cast<std::size_t>(std::llround(u_max / du));
    u_max = m * du;
    u.resize(m + 1);
    weight.resize(m + 1);
    for (std::size_t i = 0; i <= m; ++i) {
      u[i] = i * du;
      weight[i] = (i == 0 || i == m) ? du : 2.0 * du;
    }
  }

  std::size_t size() const { return u.size(); }

  /// Integral over [-u_max, u_max] of an even function given by grid values.
  double integrate(const std::vector<double>& values) const {
    if (values.size() != u.size())
      throw std::invalid_argument("QuadratureRule: grid size mismatch");
    double sum = 0.0, c = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      double y = weight[i] * values[i] - c;
      double t = sum + y;
      c = (t - sum) - y;
      sum = t;
    }
    return sum;
  }

  template <class F>
  double integrate_fn(F&& f) const {
    double sum = 0.0, c = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      double y = weight[i] * f(u[i]) - c;
      double t = sum + y;
      c = (t - sum) - y;
      sum = t;
    }
    return sum;
  }

  /// Mass of 1/(1+u^2) outside [-u_max, u_max]; zero when truncated. Use
  /// this for closures against data (periodogram integrals), which are the
  /// terms the truncated policy drops.
  double tail_factor() const {
    if (tail_policy == TailPolicy::truncated) return 0.0;
    return analytic_tail_mass();
  }

  /// Same tail mass, independent of policy. Deterministic normalizers
  /// (integrals of a known density, not of data) always close the tail:
  /// truncating them would renormalize the fitted density by a
  /// parameter-dependent factor instead of reproducing plain truncation of
  /// the data integral.
  double analytic_tail_mass() const { return M_PI - 2.0 * std::atan(u_max); }
};

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

/// Golub-Welsch: nodes/weights from the symmetric Jacobi matrix of a
/// three-term recurrence. mu0 is the total mass of the weight function.
inline GaussRule golub_welsch(const std::vector<double>& alpha,
                              const std::vector<double>& beta, double mu0) {
  int n = static_cast<int>(alpha.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = alpha[i];
    if (i + 1 < n) {
      J(i, i + 1) = beta[i];
      J(i + 1, i) = beta[i];
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace detail

/// n-point Gauss-Legendre rule on [a, b].
inline GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0) {
  std::vector<double> alpha(n, 0.0), beta(n - 1);
  for (int i = 1; i < n; ++i)
    beta[i - 1] = i / std::sqrt(4.0 * i * i - 1.0);
  GaussRule rule = detail::golub_welsch(alpha, beta, 2.0);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = 0.5 * (b - a) * rule.nodes[i] + 0.5 * (a + b);
    rule.weights[i] *= 0.5 * (b - a);
  }
  return rule;
}

/// n-point generalized Gauss-Laguerre rule for weight x^a * exp(-x) on
/// [0, inf), normalized so the weights sum to 1 (an expectation rule for the
/// Gamma(a+1, 1) law). Cached: the asymptotics sums request the same shapes
/// over and over.
inline const GaussRule& gamma_expectation_rule(double shape, int n) {
  static std::map<std::pair<double, int>, GaussRule> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto key = std::make_pair(shape, n);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  double a = shape - 1.0;  // Laguerre alpha
  if (shape <= 0) throw std::invalid_argument("gamma_expectation_rule: shape <= 0");
  std::vector<double> alpha(n), beta(n - 1);
  for (int i = 0; i < n; ++i) alpha[i] = 2.0 * i + a + 1.0;
  for (int i = 1; i < n; ++i) beta[i - 1] = std::sqrt(i * (i + a));
  GaussRule rule = detail::golub_welsch(alpha, beta, 1.0);
  return cache.emplace(key, std::move(rule)).first->second;
}

}  // namespace carma_renewal
