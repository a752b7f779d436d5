#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "carma_renewal/carma_model.hpp"
#include "carma_renewal/levy_noise.hpp"
#include "carma_renewal/parallel.hpp"
#include "carma_renewal/path_simulator.hpp"
#include "carma_renewal/quadrature.hpp"
#include "carma_renewal/renewal_sampling.hpp"
#include "carma_renewal/whittle.hpp"

namespace carma_renewal {

/// Even integrable weight with its cosine-transform companion
/// G_hat_R(xi) = (1/2pi) integral G(u) exp(i u xi) du.
struct WeightFunction {
  std::function<double(double)> G;
  std::function<double(double)> G_hat_R;
  double l1_norm = 0.0;

  /// G = 1/(1+u^2) with the exact transform exp(-|xi|)/2.
  static WeightFunction rational() {
    WeightFunction w;
    w.G = [](double u) { return 1.0 / (1.0 + u * u); };
    w.G_hat_R = [](double xi) { return 0.5 * std::exp(-std::abs(xi)); };
    w.l1_norm = M_PI;
    return w;
  }

  /// Weight given by values on the rule's half grid with a c/(1+u^2) tail.
  /// The transform is tabulated once by a DCT and interpolated afterwards.
  static WeightFunction from_grid(std::vector<double> values, double tail_coef,
                                  const QuadratureRule& rule) {
    if (values.size() != rule.size())
      throw std::invalid_argument("WeightFunction::from_grid: grid size mismatch");
    double du = rule.du, u_max = rule.u_max;
    double l1 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      l1 += rule.weight[i] * std::abs(values[i]);
    l1 += std::abs(tail_coef) * rule.tail_factor();

    auto table = std::make_shared<std::vector<double>>(std::move(values));
    WeightFunction w;
    w.l1_norm = l1;
    w.G = [table, du, u_max, tail_coef](double u) {
      double s = std::abs(u);
      if (s >= u_max) return tail_coef / (1.0 + s * s);
      double x = s / du;
      auto i = static_cast<std::size_t>(x);
      double frac = x - i;
      return (*table)[i] * (1.0 - frac) + (*table)[i + 1] * frac;
    };

    // xi grid with spacing pi / (n_total * du), covering transforms of
    // everything the u grid can resolve
    std::size_t n_total = 1;
    while (n_total < table->size()) n_total <<= 1;
    n_total <<= 2;
    std::vector<double> transform = detail::cosine_transform_table(
        *table, n_total, du, n_total + 1);
    double dxi = M_PI / (static_cast<double>(n_total) * du);
    auto ghat = std::make_shared<std::vector<double>>(std::move(transform));
    // table holds 2 * integral_0^inf G cos(u xi) du; G_hat_R = table / (2 pi)
    for (auto& v : *ghat) v *= 1.0 / (2.0 * M_PI);
    w.G_hat_R = [ghat, dxi](double xi) {
      double x = std::abs(xi) / dxi;
      auto i = static_cast<std::size_t>(x);
      if (i + 1 >= ghat->size()) return 0.0;
      double frac = x - i;
      return (*ghat)[i] * (1.0 - frac) + (*ghat)[i + 1] * frac;
    };
    return w;
  }
};

/// Fourth-order moment structure of Y: the joint cumulant
/// N(s,t,u) = kappa_4 * integral_0^inf w(v) w(v+s) w(v+s+t) w(v+s+t+u) dv
/// and M(s,t,u) = N + gamma(s)gamma(u) + gamma(s+t)gamma(t+u)
/// + gamma(s+t+u)gamma(t). The kernel's eigen-expansion makes N closed form;
/// repeated roots fall back to quadrature.
class MomentCalculator {
 public:
  MomentCalculator(const CarmaModel& model, const NoiseSpec& noise)
      : model_(model), kappa4_(noise.moments().fourth_cumulant) {
    if (kappa4_ == 0.0) return;
    closed_form_ = model.expansion_available();
    if (closed_form_) {
      int p = model.p();
      const auto& d = model.kernel_coefficients();
      const auto& lambda = model.eigenvalues();
      coef_.resize(p * p * p);
      for (int i2 = 0; i2 < p; ++i2)
        for (int i3 = 0; i3 < p; ++i3)
          for (int i4 = 0; i4 < p; ++i4) {
            std::complex<double> inner = 0.0;
            for (int i1 = 0; i1 < p; ++i1)
              inner += d[i1] / (-(lambda[i1] + lambda[i2] + lambda[i3] + lambda[i4]));
            coef_[(i2 * p + i3) * p + i4] = inner * d[i2] * d[i3] * d[i4];
          }
    } else {
      double decay = 4.0 * std::abs(model.spectral_abscissa());
      quad_ = gauss_legendre(96, 0.0, 30.0 / decay);
    }
  }

  double gamma(double h) const { return model_.autocovariance(h); }

  double N(double s, double t, double u) const {
    if (kappa4_ == 0.0) return 0.0;
    if (closed_form_) {
      int p = model_.p();
      const auto& lambda = model_.eigenvalues();
      std::vector<std::complex<double>> e2(p), e3(p), e4(p);
      for (int i = 0; i < p; ++i) {
        e2[i] = std::exp(lambda[i] * s);
        e3[i] = std::exp(lambda[i] * (s + t));
        e4[i] = std::exp(lambda[i] * (s + t + u));
      }
      std::complex<double> acc = 0.0;
      for (int i2 = 0; i2 < p; ++i2)
        for (int i3 = 0; i3 < p; ++i3)
          for (int i4 = 0; i4 < p; ++i4)
            acc += coef_[(i2 * p + i3) * p + i4] * e2[i2] * e3[i3] * e4[i4];
      return kappa4_ * acc.real();
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < quad_.nodes.size(); ++i) {
      double v = quad_.nodes[i];
      acc += quad_.weights[i] * model_.kernel(v) * model_.kernel(v + s) *
             model_.kernel(v + s + t) * model_.kernel(v + s + t + u);
    }
    return kappa4_ * acc;
  }

  double M(double s, double t, double u) const {
    return N(s, t, u) + gamma(s) * gamma(u) + gamma(s + t) * gamma(t + u) +
           gamma(s + t + u) * gamma(t);
  }

  const CarmaModel& model() const { return model_; }
  double kappa4() const { return kappa4_; }

 private:
  CarmaModel model_;
  double kappa4_ = 0.0;
  bool closed_form_ = false;
  std::vector<std::complex<double>> coef_;
  GaussRule quad_;
};

inline std::pair<double, double> fourth_moment_m(const CarmaModel& model,
                                                 const NoiseSpec& noise,
                                                 double s, double t, double u) {
  if (s < 0 || t < 0 || u < 0)
    throw std::invalid_argument("fourth_moment_m: negative lag");
  MomentCalculator calc(model, noise);
  double n = calc.N(s, t, u);
  return {n + calc.gamma(s) * calc.gamma(u) +
              calc.gamma(s + t) * calc.gamma(t + u) +
              calc.gamma(s + t + u) * calc.gamma(t),
          n};
}

namespace detail {

/// Expectation of h over the k-fold convolution Gamma(k * shape, rate) of the
/// exponential/gamma inter-arrival law.
template <class F>
double fold_expect(const SamplingSpec& sampling, int folds, int nodes, F&& h) {
  double shape, rate;
  if (sampling.kind() == SamplingSpec::Kind::exponential) {
    shape = static_cast<double>(folds);
    rate = sampling.exp_rate();
  } else if (sampling.kind() == SamplingSpec::Kind::gamma) {
    shape = folds * sampling.gamma_shape();
    rate = sampling.gamma_rate();
  } else {
    throw std::invalid_argument(
        "series method requires exponential or gamma inter-arrivals");
  }
  const GaussRule& rule = gamma_expectation_rule(shape, nodes);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * h(rule.nodes[i] / rate);
  return acc;
}

}  // namespace detail

/// E[U_0(k)] = G_hat_R(0) gamma(0) for k = 0, otherwise the expectation of
/// G_hat_R(s) gamma(s) over the k-fold inter-arrival convolution.
inline double expected_u(const CarmaModel& model, const SamplingSpec& sampling,
                         int k, const WeightFunction& weight, int nodes = 64) {
  if (k < 0) throw std::invalid_argument("expected_u: k < 0");
  if (k == 0) return weight.G_hat_R(0.0) * model.autocovariance(0.0);
  return detail::fold_expect(sampling, k, nodes, [&](double s) {
    return weight.G_hat_R(s) * model.autocovariance(s);
  });
}

/// Which of the 16 mutually exclusive index conditions (j, k, l) satisfies.
inline int classify_case(int j, int k, int l) {
  if (j < 0 || k < 0 || l < 0)
    throw std::invalid_argument("classify_case: negative index");
  if (j == 0 && k == 0 && l == 0) return 1;
  if (j == 0 && k == 0 && l > 0) return 2;
  if (j == 0 && l == 0 && k > 0) return 3;
  if (k == 0 && l == 0 && j > 0) return 4;
  if (j == 0 && k > 0 && k == l) return 5;
  if (j == 0 && k > 0 && k < l) return 6;
  if (j == 0 && l > 0 && l < k) return 7;
  if (k == 0 && j > 0 && j == l) return 8;
  if (k == 0 && j > 0 && j < l) return 9;
  if (k == 0 && l > 0 && l < j) return 10;
  if (j > 0 && k > 0 && l == 0) return 11;
  if (j > 0 && k > 0 && l > 0 && l < j) return 12;
  if (j > 0 && k > 0 && l == j) return 13;
  if (j > 0 && k > 0 && l > j && l < j + k) return 14;
  if (j > 0 && k > 0 && l == j + k) return 15;
  if (j > 0 && k > 0 && l > j + k) return 16;
  throw std::logic_error("classify_case: unreachable");
}

struct CovarianceNodes {
  int dim1 = 64;
  int dim2 = 32;
  int dim3 = 16;
};

/// E[U_0(l, G_s) U_j(k, G_t)]: the lag-structure expectation evaluated by the
/// case-matching 1-, 2-, or 3-fold convolution integral. G_hat of the s-weight
/// rides on tau_l, G_hat of the t-weight on tau_{j+k} - tau_j.
inline double covariance_u(const MomentCalculator& calc,
                           const SamplingSpec& sampling, int j, int k, int l,
                           const WeightFunction& ws, const WeightFunction& wt,
                           const CovarianceNodes& nodes = {}) {
  const auto& Gs = ws.G_hat_R;
  const auto& Gt = wt.G_hat_R;
  auto M = [&](double a, double b, double c) { return calc.M(a, b, c); };
  auto E1 = [&](int m, auto&& h) {
    return detail::fold_expect(sampling, m, nodes.dim1, h);
  };
  auto E2 = [&](int m1, int m2, auto&& h) {
    return detail::fold_expect(sampling, m1, nodes.dim2, [&](double x1) {
      return detail::fold_expect(sampling, m2, nodes.dim2,
                                 [&](double x2) { return h(x1, x2); });
    });
  };
  auto E3 = [&](int m1, int m2, int m3, auto&& h) {
    return detail::fold_expect(sampling, m1, nodes.dim3, [&](double x1) {
      return detail::fold_expect(sampling, m2, nodes.dim3, [&](double x2) {
        return detail::fold_expect(sampling, m3, nodes.dim3,
                                   [&](double x3) { return h(x1, x2, x3); });
      });
    });
  };

  switch (classify_case(j, k, l)) {
    case 1:
      return Gs(0) * Gt(0) * M(0, 0, 0);
    case 2:
      return Gt(0) * E1(l, [&](double s) { return Gs(s) * M(0, 0, s); });
    case 3:
      return Gs(0) * E1(k, [&](double s) { return Gt(s) * M(0, 0, s); });
    case 4:
      return Gs(0) * Gt(0) * E1(j, [&](double s) { return M(0, s, 0); });
    case 5:
      return E1(l, [&](double s) { return Gs(s) * Gt(s) * M(0, s, 0); });
    case 6:
      return E2(k, l - k, [&](double s, double t) {
        return Gt(s) * Gs(s + t) * M(0, s, t);
      });
    case 7:
      return E2(l, k - l, [&](double s, double t) {
        return Gs(s) * Gt(s + t) * M(0, s, t);
      });
    case 8:
      return Gt(0) * E1(l, [&](double s) { return Gs(s) * M(s, 0, 0); });
    case 9:
      return Gt(0) * E2(j, l - j, [&](double s, double t) {
               return Gs(s + t) * M(s, 0, t);
             });
    case 10:
      return Gt(0) * E2(l, j - l, [&](double s, double t) {
               return Gs(s) * M(s, t, 0);
             });
    case 11:
      return Gs(0) * E2(j, k, [&](double s, double t) {
               return Gt(t) * M(0, s, t);
             });
    case 12:
      return E3(l, j - l, k, [&](double s, double t, double u) {
        return Gs(s) * Gt(u) * M(s, t, u);
      });
    case 13:
      return E2(l, k, [&](double s, double t) {
        return Gs(s) * Gt(t) * M(s, 0, t);
      });
    case 14:
      return E3(j, l - j, j + k - l, [&](double s, double t, double u) {
        return Gs(s + t) * Gt(t + u) * M(s, t, u);
      });
    case 15:
      return E2(j, k, [&](double s, double t) {
        return Gs(s + t) * Gt(t) * M(s, t, 0);
      });
    case 16:
      return E3(j, k, l - k - j, [&](double s, double t, double u) {
        return Gs(s + t + u) * Gt(t) * M(s, t, u);
      });
  }
  throw std::logic_error("covariance_u: unreachable");
}

struct SeriesQConfig {
  int j_max = 30;
  int k_max = 30;
  int l_max = 30;
  CovarianceNodes nodes{};
  double term_tol = 1e-13;  // absolute early-stop threshold for outer terms
};

struct SeriesQResult {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd tail_estimate;  // geometric extrapolation of the cut sums
  bool tail_warning = false;
  SeriesQConfig config;
};

namespace detail {

struct QEntryResult {
  double value = 0.0;
  double tail = 0.0;
};

/// One half of an entry of Q: the j = 0 block plus the one-sided j >= 1 block
/// with weights (ws, wt). The full entry adds the mirrored block (wt, ws).
inline QEntryResult q_half_entry(const MomentCalculator& calc,
                                 const CarmaModel& model,
                                 const SamplingSpec& sampling,
                                 const WeightFunction& ws,
                                 const WeightFunction& wt,
                                 const SeriesQConfig& cfg, bool include_j0) {
  std::vector<double> eu_s(cfg.l_max + 1), eu_t(cfg.k_max + 1);
  for (int l = 0; l <= cfg.l_max; ++l)
    eu_s[l] = expected_u(model, sampling, l, ws, cfg.nodes.dim1);
  for (int k = 0; k <= cfg.k_max; ++k)
    eu_t[k] = expected_u(model, sampling, k, wt, cfg.nodes.dim1);

  auto cbar = [&](int j, int k, int l) {
    return covariance_u(calc, sampling, j, k, l, ws, wt, cfg.nodes) -
           eu_s[l] * eu_t[k];
  };

  // bracketed term for one offset j: cbar(j,0,0) + 2 sum_k cbar(j,k,0)
  // + 2 sum_l cbar(j,0,l) + 4 sum_l sum_k cbar(j,k,l)
  auto bracket = [&](int j) {
    double acc = cbar(j, 0, 0);
    for (int k = 1; k <= cfg.k_max; ++k) {
      double term = 2.0 * cbar(j, k, 0);
      acc += term;
      if (std::abs(term) < cfg.term_tol && k > 2) break;
    }
    for (int l = 1; l <= cfg.l_max; ++l) {
      double term = 2.0 * cbar(j, 0, l);
      acc += term;
      if (std::abs(term) < cfg.term_tol && l > 2) break;
    }
    for (int l = 1; l <= cfg.l_max; ++l) {
      double row = 0.0;
      for (int k = 1; k <= cfg.k_max; ++k) {
        double term = 4.0 * cbar(j, k, l);
        row += term;
        if (std::abs(term) < cfg.term_tol && k > 2) break;
      }
      acc += row;
      if (std::abs(row) < cfg.term_tol && l > 2) break;
    }
    return acc;
  };

  QEntryResult result;
  int j_lo = include_j0 ? 0 : 1;
  std::vector<double> terms;
  terms.reserve(cfg.j_max + 1 - j_lo);
  // Sequential with a noise-floor stop: the genuine terms decay geometrically
  // in j, but each bracket carries quadrature noise of a few 1e-6, so summing
  // past the point where terms sink below it only accumulates drift (and makes
  // the total depend on j_max).
  double floor_scale = 0.0;
  for (int j = j_lo; j <= cfg.j_max; ++j) {
    double term = bracket(j);
    terms.push_back(term);
    if (terms.size() == 1)
      floor_scale = 1e-4 * std::abs(term);
    else if (std::abs(term) < floor_scale && terms.size() > 2)
      break;
  }
  double sum = 0.0, comp = 0.0;
  for (double term : terms) {
    double y = term - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  result.value = sum;
  // geometric tail from the decay of the last outer terms
  double last = std::abs(terms.back());
  double prev = terms.size() > 1 ? std::abs(terms[terms.size() - 2]) : last;
  if (last > 0 && prev > last) {
    double rho = std::min(0.95, last / prev);
    result.tail = last * rho / (1.0 - rho);
  } else {
    result.tail = last;
  }
  return result;
}

}  // namespace detail

/// Q_{s,t}(G_s, G_t): the j = 0 block with (G_s, G_t) plus the two one-sided
/// blocks with (G_s, G_t) and with the weights swapped.
inline detail::QEntryResult q_entry(const MomentCalculator& calc,
                                    const CarmaModel& model,
                                    const SamplingSpec& sampling,
                                    const WeightFunction& ws,
                                    const WeightFunction& wt,
                                    const SeriesQConfig& cfg = {}) {
  detail::QEntryResult a =
      detail::q_half_entry(calc, model, sampling, ws, wt, cfg, true);
  detail::QEntryResult b =
      detail::q_half_entry(calc, model, sampling, wt, ws, cfg, false);
  return {a.value + b.value, a.tail + b.tail};
}

/// sigma_J^2(G) = Q_{s,s}(G, G); shares the entry code path with matrix_q.
inline double variance_sigma_j(const CarmaModel& model, const NoiseSpec& noise,
                               const SamplingSpec& sampling,
                               const WeightFunction& weight,
                               const SeriesQConfig& cfg = {}) {
  MomentCalculator calc(model, noise);
  return q_entry(calc, model, sampling, weight, weight, cfg).value;
}

/// Limit J = integral G(u) phi_Z(u) du of the integrated periodogram.
inline double j_limit(const CarmaModel& model, const SamplingSpec& sampling,
                      const WeightFunction& weight, const QuadratureRule& rule) {
  SampledSpectrum spectrum(model, sampling);
  std::vector<double> integrand(rule.size());
  std::vector<double> phi = spectrum.on_grid(rule);
  for (std::size_t i = 0; i < rule.size(); ++i)
    integrand[i] = weight.G(rule.u[i]) * phi[i];
  double tail = 2.0 * weight.G(rule.u_max) * rule.u_max * spectrum.floor_value();
  return rule.integrate(integrand) + tail;
}

/// Central-difference derivative of log g in one coordinate, packaged as the
/// weight phi^(i)(u) = d_i log g(u) / (1 + u^2).
struct DerivativeWeight {
  std::vector<double> dlg;  // d log g / d theta_i on the rule half grid
  double dlg_floor = 0.0;   // large-u limit of d log g
  WeightFunction weight;
};

inline DerivativeWeight derivative_weight(const WhittleContext& ctx,
                                          const std::vector<double>& theta0,
                                          int i) {
  if (i < 0 || i >= static_cast<int>(theta0.size()))
    throw std::invalid_argument("derivative_weight: index out of range");
  double step = 1e-5 * std::max(1.0, std::abs(theta0[i]));

  auto log_g_at = [&](double delta) -> const GData& {
    std::vector<double> theta = theta0;
    theta[i] += delta;
    return ctx.g_data(theta);
  };

  const GData* hi = nullptr;
  const GData* lo = nullptr;
  double used_step = step;
  for (int attempt = 0; attempt < 3 && !hi; ++attempt) {
    try {
      const GData& plus = log_g_at(used_step);
      const GData& minus = log_g_at(-used_step);
      hi = &plus;
      lo = &minus;
    } catch (const std::exception&) {
      used_step *= 0.1;
    }
  }
  DerivativeWeight out;
  const QuadratureRule& rule = ctx.rule();
  out.dlg.resize(rule.size());
  if (hi) {
    double denom = 2.0 * used_step;
    for (std::size_t m = 0; m < rule.size(); ++m)
      out.dlg[m] = (hi->log_g[m] - lo->log_g[m]) / denom;
    out.dlg_floor = (hi->log_g_floor - lo->log_g_floor) / denom;
  } else {
    // one-sided difference against the center as a last resort
    const GData& center = ctx.g_data(theta0);
    const GData& plus = log_g_at(step);
    for (std::size_t m = 0; m < rule.size(); ++m)
      out.dlg[m] = (plus.log_g[m] - center.log_g[m]) / step;
    out.dlg_floor = (plus.log_g_floor - center.log_g_floor) / step;
  }
  std::vector<double> values(rule.size());
  for (std::size_t m = 0; m < rule.size(); ++m)
    values[m] = out.dlg[m] / (1.0 + rule.u[m] * rule.u[m]);
  out.weight = WeightFunction::from_grid(std::move(values), out.dlg_floor, rule);
  return out;
}

inline std::vector<DerivativeWeight> derivative_weights(
    const WhittleContext& ctx, const std::vector<double>& theta0) {
  std::vector<DerivativeWeight> out;
  out.reserve(theta0.size());
  for (int i = 0; i < static_cast<int>(theta0.size()); ++i)
    out.push_back(derivative_weight(ctx, theta0, i));
  return out;
}

/// W has entries w_ij = -integral d_i log g * d_j log g * phi_Z / (1+u^2) du:
/// minus a Gram matrix, so it is symmetric negative semidefinite.
inline Eigen::MatrixXd matrix_w(const WhittleContext& ctx,
                                const CarmaModel& true_model,
                                const std::vector<DerivativeWeight>& dw) {
  const QuadratureRule& rule = ctx.rule();
  SampledSpectrum spectrum(true_model, ctx.sampling());
  std::vector<double> phi = spectrum.on_grid(rule);
  double floor = spectrum.floor_value();
  int d = static_cast<int>(dw.size());
  Eigen::MatrixXd W(d, d);
  std::vector<double> integrand(rule.size());
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      for (std::size_t m = 0; m < rule.size(); ++m)
        integrand[m] = dw[i].dlg[m] * dw[j].dlg[m] * phi[m] /
                       (1.0 + rule.u[m] * rule.u[m]);
      double v = rule.integrate(integrand) +
                 dw[i].dlg_floor * dw[j].dlg_floor * floor * rule.tail_factor();
      W(i, j) = -v;
      W(j, i) = -v;
    }
  }
  return W;
}

/// Series evaluation of Q at theta0 from the truncated triple sums.
inline SeriesQResult matrix_q(const WhittleContext& ctx,
                              const CarmaModel& true_model,
                              const NoiseSpec& noise,
                              const std::vector<DerivativeWeight>& dw,
                              const SeriesQConfig& cfg = {}) {
  MomentCalculator calc(true_model, noise);
  int d = static_cast<int>(dw.size());
  SeriesQResult result;
  result.config = cfg;
  result.Q.resize(d, d);
  result.tail_estimate.resize(d, d);
  for (int s = 0; s < d; ++s) {
    for (int t = s; t < d; ++t) {
      detail::QEntryResult e = q_entry(calc, true_model, ctx.sampling(),
                                       dw[s].weight, dw[t].weight, cfg);
      result.Q(s, t) = e.value;
      result.Q(t, s) = e.value;
      result.tail_estimate(s, t) = e.tail;
      result.tail_estimate(t, s) = e.tail;
    }
  }
  double scale = result.Q.cwiseAbs().maxCoeff();
  result.tail_warning = result.tail_estimate.cwiseAbs().maxCoeff() > 1e-3 * scale;
  return result;
}

struct MonteCarloQResult {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd se;  // jackknife standard errors per entry
  int reps = 0;
};

/// Empirical covariance of the score statistics sqrt(n) * Khat_n^(i)(theta0)
/// across independent replications; the simulation-based cross-check of the
/// series Q.
inline MonteCarloQResult monte_carlo_q(const WhittleContext& ctx,
                                       const CarmaModel& true_model,
                                       const NoiseSpec& noise,
                                       const std::vector<DerivativeWeight>& dw,
                                       std::size_t n, int reps,
                                       std::uint64_t seed, double h = 1e-2) {
  if (reps < 100) throw std::invalid_argument("monte_carlo_q: reps < 100");
  const QuadratureRule& rule = ctx.rule();
  int d = static_cast<int>(dw.size());
  Eigen::MatrixXd scores(reps, d);
  parallel_for(static_cast<std::size_t>(reps), [&](std::size_t r) {
    SampledSeries series =
        simulate_series(true_model, noise, ctx.sampling(),
                        SamplingMode::count(n), h, mix_seed(seed, r));
    PeriodogramGrid I = periodogram_grid(series, rule);
    for (int i = 0; i < d; ++i) {
      std::vector<double> integrand(rule.size());
      for (std::size_t m = 0; m < rule.size(); ++m)
        integrand[m] = dw[i].dlg[m] * I.values[m] / (1.0 + rule.u[m] * rule.u[m]);
      scores(r, i) = rule.integrate(integrand) +
                     dw[i].dlg_floor * I.tail_level * rule.tail_factor();
    }
  });
  Eigen::RowVectorXd mean = scores.colwise().mean();
  Eigen::MatrixXd centered = scores.rowwise() - mean;
  double nd = static_cast<double>(n);
  MonteCarloQResult out;
  out.reps = reps;
  out.Q = nd * (centered.transpose() * centered) / (reps - 1.0);
  // delete-one jackknife over replications
  out.se = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd total = centered.transpose() * centered;
  std::vector<Eigen::MatrixXd> loo(reps);
  for (int r = 0; r < reps; ++r) {
    Eigen::RowVectorXd mean_r =
        (mean * reps - scores.row(r)) / (reps - 1.0);
    Eigen::MatrixXd centered_r = scores.rowwise() - mean_r;
    Eigen::MatrixXd tot_r = centered_r.transpose() * centered_r -
                            (scores.row(r) - mean_r).transpose() *
                                (scores.row(r) - mean_r);
    loo[r] = nd * tot_r / (reps - 2.0);
  }
  Eigen::MatrixXd loo_mean = Eigen::MatrixXd::Zero(d, d);
  for (const auto& m : loo) loo_mean += m;
  loo_mean /= static_cast<double>(reps);
  for (const auto& m : loo) {
    Eigen::MatrixXd diff = m - loo_mean;
    out.se += diff.cwiseProduct(diff);
  }
  out.se = ((reps - 1.0) / reps * out.se).cwiseSqrt();
  return out;
}

struct AsymptoticCovariance {
  Eigen::MatrixXd W;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd sigma0;
  double cond_w = 0.0;
  bool available = false;
  std::string method;  // "series" or "monte_carlo"
};

/// Sigma0 = W^-1 Q W^-1 with a conditioning guard on W.
inline AsymptoticCovariance asymptotic_covariance(const Eigen::MatrixXd& W,
                                                  const Eigen::MatrixXd& Q,
                                                  const std::string& method = "series") {
  AsymptoticCovariance out;
  out.W = W;
  out.Q = Q;
  out.method = method;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  out.cond_w = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(out.cond_w < 1e12)) return out;
  Eigen::MatrixXd Winv = W.fullPivLu().inverse();
  out.sigma0 = Winv * Q * Winv.transpose();
  double asym = (out.sigma0 - out.sigma0.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * std::max(1.0, out.sigma0.cwiseAbs().maxCoeff()))
    throw std::runtime_error("asymptotic_covariance: Sigma0 asymmetry beyond tolerance");
  out.sigma0 = 0.5 * (out.sigma0 + out.sigma0.transpose().eval());
  out.available = true;
  return out;
}

/// Standard errors sqrt(diag(Sigma0) / n).
inline std::vector<double> standard_errors(const AsymptoticCovariance& cov,
                                           std::size_t n) {
  if (!cov.available)
    throw std::runtime_error("standard_errors: Sigma0 unavailable");
  std::vector<double> se(cov.sigma0.rows());
  for (int i = 0; i < cov.sigma0.rows(); ++i)
    se[i] = std::sqrt(std::max(0.0, cov.sigma0(i, i)) / static_cast<double>(n));
  return se;
}

/// Full plug-in pipeline at a parameter point: derivative weights, W, series
/// Q, and the sandwich.
inline AsymptoticCovariance plug_in_covariance(const WhittleContext& ctx,
                                               const std::vector<double>& theta,
                                               const NoiseSpec& noise,
                                               double sigma_L2,
                                               const SeriesQConfig& cfg = {}) {
  CarmaModel model = CarmaModel::validate(
      CarmaParams::from_theta(ctx.p(), ctx.q(), theta, sigma_L2));
  std::vector<DerivativeWeight> dw = derivative_weights(ctx, theta);
  Eigen::MatrixXd W = matrix_w(ctx, model, dw);
  SeriesQResult q = matrix_q(ctx, model, noise, dw, cfg);
  return asymptotic_covariance(W, q.Q, "series");
}

}  // namespace carma_renewal
