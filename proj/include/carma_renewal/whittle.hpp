#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "carma_renewal/carma_model.hpp"
#include "carma_renewal/optimize.hpp"
#include "carma_renewal/path_simulator.hpp"
#include "carma_renewal/quadrature.hpp"
#include "carma_renewal/renewal_sampling.hpp"
#include "carma_renewal/rng.hpp"

namespace carma_renewal {

namespace detail {

/// Integral over one uniform cell of the piecewise-linear interpolant of f
/// against cos(u h): composite rule exact for linear f, with error O(delta^2)
/// uniformly in u. Product-to-sum forms avoid cancellation at small u*delta.
inline double filon_cos_integral(const std::vector<double>& f, double delta,
                                 double u) {
  double s = std::abs(u);
  double total = 0.0, comp = 0.0;
  auto add = [&](double y) {
    double yc = y - comp;
    double t = total + yc;
    comp = (t - total) - yc;
    total = t;
  };
  if (s * delta < 1e-9) {
    for (std::size_t j = 0; j + 1 < f.size(); ++j)
      add(0.5 * delta * (f[j] + f[j + 1]));
    return total;
  }
  double half = 0.5 * delta;
  double sin_half = std::sin(s * half);
  for (std::size_t j = 0; j + 1 < f.size(); ++j) {
    double t0 = j * delta, t1 = t0 + delta, tm = t0 + half;
    double c0 = f[j];
    double c1 = (f[j + 1] - f[j]) / delta;
    double i0 = 2.0 * std::cos(s * tm) * sin_half / s;
    double i1 = -2.0 * std::sin(s * tm) * sin_half / (s * s) +
                delta * std::sin(s * t1) / s;
    add(c0 * i0 + c1 * i1);
  }
  return total;
}

/// DCT-I of the padded table: returns trapezoid approximations of
/// 2 * integral_0^{N*delta} f(h) cos(k * du * h) dh for k = 0..n_out-1,
/// where du = pi / (N * delta). FFTW planning is serialized.
inline std::vector<double> cosine_transform_table(std::vector<double> f,
                                                  std::size_t n_total,
                                                  double delta,
                                                  std::size_t n_out) {
  static std::mutex plan_mutex;
  f.resize(n_total + 1, 0.0);
  std::vector<double> out(n_total + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    plan = fftw_plan_r2r_1d(static_cast<int>(n_total + 1), f.data(), out.data(),
                            FFTW_REDFT00, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    fftw_destroy_plan(plan);
  }
  out.resize(n_out);
  for (auto& v : out) v *= delta;
  return out;
}

}  // namespace detail

/// Spectral density phi_Z of the renewal-sampled process. Exponential
/// inter-arrivals use the closed form; general laws go through the cosine
/// transform of gamma_Y(h) r(h) tabulated on a grid dense enough for the
/// target absolute accuracy.
class SampledSpectrum {
 public:
  SampledSpectrum(const CarmaModel& model, const SamplingSpec& sampling)
      : model_(model), sampling_(sampling) {
    exponential_ = sampling.kind() == SamplingSpec::Kind::exponential;
    if (!exponential_) build_table();
  }

  /// Large-|u| limit: the flat aliasing floor gamma_Y(0) / (2 pi).
  double floor_value() const { return model_.gamma0() / (2.0 * M_PI); }

  double operator()(double u) const {
    if (exponential_) return closed_form(u);
    return floor_value() +
           detail::filon_cos_integral(table_, delta_, u) / M_PI;
  }

  /// phi_Z on the half grid of the rule. The general path runs one DCT on a
  /// refined copy of the table whose implied frequency step matches rule.du.
  std::vector<double> on_grid(const QuadratureRule& rule) const {
    std::vector<double> out(rule.size());
    if (exponential_) {
      for (std::size_t i = 0; i < rule.size(); ++i) out[i] = closed_form(rule.u[i]);
      return out;
    }
    // need N * delta = pi / du; refine until delta <= target
    double span = M_PI / rule.du;
    std::size_t n_total = 1;
    while (span / n_total > 1.5e-3) n_total <<= 1;
    double delta = span / n_total;
    std::vector<double> fine(std::min<std::size_t>(
        n_total + 1, static_cast<std::size_t>(table_span() / delta) + 2));
    for (std::size_t j = 0; j < fine.size(); ++j) fine[j] = table_value(j * delta);
    std::vector<double> transform =
        detail::cosine_transform_table(std::move(fine), n_total, delta, rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i)
      out[i] = floor_value() + 0.5 * transform[i] / M_PI;
    return out;
  }

  const CarmaModel& model() const { return model_; }

 private:
  double closed_form(double u) const {
    double beta = sampling_.exp_rate();
    return floor_value() + beta * model_.spectral_density_y(u);
  }

  void build_table() {
    double abscissa = std::abs(model_.spectral_abscissa());
    double span = std::min(400.0, std::max(20.0, 40.0 / abscissa));
    delta_ = 1e-3;
    std::size_t n = static_cast<std::size_t>(std::ceil(span / delta_));
    table_.resize(n + 1);
    table_[0] = 0.0;  // r(0) enters with zero Lebesgue weight; value at 0+ set below
    for (std::size_t j = 1; j <= n; ++j) {
      double h = j * delta_;
      table_[j] = model_.autocovariance(h) * sampling_.renewal_density(h);
    }
    table_[0] = 2.0 * table_[1] - table_[2];  // linear extrapolation to h = 0
  }

  double table_span() const { return (table_.size() - 1) * delta_; }

  double table_value(double h) const {
    double x = h / delta_;
    auto j = static_cast<std::size_t>(x);
    if (j + 1 >= table_.size()) return 0.0;
    double frac = x - j;
    return table_[j] * (1.0 - frac) + table_[j + 1] * frac;
  }

  CarmaModel model_;
  SamplingSpec sampling_;
  bool exponential_ = true;
  std::vector<double> table_;
  double delta_ = 0.0;
};

inline double spectral_density_z(const CarmaModel& model,
                                 const SamplingSpec& sampling, double u) {
  return SampledSpectrum(model, sampling)(u);
}

/// phi_Z with the renewal density replaced by the partial sum of its first
/// n_terms convolution powers; n_terms = 0 keeps only the atom at lag zero.
inline double truncated_spectral_density_z(const CarmaModel& model,
                                           const SamplingSpec& sampling,
                                           double u, int n_terms) {
  if (n_terms < 0)
    throw std::invalid_argument("truncated_spectral_density_z: n_terms < 0");
  double atom = model.gamma0() / (2.0 * M_PI);
  if (n_terms == 0) return atom;
  double abscissa = std::abs(model.spectral_abscissa());
  double span = std::min(400.0, std::max(20.0, 40.0 / abscissa));
  double delta = 1e-3;
  std::size_t n = static_cast<std::size_t>(std::ceil(span / delta));
  std::vector<double> table(n + 1, 0.0);
  for (std::size_t j = 1; j <= n; ++j) {
    double h = j * delta;
    double partial = 0.0;
    for (int k = 1; k <= n_terms; ++k)
      partial += sampling.convolution_density(k, h);
    table[j] = model.autocovariance(h) * partial;
  }
  table[0] = 2.0 * table[1] - table[2];
  return atom + detail::filon_cos_integral(table, delta, u) / M_PI;
}

/// Rescaled density g(., theta) on a quadrature grid together with its
/// normalizer s^2 and large-u limit; sigma_L^2 cancels in g, so it is
/// evaluated at sigma_L^2 = 1.
struct GData {
  std::vector<double> g;
  std::vector<double> log_g;
  double s2 = 0.0;          // at sigma_L^2 = 1
  double g_floor = 0.0;
  double log_g_floor = 0.0;
};

/// Shared evaluation state for one estimation problem: model order, sampling
/// law, frequency grid, and a cache of g(., theta) keyed by theta.
class WhittleContext {
 public:
  WhittleContext(int p, int q, SamplingSpec sampling,
                 QuadratureRule rule = QuadratureRule())
      : p_(p), q_(q), sampling_(std::move(sampling)), rule_(std::move(rule)) {
    if (p < 1 || q < 0 || q >= p)
      throw std::invalid_argument("WhittleContext: need p >= 1 and 0 <= q < p");
  }

  int p() const { return p_; }
  int q() const { return q_; }
  const SamplingSpec& sampling() const { return sampling_; }
  const QuadratureRule& rule() const { return rule_; }

  const GData& g_data(const std::vector<double>& theta) const {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = cache_.find(theta);
      if (it != cache_.end()) return *it->second;
    }
    auto data = std::make_shared<GData>(compute_g(theta));
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = cache_.emplace(theta, std::move(data));
    return *it->second;
  }

  /// s^2(theta) at unit noise variance.
  double s_tilde2(const std::vector<double>& theta) const {
    return g_data(theta).s2;
  }

 private:
  GData compute_g(const std::vector<double>& theta) const {
    CarmaModel model = CarmaModel::validate(CarmaParams::from_theta(p_, q_, theta, 1.0));
    SampledSpectrum spectrum(model, sampling_);
    std::vector<double> phi = spectrum.on_grid(rule_);
    double floor = spectrum.floor_value();
    double s2 = 0.0;
    {
      std::vector<double> integrand(phi.size());
      for (std::size_t i = 0; i < phi.size(); ++i)
        integrand[i] = phi[i] / (1.0 + rule_.u[i] * rule_.u[i]);
      s2 = rule_.integrate(integrand) + floor * rule_.analytic_tail_mass();
    }
    if (!(s2 > 0)) throw std::runtime_error("WhittleContext: s^2 <= 0");
    GData data;
    data.s2 = s2;
    data.g.resize(phi.size());
    data.log_g.resize(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) {
      data.g[i] = phi[i] / s2;
      data.log_g[i] = std::log(data.g[i]);
    }
    data.g_floor = floor / s2;
    data.log_g_floor = std::log(data.g_floor);
    return data;
  }

  int p_, q_;
  SamplingSpec sampling_;
  QuadratureRule rule_;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<double>, std::shared_ptr<GData>> cache_;
};

inline GData rescaled_density_g(const CarmaModel& model,
                                const SamplingSpec& sampling,
                                const QuadratureRule& rule = QuadratureRule()) {
  WhittleContext ctx(model.p(), model.q(), sampling, rule);
  return ctx.g_data(model.params().theta());
}

/// I_{Z,n}(u) = |sum_k exp(-i u tau_k) Y(tau_k)|^2 / (2 pi n).
inline double periodogram(const SampledSeries& series, double u) {
  if (series.n() < 1) throw std::invalid_argument("periodogram: empty series");
  std::complex<double> sum = 0.0;
  for (std::size_t k = 0; k < series.n(); ++k)
    sum += series.values[k] * std::exp(std::complex<double>(0.0, -u * series.times[k]));
  return std::norm(sum) / (2.0 * M_PI * series.n());
}

/// Periodogram on the quadrature half grid, plus its empirical large-u level
/// (mean over the top decade of the grid) used for tail closures.
struct PeriodogramGrid {
  std::vector<double> values;
  double tail_level = 0.0;
};

inline PeriodogramGrid periodogram_grid(const SampledSeries& series,
                                        const QuadratureRule& rule) {
  if (series.n() < 1) throw std::invalid_argument("periodogram_grid: empty series");
  std::size_t m = rule.size();
  std::vector<std::complex<double>> sum(m, 0.0);
  // phase recurrence in u: one complex multiply per grid point and term
  for (std::size_t k = 0; k < series.n(); ++k) {
    std::complex<double> rot =
        std::exp(std::complex<double>(0.0, -rule.du * series.times[k]));
    std::complex<double> phase = series.values[k];
    for (std::size_t i = 0; i < m; ++i) {
      sum[i] += phase;
      phase *= rot;
    }
  }
  PeriodogramGrid out;
  out.values.resize(m);
  double scale = 1.0 / (2.0 * M_PI * series.n());
  for (std::size_t i = 0; i < m; ++i) out.values[i] = std::norm(sum[i]) * scale;
  std::size_t tail_start = m - m / 10;
  double acc = 0.0;
  for (std::size_t i = tail_start; i < m; ++i) acc += out.values[i];
  out.tail_level = acc / static_cast<double>(m - tail_start);
  return out;
}

enum class JnMethod { frequency, time_domain };

/// Numeric cosine-transform companion of a frequency weight:
/// G_hat_R(xi) = (1/pi) * integral_0^inf G(u) cos(u xi) du for even G.
inline std::function<double(double)> time_weight_from_frequency(
    const std::function<double(double)>& G, const QuadratureRule& rule) {
  auto table = std::make_shared<std::vector<double>>(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) (*table)[i] = G(rule.u[i]);
  double du = rule.du;
  return [table, du](double xi) {
    return detail::filon_cos_integral(*table, du, xi) / M_PI;
  };
}

/// J_n = integral G(u) I_{Z,n}(u) du, by direct frequency quadrature or the
/// equivalent lag-domain double sum (1/n) sum_jk G_hat_R(tau_k - tau_j) Y_j Y_k.
inline double integrated_periodogram(
    const SampledSeries& series, const std::function<double(double)>& G,
    const QuadratureRule& rule, JnMethod method = JnMethod::frequency,
    const std::function<double(double)>* G_hat_R = nullptr) {
  if (series.n() < 1)
    throw std::invalid_argument("integrated_periodogram: empty series");
  if (method == JnMethod::frequency) {
    PeriodogramGrid I = periodogram_grid(series, rule);
    std::vector<double> integrand(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i)
      integrand[i] = G(rule.u[i]) * I.values[i];
    // tail closure assuming G ~ c/u^2 beyond the grid
    double tail = 2.0 * G(rule.u_max) * rule.u_max * I.tail_level;
    return rule.integrate(integrand) + tail;
  }
  std::function<double(double)> ghat =
      G_hat_R ? *G_hat_R : time_weight_from_frequency(G, rule);
  double n = static_cast<double>(series.n());
  double total = 0.0, comp = 0.0;
  for (std::size_t k = 0; k < series.n(); ++k) {
    for (std::size_t j = 0; j < series.n(); ++j) {
      double term = ghat(std::abs(series.times[k] - series.times[j])) *
                    series.values[k] * series.values[j];
      double y = term - comp;
      double t = total + y;
      comp = (t - total) - y;
      total = t;
    }
  }
  return total / n;
}

/// K_hat_n(theta) = integral log g(u, theta) / (1 + u^2) I_{Z,n}(u) du with the
/// flat-tail closure; the periodogram is theta-free and passed in precomputed.
inline double objective_khat(const WhittleContext& ctx,
                             const PeriodogramGrid& I,
                             const std::vector<double>& theta) {
  const GData& g = ctx.g_data(theta);
  const QuadratureRule& rule = ctx.rule();
  std::vector<double> integrand(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i)
    integrand[i] = g.log_g[i] / (1.0 + rule.u[i] * rule.u[i]) * I.values[i];
  return rule.integrate(integrand) +
         g.log_g_floor * I.tail_level * rule.tail_factor();
}

inline double objective_khat(const WhittleContext& ctx,
                             const SampledSeries& series,
                             const std::vector<double>& theta) {
  return objective_khat(ctx, periodogram_grid(series, ctx.rule()), theta);
}

/// Population objective K(theta) = integral log g(u, theta) / (1 + u^2)
/// phi_Z(u, theta0) du, maximized at theta0.
inline double objective_k(const WhittleContext& ctx,
                          const std::vector<double>& theta,
                          const CarmaModel& true_model) {
  SampledSpectrum spectrum(true_model, ctx.sampling());
  const QuadratureRule& rule = ctx.rule();
  std::vector<double> phi = spectrum.on_grid(rule);
  const GData& g = ctx.g_data(theta);
  std::vector<double> integrand(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i)
    integrand[i] = g.log_g[i] / (1.0 + rule.u[i] * rule.u[i]) * phi[i];
  return rule.integrate(integrand) +
         g.log_g_floor * spectrum.floor_value() * rule.tail_factor();
}

/// sigma_hat_L^2 = s_hat_n^2 / s_tilde^2(theta_hat): the empirical weighted
/// periodogram mass over the unit-noise normalizer. Both integrals close
/// their tails analytically whatever the rule's policy, so the ratio is not
/// distorted by the cutoff.
inline double estimate_noise_variance(const WhittleContext& ctx,
                                      const SampledSeries& series,
                                      const std::vector<double>& theta_hat) {
  PeriodogramGrid I = periodogram_grid(series, ctx.rule());
  const QuadratureRule& rule = ctx.rule();
  std::vector<double> integrand(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i)
    integrand[i] = I.values[i] / (1.0 + rule.u[i] * rule.u[i]);
  double shat2 =
      rule.integrate(integrand) + I.tail_level * rule.analytic_tail_mass();
  return shat2 / ctx.s_tilde2(theta_hat);
}

struct EstimateConfig {
  int starts = 5;
  std::uint64_t seed = 0x5eed;
  double x_tol = 1e-6;
  double f_tol = 1e-10;
};

struct EstimationResult {
  std::vector<double> theta_hat;
  double sigma_L2_hat = 0.0;
  double objective_value = 0.0;
  SamplingMode mode;
  std::size_t n_obs = 0;
  bool on_boundary = false;
  bool plateau = false;  // two starts reached distinct maximizers of equal value
  struct StartTrace {
    std::vector<double> start;
    std::vector<double> arg;
    double value = 0.0;
    int evals = 0;
    bool valid = false;
  };
  std::vector<StartTrace> trace;
  bool has_covariance = false;
  Eigen::MatrixXd sigma0;            // asymptotic covariance of sqrt(n) (theta_hat - theta)
  std::vector<double> std_errors;    // sqrt(diag(sigma0) / n)
};

/// Whittle estimator: maximizes K_hat_n over the box. Scalar parameters use a
/// scan plus golden-section search; higher dimensions run Nelder-Mead from
/// the box center and seeded Latin-hypercube starts.
///
/// The periodogram oscillates in u on the scale 2 pi / span, so a grid with
/// du above pi / span samples those oscillations instead of integrating them,
/// leaving a variance floor in every weighted integral that does not shrink
/// with n. The estimator therefore refines the grid step to resolve the
/// observation span before doing anything else.
inline EstimationResult estimate(const WhittleContext& ctx,
                                 const SampledSeries& series,
                                 const ParamBox& box,
                                 const EstimateConfig& config = {}) {
  std::size_t d = box.dim();
  if (static_cast<int>(d) != ctx.p() + ctx.q())
    throw std::invalid_argument("estimate: box dimension != p + q");
  if (series.n() < 2) throw std::invalid_argument("estimate: need n >= 2");

  double span = series.times.back() - series.times.front();
  double du_needed = M_PI / (1.1 * std::max(span, 1.0));
  std::optional<WhittleContext> refined;
  if (du_needed < ctx.rule().du) {
    refined.emplace(ctx.p(), ctx.q(), ctx.sampling(),
                    QuadratureRule(du_needed, ctx.rule().u_max,
                                   ctx.rule().tail_policy));
  }
  const WhittleContext& ectx = refined ? *refined : ctx;

  PeriodogramGrid I = periodogram_grid(series, ectx.rule());
  auto objective = [&](const std::vector<double>& theta) {
    try {
      return objective_khat(ectx, I, theta);
    } catch (const std::exception&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  EstimationResult result;
  result.mode = series.mode;
  result.n_obs = series.n();

  if (d == 1) {
    OptimResult r = golden_section_maximize(
        [&](double x) { return objective({x}); }, box.lower[0], box.upper[0],
        config.x_tol);
    if (!r.converged)
      throw std::runtime_error("estimate: objective invalid over the whole box");
    result.trace.push_back({box.center(), r.x, r.value, r.evals, true});
    result.theta_hat = r.x;
    result.objective_value = r.value;
  } else {
    // box center plus seeded Latin-hypercube starts
    std::vector<std::vector<double>> starts{box.center()};
    Rng rng = make_rng(config.seed, 0);
    int extra = std::max(0, config.starts - 1);
    std::vector<std::vector<double>> strata(d, std::vector<double>(extra));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (int s = 0; s < extra; ++s) strata[i][s] = (s + unif(rng)) / extra;
      std::shuffle(strata[i].begin(), strata[i].end(), rng);
    }
    for (int s = 0; s < extra; ++s) {
      std::vector<double> x(d);
      for (std::size_t i = 0; i < d; ++i)
        x[i] = box.lower[i] + strata[i][s] * (box.upper[i] - box.lower[i]);
      starts.push_back(std::move(x));
    }

    double best = -std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
      OptimResult r = nelder_mead_maximize(objective, start, box.lower,
                                           box.upper, config.x_tol, config.f_tol);
      bool valid = std::isfinite(r.value);
      result.trace.push_back({start, r.x, r.value, r.evals, valid});
      if (valid && r.value > best) {
        best = r.value;
        result.theta_hat = r.x;
        result.objective_value = r.value;
      }
    }
    if (result.theta_hat.empty())
      throw std::runtime_error("estimate: every start failed validation");
    for (const auto& t : result.trace) {
      if (!t.valid || t.value < best - 1e-8 * (1.0 + std::abs(best))) continue;
      for (std::size_t i = 0; i < d; ++i)
        if (std::abs(t.arg[i] - result.theta_hat[i]) > 1e-3) result.plateau = true;
    }
  }

  result.on_boundary = box.on_boundary(result.theta_hat);
  result.sigma_L2_hat = estimate_noise_variance(ectx, series, result.theta_hat);
  return result;
}

/// Numeric check of the identifiability assumption: minimum pairwise sup-norm
/// gap of g(., theta) over a finite set of parameter points.
struct AliasingReport {
  double min_gap = std::numeric_limits<double>::infinity();
  std::pair<std::size_t, std::size_t> min_pair{0, 0};
  bool warning = false;
  std::size_t n_points = 0;
};

inline AliasingReport aliasing_diagnostic(const WhittleContext& ctx,
                                          const std::vector<std::vector<double>>& thetas) {
  AliasingReport report;
  report.n_points = thetas.size();
  if (thetas.size() < 2) {
    report.min_gap = 0.0;
    return report;
  }
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const GData& gi = ctx.g_data(thetas[i]);
    for (std::size_t j = i + 1; j < thetas.size(); ++j) {
      const GData& gj = ctx.g_data(thetas[j]);
      double gap = 0.0;
      for (std::size_t m = 0; m < gi.g.size(); ++m)
        gap = std::max(gap, std::abs(gi.g[m] - gj.g[m]));
      if (gap < report.min_gap) {
        report.min_gap = gap;
        report.min_pair = {i, j};
      }
    }
  }
  report.warning = report.min_gap < 1e-6;
  return report;
}

}  // namespace carma_renewal
