#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "carma_renewal/rng.hpp"

namespace carma_renewal {

struct SamplingMoments {
  double mean;     // 1/beta
  double variance; // eta^2
  double fourth_central;
};

/// Observation-count mode for a renewal sample: either a fixed number of
/// arrivals or everything up to a fixed horizon T.
struct SamplingMode {
  enum class Kind { count, horizon } kind = Kind::count;
  std::size_t n = 0;
  double T = 0.0;

  static SamplingMode count(std::size_t n) {
    if (n < 1) throw std::invalid_argument("SamplingMode::count: n < 1");
    return {Kind::count, n, 0.0};
  }
  static SamplingMode horizon(double T) {
    if (T <= 0) throw std::invalid_argument("SamplingMode::horizon: T <= 0");
    return {Kind::horizon, 0, T};
  }
};

/// Positive arrivals tau_1 < tau_2 < ... of the renewal sequence; tau_0 = 0
/// is implicit and excluded from the observation window.
struct ArrivalTimes {
  std::vector<double> tau;
  SamplingMode mode;
};

namespace detail {

// In-place k-fold grid convolutions via FFT. Both factors live on
// [0, n*dt); padding to 2n makes each linear convolution exact on the kept
// half, so truncating back to n samples loses nothing below t_max.
class GridConvolver {
 public:
  GridConvolver(std::vector<double> density, double dt)
      : dt_(dt), n_(density.size()) {
    std::size_t padded = 1;
    while (padded < 2 * n_) padded <<= 1;
    padded_ = padded;
    folds_.push_back(std::move(density));
  }

  const std::vector<double>& fold(std::size_t k) {
    if (k < 1) throw std::invalid_argument("GridConvolver: k < 1");
    while (folds_.size() < k) {
      folds_.push_back(convolve(folds_.back(), folds_.front()));
    }
    return folds_[k - 1];
  }

  double dt() const { return dt_; }
  std::size_t size() const { return n_; }

 private:
  std::vector<double> convolve(const std::vector<double>& a,
                               const std::vector<double>& b) {
    static std::mutex plan_mutex;  // FFTW planning is not thread-safe
    std::size_t m = padded_ / 2 + 1;
    std::vector<double> in(padded_, 0.0), out(padded_, 0.0);
    std::vector<std::complex<double>> fa(m), fb(m);
    fftw_plan fwd, inv;
    {
      std::lock_guard<std::mutex> lock(plan_mutex);
      fwd = fftw_plan_dft_r2c_1d(static_cast<int>(padded_), in.data(),
                                 reinterpret_cast<fftw_complex*>(fa.data()),
                                 FFTW_ESTIMATE);
      inv = fftw_plan_dft_c2r_1d(static_cast<int>(padded_),
                                 reinterpret_cast<fftw_complex*>(fa.data()),
                                 out.data(), FFTW_ESTIMATE);
    }
    std::copy(a.begin(), a.end(), in.begin());
    std::fill(in.begin() + n_, in.end(), 0.0);
    fftw_execute(fwd);
    fb = fa;
    std::copy(b.begin(), b.end(), in.begin());
    std::fill(in.begin() + n_, in.end(), 0.0);
    fftw_execute(fwd);
    for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
    fftw_execute(inv);
    {
      std::lock_guard<std::mutex> lock(plan_mutex);
      fftw_destroy_plan(fwd);
      fftw_destroy_plan(inv);
    }
    std::vector<double> res(n_);
    double scale = dt_ / static_cast<double>(padded_);
    for (std::size_t i = 0; i < n_; ++i) res[i] = out[i] * scale;
    return res;
  }

  double dt_;
  std::size_t n_;
  std::size_t padded_;
  std::vector<std::vector<double>> folds_;
};

inline double log_gamma_density(double shape, double rate, double t) {
  // Gamma(shape, rate) density, log scale; t > 0
  return shape * std::log(rate) + (shape - 1.0) * std::log(t) - rate * t -
         std::lgamma(shape);
}

}  // namespace detail

/// Inter-arrival law of the renewal sampling sequence. Exponential and gamma
/// kinds carry closed-form k-fold convolutions; tabulated densities are
/// convolved on their grid.
class SamplingSpec {
 public:
  enum class Kind { exponential, gamma, tabulated };

  static constexpr int kRenewalSeriesMax = 500;
  static constexpr double kRenewalTermTol = 1e-10;

  static SamplingSpec exponential(double beta) {
    if (beta <= 0) throw std::invalid_argument("exponential: beta <= 0");
    SamplingSpec s;
    s.kind_ = Kind::exponential;
    s.rate_ = beta;
    return s;
  }

  static SamplingSpec gamma(double shape, double rate) {
    if (shape <= 0 || rate <= 0)
      throw std::invalid_argument("gamma: non-positive shape or rate");
    SamplingSpec s;
    s.kind_ = Kind::gamma;
    s.shape_ = shape;
    s.rate_ = rate;
    return s;
  }

  /// Density tabulated on the uniform grid t_i = i * dt. Normalized on
  /// construction. Continuity of the underlying density is a caller
  /// obligation; only positivity and normalizability are checked.
  static SamplingSpec tabulated(std::vector<double> density, double dt) {
    if (dt <= 0 || density.size() < 8)
      throw std::invalid_argument("tabulated: need dt > 0 and >= 8 grid points");
    double mass = 0.0;
    for (std::size_t i = 0; i < density.size(); ++i) {
      if (density[i] < 0 || !std::isfinite(density[i]))
        throw std::invalid_argument("tabulated: density must be finite and >= 0");
      double w = (i == 0 || i + 1 == density.size()) ? 0.5 : 1.0;
      mass += w * density[i] * dt;
    }
    if (mass <= 0) throw std::invalid_argument("tabulated: zero total mass");
    for (auto& v : density) v /= mass;
    SamplingSpec s;
    s.kind_ = Kind::tabulated;
    s.dt_ = dt;
    s.convolver_ = std::make_shared<detail::GridConvolver>(density, dt);
    s.build_cdf(density);
    return s;
  }

  /// Two-column CSV (t, f(t)) on a uniform grid.
  static SamplingSpec tabulated_from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open density CSV: " + path);
    std::vector<double> t, f;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string a, b;
      if (!std::getline(row, a, ',') || !std::getline(row, b)) continue;
      try {
        t.push_back(std::stod(a));
        f.push_back(std::stod(b));
      } catch (const std::exception&) {
        continue;  // header row
      }
    }
    if (t.size() < 8) throw std::runtime_error("density CSV too short: " + path);
    double dt = t[1] - t[0];
    for (std::size_t i = 1; i < t.size(); ++i)
      if (std::abs(t[i] - t[i - 1] - dt) > 1e-9 * std::max(1.0, dt))
        throw std::runtime_error("density CSV grid is not uniform: " + path);
    if (std::abs(t[0]) > 1e-12)
      throw std::runtime_error("density CSV must start at t = 0: " + path);
    return tabulated(std::move(f), dt);
  }

  Kind kind() const { return kind_; }
  double exp_rate() const { return rate_; }
  double gamma_shape() const { return shape_; }
  double gamma_rate() const { return rate_; }

  /// beta = 1 / mean inter-arrival time.
  double beta() const { return 1.0 / moments().mean; }

  SamplingMoments moments() const {
    SamplingMoments m{};
    switch (kind_) {
      case Kind::exponential:
        m.mean = 1.0 / rate_;
        m.variance = 1.0 / (rate_ * rate_);
        m.fourth_central = 9.0 / std::pow(rate_, 4);
        break;
      case Kind::gamma:
        m.mean = shape_ / rate_;
        m.variance = shape_ / (rate_ * rate_);
        m.fourth_central = 3.0 * shape_ * (shape_ + 2.0) / std::pow(rate_, 4);
        break;
      case Kind::tabulated: {
        double raw[5] = {0, 0, 0, 0, 0};
        const auto& f = convolver_->fold(1);
        for (std::size_t i = 0; i < f.size(); ++i) {
          double w = (i == 0 || i + 1 == f.size()) ? 0.5 : 1.0;
          double t = i * dt_;
          double base = w * f[i] * dt_;
          for (int k = 0; k <= 4; ++k) raw[k] += base * std::pow(t, k);
        }
        m.mean = raw[1];
        m.variance = raw[2] - raw[1] * raw[1];
        double mu = raw[1];
        m.fourth_central = raw[4] - 4 * mu * raw[3] + 6 * mu * mu * raw[2] -
                           3 * std::pow(mu, 4);
        break;
      }
    }
    return m;
  }

  double density(double t) const { return convolution_density(1, t); }

  /// k-fold convolution density f^{*k}(t).
  double convolution_density(int k, double t) const {
    if (k < 1) throw std::invalid_argument("convolution_density: k < 1");
    if (t < 0) throw std::invalid_argument("convolution_density: t < 0");
    switch (kind_) {
      case Kind::exponential:
        // Erlang(k, beta)
        if (t == 0) return k == 1 ? rate_ : 0.0;
        return std::exp(detail::log_gamma_density(k, rate_, t));
      case Kind::gamma:
        if (t == 0) {
          if (k * shape_ < 1) return std::numeric_limits<double>::infinity();
          if (k * shape_ == 1) return rate_;
          return 0.0;
        }
        return std::exp(detail::log_gamma_density(k * shape_, rate_, t));
      case Kind::tabulated: {
        const auto& grid = convolver_->fold(static_cast<std::size_t>(k));
        double x = t / dt_;
        auto i = static_cast<std::size_t>(x);
        if (i + 1 >= grid.size()) return 0.0;
        double frac = x - i;
        return grid[i] * (1.0 - frac) + grid[i + 1] * frac;
      }
    }
    throw std::logic_error("unreachable");
  }

  /// Renewal density r(t) = sum_k f^{*k}(t); identically beta for
  /// exponential inter-arrivals.
  double renewal_density(double t) const {
    if (t < 0) throw std::invalid_argument("renewal_density: t < 0");
    if (kind_ == Kind::exponential) return rate_;
    double sum = 0.0;
    double expected_folds = t * beta();
    for (int k = 1; k <= kRenewalSeriesMax; ++k) {
      double term = convolution_density(k, t);
      sum += term;
      // terms rise to a mode near k ~ beta*t, then decay geometrically
      if (k > expected_folds + 10.0 * std::sqrt(expected_folds + 1.0) + 10.0 &&
          term < kRenewalTermTol)
        return sum;
    }
    throw std::runtime_error(
        "renewal_density: series did not converge within " +
        std::to_string(kRenewalSeriesMax) + " folds at t = " + std::to_string(t));
  }

  double sample_spacing(Rng& rng) const {
    switch (kind_) {
      case Kind::exponential: {
        std::exponential_distribution<double> d(rate_);
        return d(rng);
      }
      case Kind::gamma: {
        std::gamma_distribution<double> d(shape_, 1.0 / rate_);
        return d(rng);
      }
      case Kind::tabulated: {
        std::uniform_real_distribution<double> d(0.0, 1.0);
        return sample_from_cdf(d(rng));
      }
    }
    throw std::logic_error("unreachable");
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::exponential:
        return "exponential(beta=" + std::to_string(rate_) + ")";
      case Kind::gamma:
        return "gamma(shape=" + std::to_string(shape_) +
               ", rate=" + std::to_string(rate_) + ")";
      case Kind::tabulated:
        return "tabulated(dt=" + std::to_string(dt_) + ")";
    }
    return {};
  }

 private:
  void build_cdf(const std::vector<double>& f) {
    cdf_.resize(f.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i > 0) acc += 0.5 * (f[i] + f[i - 1]) * dt_;
      cdf_[i] = acc;
    }
    for (auto& c : cdf_) c /= acc;
  }

  double sample_from_cdf(double p) const {
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), p);
    if (it == cdf_.begin()) return 0.0;
    if (it == cdf_.end()) return (cdf_.size() - 1) * dt_;
    std::size_t i = it - cdf_.begin();
    double c0 = cdf_[i - 1], c1 = cdf_[i];
    double frac = c1 > c0 ? (p - c0) / (c1 - c0) : 0.0;
    return (i - 1 + frac) * dt_;
  }

  Kind kind_ = Kind::exponential;
  double rate_ = 1.0;
  double shape_ = 1.0;
  double dt_ = 0.0;
  std::shared_ptr<detail::GridConvolver> convolver_;
  std::vector<double> cdf_;
};

/// Draws the renewal arrivals tau_1, tau_2, ... under the given mode.
/// Horizon mode keeps every tau_k <= T; a horizon shorter than the first
/// draw yields an empty series.
inline ArrivalTimes sample_arrivals(const SamplingSpec& spec,
                                    const SamplingMode& mode, Rng& rng) {
  ArrivalTimes out;
  out.mode = mode;
  double t = 0.0;
  if (mode.kind == SamplingMode::Kind::count) {
    out.tau.reserve(mode.n);
    for (std::size_t k = 0; k < mode.n; ++k) {
      double dt = spec.sample_spacing(rng);
      while (dt <= 0) dt = spec.sample_spacing(rng);
      t += dt;
      out.tau.push_back(t);
    }
  } else {
    for (;;) {
      double dt = spec.sample_spacing(rng);
      while (dt <= 0) dt = spec.sample_spacing(rng);
      t += dt;
      if (t > mode.T) break;
      out.tau.push_back(t);
    }
  }
  return out;
}

}  // namespace carma_renewal
