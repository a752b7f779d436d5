#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "carma_renewal/rng.hpp"

namespace carma_renewal {

struct NoiseMoments {
  double mean;            // always 0, increments are centered
  double variance;        // sigma_L^2 per unit time
  double fourth_moment;   // E[L(1)^4]
  double fourth_cumulant; // E[L(1)^4] - 3 sigma_L^4
};

/// Driving noise for the state equation. All kinds are centered at the
/// increment level so E[L(t)] = 0.
class NoiseSpec {
 public:
  enum class Kind { brownian, gamma, compound_poisson };

  /// Jump law for the compound Poisson kind.
  struct JumpLaw {
    enum class Kind { gaussian, two_point } kind = Kind::two_point;
    // gaussian: N(mean, sd^2); two_point: +value w.p. prob, -value otherwise.
    double mean = 0.0, sd = 1.0;
    double value = 1.0, prob = 0.5;

    double moment(int n) const {
      if (kind == Kind::gaussian) {
        // raw moments of N(mean, sd^2), n <= 4
        double m = mean, s2 = sd * sd;
        switch (n) {
          case 1: return m;
          case 2: return m * m + s2;
          case 3: return m * m * m + 3 * m * s2;
          case 4: return m * m * m * m + 6 * m * m * s2 + 3 * s2 * s2;
        }
      } else {
        double up = std::pow(value, n), dn = std::pow(-value, n);
        return prob * up + (1 - prob) * dn;
      }
      throw std::invalid_argument("JumpLaw::moment: order out of range");
    }
  };

  static NoiseSpec brownian(double sigma_L2) {
    if (sigma_L2 <= 0) throw std::invalid_argument("brownian: sigma_L2 <= 0");
    NoiseSpec s;
    s.kind_ = Kind::brownian;
    s.sigma_L2_ = sigma_L2;
    return s;
  }

  static NoiseSpec gamma(double shape, double rate) {
    if (shape <= 0 || rate <= 0)
      throw std::invalid_argument("gamma: non-positive shape or rate");
    NoiseSpec s;
    s.kind_ = Kind::gamma;
    s.shape_ = shape;
    s.rate_ = rate;
    s.sigma_L2_ = shape / (rate * rate);
    return s;
  }

  static NoiseSpec compound_poisson(double rate, JumpLaw jumps) {
    if (rate <= 0) throw std::invalid_argument("compound_poisson: rate <= 0");
    if (jumps.kind == JumpLaw::Kind::two_point &&
        (jumps.prob < 0 || jumps.prob > 1))
      throw std::invalid_argument("compound_poisson: jump prob outside [0,1]");
    NoiseSpec s;
    s.kind_ = Kind::compound_poisson;
    s.rate_ = rate;
    s.jumps_ = jumps;
    s.sigma_L2_ = rate * jumps.moment(2);
    if (s.sigma_L2_ <= 0)
      throw std::invalid_argument("compound_poisson: degenerate jump law");
    return s;
  }

  Kind kind() const { return kind_; }
  double sigma_L2() const { return sigma_L2_; }
  double gamma_shape() const { return shape_; }
  double gamma_rate() const { return rate_; }
  double cp_rate() const { return rate_; }
  const JumpLaw& cp_jumps() const { return jumps_; }

  /// Exact moments of L(1). For the centered processes the cumulants of
  /// order >= 2 are unchanged by centering: kappa_2 = sigma_L^2 and
  /// kappa_4 = E[L^4] - 3 sigma_L^4.
  NoiseMoments moments() const {
    NoiseMoments m{};
    m.mean = 0.0;
    m.variance = sigma_L2_;
    switch (kind_) {
      case Kind::brownian:
        m.fourth_cumulant = 0.0;
        break;
      case Kind::gamma:
        // Gamma(a, b) process: kappa_n(L(1)) = a (n-1)! / b^n
        m.fourth_cumulant = 6.0 * shape_ / std::pow(rate_, 4);
        break;
      case Kind::compound_poisson:
        m.fourth_cumulant = rate_ * jumps_.moment(4);
        break;
    }
    m.fourth_moment = m.fourth_cumulant + 3.0 * sigma_L2_ * sigma_L2_;
    return m;
  }

  /// One centered increment over a step of length h.
  double sample_increment(double h, Rng& rng) const {
    switch (kind_) {
      case Kind::brownian: {
        std::normal_distribution<double> d(0.0, std::sqrt(sigma_L2_ * h));
        return d(rng);
      }
      case Kind::gamma: {
        std::gamma_distribution<double> d(shape_ * h, 1.0 / rate_);
        return d(rng) - shape_ * h / rate_;
      }
      case Kind::compound_poisson: {
        std::poisson_distribution<long> count(rate_ * h);
        long n = count(rng);
        double sum = 0.0;
        if (jumps_.kind == JumpLaw::Kind::gaussian) {
          std::normal_distribution<double> d(jumps_.mean, jumps_.sd);
          for (long i = 0; i < n; ++i) sum += d(rng);
        } else {
          std::bernoulli_distribution d(jumps_.prob);
          for (long i = 0; i < n; ++i)
            sum += d(rng) ? jumps_.value : -jumps_.value;
        }
        return sum - rate_ * h * jumps_.moment(1);
      }
    }
    throw std::logic_error("unreachable");
  }

  std::vector<double> sample_increments(double h, std::size_t n_steps,
                                        Rng& rng) const {
    if (h <= 0 || n_steps < 1)
      throw std::invalid_argument("sample_increments: need h > 0, n_steps >= 1");
    std::vector<double> out(n_steps);
    for (auto& x : out) x = sample_increment(h, rng);
    return out;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::brownian:
        return "brownian(sigma_L2=" + std::to_string(sigma_L2_) + ")";
      case Kind::gamma:
        return "gamma(shape=" + std::to_string(shape_) +
               ", rate=" + std::to_string(rate_) + ")";
      case Kind::compound_poisson:
        return "compound_poisson(rate=" + std::to_string(rate_) + ")";
    }
    return {};
  }

 private:
  Kind kind_ = Kind::brownian;
  double sigma_L2_ = 1.0;
  double shape_ = 0.0;  // gamma
  double rate_ = 0.0;   // gamma rate or Poisson intensity
  JumpLaw jumps_{};
};

inline NoiseMoments noise_moments(const NoiseSpec& spec) { return spec.moments(); }

}  // namespace carma_renewal
