#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace carma_renewal {

struct NonStationaryError : std::runtime_error {
  double max_real_part;
  explicit NonStationaryError(double re)
      : std::runtime_error("autoregressive polynomial is not Hurwitz (max root real part " +
                           std::to_string(re) + ")"),
        max_real_part(re) {}
};

struct CommonRootError : std::runtime_error {
  std::complex<double> root;
  explicit CommonRootError(std::complex<double> z)
      : std::runtime_error("autoregressive and moving-average polynomials share the root " +
                           std::to_string(z.real()) + (z.imag() >= 0 ? "+" : "") +
                           std::to_string(z.imag()) + "i"),
        root(z) {}
};

/// Parameter vector theta = (a_1..a_p, b_0..b_{q-1}) with b_q = 1 implicit.
struct CarmaParams {
  int p = 1;
  int q = 0;
  std::vector<double> a;  // a_1..a_p
  std::vector<double> b;  // b_0..b_{q-1}
  double sigma_L2 = 1.0;

  static CarmaParams from_theta(int p, int q, const std::vector<double>& theta,
                                double sigma_L2 = 1.0) {
    if (p < 1 || q < 0 || q >= p)
      throw std::invalid_argument("CarmaParams: need p >= 1 and 0 <= q < p");
    if (static_cast<int>(theta.size()) != p + q)
      throw std::invalid_argument("CarmaParams: theta has wrong length");
    CarmaParams out;
    out.p = p;
    out.q = q;
    out.a.assign(theta.begin(), theta.begin() + p);
    out.b.assign(theta.begin() + p, theta.end());
    out.sigma_L2 = sigma_L2;
    return out;
  }

  std::vector<double> theta() const {
    std::vector<double> t = a;
    t.insert(t.end(), b.begin(), b.end());
    return t;
  }
};

/// Compact box in R^{p+q} for the parameter search.
struct ParamBox {
  std::vector<double> lower, upper;

  ParamBox() = default;
  ParamBox(std::vector<double> lo, std::vector<double> hi)
      : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size() || lower.empty())
      throw std::invalid_argument("ParamBox: bound size mismatch");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i]))
        throw std::invalid_argument("ParamBox: need lower < upper componentwise");
  }

  std::size_t dim() const { return lower.size(); }

  std::vector<double> center() const {
    std::vector<double> c(dim());
    for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
    return c;
  }

  std::vector<double> clamp(std::vector<double> x) const {
    for (std::size_t i = 0; i < dim(); ++i)
      x[i] = std::min(upper[i], std::max(lower[i], x[i]));
    return x;
  }

  bool on_boundary(const std::vector<double>& x, double tol_frac = 1e-4) const {
    for (std::size_t i = 0; i < dim(); ++i) {
      double tol = tol_frac * (upper[i] - lower[i]);
      if (x[i] - lower[i] < tol || upper[i] - x[i] < tol) return true;
    }
    return false;
  }
};

/// Validated CARMA(p,q) model in state-space form: companion matrix A,
/// observation vector b, and the stationary state covariance Sigma solving
/// A Sigma + Sigma A' = -e_p e_p'.
class CarmaModel {
 public:
  static constexpr double kHurwitzTol = 1e-8;
  static constexpr double kCommonRootTol = 1e-10;

  static CarmaModel validate(const CarmaParams& params) {
    if (params.p < 1 || params.q < 0 || params.q >= params.p)
      throw std::invalid_argument("CarmaModel: need p >= 1 and 0 <= q < p");
    if (static_cast<int>(params.a.size()) != params.p ||
        static_cast<int>(params.b.size()) != params.q)
      throw std::invalid_argument("CarmaModel: coefficient size mismatch");
    if (params.sigma_L2 <= 0)
      throw std::invalid_argument("CarmaModel: sigma_L2 <= 0");
    return CarmaModel(params);
  }

  const CarmaParams& params() const { return params_; }
  int p() const { return params_.p; }
  int q() const { return params_.q; }
  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b_vec() const { return b_; }
  const Eigen::MatrixXd& Sigma() const { return Sigma_; }
  const Eigen::VectorXcd& eigenvalues() const { return eigenvalues_; }

  /// Spectral abscissa (max real part of the roots of a); negative here.
  double spectral_abscissa() const { return abscissa_; }

  /// b' Sigma b, the flat aliasing floor of phi_Z divided by sigma_L^2.
  double bSb() const { return bSb_; }

  /// gamma_Y(0) = sigma_L^2 b' Sigma b.
  double gamma0() const { return params_.sigma_L2 * bSb_; }

  Eigen::MatrixXd matrix_exp(double t) const {
    if (t < 0) throw std::invalid_argument("matrix_exp: t < 0");
    if (params_.p == 1) {
      Eigen::MatrixXd m(1, 1);
      m(0, 0) = std::exp(A_(0, 0) * t);
      return m;
    }
    return (A_ * t).exp();
  }

  /// gamma_Y(h) = sigma_L^2 b' e^{A|h|} Sigma b. Even in h.
  double autocovariance(double h) const {
    double t = std::abs(h);
    if (expansion_ok_) {
      std::complex<double> acc = 0.0;
      for (int i = 0; i < params_.p; ++i)
        acc += gamma_coeff_[i] * std::exp(eigenvalues_[i] * t);
      return acc.real();
    }
    return params_.sigma_L2 * b_.dot(matrix_exp(t) * (Sigma_ * b_));
  }

  /// Kernel b' e^{At} e_p of the moving-average representation.
  double kernel(double t) const {
    if (expansion_ok_) {
      std::complex<double> acc = 0.0;
      for (int i = 0; i < params_.p; ++i)
        acc += kernel_coeff_[i] * std::exp(eigenvalues_[i] * t);
      return acc.real();
    }
    return b_.dot(matrix_exp(t).col(params_.p - 1));
  }

  std::complex<double> a_poly(std::complex<double> z) const {
    std::complex<double> acc = 1.0;
    for (int i = 0; i < params_.p; ++i) acc = acc * z + params_.a[i];
    return acc;
  }

  std::complex<double> b_poly(std::complex<double> z) const {
    // b(z) = b_0 + ... + b_{q-1} z^{q-1} + z^q
    std::complex<double> acc = 1.0;
    for (int j = params_.q - 1; j >= 0; --j) acc = acc * z + params_.b[j];
    return acc;
  }

  /// phi_Y(u) = sigma_L^2 / (2 pi) |b(iu)/a(iu)|^2.
  double spectral_density_y(double u) const {
    std::complex<double> iu(0.0, u);
    double num = std::norm(b_poly(iu));
    double den = std::norm(a_poly(iu));
    return params_.sigma_L2 / (2.0 * M_PI) * num / den;
  }

  /// True when the eigen-expansion coefficient path is in use (distinct,
  /// well-conditioned eigenvalues).
  bool expansion_available() const { return expansion_ok_; }

  /// Coefficients d_i with kernel(t) = Re sum_i d_i exp(lambda_i t).
  const std::vector<std::complex<double>>& kernel_coefficients() const {
    return kernel_coeff_;
  }

  double lyapunov_residual() const {
    Eigen::MatrixXd r = A_ * Sigma_ + Sigma_ * A_.transpose();
    r(params_.p - 1, params_.p - 1) += 1.0;
    return r.cwiseAbs().maxCoeff();
  }

 private:
  explicit CarmaModel(const CarmaParams& params) : params_(params) {
    int p = params.p;
    A_ = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i + 1 < p; ++i) A_(i, i + 1) = 1.0;
    for (int j = 0; j < p; ++j) A_(p - 1, j) = -params.a[p - 1 - j];

    Eigen::EigenSolver<Eigen::MatrixXd> es(A_);
    eigenvalues_ = es.eigenvalues();
    abscissa_ = eigenvalues_.real().maxCoeff();
    if (abscissa_ > -kHurwitzTol) throw NonStationaryError(abscissa_);

    // Common-root check: a is monic, so Res(a, b) = prod_i b(lambda_i).
    double scale = 1.0;
    std::complex<double> resultant = 1.0;
    int worst = 0;
    double worst_mag = std::numeric_limits<double>::max();
    for (int i = 0; i < p; ++i) {
      std::complex<double> bi = b_poly(eigenvalues_[i]);
      resultant *= bi;
      scale *= 1.0 + std::pow(std::abs(eigenvalues_[i]), params.q);
      if (std::abs(bi) < worst_mag) {
        worst_mag = std::abs(bi);
        worst = i;
      }
    }
    if (std::abs(resultant) < kCommonRootTol * scale)
      throw CommonRootError(eigenvalues_[worst]);

    solve_lyapunov();

    b_ = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < params.q; ++j) b_[j] = params.b[j];
    b_[params.q] = 1.0;
    bSb_ = b_.dot(Sigma_ * b_);

    build_expansion(es);
  }

  // A Sigma + Sigma A' = -e_p e_p', solved as a dense p^2 x p^2 linear
  // system; p is small so this is exact up to linear-algebra tolerance.
  void solve_lyapunov() {
    int p = params_.p;
    int n = p * p;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    auto idx = [p](int i, int j) { return i * p + j; };
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        for (int k = 0; k < p; ++k) {
          K(idx(i, j), idx(k, j)) += A_(i, k);
          K(idx(i, j), idx(i, k)) += A_(j, k);
        }
      }
    rhs[idx(p - 1, p - 1)] = -1.0;
    Eigen::VectorXd s = K.fullPivLu().solve(rhs);
    Sigma_.resize(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) Sigma_(i, j) = s[idx(i, j)];
    Sigma_ = 0.5 * (Sigma_ + Sigma_.transpose().eval());
  }

  // Eigen-expansion fast path for gamma_Y and the kernel; falls back to the
  // matrix exponential when the eigenvector basis is ill conditioned
  // (repeated roots).
  void build_expansion(const Eigen::EigenSolver<Eigen::MatrixXd>& es) {
    int p = params_.p;
    Eigen::MatrixXcd V = es.eigenvectors();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
    double cond = svd.singularValues()(0) /
                  svd.singularValues()(svd.singularValues().size() - 1);
    expansion_ok_ = std::isfinite(cond) && cond < 1e8;
    if (!expansion_ok_) return;
    Eigen::VectorXd bfull = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < params_.q; ++j) bfull[j] = params_.b[j];
    bfull[params_.q] = 1.0;
    Eigen::MatrixXcd Vinv = V.inverse();
    Eigen::RowVectorXcd bV = bfull.transpose().cast<std::complex<double>>() * V;
    Eigen::VectorXcd ve = Vinv.col(p - 1);  // V^-1 e_p
    Eigen::VectorXcd vs = Vinv * (Sigma_ * bfull).cast<std::complex<double>>();
    gamma_coeff_.resize(p);
    kernel_coeff_.resize(p);
    for (int i = 0; i < p; ++i) {
      gamma_coeff_[i] = params_.sigma_L2 * bV[i] * vs[i];
      kernel_coeff_[i] = bV[i] * ve[i];
    }
  }

  CarmaParams params_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  Eigen::MatrixXd Sigma_;
  Eigen::VectorXcd eigenvalues_;
  double abscissa_ = 0.0;
  double bSb_ = 0.0;
  bool expansion_ok_ = false;
  std::vector<std::complex<double>> gamma_coeff_, kernel_coeff_;
};

}  // namespace carma_renewal
