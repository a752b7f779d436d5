#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "carma_renewal/carma_model.hpp"

namespace carma_renewal {

struct OptimResult {
  std::vector<double> x;
  double value = -std::numeric_limits<double>::infinity();
  int evals = 0;
  bool converged = false;
};

/// Maximizes f on [lo, hi]: a coarse scan locates the best bracket, then
/// golden-section refines it. f may return -inf on invalid points.
inline OptimResult golden_section_maximize(
    const std::function<double(double)>& f, double lo, double hi,
    double x_tol = 1e-6, int scan_points = 64) {
  if (!(lo < hi)) throw std::invalid_argument("golden_section_maximize: lo >= hi");
  OptimResult res;
  double best_x = lo, best_v = -std::numeric_limits<double>::infinity();
  std::vector<double> xs(scan_points), vs(scan_points);
  for (int i = 0; i < scan_points; ++i) {
    xs[i] = lo + (hi - lo) * i / (scan_points - 1);
    vs[i] = f(xs[i]);
    ++res.evals;
    if (vs[i] > best_v) {
      best_v = vs[i];
      best_x = xs[i];
    }
  }
  int ib = 0;
  for (int i = 0; i < scan_points; ++i)
    if (xs[i] == best_x) ib = i;
  double a = xs[std::max(0, ib - 1)];
  double b = xs[std::min(scan_points - 1, ib + 1)];

  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  res.evals += 2;
  while (b - a > x_tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    }
    ++res.evals;
  }
  double xm = 0.5 * (a + b);
  double fm = f(xm);
  ++res.evals;
  if (f1 > fm) { fm = f1; xm = x1; }
  if (f2 > fm) { fm = f2; xm = x2; }
  if (best_v > fm) { fm = best_v; xm = best_x; }
  res.x = {xm};
  res.value = fm;
  res.converged = std::isfinite(fm);
  return res;
}

/// Nelder-Mead simplex maximization with projection onto a box. Vertices are
/// clamped before evaluation, which lets the simplex crawl along the boundary
/// instead of stalling there. f may return -inf.
inline OptimResult nelder_mead_maximize(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& start, const std::vector<double>& lower,
    const std::vector<double>& upper, double x_tol = 1e-6,
    double f_tol = 1e-10, int max_iter = 0) {
  std::size_t d = start.size();
  if (lower.size() != d || upper.size() != d)
    throw std::invalid_argument("nelder_mead_maximize: dimension mismatch");
  if (max_iter == 0) max_iter = 500 * static_cast<int>(d);

  auto clamp = [&](std::vector<double> x) {
    for (std::size_t i = 0; i < d; ++i)
      x[i] = std::min(upper[i], std::max(lower[i], x[i]));
    return x;
  };

  OptimResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evals;
    double v = f(x);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> simplex(d + 1, clamp(start));
  std::vector<double> fv(d + 1);
  for (std::size_t i = 0; i < d; ++i) {
    double span = upper[i] - lower[i];
    double step = 0.05 * span;
    if (simplex[i + 1][i] + step > upper[i]) step = -step;
    simplex[i + 1][i] += step;
    simplex[i + 1] = clamp(simplex[i + 1]);
  }
  for (std::size_t i = 0; i <= d; ++i) fv[i] = eval(simplex[i]);

  auto order = [&] {
    std::vector<std::size_t> idx(d + 1);
    for (std::size_t i = 0; i <= d; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return fv[a] > fv[b]; });
    std::vector<std::vector<double>> s2(d + 1);
    std::vector<double> f2(d + 1);
    for (std::size_t i = 0; i <= d; ++i) {
      s2[i] = simplex[idx[i]];
      f2[i] = fv[idx[i]];
    }
    simplex.swap(s2);
    fv.swap(f2);
  };

  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  for (int it = 0; it < max_iter; ++it) {
    order();
    double spread = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      spread = std::max(spread, std::abs(simplex[d][i] - simplex[0][i]));
    if (spread < x_tol && std::abs(fv[0] - fv[d]) < f_tol &&
        std::isfinite(fv[d])) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[i][j];
    }
    for (auto& c : centroid) c /= static_cast<double>(d);

    auto blend = [&](double coef) {
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j)
        x[j] = centroid[j] + coef * (centroid[j] - simplex[d][j]);
      return clamp(x);
    };

    std::vector<double> xr = blend(alpha);
    double fr = eval(xr);
    if (fr > fv[0]) {
      std::vector<double> xe = blend(gamma);
      double fe = eval(xe);
      if (fe > fr) {
        simplex[d] = xe;
        fv[d] = fe;
      } else {
        simplex[d] = xr;
        fv[d] = fr;
      }
    } else if (fr > fv[d - 1]) {
      simplex[d] = xr;
      fv[d] = fr;
    } else {
      std::vector<double> xc = blend(-rho);
      double fc = eval(xc);
      if (fc > fv[d]) {
        simplex[d] = xc;
        fv[d] = fc;
      } else {
        for (std::size_t i = 1; i <= d; ++i) {
          for (std::size_t j = 0; j < d; ++j)
            simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
          simplex[i] = clamp(simplex[i]);
          fv[i] = eval(simplex[i]);
        }
      }
    }
  }
  order();
  res.x = simplex[0];
  res.value = fv[0];
  return res;
}

}  // namespace carma_renewal
