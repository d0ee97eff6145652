#pragma once

// Independent reference implementations used only by the tests.  Nothing in
// here may call into the code paths under test.

#include <cmath>
#include <functional>
#include <vector>

#include "nodetab/num/matrix.hpp"

namespace oracle {

using nodetab::num::Matrix;

// Central finite difference of a scalar function of one coordinate vector.
inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> x, double eps = 1e-5) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + eps;
    double hi = f(x);
    x[i] = keep - eps;
    double lo = f(x);
    x[i] = keep;
    g[i] = (hi - lo) / (2 * eps);
  }
  return g;
}

inline double rel_err(double got, double want, double floor = 1e-8) {
  return std::fabs(got - want) / std::max(std::fabs(want), floor);
}

inline double max_rel_err(const std::vector<double>& got, const std::vector<double>& want,
                          double floor = 1e-6) {
  double m = 0;
  for (size_t i = 0; i < got.size(); ++i) m = std::max(m, rel_err(got[i], want[i], floor));
  return m;
}

// exp(A) by scaling-and-squaring with a Taylor series; fine for the small
// well-conditioned matrices the tests use.
inline Matrix matrix_exp(const Matrix& A) {
  int n = A.rows();
  double norm = 0;
  for (int i = 0; i < n; ++i) {
    double r = 0;
    for (int j = 0; j < n; ++j) r += std::fabs(A(i, j));
    norm = std::max(norm, r);
  }
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  auto matmul = [n](const Matrix& X, const Matrix& Y) {
    Matrix Z(n, n);
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < n; ++p) {
        double x = X(i, p);
        for (int j = 0; j < n; ++j) Z.at(i, j) += x * Y(p, j);
      }
    return Z;
  };
  Matrix As(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) As.at(i, j) = A(i, j) * scale;
  Matrix E = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  for (int k = 1; k <= 24; ++k) {
    term = matmul(term, As);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) term.at(i, j) /= k;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) E.at(i, j) += term(i, j);
  }
  for (int s = 0; s < squarings; ++s) E = matmul(E, E);
  return E;
}

// y = exp(A) x
inline Matrix matrix_exp_apply(const Matrix& A, const Matrix& x) {
  Matrix E = matrix_exp(A);
  int n = A.rows();
  Matrix y(x.rows(), n);
  for (int r = 0; r < x.rows(); ++r)
    for (int i = 0; i < n; ++i) {
      double s = 0;
      for (int j = 0; j < n; ++j) s += E(i, j) * x(r, j);
      y.at(r, i) = s;
    }
  return y;
}

// E_{x~p}[log p(x)] for a 2-D isotropic Gaussian mixture, by midpoint
// quadrature of p log p over a box covering every component.
inline double gmm_expected_loglik_2d(const Matrix& means, const std::vector<double>& w,
                                     const std::vector<double>& sigma, double h) {
  const int k = means.rows();
  double smax = 0;
  for (double s : sigma) smax = std::max(smax, s);
  double lox = 1e300, hix = -1e300, loy = 1e300, hiy = -1e300;
  for (int c = 0; c < k; ++c) {
    lox = std::min(lox, means(c, 0));
    hix = std::max(hix, means(c, 0));
    loy = std::min(loy, means(c, 1));
    hiy = std::max(hiy, means(c, 1));
  }
  const double pad = 7.0 * smax;
  lox -= pad;
  hix += pad;
  loy -= pad;
  hiy += pad;
  const int nx = static_cast<int>(std::ceil((hix - lox) / h));
  const int ny = static_cast<int>(std::ceil((hiy - loy) / h));
  const double log2pi = std::log(2.0 * M_PI);
  double acc = 0;
  for (int ix = 0; ix < nx; ++ix) {
    double x = lox + (ix + 0.5) * h;
    for (int iy = 0; iy < ny; ++iy) {
      double y = loy + (iy + 0.5) * h;
      double mx = -1e300;
      double lp[64];
      for (int c = 0; c < k; ++c) {
        double dx = x - means(c, 0), dy = y - means(c, 1);
        lp[c] = std::log(w[c]) - log2pi - 2.0 * std::log(sigma[c]) -
                0.5 * (dx * dx + dy * dy) / (sigma[c] * sigma[c]);
        mx = std::max(mx, lp[c]);
      }
      double z = 0;
      for (int c = 0; c < k; ++c) z += std::exp(lp[c] - mx);
      double logp = mx + std::log(z);
      acc += std::exp(logp) * logp;
    }
  }
  return acc * h * h;
}

}  // namespace oracle
