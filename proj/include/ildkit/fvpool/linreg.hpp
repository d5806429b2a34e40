#pragma once

#include <cmath>
#include <vector>

#include "ildkit/common.hpp"

namespace ildkit::fv {

// Affine multivariate linear model: scores = [features, 1] * W.
struct LinearModel {
  int p = 0;  // feature dimension
  int C = 0;  // target dimension
  std::vector<double> W;  // (p+1) x C row-major; last row is the bias
};

namespace detail {

// In-place Cholesky solve of A X = B for symmetric positive definite A
// (n x n), B n x m. Returns false when a pivot degenerates.
inline bool cholesky_solve(std::vector<double>& A, std::vector<double>& B, int n,
                           int m) {
  auto a = [&](int i, int j) -> double& { return A[static_cast<std::size_t>(i) * n + j]; };
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, a(i, i));
  for (int j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (int k = 0; k < j; ++k) diag -= a(j, k) * a(j, k);
    if (!(diag > max_diag * 1e-13)) return false;
    diag = std::sqrt(diag);
    a(j, j) = diag;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / diag;
    }
  }
  // forward then backward substitution on each column of B
  for (int col = 0; col < m; ++col) {
    for (int i = 0; i < n; ++i) {
      double s = B[static_cast<std::size_t>(i) * m + col];
      for (int k = 0; k < i; ++k) s -= a(i, k) * B[static_cast<std::size_t>(k) * m + col];
      B[static_cast<std::size_t>(i) * m + col] = s / a(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = B[static_cast<std::size_t>(i) * m + col];
      for (int k = i + 1; k < n; ++k) s -= a(k, i) * B[static_cast<std::size_t>(k) * m + col];
      B[static_cast<std::size_t>(i) * m + col] = s / a(i, i);
    }
  }
  return true;
}

}  // namespace detail

// Ridge least squares by normal equations; the bias row is excluded from the
// penalty, so lambda -> infinity drives predictions to the target means.
inline LinearModel mvregress_fit(const std::vector<double>& features, int n, int p,
                                 const std::vector<double>& targets, int C,
                                 double lambda) {
  if (lambda < 0) throw usage_error("mvregress_fit: lambda must be >= 0");
  if (n < 1) throw data_error("mvregress_fit: empty feature matrix");
  const int q = p + 1;

  // G = A^T A with A = [features, 1]; rhs = A^T Y
  std::vector<double> G(static_cast<std::size_t>(q) * q, 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(q) * C, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* f = features.data() + static_cast<std::size_t>(i) * p;
    const double* y = targets.data() + static_cast<std::size_t>(i) * C;
    for (int a = 0; a < q; ++a) {
      double fa = (a < p) ? f[a] : 1.0;
      if (fa == 0.0) continue;
      double* grow = G.data() + static_cast<std::size_t>(a) * q;
      for (int b = a; b < q; ++b) grow[b] += fa * ((b < p) ? f[b] : 1.0);
      double* rrow = rhs.data() + static_cast<std::size_t>(a) * C;
      for (int c = 0; c < C; ++c) rrow[c] += fa * y[c];
    }
  }
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < a; ++b)
      G[static_cast<std::size_t>(a) * q + b] = G[static_cast<std::size_t>(b) * q + a];
  for (int a = 0; a < p; ++a) G[static_cast<std::size_t>(a) * q + a] += lambda;

  if (!detail::cholesky_solve(G, rhs, q, C))
    throw numeric_error(
        "mvregress_fit: singular normal equations; use a ridge lambda > 0");

  LinearModel model;
  model.p = p;
  model.C = C;
  model.W = std::move(rhs);
  return model;
}

inline std::vector<double> mvregress_predict(const LinearModel& model,
                                             const std::vector<double>& features,
                                             int n) {
  const int p = model.p, C = model.C;
  std::vector<double> out(static_cast<std::size_t>(n) * C);
  for (int i = 0; i < n; ++i) {
    const double* f = features.data() + static_cast<std::size_t>(i) * p;
    double* o = out.data() + static_cast<std::size_t>(i) * C;
    for (int c = 0; c < C; ++c) o[c] = model.W[static_cast<std::size_t>(p) * C + c];
    for (int k = 0; k < p; ++k) {
      double fk = f[k];
      if (fk == 0.0) continue;
      const double* wrow = model.W.data() + static_cast<std::size_t>(k) * C;
      for (int c = 0; c < C; ++c) o[c] += fk * wrow[c];
    }
  }
  return out;
}

}  // namespace ildkit::fv
