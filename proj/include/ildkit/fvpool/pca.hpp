#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ildkit/common.hpp"

namespace ildkit::fv {

// Symmetric eigendecomposition by cyclic Jacobi rotations. Self-contained on
// purpose: the test suite checks PCA against an external eigensolver, so the
// production path must not be that solver.
struct SymEig {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // n x n row-major; column j pairs with values[j]
};

inline SymEig jacobi_eigensym(std::vector<double> a, int n) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto A = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  auto V = [&](int i, int j) -> double& { return v[static_cast<std::size_t>(i) * n + j]; };

  double frob = 0.0;
  for (double x : a) frob += x * x;
  frob = std::sqrt(frob);
  const double stop = std::max(1e-300, frob * 1e-15);

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * A(i, j) * A(i, j);
    if (std::sqrt(off) <= stop) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = A(p, q);
        if (std::abs(apq) <= stop / (n * n)) continue;
        double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return A(i, i) > A(j, j); });
  SymEig e;
  e.values.resize(n);
  e.vectors.resize(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    e.values[j] = A(order[j], order[j]);
    for (int i = 0; i < n; ++i)
      e.vectors[static_cast<std::size_t>(i) * n + j] = V(i, order[j]);
  }
  return e;
}

struct PcaModel {
  int d = 0;  // input dimension
  int p = 0;  // output dimension
  std::vector<double> mean;   // length d
  std::vector<double> basis;  // d x p row-major, orthonormal columns
};

// Top-p principal directions of the mean-centered data. Uses the Gram matrix
// route when n < d (the usual case for Fisher vectors), the covariance route
// otherwise. Column signs are fixed so refits are reproducible.
inline PcaModel pca_fit(const std::vector<double>& X, int n, int d, int p) {
  if (n < 2) throw usage_error("pca_fit: need at least 2 samples");
  if (p < 1 || p > std::min(n - 1, d))
    throw usage_error("pca_fit: p must satisfy 1 <= p <= min(n-1, d)");

  PcaModel model;
  model.d = d;
  model.p = p;
  model.mean.assign(d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) model.mean[j] += X[static_cast<std::size_t>(i) * d + j];
  for (double& m : model.mean) m /= n;

  std::vector<double> C(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      C[static_cast<std::size_t>(i) * d + j] =
          X[static_cast<std::size_t>(i) * d + j] - model.mean[j];

  model.basis.assign(static_cast<std::size_t>(d) * p, 0.0);
  if (d <= n) {
    // covariance route: S = C^T C (scale does not change directions)
    std::vector<double> S(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* r = C.data() + static_cast<std::size_t>(i) * d;
      for (int a = 0; a < d; ++a) {
        double ra = r[a];
        if (ra == 0.0) continue;
        double* srow = S.data() + static_cast<std::size_t>(a) * d;
        for (int b = 0; b < d; ++b) srow[b] += ra * r[b];
      }
    }
    SymEig e = jacobi_eigensym(std::move(S), d);
    double lmax = std::max(e.values[0], 0.0);
    for (int j = 0; j < p; ++j) {
      if (e.values[j] <= lmax * 1e-12)
        throw numeric_error("pca_fit: requested dimensions exceed data rank");
      for (int i = 0; i < d; ++i)
        model.basis[static_cast<std::size_t>(i) * p + j] =
            e.vectors[static_cast<std::size_t>(i) * d + j];
    }
  } else {
    // Gram route: G = C C^T, directions recovered as C^T u / sqrt(lambda)
    std::vector<double> G(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double s = 0.0;
        const double* ri = C.data() + static_cast<std::size_t>(i) * d;
        const double* rj = C.data() + static_cast<std::size_t>(j) * d;
        for (int k = 0; k < d; ++k) s += ri[k] * rj[k];
        G[static_cast<std::size_t>(i) * n + j] = s;
        G[static_cast<std::size_t>(j) * n + i] = s;
      }
    SymEig e = jacobi_eigensym(std::move(G), n);
    double lmax = std::max(e.values[0], 0.0);
    for (int j = 0; j < p; ++j) {
      double lambda = e.values[j];
      if (lambda <= lmax * 1e-12)
        throw numeric_error("pca_fit: requested dimensions exceed data rank");
      double inv = 1.0 / std::sqrt(lambda);
      for (int i = 0; i < n; ++i) {
        double u = e.vectors[static_cast<std::size_t>(i) * n + j] * inv;
        if (u == 0.0) continue;
        const double* ri = C.data() + static_cast<std::size_t>(i) * d;
        for (int k = 0; k < d; ++k)
          model.basis[static_cast<std::size_t>(k) * p + j] += u * ri[k];
      }
    }
  }

  // Deterministic sign: the largest-magnitude entry of each column is positive.
  for (int j = 0; j < p; ++j) {
    int arg = 0;
    double best = 0.0;
    for (int i = 0; i < d; ++i) {
      double x = std::abs(model.basis[static_cast<std::size_t>(i) * p + j]);
      if (x > best) {
        best = x;
        arg = i;
      }
    }
    if (model.basis[static_cast<std::size_t>(arg) * p + j] < 0)
      for (int i = 0; i < d; ++i)
        model.basis[static_cast<std::size_t>(i) * p + j] *= -1.0;
  }
  return model;
}

// Projects rows of X (n x d) onto the model subspace, n x p.
inline std::vector<double> pca_project(const PcaModel& model,
                                       const std::vector<double>& X, int n) {
  const int d = model.d, p = model.p;
  std::vector<double> out(static_cast<std::size_t>(n) * p, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = X.data() + static_cast<std::size_t>(i) * d;
    double* o = out.data() + static_cast<std::size_t>(i) * p;
    for (int k = 0; k < d; ++k) {
      double c = row[k] - model.mean[k];
      if (c == 0.0) continue;
      const double* b = model.basis.data() + static_cast<std::size_t>(k) * p;
      for (int j = 0; j < p; ++j) o[j] += c * b[j];
    }
  }
  return out;
}

}  // namespace ildkit::fv
