#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/rng.hpp"

namespace ildkit::fv {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Diagonal-covariance Gaussian mixture over descriptor space.
struct GmmModel {
  int M = 0;  // components
  int D = 0;  // descriptor dimension
  MatRM means;      // M x D
  MatRM variances;  // M x D, floored
  Eigen::VectorXd weights;  // length M, sums to 1

  // Per-row log density by component, N x M. Shared by the E-step and the
  // Fisher encoder.
  MatRM log_component_density(const MatRM& X) const {
    MatRM A = (means.array() / variances.array()).matrix();  // M x D
    MatRM B = variances.array().inverse().matrix();          // M x D
    Eigen::VectorXd c(M);
    for (int m = 0; m < M; ++m) {
      double s = std::log(weights[m]);
      for (int d = 0; d < D; ++d)
        s -= 0.5 * (std::log(2.0 * M_PI * variances(m, d)) +
                    means(m, d) * means(m, d) / variances(m, d));
      c[m] = s;
    }
    MatRM L = X * A.transpose();
    L.noalias() -= 0.5 * (X.array().square().matrix() * B.transpose());
    L.rowwise() += c.transpose();
    return L;
  }

  // Posterior responsibilities gamma, N x M; each row sums to 1.
  MatRM responsibilities(const MatRM& X) const {
    MatRM L = log_component_density(X);
    for (int i = 0; i < L.rows(); ++i) {
      double mx = L(i, 0);
      for (int m = 1; m < M; ++m) mx = std::max(mx, L(i, m));
      double sum = 0.0;
      for (int m = 0; m < M; ++m) {
        L(i, m) = std::exp(L(i, m) - mx);
        sum += L(i, m);
      }
      for (int m = 0; m < M; ++m) L(i, m) /= sum;
    }
    return L;
  }
};

struct GmmFitOptions {
  int max_iters = 100;
  double rel_tol = 1e-6;
  int subsample_cap = 200000;  // 0 disables subsampling
  int kmeans_iters = 10;
};

struct GmmFitResult {
  GmmModel model;
  std::vector<double> loglik;  // mean log-likelihood per EM iteration
  int collapsed_components = 0;  // variance floor applications, recorded as warnings
};

namespace detail {

inline double sq_dist(const MatRM& X, int i, const MatRM& C, int m) {
  double s = 0.0;
  for (int d = 0; d < X.cols(); ++d) {
    double c = X(i, d) - C(m, d);
    s += c * c;
  }
  return s;
}

}  // namespace detail

// EM fit with k-means++-style seeding and a short k-means refinement. The
// log-likelihood is non-decreasing across EM iterations; fitting stops at
// rel_tol relative improvement or max_iters.
inline GmmFitResult gmm_fit(const MatRM& descriptors, int M, std::uint64_t seed,
                            const GmmFitOptions& opt = {}) {
  const int D = static_cast<int>(descriptors.cols());
  if (descriptors.rows() < M)
    throw data_error("gmm_fit: fewer descriptors (" +
                     std::to_string(descriptors.rows()) + ") than components (" +
                     std::to_string(M) + ")");
  Rng rng = Rng::stream(seed, "gmm");

  // Uniform seeded subsample when the pool is large.
  MatRM X;
  if (opt.subsample_cap > 0 && descriptors.rows() > opt.subsample_cap) {
    std::vector<int> idx(descriptors.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    X.resize(opt.subsample_cap, D);
    for (int i = 0; i < opt.subsample_cap; ++i) X.row(i) = descriptors.row(idx[i]);
  } else {
    X = descriptors;
  }
  const int N = static_cast<int>(X.rows());

  // Variance floor relative to the data spread per dimension.
  Eigen::VectorXd data_mean = Eigen::VectorXd::Zero(D);
  Eigen::VectorXd data_var = Eigen::VectorXd::Zero(D);
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d) data_mean[d] += X(i, d);
  data_mean /= N;
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d) {
      double c = X(i, d) - data_mean[d];
      data_var[d] += c * c;
    }
  data_var /= N;
  Eigen::VectorXd var_floor = (data_var.array() * 1e-6).max(1e-12);

  GmmFitResult result;
  GmmModel& g = result.model;
  g.M = M;
  g.D = D;
  g.means.resize(M, D);
  g.variances.resize(M, D);
  g.weights.resize(M);

  // k-means++ seeding: squared-distance-weighted draws.
  std::vector<double> d2(N, std::numeric_limits<double>::max());
  int first = static_cast<int>(rng.below(N));
  g.means.row(0) = X.row(first);
  for (int m = 1; m < M; ++m) {
    double total = 0.0;
    for (int i = 0; i < N; ++i) {
      d2[i] = std::min(d2[i], detail::sq_dist(X, i, g.means, m - 1));
      total += d2[i];
    }
    int pick = 0;
    if (total > 0) {
      double r = rng.uniform01() * total, acc = 0.0;
      for (int i = 0; i < N; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.below(N));
    }
    g.means.row(m) = X.row(pick);
  }

  // k-means refinement.
  std::vector<int> assign(N, 0);
  for (int it = 0; it < opt.kmeans_iters; ++it) {
    for (int i = 0; i < N; ++i) {
      int best = 0;
      double bd = detail::sq_dist(X, i, g.means, 0);
      for (int m = 1; m < M; ++m) {
        double dm = detail::sq_dist(X, i, g.means, m);
        if (dm < bd) {
          bd = dm;
          best = m;
        }
      }
      assign[i] = best;
    }
    MatRM sums = MatRM::Zero(M, D);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(M);
    for (int i = 0; i < N; ++i) {
      for (int d = 0; d < D; ++d) sums(assign[i], d) += X(i, d);
      counts[assign[i]] += 1.0;
    }
    for (int m = 0; m < M; ++m)
      if (counts[m] > 0) g.means.row(m) = sums.row(m) / counts[m];
  }

  // Initial variances/weights from the k-means partition.
  {
    MatRM sq = MatRM::Zero(M, D);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(M);
    for (int i = 0; i < N; ++i) {
      for (int d = 0; d < D; ++d) {
        double c = X(i, d) - g.means(assign[i], d);
        sq(assign[i], d) += c * c;
      }
      counts[assign[i]] += 1.0;
    }
    for (int m = 0; m < M; ++m) {
      if (counts[m] > 1)
        g.variances.row(m) = sq.row(m) / counts[m];
      else
        g.variances.row(m) = data_var.transpose();
      for (int d = 0; d < D; ++d)
        g.variances(m, d) = std::max(g.variances(m, d), var_floor[d]);
      g.weights[m] = std::max(counts[m] / N, 1e-10);
    }
    double wsum = 0.0;
    for (int m = 0; m < M; ++m) wsum += g.weights[m];
    g.weights /= wsum;
  }

  // EM iterations. X and X^2 are fixed, so the E-step reduces to two GEMMs.
  MatRM Xsq = X.array().square().matrix();
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iters; ++it) {
    MatRM L = g.log_component_density(X);
    double ll = 0.0;
    for (int i = 0; i < N; ++i) {
      double mx = L(i, 0);
      for (int m = 1; m < M; ++m) mx = std::max(mx, L(i, m));
      double sum = 0.0;
      for (int m = 0; m < M; ++m) {
        L(i, m) = std::exp(L(i, m) - mx);
        sum += L(i, m);
      }
      ll += mx + std::log(sum);
      for (int m = 0; m < M; ++m) L(i, m) /= sum;  // L now holds responsibilities
    }
    ll /= N;
    result.loglik.push_back(ll);

    Eigen::VectorXd Nk = Eigen::VectorXd::Zero(M);
    for (int i = 0; i < N; ++i)
      for (int m = 0; m < M; ++m) Nk[m] += L(i, m);
    MatRM mu = L.transpose() * X;       // M x D
    MatRM second = L.transpose() * Xsq; // M x D
    for (int m = 0; m < M; ++m) {
      double nk = std::max(Nk[m], 1e-10);
      mu.row(m) /= nk;
      for (int d = 0; d < D; ++d) {
        double var = second(m, d) / nk - mu(m, d) * mu(m, d);
        if (var < var_floor[d]) {
          var = var_floor[d];
          ++result.collapsed_components;
        }
        g.variances(m, d) = var;
      }
      g.weights[m] = std::max(Nk[m] / N, 1e-10);
    }
    g.means = mu;
    double wsum = 0.0;
    for (int m = 0; m < M; ++m) wsum += g.weights[m];
    g.weights /= wsum;

    if (it > 0 && ll - prev_ll <= opt.rel_tol * std::abs(prev_ll)) break;
    prev_ll = ll;
  }
  return result;
}

}  // namespace ildkit::fv
