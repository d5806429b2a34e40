// Independent oracles used by the test and acceptance suites. These stay
// deliberately naive (brute force, finite differences, O(n^2) statistics,
// external eigensolver) and never share code with the implementation paths
// they check.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "ildkit/evalkit.hpp"
#include "ildkit/synthdata.hpp"
#include "ildkit/tensor.hpp"

namespace oracles {

// relative error with a unit floor, the usual gradient-check metric
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// central finite difference of a scalar function
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// per-pixel tally, the slow way
inline ildkit::CountVector naive_counts(const ildkit::LabeledSlice& s) {
  ildkit::CountVector c{};
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      int id = s.mask_at(y, x);
      if (id >= 1 && id <= ildkit::kNumClasses) ++c[id - 1];
    }
  return c;
}

// Eqs. 7-9 as literal per-record set loops
struct NaiveOverall {
  double accuracy, precision, recall, f1;
};

inline NaiveOverall naive_multilabel(
    const std::vector<ildkit::evalkit::PredictionRecord>& records,
    const std::array<double, 4>& thr) {
  double acc = 0, prec = 0, rec = 0;
  for (const auto& r : records) {
    std::vector<int> T, S;
    for (int k = 0; k < 4; ++k) {
      if (r.true_labels[k]) T.push_back(k);
      if (r.scores[k] >= thr[k]) S.push_back(k);
    }
    int inter = 0;
    for (int t : T)
      for (int s : S)
        if (t == s) ++inter;
    int uni = static_cast<int>(T.size() + S.size()) - inter;
    if (T.empty() && S.empty()) {
      acc += 1;
      prec += 1;
      rec += 1;
    } else {
      if (uni > 0) acc += static_cast<double>(inter) / uni;
      if (!S.empty()) prec += static_cast<double>(inter) / S.size();
      if (!T.empty()) rec += static_cast<double>(inter) / T.size();
    }
  }
  double n = static_cast<double>(records.size());
  NaiveOverall o{acc / n, prec / n, rec / n, 0};
  o.f1 = (o.precision + o.recall > 0)
             ? 2 * o.precision * o.recall / (o.precision + o.recall)
             : 0;
  return o;
}

// Wilcoxon-Mann-Whitney with ties counted 1/2, all O(n^2) pairs
inline double pairwise_auc(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  long pairs = 0;
  double wins = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / pairs;
}

// average precision by an exhaustive sweep over distinct thresholds
inline double sweep_ap(const std::vector<double>& scores,
                       const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  long P = 0;
  for (int l : labels) P += (l != 0);
  double ap = 0, prev_recall = 0;
  for (double t : thresholds) {
    long tp = 0, pred = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++pred;
        tp += (labels[i] != 0);
      }
    }
    double recall = static_cast<double>(tp) / P;
    double precision = static_cast<double>(tp) / pred;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// confusion-matrix tally for one class
inline std::array<double, 3> naive_prf(
    const std::vector<ildkit::evalkit::PredictionRecord>& records, int cls,
    double thr) {
  long tp = 0, fp = 0, fn = 0;
  for (const auto& r : records) {
    bool t = r.true_labels[cls], p = r.scores[cls] >= thr;
    tp += t && p;
    fp += !t && p;
    fn += t && !p;
  }
  double prec = tp + fp > 0 ? double(tp) / (tp + fp) : 0;
  double rec = tp + fn > 0 ? double(tp) / (tp + fn) : 0;
  double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
  return {prec, rec, f1};
}

// top-p principal directions via Eigen's self-adjoint solver on the
// covariance matrix (the production path uses its own Jacobi solver)
inline Eigen::MatrixXd eigen_pca_basis(const std::vector<double>& X, int n, int d,
                                       int p) {
  Eigen::MatrixXd M(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) M(i, j) = X[static_cast<std::size_t>(i) * d + j];
  Eigen::RowVectorXd mean = M.colwise().mean();
  M.rowwise() -= mean;
  Eigen::MatrixXd cov = M.transpose() * M;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd basis(d, p);
  for (int j = 0; j < p; ++j) basis.col(j) = es.eigenvectors().col(d - 1 - j);
  return basis;
}

// dense ridge solve via Eigen (the production path uses its own Cholesky)
inline Eigen::MatrixXd eigen_ridge(const std::vector<double>& F, int n, int p,
                                   const std::vector<double>& Y, int C,
                                   double lambda) {
  Eigen::MatrixXd A(n, p + 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) A(i, j) = F[static_cast<std::size_t>(i) * p + j];
    A(i, p) = 1.0;
  }
  Eigen::MatrixXd Ym(n, C);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c) Ym(i, c) = Y[static_cast<std::size_t>(i) * C + c];
  Eigen::MatrixXd G = A.transpose() * A;
  for (int j = 0; j < p; ++j) G(j, j) += lambda;
  return G.ldlt().solve(A.transpose() * Ym);
}

}  // namespace oracles
