#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/tensor.hpp"

namespace ildkit::nn {

enum class LossHead { multilabel_logistic, regression_l2, regression_smooth_l1 };

struct LossSpec {
  LossHead head = LossHead::multilabel_logistic;
  std::vector<double> class_weights;  // beta_k; all 1 when balancing is off

  static LossSpec make(LossHead h, int num_classes) {
    LossSpec s;
    s.head = h;
    s.class_weights.assign(num_classes, 1.0);
    return s;
  }
};

struct ClassStats {
  std::vector<double> positives;  // |Y_k|
  double total = 0;               // |Y| = sum_k |Y_k|
};

// beta_k = (1 - |Y_k|/|Y|) / C. The weights always sum to (C-1)/C.
inline std::vector<double> class_balance_weights(const ClassStats& stats, int C) {
  if (!(stats.total > 0))
    throw data_error("class_balance_weights: total positive count is zero");
  if (static_cast<int>(stats.positives.size()) != C)
    throw data_error("class_balance_weights: positives length != C");
  std::vector<double> beta(C);
  for (int k = 0; k < C; ++k) {
    if (stats.positives[k] < 0)
      throw data_error("class_balance_weights: negative class count");
    beta[k] = (1.0 - stats.positives[k] / stats.total) / C;
  }
  return beta;
}

inline ClassStats class_stats_from_labels(const Tensor& y01) {
  ClassStats st;
  st.positives.assign(y01.c, 0.0);
  for (int i = 0; i < y01.n; ++i)
    for (int k = 0; k < y01.c; ++k) st.positives[k] += (y01(i, k) > 0.5) ? 1.0 : 0.0;
  for (double p : st.positives) st.total += p;
  return st;
}

namespace detail {

// log(1 + exp(z)) without overflow for large |z|
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// Sum of C binary logistic losses, y in {-1,+1}, optionally class-weighted.
// Returns the batch-mean loss and d(loss)/d(f).
inline double loss_multilabel_logistic(const Tensor& f, const Tensor& y,
                                       const std::vector<double>& beta,
                                       Tensor& grad) {
  if (!f.same_shape(y))
    throw data_error("multilabel logistic: scores and labels differ in shape");
  if (static_cast<int>(beta.size()) != f.c)
    throw data_error("multilabel logistic: weight vector length != C");
  grad = Tensor::mat(f.n, f.c);
  double total = 0.0;
  const double inv_n = 1.0 / f.n;
  for (int i = 0; i < f.n; ++i) {
    for (int k = 0; k < f.c; ++k) {
      double yk = y(i, k);
      if (yk != 1.0 && yk != -1.0)
        throw data_error("multilabel logistic: label not in {-1,+1}");
      double z = -yk * f(i, k);
      total += beta[k] * detail::softplus(z);
      grad(i, k) = beta[k] * (-yk) * detail::sigmoid(z) * inv_n;
    }
  }
  return total * inv_n;
}

inline double smooth_l1(double x) {
  double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_deriv(double x) {
  double a = std::abs(x);
  return a < 1.0 ? x : (x > 0 ? 1.0 : -1.0);
}

enum class RegressionKind { l2, smooth_l1 };

// L(y, f) = sum_k beta_k * L_reg(y_k - f_k), batch-averaged.
inline double loss_regression(const Tensor& f, const Tensor& y, RegressionKind kind,
                              const std::vector<double>& beta, Tensor& grad) {
  if (!f.same_shape(y))
    throw data_error("regression loss: scores and targets differ in shape");
  if (static_cast<int>(beta.size()) != f.c)
    throw data_error("regression loss: weight vector length != C");
  grad = Tensor::mat(f.n, f.c);
  double total = 0.0;
  const double inv_n = 1.0 / f.n;
  for (int i = 0; i < f.n; ++i) {
    for (int k = 0; k < f.c; ++k) {
      double t = y(i, k);
      if (!std::isfinite(t)) throw data_error("regression loss: non-finite target");
      double x = t - f(i, k);  // residual
      if (kind == RegressionKind::l2) {
        total += beta[k] * x * x;
        grad(i, k) = beta[k] * (-2.0 * x) * inv_n;
      } else {
        total += beta[k] * smooth_l1(x);
        grad(i, k) = beta[k] * (-smooth_l1_deriv(x)) * inv_n;
      }
    }
  }
  return total * inv_n;
}

// Single-label softmax cross-entropy; used by the patch baseline (healthy +
// four pattern classes).
inline double loss_softmax_xent(const Tensor& f, const std::vector<int>& labels,
                                Tensor& grad) {
  if (static_cast<int>(labels.size()) != f.n)
    throw data_error("softmax loss: label count != batch size");
  grad = Tensor::mat(f.n, f.c);
  double total = 0.0;
  const double inv_n = 1.0 / f.n;
  for (int i = 0; i < f.n; ++i) {
    int lab = labels[i];
    if (lab < 0 || lab >= f.c) throw data_error("softmax loss: label out of range");
    double mx = f(i, 0);
    for (int k = 1; k < f.c; ++k) mx = std::max(mx, f(i, k));
    double sum = 0.0;
    for (int k = 0; k < f.c; ++k) sum += std::exp(f(i, k) - mx);
    double lse = mx + std::log(sum);
    total += lse - f(i, lab);
    for (int k = 0; k < f.c; ++k) {
      double p = std::exp(f(i, k) - lse);
      grad(i, k) = (p - (k == lab ? 1.0 : 0.0)) * inv_n;
    }
  }
  return total * inv_n;
}

inline std::vector<double> softmax_row(const Tensor& f, int row) {
  double mx = f(row, 0);
  for (int k = 1; k < f.c; ++k) mx = std::max(mx, f(row, k));
  double sum = 0.0;
  std::vector<double> p(f.c);
  for (int k = 0; k < f.c; ++k) {
    p[k] = std::exp(f(row, k) - mx);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace ildkit::nn
