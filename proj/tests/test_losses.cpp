#include <catch2/catch_amalgamated.hpp>

#include "ildkit/nn/losses.hpp"
#include "ildkit/rng.hpp"
#include "oracles.hpp"

using namespace ildkit;
using namespace ildkit::nn;

namespace {
std::vector<double> ones(int n) { return std::vector<double>(n, 1.0); }
}  // namespace

TEST_CASE("multilabel logistic at f=0 is C*log2 per sample") {
  Tensor f = Tensor::mat(3, 4);
  Tensor y = Tensor::mat(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k) y(i, k) = (i + k) % 2 ? 1.0 : -1.0;
  Tensor grad;
  double loss = loss_multilabel_logistic(f, y, ones(4), grad);
  REQUIRE(loss == Catch::Approx(4.0 * std::log(2.0)).epsilon(1e-12));
  REQUIRE(loss == Catch::Approx(2.77259).margin(1e-5));
}

TEST_CASE("multilabel logistic saturates stably at large margins") {
  Tensor f = Tensor::mat(1, 4);
  Tensor y = Tensor::mat(1, 4);
  for (int k = 0; k < 4; ++k) {
    f(0, k) = 40.0;
    y(0, k) = 1.0;
  }
  Tensor grad;
  double loss = loss_multilabel_logistic(f, y, ones(4), grad);
  REQUIRE(loss < 4e-15);
  REQUIRE(std::isfinite(loss));

  // the opposite sign must not overflow either
  for (int k = 0; k < 4; ++k) f(0, k) = -745.0;
  double big = loss_multilabel_logistic(f, y, ones(4), grad);
  REQUIRE(std::isfinite(big));
  REQUIRE(big == Catch::Approx(4.0 * 745.0).epsilon(1e-12));
}

TEST_CASE("multilabel logistic rejects labels outside {-1,+1}") {
  Tensor f = Tensor::mat(1, 4);
  Tensor y = Tensor::mat(1, 4);
  y(0, 2) = 0.5;
  y(0, 0) = y(0, 1) = y(0, 3) = 1.0;
  Tensor grad;
  REQUIRE_THROWS_AS(loss_multilabel_logistic(f, y, ones(4), grad), data_error);
}

TEST_CASE("logistic loss gradient matches central finite differences") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = Tensor::mat(3, 4);
    Tensor y = Tensor::mat(3, 4);
    std::vector<double> beta(4);
    for (auto& b : beta) b = rng.uniform(0.1, 1.0);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 4; ++k) {
        f(i, k) = rng.normal(0, 2);
        y(i, k) = rng.bernoulli(0.5) ? 1.0 : -1.0;
      }
    Tensor grad;
    loss_multilabel_logistic(f, y, beta, grad);
    double worst = 0;
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 4; ++k) {
        double fd = oracles::central_diff(
            [&](double v) {
              Tensor fp = f;
              fp(i, k) = v;
              Tensor g;
              return loss_multilabel_logistic(fp, y, beta, g);
            },
            f(i, k));
        worst = std::max(worst, oracles::rel_err(grad(i, k), fd));
      }
    REQUIRE(worst < 1e-6);
  }
}

TEST_CASE("smooth L1 point values and breakpoint") {
  REQUIRE(smooth_l1(0.5) == Catch::Approx(0.125).epsilon(1e-15));
  REQUIRE(smooth_l1(2.0) == Catch::Approx(1.5).epsilon(1e-15));
  REQUIRE(smooth_l1(-2.0) == Catch::Approx(1.5).epsilon(1e-15));
  // both branches meet at |x|=1 with matching value and slope
  REQUIRE(smooth_l1(1.0) == Catch::Approx(0.5).epsilon(1e-15));
  REQUIRE(smooth_l1_deriv(std::nextafter(1.0, 0.0)) == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(smooth_l1_deriv(std::nextafter(1.0, 2.0)) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("smooth L1 is bounded by the quadratic, equality iff |x|<=1") {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    double x = rng.uniform(-8.0, 8.0);
    double s = smooth_l1(x), q = 0.5 * x * x;
    REQUIRE(s <= q + 1e-15);
    if (std::abs(x) <= 1.0)
      REQUIRE(s == Catch::Approx(q).margin(1e-15));
    else
      REQUIRE(s < q);
    REQUIRE(smooth_l1(-x) == Catch::Approx(s).margin(0));  // even
  }
}

TEST_CASE("regression loss values and gradients match finite differences") {
  Rng rng(99);
  for (auto kind : {RegressionKind::l2, RegressionKind::smooth_l1}) {
    for (int trial = 0; trial < 10; ++trial) {
      Tensor f = Tensor::mat(2, 4);
      Tensor y = Tensor::mat(2, 4);
      std::vector<double> beta(4);
      for (auto& b : beta) b = rng.uniform(0.1, 1.0);
      for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 4; ++k) {
          f(i, k) = rng.normal(0, 2);
          y(i, k) = rng.normal(0, 2);
          // keep residuals away from the smooth-L1 breakpoint
          while (std::abs(std::abs(y(i, k) - f(i, k)) - 1.0) < 1e-4)
            y(i, k) += 0.01;
        }
      Tensor grad;
      loss_regression(f, y, kind, beta, grad);
      for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 4; ++k) {
          double fd = oracles::central_diff(
              [&](double v) {
                Tensor fp = f;
                fp(i, k) = v;
                Tensor g;
                return loss_regression(fp, y, kind, beta, g);
              },
              f(i, k));
          REQUIRE(oracles::rel_err(grad(i, k), fd) < 1e-6);
        }
    }
  }
}

TEST_CASE("regression loss rejects non-finite targets") {
  Tensor f = Tensor::mat(1, 4);
  Tensor y = Tensor::mat(1, 4);
  y(0, 1) = std::numeric_limits<double>::quiet_NaN();
  Tensor grad;
  REQUIRE_THROWS_AS(loss_regression(f, y, RegressionKind::l2, ones(4), grad),
                    data_error);
}

TEST_CASE("class balance weights: symmetry and sum identity") {
  ClassStats eq{{100, 100, 100, 100}, 400};
  auto beta = class_balance_weights(eq, 4);
  for (double b : beta) REQUIRE(b == Catch::Approx(3.0 / 16.0).epsilon(1e-15));

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    ClassStats st;
    st.positives.resize(4);
    st.total = 0;
    for (auto& p : st.positives) {
      p = static_cast<double>(rng.uniform_int(1, 100000));
      st.total += p;
    }
    auto b = class_balance_weights(st, 4);
    double sum = b[0] + b[1] + b[2] + b[3];
    REQUIRE(sum == Catch::Approx(0.75).epsilon(1e-14));
    for (double v : b) REQUIRE(v > 0);
  }
}

TEST_CASE("class balance weights for the reference slice counts") {
  // positives per pattern: 41194, 20560, 17392, 36328
  ClassStats st{{41194, 20560, 17392, 36328}, 0};
  for (double p : st.positives) st.total += p;
  REQUIRE(st.total == 115474);
  auto beta = class_balance_weights(st, 4);
  // exact ratios (|Y|-|Y_k|)/(4|Y|)
  REQUIRE(beta[0] == Catch::Approx(74280.0 / 461896.0).margin(1e-9));
  REQUIRE(beta[1] == Catch::Approx(94914.0 / 461896.0).margin(1e-9));
  REQUIRE(beta[2] == Catch::Approx(98082.0 / 461896.0).margin(1e-9));
  REQUIRE(beta[3] == Catch::Approx(79146.0 / 461896.0).margin(1e-9));
  REQUIRE(beta[0] == Catch::Approx(0.16082).margin(1e-5));
  REQUIRE(beta[1] == Catch::Approx(0.20549).margin(1e-5));
  REQUIRE(beta[2] == Catch::Approx(0.21235).margin(1e-5));
  REQUIRE(beta[3] == Catch::Approx(0.17135).margin(1e-5));
}

TEST_CASE("class balance weights reject an empty dataset") {
  ClassStats st{{0, 0, 0, 0}, 0};
  REQUIRE_THROWS_AS(class_balance_weights(st, 4), data_error);
}

TEST_CASE("softmax cross entropy: rows sum to one, gradient matches FD") {
  Rng rng(5);
  Tensor f = Tensor::mat(3, 5);
  std::vector<int> labels = {0, 3, 4};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 5; ++k) f(i, k) = rng.normal(0, 2);
  for (int i = 0; i < 3; ++i) {
    auto p = softmax_row(f, i);
    double sum = 0;
    for (double v : p) sum += v;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }
  Tensor grad;
  loss_softmax_xent(f, labels, grad);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 5; ++k) {
      double fd = oracles::central_diff(
          [&](double v) {
            Tensor fp = f;
            fp(i, k) = v;
            Tensor g;
            return loss_softmax_xent(fp, labels, g);
          },
          f(i, k));
      REQUIRE(oracles::rel_err(grad(i, k), fd) < 1e-6);
    }
}
