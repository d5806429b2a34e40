#pragma once

#include <array>
#include <string>
#include <vector>

#include "ildkit/common.hpp"

namespace ildkit {

// Dense NCHW tensor of doubles. Dimensions that are unused stay at 1, so the
// same type serves batches, activation maps, weight blocks and flat vectors.
struct Tensor {
  int n = 1, c = 1, h = 1, w = 1;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

  static Tensor vec(int len) { return Tensor(1, len, 1, 1); }
  static Tensor mat(int rows, int cols) { return Tensor(rows, cols, 1, 1); }

  std::size_t size() const { return data.size(); }
  int plane() const { return h * w; }
  int chw() const { return c * h * w; }

  double& at(int in, int ic, int ih, int iw) {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw];
  }
  double at(int in, int ic, int ih, int iw) const {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw];
  }
  // row-major 2D access for (n, c, 1, 1) tensors
  double& operator()(int row, int col) {
    return data[static_cast<std::size_t>(row) * c + col];
  }
  double operator()(int row, int col) const {
    return data[static_cast<std::size_t>(row) * c + col];
  }

  double* ptr(int in) { return data.data() + static_cast<std::size_t>(in) * chw(); }
  const double* ptr(int in) const {
    return data.data() + static_cast<std::size_t>(in) * chw();
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) +
           "x" + std::to_string(w);
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace ildkit
