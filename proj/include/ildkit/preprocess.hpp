#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/synthdata.hpp"
#include "ildkit/tensor.hpp"

namespace ildkit {

struct AttenuationWindow {
  int hu_low;
  int hu_high;

  AttenuationWindow(int lo, int hi) : hu_low(lo), hu_high(hi) {
    if (!(lo < hi)) throw usage_error("attenuation window requires hu_low < hu_high");
  }
};

// The three windows used for the network input channels: low highlights
// low-attenuation patterns (emphysema), normal covers the lung range, high
// brings out dense structures.
inline AttenuationWindow window_low() { return {-1400, -950}; }
inline AttenuationWindow window_normal() { return {-1400, 200}; }
inline AttenuationWindow window_high() { return {-160, 240}; }

// Linear remap of one HU value into [0, 255], clamped outside the window.
inline double window_rescale_value(double hu, const AttenuationWindow& w) {
  double t = (hu - w.hu_low) / static_cast<double>(w.hu_high - w.hu_low);
  return std::clamp(t, 0.0, 1.0) * 255.0;
}

inline std::vector<double> window_rescale(const std::vector<std::int16_t>& hu,
                                          const AttenuationWindow& w) {
  std::vector<double> out(hu.size());
  for (std::size_t i = 0; i < hu.size(); ++i)
    out[i] = window_rescale_value(static_cast<double>(hu[i]), w);
  return out;
}

// Corner-aligned bilinear resample of a single channel. Values never leave
// the input's [min, max] range because each output is a convex combination.
inline std::vector<double> resize_bilinear(const std::vector<double>& src, int sh,
                                           int sw, int th, int tw) {
  std::vector<double> dst(static_cast<std::size_t>(th) * tw);
  double sy = (th > 1) ? static_cast<double>(sh - 1) / (th - 1) : 0.0;
  double sx = (tw > 1) ? static_cast<double>(sw - 1) / (tw - 1) : 0.0;
  for (int y = 0; y < th; ++y) {
    double fy = y * sy;
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, sh - 1);
    double wy = fy - y0;
    for (int x = 0; x < tw; ++x) {
      double fx = x * sx;
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, sw - 1);
      double wx = fx - x0;
      double v00 = src[static_cast<std::size_t>(y0) * sw + x0];
      double v01 = src[static_cast<std::size_t>(y0) * sw + x1];
      double v10 = src[static_cast<std::size_t>(y1) * sw + x0];
      double v11 = src[static_cast<std::size_t>(y1) * sw + x1];
      dst[static_cast<std::size_t>(y) * tw + x] =
          (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
    }
  }
  return dst;
}

// Three windowed channels resized to target_size x target_size. Values stay
// real in [0, 255]; quantizing to 8 bits here would alias the learner.
inline Tensor make_input(const LabeledSlice& slice, int target_size,
                         const std::array<AttenuationWindow, 3>& windows = {
                             window_low(), window_normal(), window_high()}) {
  if (target_size < 8) throw usage_error("make_input: target_size must be >= 8");
  Tensor out(1, 3, target_size, target_size);
  for (int c = 0; c < 3; ++c) {
    auto chan = window_rescale(slice.hu, windows[c]);
    auto res = resize_bilinear(chan, slice.height, slice.width, target_size,
                               target_size);
    std::copy(res.begin(), res.end(),
              out.data.begin() + static_cast<std::size_t>(c) * out.plane());
  }
  return out;
}

}  // namespace ildkit
