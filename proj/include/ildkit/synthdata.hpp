#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/rng.hpp"

namespace ildkit {

// Class ids inside the pixel mask. 0 is healthy lung / background.
enum : std::uint8_t {
  kMaskHealthy = 0,
  kMaskGroundGlass = 1,
  kMaskReticular = 2,
  kMaskHoneycomb = 3,
  kMaskEmphysema = 4,
};

// One synthetic axial slice: signed HU grid plus a per-pixel class mask.
struct LabeledSlice {
  int height = 0;
  int width = 0;
  std::vector<std::int16_t> hu;   // row-major, range [-1400, 400]
  std::vector<std::uint8_t> mask; // row-major, values 0..4
  std::string patient_id;

  std::int16_t hu_at(int y, int x) const { return hu[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t mask_at(int y, int x) const {
    return mask[static_cast<std::size_t>(y) * width + x];
  }
};

using CountVector = std::array<std::int64_t, kNumClasses>;
using LabelVector = std::array<double, kNumClasses>;

// Pixel-count -> label transfer functions.
struct LabelMapping {
  enum class Kind { identity, step, piecewise };
  Kind kind = Kind::step;
  double T = 6000;        // step threshold; label 1 iff count >= T
  double T1 = 3000;       // piecewise: 0 below T1 ...
  double T2 = 6000;       // ... 1 above T2, linear in between

  static LabelMapping identity() { return {Kind::identity, 0, 0, 0}; }
  static LabelMapping step(double t) {
    if (!(t > 0)) throw usage_error("step mapping requires threshold T > 0");
    return {Kind::step, t, t / 2, t};
  }
  static LabelMapping piecewise(double t1, double t2) {
    if (!(t1 >= 0 && t1 < t2))
      throw usage_error("piecewise mapping requires 0 <= T1 < T2");
    return {Kind::piecewise, t2, t1, t2};
  }
};

inline CountVector mask_to_counts(const LabeledSlice& slice) {
  CountVector counts{};
  for (std::uint8_t m : slice.mask) {
    if (m >= 1 && m <= kNumClasses) ++counts[m - 1];
  }
  return counts;
}

inline LabelVector map_counts_to_labels(const CountVector& counts,
                                        const LabelMapping& mapping) {
  LabelVector y{};
  for (int k = 0; k < kNumClasses; ++k) {
    double c = static_cast<double>(counts[k]);
    switch (mapping.kind) {
      case LabelMapping::Kind::identity:
        y[k] = c;
        break;
      case LabelMapping::Kind::step:
        y[k] = (c >= mapping.T) ? 1.0 : 0.0;
        break;
      case LabelMapping::Kind::piecewise:
        if (c <= mapping.T1)
          y[k] = 0.0;
        else if (c >= mapping.T2)
          y[k] = 1.0;
        else
          y[k] = (c - mapping.T1) / (mapping.T2 - mapping.T1);
        break;
    }
  }
  return y;
}

// Texture knobs for the generator; all spatial quantities are fractions of
// the grid side so the same settings work at 64x64 and 512x512.
struct TextureParams {
  double lesion_min_frac = 0.11;  // min lesion radius / grid side
  double lesion_max_frac = 0.22;
  int max_lesions_per_class = 2;
  double lung_noise_sd = 14.0;    // HU noise inside healthy lung
};

struct GeneratorSpec {
  int num_patients = 100;
  int slices_per_patient = 8;
  int grid_size = 64;
  std::array<double, kNumClasses> prevalence = {0.45, 0.40, 0.40, 0.45};
  TextureParams texture;

  void validate() const {
    if (num_patients < 1) throw usage_error("generator: num_patients must be >= 1");
    if (slices_per_patient < 1)
      throw usage_error("generator: slices_per_patient must be >= 1");
    if (grid_size < 32) throw usage_error("generator: grid_size must be >= 32");
    for (double p : prevalence)
      if (!(p >= 0.0 && p <= 1.0))
        throw usage_error("generator: prevalence entries must lie in [0,1]");
    if (!(texture.lesion_min_frac > 0 &&
          texture.lesion_min_frac <= texture.lesion_max_frac &&
          texture.lesion_max_frac < 0.5))
      throw usage_error("generator: lesion radius fractions out of range");
    if (texture.max_lesions_per_class < 1)
      throw usage_error("generator: max_lesions_per_class must be >= 1");
  }
};

namespace detail {

struct Ellipse {
  double cx, cy, rx, ry, rot;

  bool contains(double x, double y) const {
    double dx = x - cx, dy = y - cy;
    double c = std::cos(rot), s = std::sin(rot);
    double u = (dx * c + dy * s) / rx;
    double v = (-dx * s + dy * c) / ry;
    return u * u + v * v <= 1.0;
  }
};

inline std::int16_t clamp_hu(double v) {
  return static_cast<std::int16_t>(std::lround(std::clamp(v, -1400.0, 400.0)));
}

// Paints one lesion of class `cls` into hu/mask, clipped to the lung region.
inline void paint_lesion(LabeledSlice& s, const Ellipse& lesion, const Ellipse& lung,
                         int cls, Rng& rng) {
  const int H = s.height, W = s.width;
  const double scale = std::min(H, W) / 64.0;
  int x0 = std::max(0, static_cast<int>(lesion.cx - lesion.rx - lesion.ry) - 1);
  int x1 = std::min(W - 1, static_cast<int>(lesion.cx + lesion.rx + lesion.ry) + 1);
  int y0 = std::max(0, static_cast<int>(lesion.cy - lesion.rx - lesion.ry) - 1);
  int y1 = std::min(H - 1, static_cast<int>(lesion.cy + lesion.rx + lesion.ry) + 1);

  // Per-lesion texture parameters, drawn before the pixel loop so the pixel
  // visit order is the only thing that consumes per-pixel randomness.
  double ret_period = std::max(3.0, rng.uniform(4.0, 7.0) * scale);
  double ret_rot = rng.uniform(0.0, 3.14159265358979323846);
  double hc_cell = std::max(4.0, rng.uniform(5.5, 8.0) * scale);
  double hc_rot = rng.uniform(0.0, 3.14159265358979323846);
  double gg_phase_x = rng.uniform(0.0, 6.28318530717958647692);
  double gg_phase_y = rng.uniform(0.0, 6.28318530717958647692);
  double gg_freq = rng.uniform(0.06, 0.12) / scale;

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!lesion.contains(x, y) || !lung.contains(x, y)) continue;
      double hu = 0.0;
      switch (cls) {
        case kMaskGroundGlass: {
          double lf = std::sin(gg_freq * x * 6.28318530717958647692 + gg_phase_x) +
                      std::sin(gg_freq * y * 6.28318530717958647692 + gg_phase_y);
          hu = -630.0 + 35.0 * lf + rng.normal(0.0, 30.0);
          break;
        }
        case kMaskReticular: {
          double c = std::cos(ret_rot), sn = std::sin(ret_rot);
          double u = x * c + y * sn, v = -x * sn + y * c;
          double mu = u - ret_period * std::floor(u / ret_period);
          double mv = v - ret_period * std::floor(v / ret_period);
          bool on_line = mu < 1.4 * scale || mv < 1.4 * scale;
          hu = on_line ? -300.0 + rng.normal(0.0, 50.0) : -740.0 + rng.normal(0.0, 25.0);
          break;
        }
        case kMaskHoneycomb: {
          double c = std::cos(hc_rot), sn = std::sin(hc_rot);
          double u = x * c + y * sn, v = -x * sn + y * c;
          double mu = u - hc_cell * std::floor(u / hc_cell) - hc_cell / 2;
          double mv = v - hc_cell * std::floor(v / hc_cell) - hc_cell / 2;
          bool wall = std::sqrt(mu * mu + mv * mv) > hc_cell * 0.33;
          hu = wall ? -150.0 + rng.normal(0.0, 40.0) : -930.0 + rng.normal(0.0, 12.0);
          break;
        }
        case kMaskEmphysema:
          hu = -995.0 + rng.normal(0.0, 6.0);
          break;
      }
      std::size_t idx = static_cast<std::size_t>(y) * W + x;
      s.hu[idx] = clamp_hu(hu);
      s.mask[idx] = static_cast<std::uint8_t>(cls);
    }
  }
}

}  // namespace detail

// Generates one patient's slices from the patient sub-stream. Exposed so
// callers may parallelize across patients; results are identical either way.
inline std::vector<LabeledSlice> generate_patient(const GeneratorSpec& spec,
                                                  std::uint64_t seed,
                                                  int patient_index) {
  using detail::Ellipse;
  const int G = spec.grid_size;
  Rng rng = Rng::stream(seed, "data/patient/" + std::to_string(patient_index));

  // Patient-level anatomy jitter.
  double lung_base = -865.0 + rng.normal(0.0, 12.0);
  double size_jit = rng.uniform(0.94, 1.05);
  double body_ry = 0.45 * G * rng.uniform(0.96, 1.03);

  char pid[16];
  std::snprintf(pid, sizeof(pid), "P%04d", patient_index);

  std::vector<LabeledSlice> out;
  out.reserve(spec.slices_per_patient);
  for (int si = 0; si < spec.slices_per_patient; ++si) {
    LabeledSlice s;
    s.height = G;
    s.width = G;
    s.patient_id = pid;
    s.hu.resize(static_cast<std::size_t>(G) * G);
    s.mask.assign(static_cast<std::size_t>(G) * G, 0);

    Ellipse body{0.50 * G, 0.53 * G, 0.47 * G, body_ry, 0.0};
    Ellipse lungs[2] = {
        {0.30 * G + rng.normal(0, 0.01 * G), 0.50 * G + rng.normal(0, 0.01 * G),
         0.155 * G * size_jit, 0.30 * G * size_jit, rng.uniform(-0.08, 0.08)},
        {0.70 * G + rng.normal(0, 0.01 * G), 0.50 * G + rng.normal(0, 0.01 * G),
         0.155 * G * size_jit, 0.30 * G * size_jit, rng.uniform(-0.08, 0.08)},
    };

    // Background anatomy: air, soft-tissue body, two healthy lungs.
    double lf_ax = rng.uniform(0.02, 0.05), lf_ay = rng.uniform(0.02, 0.05);
    double lf_px = rng.uniform(0.0, 6.28), lf_py = rng.uniform(0.0, 6.28);
    for (int y = 0; y < G; ++y) {
      for (int x = 0; x < G; ++x) {
        double hu;
        if (lungs[0].contains(x, y) || lungs[1].contains(x, y)) {
          double lf = std::sin(lf_ax * x * 6.28318 + lf_px) +
                      std::sin(lf_ay * y * 6.28318 + lf_py);
          hu = lung_base + 8.0 * lf + rng.normal(0.0, spec.texture.lung_noise_sd);
        } else if (body.contains(x, y)) {
          hu = 40.0 + rng.normal(0.0, 20.0);
        } else {
          hu = -1000.0 + rng.normal(0.0, 4.0);
        }
        s.hu[static_cast<std::size_t>(y) * G + x] = detail::clamp_hu(hu);
      }
    }

    // Lesions. Class order is fixed; each class consumes a fixed pattern of
    // draws so slices are reproducible.
    for (int k = 0; k < kNumClasses; ++k) {
      if (!rng.bernoulli(spec.prevalence[k])) continue;
      int n_lesions = rng.uniform_int(1, spec.texture.max_lesions_per_class);
      for (int li = 0; li < n_lesions; ++li) {
        int side = rng.uniform_int(0, 1);
        const Ellipse& lung = lungs[side];
        // Center rejection-sampled inside a slightly shrunk lung.
        double cx = 0, cy = 0;
        bool placed = false;
        for (int attempt = 0; attempt < 64; ++attempt) {
          cx = lung.cx + rng.uniform(-0.85, 0.85) * lung.rx;
          cy = lung.cy + rng.uniform(-0.85, 0.85) * lung.ry;
          if (lung.contains(cx, cy)) {
            placed = true;
            break;
          }
        }
        if (!placed) continue;
        double r = rng.uniform(spec.texture.lesion_min_frac,
                               spec.texture.lesion_max_frac) *
                   std::min(s.height, s.width);
        Ellipse lesion{cx, cy, r, r * rng.uniform(0.75, 1.3), rng.uniform(0.0, 3.14159)};
        detail::paint_lesion(s, lesion, lung, k + 1, rng);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<LabeledSlice> generate_dataset(const GeneratorSpec& spec,
                                                  std::uint64_t seed) {
  spec.validate();
  std::vector<LabeledSlice> all;
  all.reserve(static_cast<std::size_t>(spec.num_patients) * spec.slices_per_patient);
  for (int p = 0; p < spec.num_patients; ++p) {
    auto ps = generate_patient(spec, seed, p);
    for (auto& s : ps) all.push_back(std::move(s));
  }
  return all;
}

}  // namespace ildkit
