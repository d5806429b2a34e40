#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/nn/train.hpp"
#include "ildkit/preprocess.hpp"
#include "ildkit/synthdata.hpp"

namespace ildkit::patchbase {

// One grid position of the sliding window. label is the majority mask class
// over the patch (0 = healthy).
struct PatchInfo {
  int y0 = 0;
  int x0 = 0;
  int label = 0;
};

inline std::vector<PatchInfo> extract_patches(const LabeledSlice& slice,
                                              int patch_size = 32, int stride = 10) {
  if (patch_size < 1 || stride < 1)
    throw usage_error("extract_patches: patch_size and stride must be positive");
  if (slice.height < patch_size || slice.width < patch_size)
    throw data_error("extract_patches: slice smaller than patch size");
  std::vector<PatchInfo> patches;
  for (int y0 = 0; y0 + patch_size <= slice.height; y0 += stride) {
    for (int x0 = 0; x0 + patch_size <= slice.width; x0 += stride) {
      std::array<int, kNumClasses + 1> counts{};
      for (int y = y0; y < y0 + patch_size; ++y)
        for (int x = x0; x < x0 + patch_size; ++x) ++counts[slice.mask_at(y, x)];
      int best = 0;
      for (int k = 1; k <= kNumClasses; ++k)
        if (counts[k] > counts[best]) best = k;
      patches.push_back({y0, x0, best});
    }
  }
  return patches;
}

// 3-channel windowed patch at native resolution (no resize; the patch is the
// network input size by construction).
inline void fill_patch_input(const LabeledSlice& slice, int y0, int x0, int patch_size,
                             double* dst) {
  const std::array<AttenuationWindow, 3> windows = {window_low(), window_normal(),
                                                    window_high()};
  const int plane = patch_size * patch_size;
  for (int c = 0; c < 3; ++c) {
    double* out = dst + static_cast<std::size_t>(c) * plane;
    for (int y = 0; y < patch_size; ++y)
      for (int x = 0; x < patch_size; ++x)
        out[y * patch_size + x] = window_rescale_value(
            static_cast<double>(slice.hu_at(y0 + y, x0 + x)), windows[c]);
  }
}

struct PatchModel {
  nn::Network net;
  std::array<double, 3> channel_means{};
  std::array<double, 3> channel_stds{1, 1, 1};
  int patch_size = 32;
  int stride = 10;
  double aggregate_fraction = 0.05;  // class enters the slice label set when
                                     // its predicted-patch share exceeds this
};

struct PatchTrainConfig {
  int patch_size = 32;
  int stride = 10;
  int patches_per_slice = 24;  // training subsample cap per slice
  double aggregate_fraction = 0.05;
  nn::TrainOptions opt;
};

// Single-label softmax training over healthy + the four patterns.
inline PatchModel patch_train(const std::vector<LabeledSlice>& slices,
                              const nn::NetworkSpec& net_spec,
                              const PatchTrainConfig& cfg) {
  if (slices.empty()) throw data_error("patch_train: no slices");
  Rng rng = Rng::stream(cfg.opt.seed, "patchsample");

  std::vector<std::pair<const LabeledSlice*, PatchInfo>> chosen;
  for (const auto& s : slices) {
    auto patches = extract_patches(s, cfg.patch_size, cfg.stride);
    if (static_cast<int>(patches.size()) > cfg.patches_per_slice) {
      rng.shuffle(patches);
      patches.resize(cfg.patches_per_slice);
    }
    for (const auto& p : patches) chosen.push_back({&s, p});
  }

  const int plane = cfg.patch_size * cfg.patch_size;
  Tensor inputs(static_cast<int>(chosen.size()), 3, cfg.patch_size, cfg.patch_size);
  std::vector<int> labels(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    fill_patch_input(*chosen[i].first, chosen[i].second.y0, chosen[i].second.x0,
                     cfg.patch_size, inputs.ptr(static_cast<int>(i)));
    labels[i] = chosen[i].second.label;
  }

  PatchModel model;
  model.patch_size = cfg.patch_size;
  model.stride = cfg.stride;
  model.aggregate_fraction = cfg.aggregate_fraction;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < inputs.n; ++i) {
      const double* p = inputs.ptr(i) + static_cast<std::size_t>(c) * plane;
      for (int j = 0; j < plane; ++j) {
        sum += p[j];
        sumsq += p[j] * p[j];
      }
    }
    double count = static_cast<double>(inputs.n) * plane;
    model.channel_means[c] = sum / count;
    double var = sumsq / count - model.channel_means[c] * model.channel_means[c];
    model.channel_stds[c] = std::sqrt(std::max(var, 1e-12));
  }
  for (int i = 0; i < inputs.n; ++i)
    for (int c = 0; c < 3; ++c) {
      double* p = inputs.ptr(i) + static_cast<std::size_t>(c) * plane;
      for (int j = 0; j < plane; ++j)
        p[j] = (p[j] - model.channel_means[c]) / model.channel_stds[c];
    }

  auto result = nn::train(inputs, net_spec, nn::make_softmax_batch_loss(labels), cfg.opt);
  model.net = std::move(result.net);
  return model;
}

struct SlidePrediction {
  std::vector<PatchInfo> positions;     // label = predicted class per position
  std::array<bool, kNumClasses> label_set{};
  std::array<int, kNumClasses> class_counts{};
};

// Sliding-window inference over the full patch grid, then slice-level
// aggregation: a pattern is reported when its share of patch predictions
// exceeds the model's aggregate fraction.
inline SlidePrediction slide_predict(const LabeledSlice& slice, const PatchModel& model,
                                     int batch = 128) {
  SlidePrediction out;
  out.positions = extract_patches(slice, model.patch_size, model.stride);
  const int n = static_cast<int>(out.positions.size());
  const int plane = model.patch_size * model.patch_size;

  for (int start = 0; start < n; start += batch) {
    int bn = std::min(batch, n - start);
    Tensor in(bn, 3, model.patch_size, model.patch_size);
    for (int i = 0; i < bn; ++i) {
      const auto& p = out.positions[start + i];
      fill_patch_input(slice, p.y0, p.x0, model.patch_size, in.ptr(i));
      for (int c = 0; c < 3; ++c) {
        double* d = in.ptr(i) + static_cast<std::size_t>(c) * plane;
        for (int j = 0; j < plane; ++j)
          d[j] = (d[j] - model.channel_means[c]) / model.channel_stds[c];
      }
    }
    Tensor scores = model.net.forward(in);
    for (int i = 0; i < bn; ++i) {
      int best = 0;
      for (int k = 1; k < scores.c; ++k)
        if (scores(i, k) > scores(i, best)) best = k;
      out.positions[start + i].label = best;
      if (best >= 1 && best <= kNumClasses) ++out.class_counts[best - 1];
    }
  }
  for (int k = 0; k < kNumClasses; ++k)
    out.label_set[k] = out.class_counts[k] > model.aggregate_fraction * n;
  return out;
}

struct TimingStats {
  double min_s = 0;
  double max_s = 0;
  double mean_s = 0;
  int samples = 0;
};

struct BenchMethod {
  std::string name;
  std::function<void(const LabeledSlice&)> run;
};

// Per-slice wall-clock timing; one unmeasured warm-up pass per method.
inline std::vector<std::pair<std::string, TimingStats>> benchmark(
    const std::vector<BenchMethod>& methods, const std::vector<LabeledSlice>& slices,
    int repetitions) {
  if (slices.empty()) throw data_error("benchmark: no slices");
  if (repetitions < 1) throw usage_error("benchmark: repetitions must be >= 1");
  using clock = std::chrono::steady_clock;
  std::vector<std::pair<std::string, TimingStats>> out;
  for (const auto& m : methods) {
    for (const auto& s : slices) m.run(s);  // warm-up, excluded
    TimingStats st;
    st.min_s = std::numeric_limits<double>::max();
    double total = 0.0;
    for (int rep = 0; rep < repetitions; ++rep) {
      for (const auto& s : slices) {
        auto t0 = clock::now();
        m.run(s);
        auto t1 = clock::now();
        double sec = std::chrono::duration<double>(t1 - t0).count();
        st.min_s = std::min(st.min_s, sec);
        st.max_s = std::max(st.max_s, sec);
        total += sec;
        ++st.samples;
      }
    }
    st.mean_s = total / st.samples;
    out.push_back({m.name, st});
  }
  return out;
}

}  // namespace ildkit::patchbase
