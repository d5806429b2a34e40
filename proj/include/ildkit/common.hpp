#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace ildkit {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes
// (usage=2, data=3, numeric=4).
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kNumClasses = 4;  // Ground Glass, Reticular, Honeycomb, Emphysema

inline const char* class_name(int k) {
  static const char* names[kNumClasses] = {"ground_glass", "reticular", "honeycomb",
                                           "emphysema"};
  return (k >= 0 && k < kNumClasses) ? names[k] : "unknown";
}

// Stable decimal rendering for CSV output. %.12g round-trips every value we
// emit and never depends on locale.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// FNV-1a, used for config hashing and seed-stream derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace ildkit
