#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/fvpool/gmm.hpp"
#include "ildkit/nn/network.hpp"

namespace ildkit::fv {

// Unordered set of local descriptors from one activation map: one D-vector
// per spatial position (a single vector for FC layers).
struct DescriptorSet {
  int count = 0;
  int dim = 0;
  std::vector<double> data;  // count x dim, row-major
  std::string layer_tag;

  const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * dim; }
};

inline DescriptorSet extract_descriptors(const nn::ForwardCache& cache,
                                         const nn::Network& net,
                                         const std::string& layer_tag,
                                         int image_index = 0) {
  int li = net.layer_index(layer_tag);  // throws on unknown tag
  if (!cache.valid || cache.outputs.size() != net.spec().layers.size())
    throw data_error("extract_descriptors: stale or missing forward cache");
  const Tensor& act = cache.outputs[li];
  if (image_index < 0 || image_index >= act.n)
    throw data_error("extract_descriptors: image index out of range");

  DescriptorSet ds;
  ds.layer_tag = layer_tag;
  ds.dim = act.c;
  ds.count = act.plane();  // H*W positions; FC maps have a single position
  ds.data.resize(static_cast<std::size_t>(ds.count) * ds.dim);
  const double* base = act.ptr(image_index);
  const int plane = act.plane();
  for (int pos = 0; pos < plane; ++pos)
    for (int c = 0; c < act.c; ++c)
      ds.data[static_cast<std::size_t>(pos) * act.c + c] =
          base[static_cast<std::size_t>(c) * plane + pos];
  return ds;
}

// Fisher vector of a descriptor set under a GMM: per component the weighted
// first-order (u_m) and second-order (v_m) deviations, concatenated to a
// 2*M*D vector. Descriptors are accumulated in a canonical sorted order, so
// any permutation of the input yields the bit-identical encoding.
inline std::vector<double> fv_encode(const DescriptorSet& desc, const GmmModel& gmm,
                                     bool improved = true) {
  if (desc.dim != gmm.D)
    throw data_error("fv_encode: descriptor dim " + std::to_string(desc.dim) +
                     " != gmm dim " + std::to_string(gmm.D));
  const int N = desc.count, D = gmm.D, M = gmm.M;
  std::vector<double> out(static_cast<std::size_t>(2) * M * D, 0.0);
  if (N == 0) return out;

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::lexicographical_compare(desc.row(a), desc.row(a) + D, desc.row(b),
                                        desc.row(b) + D);
  });

  MatRM X(N, D);
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d) X(i, d) = desc.row(order[i])[d];
  MatRM gamma = gmm.responsibilities(X);

  Eigen::VectorXd sigma(D);
  for (int m = 0; m < M; ++m) {
    double* u = out.data() + static_cast<std::size_t>(2) * m * D;
    double* v = u + D;
    for (int d = 0; d < D; ++d) sigma[d] = std::sqrt(gmm.variances(m, d));
    for (int i = 0; i < N; ++i) {
      double g = gamma(i, m);
      for (int d = 0; d < D; ++d) {
        double z = (X(i, d) - gmm.means(m, d)) / sigma[d];
        u[d] += g * z;
        v[d] += g * (z * z - 1.0);
      }
    }
    double cu = 1.0 / (N * std::sqrt(gmm.weights[m]));
    double cv = 1.0 / (N * std::sqrt(2.0 * gmm.weights[m]));
    for (int d = 0; d < D; ++d) {
      u[d] *= cu;
      v[d] *= cv;
    }
  }

  if (improved) {
    // signed square root, then global L2 normalization
    for (double& x : out) x = (x >= 0 ? std::sqrt(x) : -std::sqrt(-x));
    double norm = 0.0;
    for (double x : out) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
      for (double& x : out) x /= norm;
  }
  return out;
}

}  // namespace ildkit::fv
