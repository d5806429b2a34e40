#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/rng.hpp"
#include "ildkit/tensor.hpp"

namespace ildkit::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

enum class LayerKind { conv, relu, maxpool, fc };

struct LayerSpec {
  LayerKind kind;
  std::string name;  // conv1, relu1, pool1, fc1, ... assigned at build
  // conv
  int out_channels = 0, kernel = 0, stride = 1, pad = 0;
  // maxpool
  int pool_size = 2, pool_stride = 2;
  // fc
  int out_dim = 0;

  static LayerSpec conv(int out_channels, int kernel, int stride = 1, int pad = -1) {
    LayerSpec l{LayerKind::conv};
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = (pad < 0) ? kernel / 2 : pad;  // default keeps spatial size at stride 1
    return l;
  }
  static LayerSpec relu() { return LayerSpec{LayerKind::relu}; }
  static LayerSpec maxpool(int size = 2, int stride = -1) {
    LayerSpec l{LayerKind::maxpool};
    l.pool_size = size;
    l.pool_stride = (stride < 0) ? size : stride;
    return l;
  }
  static LayerSpec fc(int out_dim) {
    LayerSpec l{LayerKind::fc};
    l.out_dim = out_dim;
    return l;
  }
};

struct Shape3 {
  int c = 0, h = 0, w = 0;
  int count() const { return c * h * w; }
  std::string str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

struct NetworkSpec {
  Shape3 input;
  std::vector<LayerSpec> layers;

  NetworkSpec() = default;
  NetworkSpec(Shape3 in, std::vector<LayerSpec> ls) : input(in), layers(std::move(ls)) {}
};

// The desk-scale default: three conv/pool stages and two FC layers on a
// 3x64x64 input. Deep enough to learn the textures, small enough for CI.
inline NetworkSpec desk_net(int input_side = 64, int out_dim = kNumClasses) {
  return NetworkSpec{{3, input_side, input_side},
                     {LayerSpec::conv(16, 5), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::conv(32, 5), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::conv(64, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::fc(128), LayerSpec::relu(), LayerSpec::fc(out_dim)}};
}

// Patch classifier net for 32x32 patches (healthy + 4 patterns by default).
inline NetworkSpec patch_net(int patch_side = 32, int out_dim = kNumClasses + 1) {
  return NetworkSpec{{3, patch_side, patch_side},
                     {LayerSpec::conv(16, 5), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::conv(32, 5), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::fc(64), LayerSpec::relu(), LayerSpec::fc(out_dim)}};
}

struct LayerParams {
  Tensor W;  // conv: (out_c, in_c, k, k); fc: (out_dim, in_dim, 1, 1)
  Tensor b;  // (1, out, 1, 1)
};

// Per-layer activations kept by forward for the backward pass.
struct ForwardCache {
  Tensor input;
  std::vector<Tensor> outputs;               // one per layer
  std::vector<std::vector<int>> pool_argmax; // per layer; empty unless maxpool
  bool valid = false;
};

using Gradients = std::vector<LayerParams>;

class Network {
 public:
  Network() = default;
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) { build(); }

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<Shape3>& shapes() const { return shapes_; }
  std::vector<LayerParams>& params() { return params_; }
  const std::vector<LayerParams>& params() const { return params_; }
  Shape3 output_shape() const { return shapes_.back(); }

  int layer_index(const std::string& name) const {
    for (std::size_t i = 0; i < spec_.layers.size(); ++i)
      if (spec_.layers[i].name == name) return static_cast<int>(i);
    throw data_error("unknown layer tag: " + name);
  }

  // Centered uniform init scaled by fan-in, from the "init" stream.
  void init_params(std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "init");
    for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
      const auto& l = spec_.layers[li];
      auto& p = params_[li];
      int fan_in = 0;
      if (l.kind == LayerKind::conv) {
        fan_in = in_shape(li).c * l.kernel * l.kernel;
      } else if (l.kind == LayerKind::fc) {
        fan_in = in_shape(li).count();
      } else {
        continue;
      }
      // He-style limit; keeps activation variance stable through the ReLUs
      double a = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : p.W.data) v = rng.uniform(-a, a);
      p.b.fill(0.0);
    }
  }

  Tensor forward(const Tensor& batch, ForwardCache* cache = nullptr) const {
    if (batch.c != spec_.input.c || batch.h != spec_.input.h ||
        batch.w != spec_.input.w)
      throw usage_error("forward: batch shape " + batch.shape_str() +
                        " does not match network input 3x" + spec_.input.str());
    if (cache) {
      cache->input = batch;
      cache->outputs.clear();
      cache->outputs.reserve(spec_.layers.size());
      cache->pool_argmax.assign(spec_.layers.size(), {});
      cache->valid = true;
    }
    Tensor cur = batch;
    for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
      const auto& l = spec_.layers[li];
      Tensor next;
      switch (l.kind) {
        case LayerKind::conv:
          next = conv_forward(li, cur);
          break;
        case LayerKind::relu:
          next = cur;
          for (double& v : next.data) v = v > 0 ? v : 0.0;
          break;
        case LayerKind::maxpool:
          next = pool_forward(li, cur, cache ? &cache->pool_argmax[li] : nullptr);
          break;
        case LayerKind::fc:
          next = fc_forward(li, cur);
          break;
      }
      if (cache) cache->outputs.push_back(next);
      cur = std::move(next);
    }
    return cur;
  }

  // Exact reverse-mode gradients for all parameters given d(loss)/d(outputs).
  Gradients backward(const ForwardCache& cache, const Tensor& grad_out) const {
    if (!cache.valid || cache.outputs.size() != spec_.layers.size())
      throw data_error("backward: stale or missing forward cache");
    Shape3 out = shapes_.back();
    if (grad_out.n != cache.input.n || grad_out.chw() != out.count())
      throw data_error("backward: grad_out shape mismatch");

    Gradients grads(spec_.layers.size());
    for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
      grads[li].W = Tensor(params_[li].W.n, params_[li].W.c, params_[li].W.h,
                           params_[li].W.w);
      grads[li].b = Tensor(params_[li].b.n, params_[li].b.c, 1, 1);
    }

    Tensor grad = grad_out;
    for (int li = static_cast<int>(spec_.layers.size()) - 1; li >= 0; --li) {
      const auto& l = spec_.layers[li];
      const Tensor& in = (li == 0) ? cache.input : cache.outputs[li - 1];
      switch (l.kind) {
        case LayerKind::conv:
          grad = conv_backward(li, in, grad, grads[li]);
          break;
        case LayerKind::relu: {
          Tensor g = grad;
          for (std::size_t i = 0; i < g.data.size(); ++i)
            if (in.data[i] <= 0.0) g.data[i] = 0.0;
          grad = std::move(g);
          break;
        }
        case LayerKind::maxpool:
          grad = pool_backward(li, in, grad, cache.pool_argmax[li]);
          break;
        case LayerKind::fc:
          grad = fc_backward(li, in, grad, grads[li]);
          break;
      }
    }
    return grads;
  }

 private:
  NetworkSpec spec_;
  std::vector<LayerParams> params_;
  std::vector<Shape3> shapes_;  // output shape per layer

  Shape3 in_shape(std::size_t li) const {
    return li == 0 ? spec_.input : shapes_[li - 1];
  }

  void build() {
    int n_conv = 0, n_relu = 0, n_pool = 0, n_fc = 0;
    Shape3 cur = spec_.input;
    params_.clear();
    shapes_.clear();
    for (auto& l : spec_.layers) {
      LayerParams p;
      switch (l.kind) {
        case LayerKind::conv: {
          l.name = "conv" + std::to_string(++n_conv);
          int oh = (cur.h + 2 * l.pad - l.kernel) / l.stride + 1;
          int ow = (cur.w + 2 * l.pad - l.kernel) / l.stride + 1;
          if (l.kernel > cur.h + 2 * l.pad || l.kernel > cur.w + 2 * l.pad ||
              oh < 1 || ow < 1)
            throw usage_error("layer " + l.name + ": kernel " +
                              std::to_string(l.kernel) + " does not fit input " +
                              cur.str());
          p.W = Tensor(l.out_channels, cur.c, l.kernel, l.kernel);
          p.b = Tensor(1, l.out_channels, 1, 1);
          cur = {l.out_channels, oh, ow};
          break;
        }
        case LayerKind::relu:
          l.name = "relu" + std::to_string(++n_relu);
          break;
        case LayerKind::maxpool: {
          l.name = "pool" + std::to_string(++n_pool);
          if (l.pool_size > cur.h || l.pool_size > cur.w)
            throw usage_error("layer " + l.name + ": pool window larger than input " +
                              cur.str());
          int oh = (cur.h - l.pool_size) / l.pool_stride + 1;
          int ow = (cur.w - l.pool_size) / l.pool_stride + 1;
          cur = {cur.c, oh, ow};
          break;
        }
        case LayerKind::fc: {
          l.name = "fc" + std::to_string(++n_fc);
          p.W = Tensor(l.out_dim, cur.count(), 1, 1);
          p.b = Tensor(1, l.out_dim, 1, 1);
          cur = {l.out_dim, 1, 1};
          break;
        }
      }
      params_.push_back(std::move(p));
      shapes_.push_back(cur);
    }
    if (shapes_.empty()) throw usage_error("network spec has no layers");
  }

  // ---- conv ----

  void im2col(const double* im, const Shape3& in, const LayerSpec& l, int oh, int ow,
              double* col) const {
    const int k = l.kernel, s = l.stride, pd = l.pad;
    const int P = oh * ow;
    for (int ci = 0; ci < in.c; ++ci) {
      const double* plane = im + static_cast<std::size_t>(ci) * in.h * in.w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * P;
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * s - pd + ky;
            if (iy < 0 || iy >= in.h) {
              std::fill(row + oy * ow, row + (oy + 1) * ow, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(iy) * in.w;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * s - pd + kx;
              row[oy * ow + ox] = (ix >= 0 && ix < in.w) ? src[ix] : 0.0;
            }
          }
        }
      }
    }
  }

  void col2im_add(const double* col, const Shape3& in, const LayerSpec& l, int oh,
                  int ow, double* im) const {
    const int k = l.kernel, s = l.stride, pd = l.pad;
    const int P = oh * ow;
    for (int ci = 0; ci < in.c; ++ci) {
      double* plane = im + static_cast<std::size_t>(ci) * in.h * in.w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double* row =
              col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * P;
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * s - pd + ky;
            if (iy < 0 || iy >= in.h) continue;
            double* dst = plane + static_cast<std::size_t>(iy) * in.w;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * s - pd + kx;
              if (ix >= 0 && ix < in.w) dst[ix] += row[oy * ow + ox];
            }
          }
        }
      }
    }
  }

  Tensor conv_forward(std::size_t li, const Tensor& in) const {
    const auto& l = spec_.layers[li];
    Shape3 is = in_shape(li), os = shapes_[li];
    const int K = is.c * l.kernel * l.kernel, P = os.h * os.w;
    Tensor out(in.n, os.c, os.h, os.w);
    std::vector<double> col(static_cast<std::size_t>(K) * P);
    CMapRM Wm(params_[li].W.data.data(), os.c, K);
    for (int ni = 0; ni < in.n; ++ni) {
      im2col(in.ptr(ni), is, l, os.h, os.w, col.data());
      CMapRM colm(col.data(), K, P);
      MapRM outm(out.ptr(ni), os.c, P);
      outm.noalias() = Wm * colm;
      for (int co = 0; co < os.c; ++co)
        outm.row(co).array() += params_[li].b.data[co];
    }
    return out;
  }

  Tensor conv_backward(std::size_t li, const Tensor& in, const Tensor& gout,
                       LayerParams& g) const {
    const auto& l = spec_.layers[li];
    Shape3 is = in_shape(li), os = shapes_[li];
    const int K = is.c * l.kernel * l.kernel, P = os.h * os.w;
    Tensor gin(in.n, is.c, is.h, is.w);
    std::vector<double> col(static_cast<std::size_t>(K) * P);
    std::vector<double> dcol(static_cast<std::size_t>(K) * P);
    CMapRM Wm(params_[li].W.data.data(), os.c, K);
    MapRM dWm(g.W.data.data(), os.c, K);
    for (int ni = 0; ni < in.n; ++ni) {
      // im2col recomputed from the cached layer input; cheaper than caching
      // the column matrix for every image.
      im2col(in.ptr(ni), is, l, os.h, os.w, col.data());
      CMapRM colm(col.data(), K, P);
      CMapRM goutm(gout.ptr(ni), os.c, P);
      dWm.noalias() += goutm * colm.transpose();
      // serial reductions keep results independent of buffer alignment
      for (int co = 0; co < os.c; ++co) {
        double s = 0.0;
        const double* row = gout.ptr(ni) + static_cast<std::size_t>(co) * P;
        for (int j = 0; j < P; ++j) s += row[j];
        g.b.data[co] += s;
      }
      MapRM dcolm(dcol.data(), K, P);
      dcolm.noalias() = Wm.transpose() * goutm;
      col2im_add(dcol.data(), is, l, os.h, os.w, gin.ptr(ni));
    }
    return gin;
  }

  // ---- maxpool ----

  Tensor pool_forward(std::size_t li, const Tensor& in, std::vector<int>* argmax) const {
    const auto& l = spec_.layers[li];
    Shape3 is = in_shape(li), os = shapes_[li];
    Tensor out(in.n, os.c, os.h, os.w);
    if (argmax) argmax->assign(out.size(), -1);
    std::size_t oidx = 0;
    for (int ni = 0; ni < in.n; ++ni) {
      for (int ci = 0; ci < is.c; ++ci) {
        const double* plane = in.ptr(ni) + static_cast<std::size_t>(ci) * is.h * is.w;
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox, ++oidx) {
            int y0 = oy * l.pool_stride, x0 = ox * l.pool_stride;
            double best = plane[y0 * is.w + x0];
            int best_at = y0 * is.w + x0;
            for (int dy = 0; dy < l.pool_size; ++dy)
              for (int dx = 0; dx < l.pool_size; ++dx) {
                int at = (y0 + dy) * is.w + (x0 + dx);
                if (plane[at] > best) {  // ties keep the first in scan order
                  best = plane[at];
                  best_at = at;
                }
              }
            out.data[oidx] = best;
            if (argmax) (*argmax)[oidx] = best_at;
          }
        }
      }
    }
    return out;
  }

  Tensor pool_backward(std::size_t li, const Tensor& in, const Tensor& gout,
                       const std::vector<int>& argmax) const {
    Shape3 is = in_shape(li);
    if (argmax.size() != gout.size())
      throw data_error("backward: pool cache missing for layer " +
                       spec_.layers[li].name);
    Tensor gin(in.n, is.c, is.h, is.w);
    std::size_t oidx = 0;
    int plane_sz = is.h * is.w;
    for (int ni = 0; ni < gout.n; ++ni)
      for (int ci = 0; ci < gout.c; ++ci) {
        double* gplane = gin.ptr(ni) + static_cast<std::size_t>(ci) * plane_sz;
        for (int j = 0; j < gout.plane(); ++j, ++oidx)
          gplane[argmax[oidx]] += gout.data[oidx];
      }
    return gin;
  }

  // ---- fully connected ----

  Tensor fc_forward(std::size_t li, const Tensor& in) const {
    const auto& l = spec_.layers[li];
    int in_dim = in_shape(li).count();
    Tensor out(in.n, l.out_dim, 1, 1);
    CMapRM inm(in.data.data(), in.n, in_dim);
    CMapRM Wm(params_[li].W.data.data(), l.out_dim, in_dim);
    MapRM outm(out.data.data(), in.n, l.out_dim);
    outm.noalias() = inm * Wm.transpose();
    CMapRM bm(params_[li].b.data.data(), 1, l.out_dim);
    outm.rowwise() += bm.row(0);
    return out;
  }

  Tensor fc_backward(std::size_t li, const Tensor& in, const Tensor& gout,
                     LayerParams& g) const {
    const auto& l = spec_.layers[li];
    Shape3 is = in_shape(li);
    int in_dim = is.count();
    CMapRM inm(in.data.data(), in.n, in_dim);
    CMapRM goutm(gout.data.data(), gout.n, l.out_dim);
    MapRM dWm(g.W.data.data(), l.out_dim, in_dim);
    dWm.noalias() = goutm.transpose() * inm;
    for (int k = 0; k < l.out_dim; ++k) {
      double s = 0.0;
      for (int i = 0; i < gout.n; ++i) s += gout(i, k);
      g.b.data[k] = s;
    }
    Tensor gin(in.n, is.c, is.h, is.w);
    CMapRM Wm(params_[li].W.data.data(), l.out_dim, in_dim);
    MapRM ginm(gin.data.data(), in.n, in_dim);
    ginm.noalias() = goutm * Wm;
    return gin;
  }
};

}  // namespace ildkit::nn
