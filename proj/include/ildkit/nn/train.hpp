#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <vector>

#include "ildkit/nn/losses.hpp"
#include "ildkit/nn/network.hpp"
#include "ildkit/rng.hpp"

namespace ildkit::nn {

struct TrainOptions {
  double learning_rate = 0.005;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip_norm = 5.0;  // global gradient-norm clip; 0 disables
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 1;

  void validate() const {
    if (learning_rate < 0) throw usage_error("train: learning rate must be >= 0");
    if (momentum < 0 || momentum >= 1)
      throw usage_error("train: momentum must lie in [0,1)");
    if (weight_decay < 0) throw usage_error("train: weight decay must be >= 0");
    if (clip_norm < 0) throw usage_error("train: clip norm must be >= 0");
    if (batch_size < 1) throw usage_error("train: batch size must be >= 1");
    if (epochs < 1) throw usage_error("train: epochs must be >= 1");
  }
};

// Computes (loss, d loss/d outputs) for a batch; `rows` are the dataset rows
// the batch was gathered from, so the callable owns target lookup.
using BatchLoss =
    std::function<double(const Tensor& outputs, const std::vector<int>& rows,
                         Tensor& grad)>;

inline BatchLoss make_batch_loss(const LossSpec& spec, const Tensor& targets) {
  return [&spec, &targets](const Tensor& f, const std::vector<int>& rows,
                           Tensor& grad) {
    Tensor y = Tensor::mat(f.n, f.c);
    for (int i = 0; i < f.n; ++i)
      for (int k = 0; k < f.c; ++k) y(i, k) = targets(rows[i], k);
    switch (spec.head) {
      case LossHead::multilabel_logistic:
        return loss_multilabel_logistic(f, y, spec.class_weights, grad);
      case LossHead::regression_l2:
        return loss_regression(f, y, RegressionKind::l2, spec.class_weights, grad);
      case LossHead::regression_smooth_l1:
        return loss_regression(f, y, RegressionKind::smooth_l1, spec.class_weights,
                               grad);
    }
    throw usage_error("train: unknown loss head");
  };
}

inline BatchLoss make_softmax_batch_loss(const std::vector<int>& labels) {
  return [&labels](const Tensor& f, const std::vector<int>& rows, Tensor& grad) {
    std::vector<int> batch_labels(f.n);
    for (int i = 0; i < f.n; ++i) batch_labels[i] = labels[rows[i]];
    return loss_softmax_xent(f, batch_labels, grad);
  };
}

struct TrainResult {
  Network net;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

// Plain SGD with momentum and weight decay. Deterministic for a fixed seed:
// init comes from the "init" stream and the per-epoch shuffle from "shuffle".
inline TrainResult train(const Tensor& inputs, const NetworkSpec& net_spec,
                         const BatchLoss& loss, const TrainOptions& opt) {
  opt.validate();
  const int n = inputs.n;
  if (n < 1) throw data_error("train: empty dataset");

  TrainResult result;
  result.net = Network(net_spec);
  result.net.init_params(opt.seed);
  Network& net = result.net;

  std::vector<LayerParams> velocity;
  for (const auto& p : net.params()) {
    LayerParams v;
    v.W = Tensor(p.W.n, p.W.c, p.W.h, p.W.w);
    v.b = Tensor(p.b.n, p.b.c, 1, 1);
    velocity.push_back(std::move(v));
  }

  Rng shuffle_rng = Rng::stream(opt.seed, "shuffle");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  const int chw = inputs.chw();
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_total = 0.0;
    for (int start = 0; start < n; start += opt.batch_size) {
      int bn = std::min(opt.batch_size, n - start);
      Tensor batch(bn, inputs.c, inputs.h, inputs.w);
      std::vector<int> rows(bn);
      for (int i = 0; i < bn; ++i) {
        rows[i] = order[start + i];
        std::memcpy(batch.ptr(i), inputs.ptr(rows[i]), sizeof(double) * chw);
      }
      ForwardCache cache;
      Tensor out = net.forward(batch, &cache);
      Tensor grad_out;
      double batch_loss = loss(out, rows, grad_out);
      epoch_total += batch_loss * bn;
      Gradients grads = net.backward(cache, grad_out);
      if (opt.clip_norm > 0) {
        double sq = 0.0;
        for (const auto& g : grads) {
          for (double v : g.W.data) sq += v * v;
          for (double v : g.b.data) sq += v * v;
        }
        double norm = std::sqrt(sq);
        if (norm > opt.clip_norm) {
          double scale = opt.clip_norm / norm;
          for (auto& g : grads) {
            for (double& v : g.W.data) v *= scale;
            for (double& v : g.b.data) v *= scale;
          }
        }
      }
      for (std::size_t li = 0; li < grads.size(); ++li) {
        auto& p = net.params()[li];
        auto& v = velocity[li];
        const auto& g = grads[li];
        for (std::size_t j = 0; j < p.W.data.size(); ++j) {
          v.W.data[j] = opt.momentum * v.W.data[j] -
                        opt.learning_rate *
                            (g.W.data[j] + opt.weight_decay * p.W.data[j]);
          p.W.data[j] += v.W.data[j];
        }
        for (std::size_t j = 0; j < p.b.data.size(); ++j) {
          v.b.data[j] = opt.momentum * v.b.data[j] - opt.learning_rate * g.b.data[j];
          p.b.data[j] += v.b.data[j];
        }
      }
    }
    double mean_loss = epoch_total / n;
    if (!std::isfinite(mean_loss))
      throw numeric_error("training diverged at epoch " + std::to_string(epoch + 1));
    result.epoch_loss.push_back(mean_loss);
  }
  return result;
}

// Chunked inference over a row-set; bounds peak activation memory.
inline Tensor predict_scores(const Network& net, const Tensor& inputs,
                             int chunk = 64) {
  int out_dim = net.output_shape().count();
  Tensor scores = Tensor::mat(inputs.n, out_dim);
  const int chw = inputs.chw();
  for (int start = 0; start < inputs.n; start += chunk) {
    int bn = std::min(chunk, inputs.n - start);
    Tensor batch(bn, inputs.c, inputs.h, inputs.w);
    std::memcpy(batch.ptr(0), inputs.ptr(start),
                sizeof(double) * static_cast<std::size_t>(bn) * chw);
    Tensor out = net.forward(batch);
    std::memcpy(scores.ptr(start), out.ptr(0),
                sizeof(double) * static_cast<std::size_t>(bn) * out_dim);
  }
  return scores;
}

}  // namespace ildkit::nn
