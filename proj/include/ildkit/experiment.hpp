#pragma once

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "ildkit/container.hpp"
#include "ildkit/evalkit.hpp"
#include "ildkit/fvpool/fisher.hpp"
#include "ildkit/fvpool/gmm.hpp"
#include "ildkit/fvpool/linreg.hpp"
#include "ildkit/fvpool/pca.hpp"
#include "ildkit/nn/train.hpp"
#include "ildkit/preprocess.hpp"
#include "ildkit/synthdata.hpp"

namespace ildkit {

// Orchestration shared by the CLI and the integration tests: fold handling,
// input preparation, the three holistic training arms, the FV pipeline, and
// model (de)serialization.

struct FoldSplit {
  std::vector<std::vector<std::string>> folds;
  std::vector<int> fold_of_slice;

  std::vector<int> train_rows(int eval_fold) const {
    std::vector<int> rows;
    for (std::size_t i = 0; i < fold_of_slice.size(); ++i)
      if (fold_of_slice[i] != eval_fold) rows.push_back(static_cast<int>(i));
    return rows;
  }
  std::vector<int> eval_rows(int eval_fold) const {
    std::vector<int> rows;
    for (std::size_t i = 0; i < fold_of_slice.size(); ++i)
      if (fold_of_slice[i] == eval_fold) rows.push_back(static_cast<int>(i));
    return rows;
  }
};

inline FoldSplit make_folds(const std::vector<LabeledSlice>& slices, int k,
                            std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(slices.size());
  for (const auto& s : slices) ids.push_back(s.patient_id);
  FoldSplit split;
  split.folds = evalkit::patient_folds(ids, k, seed);
  split.fold_of_slice.reserve(slices.size());
  for (const auto& s : slices)
    split.fold_of_slice.push_back(evalkit::fold_of_patient(split.folds, s.patient_id));
  return split;
}

inline Tensor build_inputs(const std::vector<LabeledSlice>& slices, int input_size) {
  Tensor inputs(static_cast<int>(slices.size()), 3, input_size, input_size);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    Tensor one = make_input(slices[i], input_size);
    std::memcpy(inputs.ptr(static_cast<int>(i)), one.data.data(),
                sizeof(double) * one.size());
  }
  return inputs;
}

// Per-channel standardization statistics, computed on the training fold
// only and reused verbatim at evaluation time.
struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{1, 1, 1};
};

inline ChannelStats channel_stats_over(const Tensor& inputs,
                                       const std::vector<int>& rows) {
  ChannelStats st;
  const int plane = inputs.plane();
  const double count = static_cast<double>(rows.size()) * plane;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int r : rows) {
      const double* p = inputs.ptr(r) + static_cast<std::size_t>(c) * plane;
      for (int j = 0; j < plane; ++j) {
        sum += p[j];
        sumsq += p[j] * p[j];
      }
    }
    st.mean[c] = sum / count;
    double var = sumsq / count - st.mean[c] * st.mean[c];
    st.std[c] = std::sqrt(std::max(var, 1e-12));
  }
  return st;
}

inline void standardize_inputs(Tensor& inputs, const ChannelStats& st) {
  const int plane = inputs.plane();
  for (int i = 0; i < inputs.n; ++i)
    for (int c = 0; c < 3; ++c) {
      double* p = inputs.ptr(i) + static_cast<std::size_t>(c) * plane;
      for (int j = 0; j < plane; ++j) p[j] = (p[j] - st.mean[c]) / st.std[c];
    }
}

enum class Head { mlc, l2, sl1 };

inline Head head_from_string(const std::string& s) {
  if (s == "mlc") return Head::mlc;
  if (s == "l2") return Head::l2;
  if (s == "sl1") return Head::sl1;
  throw usage_error("unknown loss head '" + s + "' (expected mlc, l2 or sl1)");
}

inline std::string head_to_string(Head h) {
  switch (h) {
    case Head::mlc: return "mlc";
    case Head::l2: return "l2";
    case Head::sl1: return "sl1";
  }
  return "?";
}

// "identity", "step:T" or "piecewise:T1,T2"
inline LabelMapping mapping_from_string(const std::string& s) {
  if (s == "identity") return LabelMapping::identity();
  if (s.rfind("step:", 0) == 0) {
    try {
      return LabelMapping::step(std::stod(s.substr(5)));
    } catch (const std::invalid_argument&) {
      throw usage_error("bad step threshold in mapping '" + s + "'");
    }
  }
  if (s.rfind("piecewise:", 0) == 0) {
    std::string rest = s.substr(10);
    auto comma = rest.find(',');
    if (comma == std::string::npos)
      throw usage_error("piecewise mapping needs T1,T2 in '" + s + "'");
    try {
      return LabelMapping::piecewise(std::stod(rest.substr(0, comma)),
                                     std::stod(rest.substr(comma + 1)));
    } catch (const std::invalid_argument&) {
      throw usage_error("bad piecewise thresholds in mapping '" + s + "'");
    }
  }
  throw usage_error("unknown mapping '" + s +
                    "' (expected identity, step:T or piecewise:T1,T2)");
}

struct HolisticConfig {
  Head head = Head::mlc;
  LabelMapping mapping = LabelMapping::step(6000);
  bool balance = false;
  double truth_threshold = 6000;  // pixel count defining binary truth
  double normalizer = 0;          // 0 -> grid area; divides identity targets
  int input_size = 64;
  nn::NetworkSpec net;            // empty layers -> desk_net(input_size)
  nn::TrainOptions opt;
};

struct HolisticModel {
  nn::Network net;
  ChannelStats channel_stats;
  std::array<double, kNumClasses> thresholds{};
  Head head = Head::mlc;
  LabelMapping mapping;
  double normalizer = 1;
  int input_size = 64;
  double truth_threshold = 6000;
  bool balanced = false;
  std::vector<double> epoch_loss;
};

inline std::array<int, kNumClasses> truth_labels(const LabeledSlice& slice,
                                                 double truth_threshold) {
  auto counts = mask_to_counts(slice);
  std::array<int, kNumClasses> t{};
  for (int k = 0; k < kNumClasses; ++k)
    t[k] = (static_cast<double>(counts[k]) >= truth_threshold) ? 1 : 0;
  return t;
}

inline Tensor regression_targets(const std::vector<LabeledSlice>& slices,
                                 const std::vector<int>& rows,
                                 const LabelMapping& mapping, double normalizer) {
  Tensor y = Tensor::mat(static_cast<int>(rows.size()), kNumClasses);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto labels = map_counts_to_labels(mask_to_counts(slices[rows[i]]), mapping);
    for (int k = 0; k < kNumClasses; ++k) {
      double v = labels[k];
      if (mapping.kind == LabelMapping::Kind::identity) v /= normalizer;
      y(static_cast<int>(i), k) = v;
    }
  }
  return y;
}

inline std::vector<evalkit::PredictionRecord> records_from_scores(
    const std::vector<LabeledSlice>& slices, const std::vector<int>& rows,
    const Tensor& scores, double truth_threshold) {
  std::vector<evalkit::PredictionRecord> records;
  records.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = slices[rows[i]];
    evalkit::PredictionRecord r;
    r.slice_id = "s" + std::to_string(rows[i]);
    r.patient_id = s.patient_id;
    for (int k = 0; k < kNumClasses; ++k) r.scores[k] = scores(static_cast<int>(i), k);
    r.true_labels = truth_labels(s, truth_threshold);
    records.push_back(std::move(r));
  }
  return records;
}

inline std::array<double, kNumClasses> pick_thresholds(
    const std::vector<evalkit::PredictionRecord>& train_records) {
  std::array<double, kNumClasses> thr{};
  for (int k = 0; k < kNumClasses; ++k)
    thr[k] = evalkit::choose_threshold(train_records, k);
  return thr;
}

inline HolisticModel train_holistic(const std::vector<LabeledSlice>& slices,
                                    const std::vector<int>& train_rows,
                                    const HolisticConfig& cfg) {
  if (train_rows.empty()) throw data_error("train_holistic: empty training set");
  const auto& first = slices[train_rows[0]];

  HolisticModel model;
  model.head = cfg.head;
  model.mapping = cfg.mapping;
  model.input_size = cfg.input_size;
  model.truth_threshold = cfg.truth_threshold;
  model.balanced = cfg.balance;
  model.normalizer = cfg.normalizer > 0
                         ? cfg.normalizer
                         : static_cast<double>(first.height) * first.width;

  std::vector<LabeledSlice> train_slices;
  train_slices.reserve(train_rows.size());
  for (int r : train_rows) train_slices.push_back(slices[r]);
  std::vector<int> local(train_rows.size());
  std::iota(local.begin(), local.end(), 0);

  Tensor inputs = build_inputs(train_slices, cfg.input_size);
  model.channel_stats = channel_stats_over(inputs, local);
  standardize_inputs(inputs, model.channel_stats);

  // Class-balancing weights come from the binary truth counts of the
  // training set.
  nn::LossSpec loss_spec = nn::LossSpec::make(
      cfg.head == Head::mlc ? nn::LossHead::multilabel_logistic
      : cfg.head == Head::l2 ? nn::LossHead::regression_l2
                             : nn::LossHead::regression_smooth_l1,
      kNumClasses);
  if (cfg.balance) {
    nn::ClassStats stats;
    stats.positives.assign(kNumClasses, 0.0);
    for (const auto& s : train_slices) {
      auto t = truth_labels(s, cfg.truth_threshold);
      for (int k = 0; k < kNumClasses; ++k) stats.positives[k] += t[k];
    }
    for (double p : stats.positives) stats.total += p;
    loss_spec.class_weights = nn::class_balance_weights(stats, kNumClasses);
  }

  Tensor targets;
  if (cfg.head == Head::mlc) {
    if (cfg.mapping.kind != LabelMapping::Kind::step)
      throw usage_error("head mlc requires a step mapping (binary labels)");
    targets = Tensor::mat(static_cast<int>(train_slices.size()), kNumClasses);
    for (std::size_t i = 0; i < train_slices.size(); ++i) {
      auto labels = map_counts_to_labels(mask_to_counts(train_slices[i]), cfg.mapping);
      for (int k = 0; k < kNumClasses; ++k)
        targets(static_cast<int>(i), k) = labels[k] > 0.5 ? 1.0 : -1.0;
    }
  } else {
    targets = regression_targets(train_slices, local, cfg.mapping, model.normalizer);
  }

  nn::NetworkSpec net_spec =
      cfg.net.layers.empty() ? nn::desk_net(cfg.input_size) : cfg.net;
  auto result = nn::train(inputs, net_spec, nn::make_batch_loss(loss_spec, targets),
                          cfg.opt);
  model.net = std::move(result.net);
  model.epoch_loss = std::move(result.epoch_loss);

  // Operating thresholds for F-score tables, chosen on the training fold.
  Tensor train_scores = nn::predict_scores(model.net, inputs);
  auto train_records =
      records_from_scores(train_slices, local, train_scores, cfg.truth_threshold);
  model.thresholds = pick_thresholds(train_records);
  return model;
}

inline Tensor holistic_scores(const HolisticModel& model,
                              const std::vector<LabeledSlice>& slices,
                              const std::vector<int>& rows) {
  std::vector<LabeledSlice> subset;
  subset.reserve(rows.size());
  for (int r : rows) subset.push_back(slices[r]);
  Tensor inputs = build_inputs(subset, model.input_size);
  standardize_inputs(inputs, model.channel_stats);
  return nn::predict_scores(model.net, inputs);
}

// ---- FV pipeline ----

struct FvConfig {
  std::string layer = "conv3";
  int components = 32;       // M
  int pca_dim = 512;
  double ridge = 1e-3;
  int subsample_cap = 200000;
  bool improved = true;
  std::uint64_t seed = 1;
};

struct FvPipelineModel {
  nn::Network net;  // backbone the descriptors come from
  ChannelStats channel_stats;
  std::string layer;
  fv::GmmModel gmm;
  fv::PcaModel pca;
  fv::LinearModel linreg;
  std::array<double, kNumClasses> thresholds{};
  double normalizer = 1;
  int input_size = 64;
  double truth_threshold = 6000;
  bool improved = true;
};

namespace detail {

inline std::vector<double> fv_features_for(const FvPipelineModel& model,
                                           const Tensor& inputs) {
  const int fv_dim = 2 * model.gmm.M * model.gmm.D;
  std::vector<double> features(static_cast<std::size_t>(inputs.n) * model.pca.p);
  std::vector<double> fvs(static_cast<std::size_t>(inputs.n) * fv_dim);
  for (int i = 0; i < inputs.n; ++i) {
    Tensor one(1, inputs.c, inputs.h, inputs.w);
    std::memcpy(one.data.data(), inputs.ptr(i), sizeof(double) * one.size());
    nn::ForwardCache cache;
    model.net.forward(one, &cache);
    auto desc = fv::extract_descriptors(cache, model.net, model.layer);
    auto enc = fv::fv_encode(desc, model.gmm, model.improved);
    std::memcpy(fvs.data() + static_cast<std::size_t>(i) * fv_dim, enc.data(),
                sizeof(double) * fv_dim);
  }
  auto proj = fv::pca_project(model.pca, fvs, inputs.n);
  std::memcpy(features.data(), proj.data(), sizeof(double) * proj.size());
  return features;
}

}  // namespace detail

// Fits GMM + PCA + linear regressor on the training rows, on descriptors
// from one layer of a trained backbone. The regressor targets normalized
// pixel counts.
inline FvPipelineModel fit_fv_pipeline(const std::vector<LabeledSlice>& slices,
                                       const std::vector<int>& train_rows,
                                       const HolisticModel& backbone,
                                       const FvConfig& cfg) {
  if (train_rows.empty()) throw data_error("fit_fv_pipeline: empty training set");
  FvPipelineModel model;
  model.net = backbone.net;
  model.channel_stats = backbone.channel_stats;
  model.layer = cfg.layer;
  model.normalizer = backbone.normalizer;
  model.input_size = backbone.input_size;
  model.truth_threshold = backbone.truth_threshold;
  model.improved = cfg.improved;
  model.net.layer_index(cfg.layer);  // validate the tag before heavy work

  std::vector<LabeledSlice> train_slices;
  train_slices.reserve(train_rows.size());
  for (int r : train_rows) train_slices.push_back(slices[r]);
  std::vector<int> local(train_rows.size());
  std::iota(local.begin(), local.end(), 0);

  Tensor inputs = build_inputs(train_slices, model.input_size);
  standardize_inputs(inputs, model.channel_stats);

  // Pool descriptors across the training images.
  std::vector<double> pool;
  int dim = 0;
  for (int i = 0; i < inputs.n; ++i) {
    Tensor one(1, inputs.c, inputs.h, inputs.w);
    std::memcpy(one.data.data(), inputs.ptr(i), sizeof(double) * one.size());
    nn::ForwardCache cache;
    model.net.forward(one, &cache);
    auto desc = fv::extract_descriptors(cache, model.net, cfg.layer);
    dim = desc.dim;
    pool.insert(pool.end(), desc.data.begin(), desc.data.end());
  }
  const int n_desc = static_cast<int>(pool.size()) / dim;
  fv::MatRM X(n_desc, dim);
  std::memcpy(X.data(), pool.data(), sizeof(double) * pool.size());
  pool.clear();
  pool.shrink_to_fit();

  fv::GmmFitOptions gopt;
  gopt.subsample_cap = cfg.subsample_cap;
  model.gmm = fv::gmm_fit(X, cfg.components, cfg.seed, gopt).model;

  // Encode the training images and reduce.
  const int fv_dim = 2 * model.gmm.M * model.gmm.D;
  std::vector<double> fvs(static_cast<std::size_t>(inputs.n) * fv_dim);
  for (int i = 0; i < inputs.n; ++i) {
    Tensor one(1, inputs.c, inputs.h, inputs.w);
    std::memcpy(one.data.data(), inputs.ptr(i), sizeof(double) * one.size());
    nn::ForwardCache cache;
    model.net.forward(one, &cache);
    auto desc = fv::extract_descriptors(cache, model.net, cfg.layer);
    auto enc = fv::fv_encode(desc, model.gmm, cfg.improved);
    std::memcpy(fvs.data() + static_cast<std::size_t>(i) * fv_dim, enc.data(),
                sizeof(double) * fv_dim);
  }
  model.pca = fv::pca_fit(fvs, inputs.n, fv_dim, cfg.pca_dim);
  auto features = fv::pca_project(model.pca, fvs, inputs.n);

  Tensor targets = regression_targets(train_slices, local, LabelMapping::identity(),
                                      model.normalizer);
  model.linreg = fv::mvregress_fit(features, inputs.n, model.pca.p, targets.data,
                               kNumClasses, cfg.ridge);

  auto preds = fv::mvregress_predict(model.linreg, features, inputs.n);
  Tensor scores = Tensor::mat(inputs.n, kNumClasses);
  scores.data = preds;
  auto train_records =
      records_from_scores(train_slices, local, scores, model.truth_threshold);
  model.thresholds = pick_thresholds(train_records);
  return model;
}

inline Tensor fv_scores(const FvPipelineModel& model,
                        const std::vector<LabeledSlice>& slices,
                        const std::vector<int>& rows) {
  std::vector<LabeledSlice> subset;
  subset.reserve(rows.size());
  for (int r : rows) subset.push_back(slices[r]);
  Tensor inputs = build_inputs(subset, model.input_size);
  standardize_inputs(inputs, model.channel_stats);
  auto features = detail::fv_features_for(model, inputs);
  auto preds = fv::mvregress_predict(model.linreg, features, inputs.n);
  Tensor scores = Tensor::mat(inputs.n, kNumClasses);
  scores.data = preds;
  return scores;
}

// ---- model serialization (shared container format) ----

inline nlohmann::json mapping_to_json(const LabelMapping& m) {
  const char* kind = m.kind == LabelMapping::Kind::identity ? "identity"
                     : m.kind == LabelMapping::Kind::step   ? "step"
                                                            : "piecewise";
  return {{"kind", kind}, {"T", m.T}, {"T1", m.T1}, {"T2", m.T2}};
}

inline LabelMapping mapping_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return LabelMapping::identity();
  if (kind == "step") return LabelMapping::step(j.at("T").get<double>());
  return LabelMapping::piecewise(j.at("T1").get<double>(), j.at("T2").get<double>());
}

inline void save_holistic(const std::filesystem::path& path, const HolisticModel& m,
                          const std::string& provenance) {
  Container c;
  c.kind = "network";
  c.meta = {{"provenance", provenance},
            {"net", netspec_to_json(m.net.spec())},
            {"channel_means", m.channel_stats.mean},
            {"channel_stds", m.channel_stats.std},
            {"thresholds", m.thresholds},
            {"head", head_to_string(m.head)},
            {"mapping", mapping_to_json(m.mapping)},
            {"normalizer", m.normalizer},
            {"input_size", m.input_size},
            {"truth_threshold", m.truth_threshold},
            {"balanced", m.balanced}};
  c.blocks = network_param_blocks(m.net);
  save_container(path, c);
}

inline HolisticModel load_holistic(const Container& c) {
  if (c.kind != "network") throw data_error("model file is not a network checkpoint");
  HolisticModel m;
  m.net = nn::Network(netspec_from_json(c.meta.at("net")));
  std::size_t cursor = 0;
  network_load_blocks(m.net, c.blocks, cursor);
  c.meta.at("channel_means").get_to(m.channel_stats.mean);
  c.meta.at("channel_stds").get_to(m.channel_stats.std);
  c.meta.at("thresholds").get_to(m.thresholds);
  m.head = head_from_string(c.meta.at("head").get<std::string>());
  m.mapping = mapping_from_json(c.meta.at("mapping"));
  m.normalizer = c.meta.at("normalizer").get<double>();
  m.input_size = c.meta.at("input_size").get<int>();
  m.truth_threshold = c.meta.at("truth_threshold").get<double>();
  m.balanced = c.meta.at("balanced").get<bool>();
  return m;
}

inline void save_fv_pipeline(const std::filesystem::path& path,
                             const FvPipelineModel& m, const std::string& provenance) {
  Container c;
  c.kind = "fvpipe";
  c.meta = {{"provenance", provenance},
            {"net", netspec_to_json(m.net.spec())},
            {"channel_means", m.channel_stats.mean},
            {"channel_stds", m.channel_stats.std},
            {"thresholds", m.thresholds},
            {"layer", m.layer},
            {"gmm", {{"M", m.gmm.M}, {"D", m.gmm.D}}},
            {"pca", {{"d", m.pca.d}, {"p", m.pca.p}}},
            {"linreg", {{"p", m.linreg.p}, {"C", m.linreg.C}}},
            {"normalizer", m.normalizer},
            {"input_size", m.input_size},
            {"truth_threshold", m.truth_threshold},
            {"improved", m.improved}};
  c.blocks = network_param_blocks(m.net);
  c.blocks.emplace_back(m.gmm.means.data(), m.gmm.means.data() + m.gmm.means.size());
  c.blocks.emplace_back(m.gmm.variances.data(),
                        m.gmm.variances.data() + m.gmm.variances.size());
  c.blocks.emplace_back(m.gmm.weights.data(),
                        m.gmm.weights.data() + m.gmm.weights.size());
  c.blocks.push_back(m.pca.mean);
  c.blocks.push_back(m.pca.basis);
  c.blocks.push_back(m.linreg.W);
  save_container(path, c);
}

inline FvPipelineModel load_fv_pipeline(const Container& c) {
  if (c.kind != "fvpipe") throw data_error("model file is not an FV pipeline");
  FvPipelineModel m;
  m.net = nn::Network(netspec_from_json(c.meta.at("net")));
  std::size_t cursor = 0;
  network_load_blocks(m.net, c.blocks, cursor);
  if (cursor + 6 != c.blocks.size())
    throw data_error("fv pipeline file: unexpected block count");
  c.meta.at("channel_means").get_to(m.channel_stats.mean);
  c.meta.at("channel_stds").get_to(m.channel_stats.std);
  c.meta.at("thresholds").get_to(m.thresholds);
  m.layer = c.meta.at("layer").get<std::string>();
  m.gmm.M = c.meta.at("gmm").at("M").get<int>();
  m.gmm.D = c.meta.at("gmm").at("D").get<int>();
  m.gmm.means = Eigen::Map<const fv::MatRM>(c.blocks[cursor].data(), m.gmm.M, m.gmm.D);
  m.gmm.variances =
      Eigen::Map<const fv::MatRM>(c.blocks[cursor + 1].data(), m.gmm.M, m.gmm.D);
  m.gmm.weights =
      Eigen::Map<const Eigen::VectorXd>(c.blocks[cursor + 2].data(), m.gmm.M);
  m.pca.d = c.meta.at("pca").at("d").get<int>();
  m.pca.p = c.meta.at("pca").at("p").get<int>();
  m.pca.mean = c.blocks[cursor + 3];
  m.pca.basis = c.blocks[cursor + 4];
  m.linreg.p = c.meta.at("linreg").at("p").get<int>();
  m.linreg.C = c.meta.at("linreg").at("C").get<int>();
  m.linreg.W = c.blocks[cursor + 5];
  m.normalizer = c.meta.at("normalizer").get<double>();
  m.input_size = c.meta.at("input_size").get<int>();
  m.truth_threshold = c.meta.at("truth_threshold").get<double>();
  m.improved = c.meta.at("improved").get<bool>();
  return m;
}

}  // namespace ildkit
