#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/rng.hpp"

namespace ildkit::evalkit {

struct PredictionRecord {
  std::string slice_id;
  std::string patient_id;
  std::array<double, kNumClasses> scores{};
  std::array<int, kNumClasses> true_labels{};  // in {0,1}
};

struct OverallMetrics {
  double accuracy = 0;   // mean per-record Jaccard (Hamming score)
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct BinaryMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool degenerate = false;  // no positives and no predicted positives
};

struct CurvePoint {
  double threshold;
  double x;
  double y;
};

struct Curve {
  std::vector<CurvePoint> points;
  double area = 0;  // AUC for ROC, average precision for PR
};

// Set-overlap metrics averaged per record. Empty-set convention: a record
// with an empty denominator contributes 1 when both sets are empty (perfect
// healthy prediction) and 0 otherwise.
inline OverallMetrics multilabel_metrics(const std::vector<PredictionRecord>& records,
                                         const std::array<double, kNumClasses>& thresholds) {
  if (records.empty()) throw data_error("multilabel_metrics: no records");
  auto term = [](double num, double den, bool both_empty) {
    return den > 0 ? num / den : (both_empty ? 1.0 : 0.0);
  };
  double acc = 0, prec = 0, rec = 0;
  for (const auto& r : records) {
    int inter = 0, uni = 0, t_size = 0, s_size = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      bool in_t = r.true_labels[k] != 0;
      bool in_s = r.scores[k] >= thresholds[k];
      inter += (in_t && in_s);
      uni += (in_t || in_s);
      t_size += in_t;
      s_size += in_s;
    }
    bool both_empty = (t_size == 0 && s_size == 0);
    acc += term(inter, uni, both_empty);
    prec += term(inter, s_size, both_empty);
    rec += term(inter, t_size, both_empty);
  }
  OverallMetrics m;
  double n = static_cast<double>(records.size());
  m.accuracy = acc / n;
  m.precision = prec / n;
  m.recall = rec / n;
  m.f1 = (m.precision + m.recall > 0)
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

inline BinaryMetrics per_class_f1(const std::vector<PredictionRecord>& records,
                                  int cls, double threshold) {
  if (cls < 0 || cls >= kNumClasses) throw usage_error("per_class_f1: class out of range");
  long tp = 0, fp = 0, fn = 0;
  for (const auto& r : records) {
    bool truth = r.true_labels[cls] != 0;
    bool pred = r.scores[cls] >= threshold;
    tp += (truth && pred);
    fp += (!truth && pred);
    fn += (truth && !pred);
  }
  BinaryMetrics m;
  m.degenerate = (tp + fn == 0) && (tp + fp == 0);
  m.precision = (tp + fp > 0) ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = (tp + fn > 0) ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall > 0)
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

namespace detail {

// descending by score; groups equal scores together
inline std::vector<int> score_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace detail

// ROC swept over all score thresholds, tied scores collapsed into single
// steps; trapezoidal AUC (equals the Wilcoxon-Mann-Whitney statistic with
// ties counted 1/2).
inline Curve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw data_error("roc_auc: scores/labels size mismatch");
  long P = 0, N = 0;
  for (int l : labels) (l != 0 ? P : N)++;
  if (P == 0 || N == 0)
    throw data_error("roc_auc: AUC undefined with single-class labels");

  auto order = detail::score_order(scores);
  Curve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double auc = 0.0;
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    double s = scores[order[i]];
    long dtp = 0, dfp = 0;
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] != 0 ? dtp : dfp)++;
      ++i;
    }
    double fpr0 = static_cast<double>(fp) / N, tpr0 = static_cast<double>(tp) / P;
    tp += dtp;
    fp += dfp;
    double fpr1 = static_cast<double>(fp) / N, tpr1 = static_cast<double>(tp) / P;
    auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
    curve.points.push_back({s, fpr1, tpr1});
  }
  curve.area = auc;
  return curve;
}

// Precision-recall curve with average precision by step-wise summation.
inline Curve pr_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw data_error("pr_curve: scores/labels size mismatch");
  long P = 0;
  for (int l : labels) P += (l != 0);
  if (P == 0) throw data_error("pr_curve: no positive labels");

  auto order = detail::score_order(scores);
  Curve curve;
  double ap = 0.0;
  long tp = 0, pred = 0;
  double prev_recall = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      tp += (labels[order[i]] != 0);
      ++pred;
      ++i;
    }
    double recall = static_cast<double>(tp) / P;
    double precision = static_cast<double>(tp) / pred;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    curve.points.push_back({s, recall, precision});
  }
  curve.area = ap;
  return curve;
}

// Seeded patient-level partition into k folds with sizes differing by at
// most 1. Every slice follows its patient.
inline std::vector<std::vector<std::string>> patient_folds(
    const std::vector<std::string>& patient_ids, int k, std::uint64_t seed) {
  if (k < 1) throw usage_error("patient_folds: k must be >= 1");
  std::set<std::string> uniq(patient_ids.begin(), patient_ids.end());
  if (static_cast<int>(uniq.size()) < k)
    throw data_error("patient_folds: fewer distinct patients (" +
                     std::to_string(uniq.size()) + ") than folds (" +
                     std::to_string(k) + ")");
  std::vector<std::string> patients(uniq.begin(), uniq.end());
  Rng rng = Rng::stream(seed, "folds");
  rng.shuffle(patients);
  std::vector<std::vector<std::string>> folds(k);
  for (std::size_t i = 0; i < patients.size(); ++i)
    folds[i % k].push_back(patients[i]);
  return folds;
}

inline int fold_of_patient(const std::vector<std::vector<std::string>>& folds,
                           const std::string& patient_id) {
  for (std::size_t f = 0; f < folds.size(); ++f)
    for (const auto& p : folds[f])
      if (p == patient_id) return static_cast<int>(f);
  throw data_error("fold_of_patient: unknown patient " + patient_id);
}

// Per-class operating threshold maximizing that class's F1 over the given
// records (used on the training fold; test-fold truth never informs it).
inline double choose_threshold(const std::vector<PredictionRecord>& records, int cls) {
  std::vector<double> scores;
  scores.reserve(records.size());
  for (const auto& r : records) scores.push_back(r.scores[cls]);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  double best_thr = scores.empty() ? 0.0 : scores.back() + 1.0;
  double best_f1 = per_class_f1(records, cls, best_thr).f1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double thr = scores[i];
    double f1 = per_class_f1(records, cls, thr).f1;
    if (f1 > best_f1 + 1e-12) {
      best_f1 = f1;
      best_thr = thr;
    }
  }
  return best_thr;
}

struct EvalReport {
  std::array<BinaryMetrics, kNumClasses> per_class{};
  std::array<double, kNumClasses> auc{};
  std::array<bool, kNumClasses> auc_defined{};
  OverallMetrics overall;
  std::array<Curve, kNumClasses> roc{};
  std::array<Curve, kNumClasses> pr{};
  std::array<double, kNumClasses> thresholds{};
};

inline EvalReport evaluate_records(const std::vector<PredictionRecord>& records,
                                   const std::array<double, kNumClasses>& thresholds) {
  EvalReport rep;
  rep.thresholds = thresholds;
  rep.overall = multilabel_metrics(records, thresholds);
  for (int k = 0; k < kNumClasses; ++k) {
    rep.per_class[k] = per_class_f1(records, k, thresholds[k]);
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(records.size());
    labels.reserve(records.size());
    for (const auto& r : records) {
      scores.push_back(r.scores[k]);
      labels.push_back(r.true_labels[k]);
    }
    long pos = std::accumulate(labels.begin(), labels.end(), 0L);
    rep.auc_defined[k] = pos > 0 && pos < static_cast<long>(labels.size());
    if (rep.auc_defined[k]) {
      rep.roc[k] = roc_auc(scores, labels);
      rep.auc[k] = rep.roc[k].area;
      rep.pr[k] = pr_curve(scores, labels);
    }
  }
  return rep;
}

inline double mean_defined_auc(const EvalReport& rep) {
  double sum = 0;
  int n = 0;
  for (int k = 0; k < kNumClasses; ++k)
    if (rep.auc_defined[k]) {
      sum += rep.auc[k];
      ++n;
    }
  if (n == 0) throw data_error("mean AUC undefined: no class has both labels");
  return sum / n;
}

// ---- CSV / SVG emission ----

inline void write_report_csv(const std::filesystem::path& path, const EvalReport& rep,
                             const std::string& provenance) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write report: " + path.string());
  os << "# provenance: " << provenance << "\n";
  os << "class,accuracy,precision,recall,f1,auc,threshold\n";
  for (int k = 0; k < kNumClasses; ++k) {
    os << class_name(k) << ",," << fmt_double(rep.per_class[k].precision) << ","
       << fmt_double(rep.per_class[k].recall) << "," << fmt_double(rep.per_class[k].f1)
       << "," << (rep.auc_defined[k] ? fmt_double(rep.auc[k]) : std::string()) << ","
       << fmt_double(rep.thresholds[k]) << "\n";
  }
  os << "overall," << fmt_double(rep.overall.accuracy) << ","
     << fmt_double(rep.overall.precision) << "," << fmt_double(rep.overall.recall)
     << "," << fmt_double(rep.overall.f1) << ",,\n";
}

inline void write_curve_csv(const std::filesystem::path& path, const Curve& curve,
                            const std::string& provenance) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write curve: " + path.string());
  os << "# provenance: " << provenance << "\n";
  os << "threshold,x,y\n";
  for (const auto& p : curve.points)
    os << fmt_double(p.threshold) << "," << fmt_double(p.x) << "," << fmt_double(p.y)
       << "\n";
}

inline void write_curves_svg(const std::filesystem::path& path,
                             const std::string& title, const std::string& xlabel,
                             const std::string& ylabel,
                             const std::array<Curve, kNumClasses>& curves,
                             const std::array<bool, kNumClasses>& defined) {
  static const char* colors[kNumClasses] = {"#1f77b4", "#d62728", "#2ca02c",
                                            "#9467bd"};
  const double W = 480, H = 360, ml = 56, mr = 16, mt = 32, mb = 44;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto px = [&](double x) { return ml + x * pw; };
  auto py = [&](double y) { return mt + (1.0 - y) * ph; };

  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write svg: " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
     << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n";
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    os << "<line x1=\"" << px(t) << "\" y1=\"" << py(0) << "\" x2=\"" << px(t)
       << "\" y2=\"" << py(1) << "\" stroke=\"#ddd\"/>\n";
    os << "<line x1=\"" << px(0) << "\" y1=\"" << py(t) << "\" x2=\"" << px(1)
       << "\" y2=\"" << py(t) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << px(t) << "\" y=\"" << H - mb + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt_double(t) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << py(t) + 3
       << "\" text-anchor=\"end\" font-size=\"10\">" << fmt_double(t) << "</text>\n";
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 8
     << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  os << "<text x=\"14\" y=\"" << H / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
     << H / 2 << ")\">" << ylabel << "</text>\n";
  for (int k = 0; k < kNumClasses; ++k) {
    if (!defined[k] || curves[k].points.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << colors[k]
       << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : curves[k].points) os << px(p.x) << "," << py(p.y) << " ";
    os << "\"/>\n";
    os << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 14 + 14 * k
       << "\" font-size=\"11\" fill=\"" << colors[k] << "\">" << class_name(k)
       << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace ildkit::evalkit
