#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "wsikit/core.hpp"

namespace wsikit {

// ---------------------------------------------------------------------------
// Confusion-matrix metrics
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  int class_count = 0;
  std::vector<long long> counts;  // actual-major: counts[actual * n + predicted]

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int classes)
      : class_count(classes),
        counts(static_cast<std::size_t>(classes) * classes, 0) {}

  long long& at(int actual, int predicted) {
    return counts[static_cast<std::size_t>(actual) * class_count + predicted];
  }
  long long at(int actual, int predicted) const {
    return counts[static_cast<std::size_t>(actual) * class_count + predicted];
  }
  void add(int actual, int predicted, long long n = 1) {
    at(actual, predicted) += n;
  }
  long long total() const {
    long long t = 0;
    for (long long c : counts) t += c;
    return t;
  }
};

struct ClassificationReport {
  double accuracy = 0.0;
  double precision = 0.0;    // macro-averaged one-vs-rest
  double recall = 0.0;
  double specificity = 0.0;
  bool degenerate = false;   // some per-class denominator was zero
};

// Macro averaging counts zero-denominator classes as 0 and sets the
// degenerate flag instead of dropping them, so the averages stay comparable
// across runs with the same class set.
inline ClassificationReport classification_metrics(const ConfusionMatrix& cm) {
  long long total = cm.total();
  if (cm.class_count == 0 || total == 0)
    fail(ErrorKind::EmptyMatrix, "confusion matrix has no samples");
  ClassificationReport r;
  long long trace = 0;
  for (int c = 0; c < cm.class_count; ++c) trace += cm.at(c, c);
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);

  auto ratio = [&](long long num, long long den) {
    if (den == 0) {
      r.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  for (int c = 0; c < cm.class_count; ++c) {
    long long tp = cm.at(c, c), row = 0, col = 0;
    for (int k = 0; k < cm.class_count; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    long long fn = row - tp, fp = col - tp, tn = total - tp - fn - fp;
    r.precision += ratio(tp, tp + fp);
    r.recall += ratio(tp, tp + fn);
    r.specificity += ratio(tn, tn + fp);
  }
  r.precision /= cm.class_count;
  r.recall /= cm.class_count;
  r.specificity /= cm.class_count;
  return r;
}

// ---------------------------------------------------------------------------
// Flip accounting: how the weighted decision changed the base decision.
// A "flip" is a change of predicted class; flipping onto the truth is a
// true positive, flipping off it a false positive, and so on.
// ---------------------------------------------------------------------------

struct FlipCounts {
  long long correct_flips = 0;      // base wrong, weighted right (TP)
  long long incorrect_flips = 0;    // base right, weighted wrong (FP)
  long long correct_no_flips = 0;   // both right and unchanged (TN)
  long long incorrect_no_flips = 0; // everything else, including wrong->wrong (FN)

  long long total() const {
    return correct_flips + incorrect_flips + correct_no_flips +
           incorrect_no_flips;
  }
};

template <typename Label>
FlipCounts flip_accounting(const std::vector<Label>& base,
                           const std::vector<Label>& weighted,
                           const std::vector<Label>& gt) {
  if (base.size() != weighted.size() || base.size() != gt.size())
    fail(ErrorKind::LengthMismatch, "flip sequences differ in length");
  FlipCounts fc;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base[i] != weighted[i] && weighted[i] == gt[i])
      ++fc.correct_flips;
    else if (base[i] == gt[i] && weighted[i] != gt[i])
      ++fc.incorrect_flips;
    else if (base[i] == weighted[i] && weighted[i] == gt[i])
      ++fc.correct_no_flips;
    else
      ++fc.incorrect_no_flips;
  }
  return fc;
}

inline ClassificationReport flip_metrics(const FlipCounts& fc) {
  long long total = fc.total();
  if (total == 0) fail(ErrorKind::EmptyCounts, "no flip samples");
  long long tp = fc.correct_flips, fp = fc.incorrect_flips,
            tn = fc.correct_no_flips, fn = fc.incorrect_no_flips;
  ClassificationReport r;
  auto ratio = [&](long long num, long long den) {
    if (den == 0) {
      r.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.specificity = ratio(tn, tn + fp);
  return r;
}

// ---------------------------------------------------------------------------
// Intersection over union on label grids
// ---------------------------------------------------------------------------

struct IoUReport {
  double micro = 1.0;
  double macro = 1.0;
  // One entry per evaluated class; nullopt when the class appears in
  // neither grid (excluded from macro).
  std::vector<std::pair<TumorClass, std::optional<double>>> per_class;
};

inline IoUReport iou(const std::vector<TumorClass>& pred,
                     const std::vector<TumorClass>& gt,
                     const std::vector<TumorClass>& classes) {
  if (pred.size() != gt.size())
    fail(ErrorKind::ShapeMismatch, "label grids differ in size");
  IoUReport report;
  long long pool_inter = 0, pool_union = 0;
  double macro_sum = 0.0;
  int macro_n = 0;
  for (TumorClass cls : classes) {
    long long inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      bool p = pred[i] == cls, g = gt[i] == cls;
      inter += p && g;
      uni += p || g;
    }
    pool_inter += inter;
    pool_union += uni;
    if (uni == 0) {
      report.per_class.emplace_back(cls, std::nullopt);
    } else {
      double v = static_cast<double>(inter) / static_cast<double>(uni);
      report.per_class.emplace_back(cls, v);
      macro_sum += v;
      ++macro_n;
    }
  }
  // A zero pooled union means the grids agree vacuously on every evaluated
  // class; report 1.0 so "identical implies 1" holds.
  report.micro = pool_union == 0
                     ? 1.0
                     : static_cast<double>(pool_inter) /
                           static_cast<double>(pool_union);
  report.macro = macro_n == 0 ? 1.0 : macro_sum / macro_n;
  return report;
}

// ---------------------------------------------------------------------------
// ROC / AUC
// ---------------------------------------------------------------------------

struct RocPoint {
  double threshold = 0.0;  // sample is positive iff score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

inline RocResult roc_auc(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    fail(ErrorKind::LengthMismatch, "score and label counts differ");
  long long positives = 0, negatives = 0;
  for (int l : labels) (l != 0 ? positives : negatives) += 1;
  if (positives == 0 || negatives == 0)
    fail(ErrorKind::SingleClass, "ROC needs both label values");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocResult roc;
  roc.points.push_back(
      {std::numeric_limits<double>::infinity(), 0.0, 0.0});
  long long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    double thr = scores[order[i]];
    // Equal scores cross the threshold together; one point per unique score.
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    roc.points.push_back({thr,
                          static_cast<double>(fp) / negatives,
                          static_cast<double>(tp) / positives});
  }
  for (std::size_t k = 1; k < roc.points.size(); ++k) {
    const RocPoint& a = roc.points[k - 1];
    const RocPoint& b = roc.points[k];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return roc;
}

}  // namespace wsikit
