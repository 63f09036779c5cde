#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqdiff::eval {

class SingleClassError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
  std::size_t negatives() const { return labels.size() - positives(); }
  bool both_classes() const { return positives() > 0 && negatives() > 0; }

  void validate() const {
    if (scores.size() != labels.size()) throw std::invalid_argument("scored set: scores and labels differ in length");
    for (int l : labels)
      if (l != 0 && l != 1) throw std::invalid_argument("scored set: labels must be 0 or 1");
    for (double s : scores)
      if (std::isnan(s)) throw std::invalid_argument("scored set: NaN score");
  }

  void require_both_classes(const char* op) const {
    validate();
    if (!both_classes()) throw SingleClassError(std::string(op) + ": needs both positive and negative examples");
  }
};

/// Mann-Whitney AUC: (ordered pairs + half the tied pairs) / (P * N),
/// counted exactly in integers.
inline double roc_auc(const ScoredSet& set) {
  set.require_both_classes("roc_auc");
  std::vector<std::size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return set.scores[a] < set.scores[b]; });
  std::uint64_t twice = 0;  // 2 * (ordered + 0.5 * tied)
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) {
      (set.labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    twice += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    i = j;
  }
  const double denom = 2.0 * static_cast<double>(set.positives()) * static_cast<double>(set.negatives());
  return static_cast<double>(twice) / denom;
}

/// -inf, midpoints between consecutive distinct scores, +inf; ascending.
inline std::vector<double> candidate_thresholds(std::vector<double> scores) {
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  std::vector<double> out{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 1; i < scores.size(); ++i) out.push_back(scores[i - 1] + (scores[i] - scores[i - 1]) / 2);
  out.push_back(std::numeric_limits<double>::infinity());
  return out;
}

struct PointMetrics {
  double threshold = 0;
  double accuracy = 0;
  double precision = 0;
  double sensitivity = 0;
  double specificity = 0;

  double youden() const { return sensitivity + specificity - 1; }
};

/// Metrics for the rule score >= threshold => positive.
inline PointMetrics metrics_at(const ScoredSet& set, double threshold) {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    const bool predicted = set.scores[i] >= threshold;
    if (set.labels[i] == 1) {
      predicted ? ++tp : ++fn;
    } else {
      predicted ? ++fp : ++tn;
    }
  }
  PointMetrics m;
  m.threshold = threshold;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  m.accuracy = d(tp + tn) / d(set.scores.size());
  m.precision = tp + fp == 0 ? 0.0 : d(tp) / d(tp + fp);
  m.sensitivity = tp + fn == 0 ? 0.0 : d(tp) / d(tp + fn);
  m.specificity = tn + fp == 0 ? 0.0 : d(tn) / d(tn + fp);
  return m;
}

/// Youden-optimal operating point; ties go to the smallest threshold.
inline PointMetrics optimal_threshold_metrics(const ScoredSet& set) {
  set.require_both_classes("optimal_threshold_metrics");
  PointMetrics best;
  bool have = false;
  for (double t : candidate_thresholds(set.scores)) {
    const auto m = metrics_at(set, t);
    if (!have || m.youden() > best.youden()) {
      best = m;
      have = true;
    }
  }
  return best;
}

struct RocPoint {
  double threshold, tpr, fpr;
};

/// One point per candidate threshold, from +inf down to -inf.
inline std::vector<RocPoint> roc_curve(const ScoredSet& set) {
  set.require_both_classes("roc_curve");
  auto thr = candidate_thresholds(set.scores);
  std::vector<RocPoint> out;
  for (auto it = thr.rbegin(); it != thr.rend(); ++it) {
    const auto m = metrics_at(set, *it);
    out.push_back({*it, m.sensitivity, 1.0 - m.specificity});
  }
  return out;
}

struct Aggregate {
  std::vector<double> per_fold;
  double mean = 0;
  double std = 0;  // sample standard deviation (divisor k-1)
};

inline Aggregate aggregate_folds(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("aggregate_folds: need at least two folds");
  Aggregate a;
  a.per_fold = values;
  const double k = static_cast<double>(values.size());
  double shift = 0;  // summed relative to the first value, so equal folds give std 0 exactly
  for (double v : values) shift += v - values[0];
  a.mean = values[0] + shift / k;
  double ss = 0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(ss / (k - 1));
  return a;
}

/// "mean ± std" in percent with two decimals; inputs are fractions.
inline std::string percent_summary(const Aggregate& a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100 * a.mean, 100 * a.std);
  return buf;
}

}  // namespace seqdiff::eval
