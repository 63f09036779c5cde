#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace seqdiff::twostream {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Inverse sigmoid, clamped so saturated probabilities stay finite.
inline double logit(double p) {
  constexpr double lo = 1e-12;
  p = std::fmin(std::fmax(p, lo), 1.0 - lo);
  return std::log(p / (1.0 - p));
}

/// Summed in sorted order, so the result does not depend on input order.
inline double mean_logit(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("mean_logit: empty sequence");
  std::vector<double> sorted(logits.begin(), logits.end());
  std::sort(sorted.begin(), sorted.end());
  double s = 0;
  for (double z : sorted) s += z;
  return s / static_cast<double>(logits.size());
}

/// Sigmoid of the mean per-image logit.
inline double spatial_probability(std::span<const double> image_logits) { return sigmoid(mean_logit(image_logits)); }

/// Sigmoid of the mean per-pair logit.
inline double temporal_probability(std::span<const double> pair_logits) {
  if (pair_logits.empty()) throw std::invalid_argument("temporal_probability: need at least one pair (N >= 2)");
  return sigmoid(mean_logit(pair_logits));
}

inline double fused_probability(double spatial_mean_logit, double temporal_mean_logit) {
  return sigmoid((spatial_mean_logit + temporal_mean_logit) / 2.0);
}

}  // namespace seqdiff::twostream
