#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "seqdiff/preprocess/image.hpp"

namespace seqdiff::preprocess {

class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayWorldEstimate {
  std::array<double, 3> illuminant{};
  std::array<double, 3> gains{};
};

/// Minkowski-p mean of one channel: (mean of v^p)^(1/p).
inline double minkowski_mean(const float* plane, std::size_t n, double p) {
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::pow(static_cast<double>(plane[i]), p);
  return std::pow(acc / static_cast<double>(n), 1.0 / p);
}

/// General gray-world illuminant estimate. p = 1 is the classic gray world;
/// p -> infinity approaches max-RGB.
inline GrayWorldEstimate estimate_gray_world(const ImageF32& img, double p) {
  if (p < 1.0) throw std::invalid_argument("gray_world: Minkowski order must be >= 1");
  if (img.channels != 3 || img.plane() == 0) throw ImageError("gray_world: expected a non-empty RGB image");
  GrayWorldEstimate est;
  double mean_e = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    est.illuminant[c] = minkowski_mean(img.data.data() + c * img.plane(), img.plane(), p);
    if (!(est.illuminant[c] > 0.0)) {
      throw DegenerateInputError("gray_world: channel " + std::to_string(c) + " is all zero");
    }
    mean_e += est.illuminant[c] / 3.0;
  }
  for (std::size_t c = 0; c < 3; ++c) est.gains[c] = mean_e / est.illuminant[c];
  return est;
}

/// Channel-scaled pixel values before clamping, in CHW order.
inline std::vector<double> apply_gains_unclamped(const ImageF32& img, const std::array<double, 3>& gains) {
  std::vector<double> out(img.size());
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t i = 0; i < img.plane(); ++i)
      out[c * img.plane() + i] = gains[c] * img.data[c * img.plane() + i];
  return out;
}

inline ImageF32 gray_world(const ImageF32& img, double p = 6.0) {
  const auto est = estimate_gray_world(img, p);
  ImageF32 out = img;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < img.plane(); ++i) {
      float& v = out.data[c * img.plane() + i];
      v = clamp01(static_cast<float>(est.gains[c] * v));
    }
  return out;
}

}  // namespace seqdiff::preprocess
