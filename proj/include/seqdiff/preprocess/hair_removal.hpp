#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "seqdiff/preprocess/image.hpp"

namespace seqdiff::preprocess {

struct HairRemovalParams {
  std::size_t line_length = 9;  // structuring-element length in pixels
  float threshold = 0.04f;      // blackhat level above which a pixel is hair
};

struct HairRemovalResult {
  ImageF32 image;
  std::vector<std::uint8_t> mask;  // CHW, 1 where the pixel was replaced
  std::size_t replaced = 0;
};

namespace detail {

// Line directions (dy, dx) at 0, 45, 90 and 135 degrees.
inline constexpr std::array<std::array<int, 2>, 4> kLineDirections{{{0, 1}, {-1, 1}, {1, 0}, {1, 1}}};

// Max (dilate) or min (erode) along a line; out-of-image taps are skipped.
template <bool Dilate>
void line_filter(const float* src, float* dst, std::size_t h, std::size_t w, int dy, int dx, int lo, int hi) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float acc = Dilate ? -std::numeric_limits<float>::infinity() : std::numeric_limits<float>::infinity();
      for (int k = lo; k <= hi; ++k) {
        const long yy = static_cast<long>(y) + k * dy;
        const long xx = static_cast<long>(x) + k * dx;
        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
        const float v = src[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
        acc = Dilate ? std::max(acc, v) : std::min(acc, v);
      }
      dst[y * w + x] = acc;
    }
  }
}

}  // namespace detail

/// Per-channel morphological closing with line elements at four
/// orientations; the pointwise max of the closings fills thin dark
/// structures. Pixels whose blackhat (closing - original) exceeds the
/// threshold are replaced by the closing value.
inline HairRemovalResult remove_hair_with_mask(const ImageF32& img, const HairRemovalParams& params = {}) {
  if (img.plane() == 0) throw ImageError("remove_hair: empty image");
  if (params.line_length == 0) throw std::invalid_argument("remove_hair: line length must be positive");
  const int lo = -static_cast<int>(params.line_length / 2);
  const int hi = static_cast<int>(params.line_length) - 1 + lo;
  const std::size_t h = img.height, w = img.width, n = img.plane();
  HairRemovalResult res{img, std::vector<std::uint8_t>(img.size(), 0), 0};
  std::vector<float> dil(n), clo(n), best(n);
  for (std::size_t c = 0; c < img.channels; ++c) {
    const float* src = img.data.data() + c * n;
    std::fill(best.begin(), best.end(), -std::numeric_limits<float>::infinity());
    for (const auto& d : detail::kLineDirections) {
      detail::line_filter<true>(src, dil.data(), h, w, d[0], d[1], lo, hi);
      detail::line_filter<false>(dil.data(), clo.data(), h, w, d[0], d[1], lo, hi);
      for (std::size_t i = 0; i < n; ++i) best[i] = std::max(best[i], clo[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (best[i] - src[i] > params.threshold) {
        res.image.data[c * n + i] = clamp01(best[i]);
        res.mask[c * n + i] = 1;
        ++res.replaced;
      }
    }
  }
  return res;
}

inline ImageF32 remove_hair(const ImageF32& img, const HairRemovalParams& params = {}) {
  return remove_hair_with_mask(img, params).image;
}

}  // namespace seqdiff::preprocess
