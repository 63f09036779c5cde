#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "seqdiff/preprocess/image.hpp"
#include "seqdiff/tensor/rng.hpp"

namespace seqdiff::preprocess {

struct AugmentParams {
  double scale_min = 0.7;  // crop area as a fraction of the image
  double scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;
  double flip_prob = 0.5;
  double jitter = 0.1;  // brightness/contrast/saturation factors ~ U(1-j, 1+j)
  bool color = true;
  std::size_t out_size = 32;
};

struct CropBox {
  double top = 0, left = 0, height = 0, width = 0;
  bool operator==(const CropBox&) const = default;
};

/// One geometric + photometric transform, shared by every frame of a sequence.
struct SequenceTransform {
  CropBox box;
  bool flip = false;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  std::size_t out_h = 0, out_w = 0;
  bool operator==(const SequenceTransform&) const = default;
};

/// Random-resized-crop sampling: up to ten attempts at a window of the drawn
/// area and aspect ratio; when none fits, fall back to the largest centred
/// window with a clamped aspect ratio.
inline SequenceTransform sample_transform(std::size_t h, std::size_t w, Rng& rng, const AugmentParams& p) {
  SequenceTransform tf;
  tf.out_h = tf.out_w = p.out_size;
  const double area = static_cast<double>(h * w);
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double target = area * rng.uniform(p.scale_min, p.scale_max);
    const double ratio = std::exp(rng.uniform(std::log(p.ratio_min), std::log(p.ratio_max)));
    const double cw = std::round(std::sqrt(target * ratio));
    const double ch = std::round(std::sqrt(target / ratio));
    if (cw >= 1 && ch >= 1 && cw <= static_cast<double>(w) && ch <= static_cast<double>(h)) {
      tf.box.top = static_cast<double>(rng.index(static_cast<std::size_t>(h - ch) + 1));
      tf.box.left = static_cast<double>(rng.index(static_cast<std::size_t>(w - cw) + 1));
      tf.box.height = ch;
      tf.box.width = cw;
      found = true;
    }
  }
  if (!found) {
    const double in_ratio = static_cast<double>(w) / static_cast<double>(h);
    double cw = static_cast<double>(w), ch = static_cast<double>(h);
    if (in_ratio < p.ratio_min) {
      ch = std::round(cw / p.ratio_min);
    } else if (in_ratio > p.ratio_max) {
      cw = std::round(ch * p.ratio_max);
    }
    tf.box = {std::floor((static_cast<double>(h) - ch) / 2), std::floor((static_cast<double>(w) - cw) / 2), ch, cw};
  }
  tf.flip = rng.bernoulli(p.flip_prob);
  if (p.color && p.jitter > 0) {
    tf.brightness = rng.uniform(1 - p.jitter, 1 + p.jitter);
    tf.contrast = rng.uniform(1 - p.jitter, 1 + p.jitter);
    tf.saturation = rng.uniform(1 - p.jitter, 1 + p.jitter);
  }
  return tf;
}

/// Source-image coordinate (y, x) feeding output pixel (oy, ox).
inline std::array<double, 2> source_coordinate(const SequenceTransform& tf, std::size_t oy, std::size_t ox) {
  const double x = tf.flip ? static_cast<double>(tf.out_w - 1 - ox) : static_cast<double>(ox);
  const double sy = tf.box.top + (static_cast<double>(oy) + 0.5) * tf.box.height / static_cast<double>(tf.out_h) - 0.5;
  const double sx = tf.box.left + (x + 0.5) * tf.box.width / static_cast<double>(tf.out_w) - 0.5;
  return {sy, sx};
}

namespace detail {

inline float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

}  // namespace detail

inline ImageF32 apply_transform(const ImageF32& img, const SequenceTransform& tf) {
  ImageF32 out(img.channels, tf.out_h, tf.out_w);
  for (std::size_t y = 0; y < tf.out_h; ++y)
    for (std::size_t x = 0; x < tf.out_w; ++x) {
      const auto [sy, sx] = source_coordinate(tf, y, x);
      for (std::size_t c = 0; c < img.channels; ++c) out.at(c, y, x) = sample_bilinear(img, c, sy, sx);
    }
  if (img.channels != 3) return out;
  const std::size_t n = out.plane();
  float* r = out.data.data();
  float* g = r + n;
  float* b = g + n;
  if (tf.brightness != 1.0) {
    for (auto& v : out.data) v = clamp01(static_cast<float>(v * tf.brightness));
  }
  if (tf.contrast != 1.0) {
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += detail::luma(r[i], g[i], b[i]);
    m /= static_cast<double>(n);
    for (auto& v : out.data) v = clamp01(static_cast<float>((v - m) * tf.contrast + m));
  }
  if (tf.saturation != 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const float l = detail::luma(r[i], g[i], b[i]);
      r[i] = clamp01(static_cast<float>(l + (r[i] - l) * tf.saturation));
      g[i] = clamp01(static_cast<float>(l + (g[i] - l) * tf.saturation));
      b[i] = clamp01(static_cast<float>(l + (b[i] - l) * tf.saturation));
    }
  }
  return out;
}

/// Samples one transform and applies it to every frame, so inter-frame
/// differences are not polluted by augmentation.
inline std::vector<ImageF32> augment_sequence(const std::vector<ImageF32>& seq, Rng& rng, const AugmentParams& p) {
  if (seq.empty()) return {};
  const auto tf = sample_transform(seq.front().height, seq.front().width, rng, p);
  std::vector<ImageF32> out;
  out.reserve(seq.size());
  for (const auto& img : seq) out.push_back(apply_transform(img, tf));
  return out;
}

/// Deterministic evaluation view: full image resized to `out_size`.
inline std::vector<ImageF32> resize_sequence(const std::vector<ImageF32>& seq, std::size_t out_size) {
  std::vector<ImageF32> out;
  out.reserve(seq.size());
  for (const auto& img : seq) out.push_back(resize_bilinear(img, out_size, out_size));
  return out;
}

}  // namespace seqdiff::preprocess
