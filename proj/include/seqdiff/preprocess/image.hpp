#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqdiff {

struct UnitRange {};
struct SignedRange {};

/// Channel-major (CHW) float image. The tag distinguishes images whose
/// values live in [0,1] from signed difference images in [-1,1].
template <typename Range>
struct PlanarImage {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  PlanarImage() = default;
  PlanarImage(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return data.size(); }

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

  bool same_dims(const PlanarImage& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool operator==(const PlanarImage&) const = default;
};

using ImageF32 = PlanarImage<UnitRange>;
using DifferenceImage = PlanarImage<SignedRange>;

class ImageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename R>
void require_same_dims(const PlanarImage<R>& a, const PlanarImage<R>& b, const char* op) {
  if (!a.same_dims(b)) {
    throw ImageError(std::string(op) + ": image dimensions differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

inline void clamp_in_place(ImageF32& img) {
  for (auto& v : img.data) v = clamp01(v);
}

/// Bilinear sample with edge clamping, at continuous pixel-centre coordinates.
template <typename R>
float sample_bilinear(const PlanarImage<R>& img, std::size_t c, double y, double x) {
  const double fy = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const double fx = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(fy));
  const auto x0 = static_cast<std::size_t>(std::floor(fx));
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const double wy = fy - static_cast<double>(y0), wx = fx - static_cast<double>(x0);
  const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
  const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
  return static_cast<float>(top * (1 - wy) + bot * wy);
}

/// Half-pixel-centre bilinear resize.
template <typename R>
PlanarImage<R> resize_bilinear(const PlanarImage<R>& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || img.height == 0 || img.width == 0) {
    throw ImageError("resize_bilinear: empty image or target");
  }
  if (out_h == img.height && out_w == img.width) return img;
  PlanarImage<R> out(img.channels, out_h, out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x)
        out.at(c, y, x) = sample_bilinear(img, c, (static_cast<double>(y) + 0.5) * sy - 0.5,
                                          (static_cast<double>(x) + 0.5) * sx - 0.5);
  return out;
}

template <typename R>
PlanarImage<R> hflip(const PlanarImage<R>& img) {
  PlanarImage<R> out(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

template <typename R>
PlanarImage<R> crop(const PlanarImage<R>& img, std::size_t top, std::size_t left, std::size_t h,
                    std::size_t w) {
  if (top + h > img.height || left + w > img.width) throw ImageError("crop: window outside image");
  PlanarImage<R> out(img.channels, h, w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
  return out;
}

}  // namespace seqdiff
