#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "seqdiff/data/batch.hpp"
#include "seqdiff/preprocess/image_io.hpp"
#include "seqdiff/twostream/model.hpp"

namespace seqdiff::viz {

/// Per-pixel sum over channels of |d| for row `pair` of a [P,C,H,W] tensor.
template <typename T>
ImageF32 channel_abs_sum(const Tensor<T>& d, std::size_t pair) {
  if (d.rank() != 4 || pair >= d.dim(0)) throw ShapeError("channel_abs_sum: expected [P,C,H,W] and a valid pair");
  const std::size_t c = d.dim(1), h = d.dim(2), w = d.dim(3);
  ImageF32 out(1, h, w, 0.0f);
  const T* base = d.ptr() + pair * c * h * w;
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h * w; ++i) out.data[i] += static_cast<float>(std::abs(base[k * h * w + i]));
  return out;
}

/// Min-max scaling to [0,1]; a constant map becomes all zeros.
inline ImageF32 normalize(ImageF32 m) {
  if (m.data.empty()) return m;
  const auto [lo, hi] = std::minmax_element(m.data.begin(), m.data.end());
  const float mn = *lo, range = *hi - *lo;
  for (auto& v : m.data) v = range > 0 ? (v - mn) / range : 0.0f;
  return m;
}

/// Signed difference shifted to the displayable range (d + 1) / 2.
inline ImageF32 display_difference(const DifferenceImage& d) {
  ImageF32 out(d.channels, d.height, d.width);
  for (std::size_t i = 0; i < d.data.size(); ++i) out.data[i] = clamp01((d.data[i] + 1.0f) / 2.0f);
  return out;
}

/// Red-intensity rendering of a [0,1] heat map blended 50/50 with `image`.
inline ImageF32 overlay(const ImageF32& image, const ImageF32& heat) {
  if (image.channels != 3 || heat.channels != 1 || heat.height != image.height || heat.width != image.width) {
    throw ImageError("overlay: expected an RGB image and a same-size single-channel heat map");
  }
  ImageF32 out = image;
  const std::size_t n = image.plane();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const float red = c == 0 ? heat.data[i] : 0.0f;
      out.data[c * n + i] = clamp01(0.5f * image.data[c * n + i] + 0.5f * red);
    }
  return out;
}

struct PairVisualization {
  std::size_t pair = 0;               // frames pair and pair + 1
  ImageF32 difference;                // displayable pixel difference
  std::vector<ImageF32> raw;          // per stage, at stage resolution, before normalization
  std::vector<ImageF32> heat;         // per stage, normalized and upsampled to the input size
  std::vector<ImageF32> overlays;     // per stage, heat over the later frame
};

/// Feature-difference heat maps for one sequence of equal-size frames.
template <typename T>
std::vector<PairVisualization> visualize_sequence(twostream::TwoStreamModel<T>& model, const std::vector<ImageF32>& frames,
                                                  const preprocess::PreprocessParams& pre = {}) {
  if (frames.size() < 2) throw std::invalid_argument("visualize: need at least two screenings");
  const auto batch = make_batch<T>({frames}, {0}, true, pre);
  Graph<T> g(Graph<T>::Mode::inference);
  const auto out = model.forward(g, batch, {}, true);
  const std::size_t h = frames.front().height, w = frames.front().width, c = frames.front().channels;
  std::vector<PairVisualization> result;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    PairVisualization v;
    v.pair = t;
    DifferenceImage d(c, h, w);
    const T* src = batch.diffs.ptr() + t * c * h * w;
    for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = static_cast<float>(src[i]);
    v.difference = display_difference(d);
    for (const auto& stage : out.differences) {
      v.raw.push_back(channel_abs_sum(stage, t));
      v.heat.push_back(resize_bilinear(normalize(v.raw.back()), h, w));
      v.overlays.push_back(overlay(frames[t + 1], v.heat.back()));
    }
    result.push_back(std::move(v));
  }
  return result;
}

/// Writes "{patient}_{t}_{layer}.png": layer 0 is the pixel difference,
/// layer l >= 1 the stage-l overlay. Returns the written paths.
inline std::vector<std::filesystem::path> write_visualizations(const std::filesystem::path& dir, const std::string& patient,
                                                               const std::vector<PairVisualization>& pairs) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (const auto& v : pairs) {
    const auto name = [&](std::size_t layer) {
      return dir / (patient + "_" + std::to_string(v.pair) + "_" + std::to_string(layer) + ".png");
    };
    write_png(name(0), v.difference);
    out.push_back(name(0));
    for (std::size_t l = 0; l < v.overlays.size(); ++l) {
      write_png(name(l + 1), v.overlays[l]);
      out.push_back(name(l + 1));
    }
  }
  return out;
}

}  // namespace seqdiff::viz
