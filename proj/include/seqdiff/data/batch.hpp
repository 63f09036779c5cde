#pragma once

#include <vector>

#include "seqdiff/preprocess/difference.hpp"
#include "seqdiff/preprocess/image.hpp"
#include "seqdiff/tensor/tensor.hpp"

namespace seqdiff {

/// B equal-length sequences flattened frame-major per sequence:
/// image row b*N + t is frame t of sequence b, difference row b*(N-1) + t is
/// frame t+1 minus frame t after cleaning.
template <typename T>
struct SequenceBatch {
  Tensor<T> images;  // [B*N, C, H, W]
  Tensor<T> diffs;   // [B*(N-1), C, H, W], undefined when not requested
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> labels;
};

template <typename T, typename R>
void append_image(std::vector<T>& out, const PlanarImage<R>& img) {
  out.insert(out.end(), img.data.begin(), img.data.end());
}

template <typename T>
SequenceBatch<T> make_batch(const std::vector<std::vector<ImageF32>>& seqs, std::vector<int> labels,
                            bool with_differences, const preprocess::PreprocessParams& pre = {}) {
  if (seqs.empty()) throw ShapeError("make_batch: no sequences");
  if (labels.size() != seqs.size()) throw ShapeError("make_batch: labels and sequences differ in count");
  const std::size_t n = seqs.front().size();
  if (n == 0) throw ShapeError("make_batch: empty sequence");
  const auto& first = seqs.front().front();
  for (const auto& s : seqs) {
    if (s.size() != n) throw ShapeError("make_batch: sequences must be equalized to one length");
    for (const auto& img : s) require_same_dims(img, first, "make_batch");
  }
  if (with_differences && n < 2) throw ShapeError("make_batch: differences need at least two frames");

  SequenceBatch<T> b;
  b.batch = seqs.size();
  b.length = n;
  b.labels = std::move(labels);
  std::vector<T> px;
  px.reserve(b.batch * n * first.size());
  for (const auto& s : seqs)
    for (const auto& img : s) append_image(px, img);
  b.images = Tensor<T>({b.batch * n, first.channels, first.height, first.width}, std::move(px));
  if (with_differences) {
    std::vector<T> d;
    d.reserve(b.batch * (n - 1) * first.size());
    for (const auto& s : seqs) {
      std::vector<ImageF32> cleaned;
      cleaned.reserve(n);
      for (const auto& img : s) cleaned.push_back(preprocess::clean(img, pre));
      for (const auto& diff : preprocess::pixel_difference(cleaned)) append_image(d, diff);
    }
    b.diffs = Tensor<T>({b.batch * (n - 1), first.channels, first.height, first.width}, std::move(d));
  }
  return b;
}

}  // namespace seqdiff
