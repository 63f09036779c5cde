#pragma once

#include <array>
#include <vector>

#include "seqdiff/preprocess/image.hpp"

namespace seqdiff::preprocess {

struct CropOffset {
  std::size_t top = 0, left = 0;
  bool flip = false;
  bool operator==(const CropOffset&) const = default;
};

/// Order: TL, TR, BL, BR, centre, then the same five mirrored.
inline std::array<CropOffset, 10> ten_crop_offsets(std::size_t h, std::size_t w, std::size_t crop) {
  if (crop == 0 || crop > h || crop > w) throw ImageError("ten_crop: crop larger than image");
  const std::size_t bottom = h - crop, right = w - crop;
  const std::array<CropOffset, 5> base{{{0, 0}, {0, right}, {bottom, 0}, {bottom, right}, {bottom / 2, right / 2}}};
  std::array<CropOffset, 10> out{};
  for (std::size_t i = 0; i < 5; ++i) {
    out[i] = base[i];
    out[i + 5] = base[i];
    out[i + 5].flip = true;
  }
  return out;
}

template <typename R>
PlanarImage<R> apply_crop(const PlanarImage<R>& img, const CropOffset& off, std::size_t crop_size) {
  auto c = crop(img, off.top, off.left, crop_size, crop_size);
  return off.flip ? hflip(c) : c;
}

inline std::array<ImageF32, 10> ten_crop(const ImageF32& img, std::size_t crop_size) {
  const auto offsets = ten_crop_offsets(img.height, img.width, crop_size);
  std::array<ImageF32, 10> out;
  for (std::size_t i = 0; i < 10; ++i) out[i] = apply_crop(img, offsets[i], crop_size);
  return out;
}

}  // namespace seqdiff::preprocess
