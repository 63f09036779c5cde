#pragma once

#include <vector>

#include "seqdiff/preprocess/color_constancy.hpp"
#include "seqdiff/preprocess/hair_removal.hpp"
#include "seqdiff/preprocess/image.hpp"

namespace seqdiff::preprocess {

struct PreprocessParams {
  double minkowski_p = 6.0;
  HairRemovalParams hair;
  bool remove_hair = true;
  bool color_constancy = true;
};

/// Hair removal followed by color constancy, the order the difference stream
/// expects.
inline ImageF32 clean(const ImageF32& img, const PreprocessParams& params = {}) {
  ImageF32 out = params.remove_hair ? remove_hair(img, params.hair) : img;
  if (params.color_constancy) out = gray_world(out, params.minkowski_p);
  return out;
}

inline DifferenceImage difference(const ImageF32& later, const ImageF32& earlier) {
  require_same_dims(later, earlier, "pixel_difference");
  DifferenceImage d(later.channels, later.height, later.width);
  for (std::size_t i = 0; i < d.size(); ++i) d.data[i] = later.data[i] - earlier.data[i];
  return d;
}

/// out[t] = seq[t+1] - seq[t] over already-cleaned images.
inline std::vector<DifferenceImage> pixel_difference(const std::vector<ImageF32>& seq) {
  if (seq.size() < 2) throw ImageError("pixel_difference: need at least two images");
  std::vector<DifferenceImage> out;
  out.reserve(seq.size() - 1);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) out.push_back(difference(seq[t + 1], seq[t]));
  return out;
}

}  // namespace seqdiff::preprocess
