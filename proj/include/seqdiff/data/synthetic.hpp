#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqdiff/data/dataset.hpp"
#include "seqdiff/preprocess/image_io.hpp"
#include "seqdiff/tensor/rng.hpp"

namespace seqdiff::data {

struct Range {
  double lo = 0, hi = 0;
  bool operator==(const Range&) const = default;
};

/// Lesion-evolution generator settings. Radii and growth are fractions of
/// the image width; benign lesions keep a constant size, malignant ones grow
/// by `growth` per visit.
struct SyntheticConfig {
  std::size_t image_size = 32;
  std::size_t length = 4;
  Range benign_radius{0.22, 0.38};
  Range malignant_start{0.10, 0.26};
  double growth = 0.04;
  double lobe_prob = 0.0;
  double background_noise = 0.03;
  double lesion_noise = 0.05;
  double jitter_px = 1.0;     // per-visit centre jitter, both classes
  double illumination = 0.05;  // per-visit channel gain ~ 1 +- illumination
  double hair_prob = 0.2;      // per visit
  std::size_t benign = 150;
  std::size_t malignant = 150;
  std::uint64_t seed = 0;

  /// Largest lesion extent from the image centre, in pixels.
  double max_extent_px() const {
    const double w = static_cast<double>(image_size);
    const double steps = length > 0 ? static_cast<double>(length - 1) : 0.0;
    double r = std::max(benign_radius.hi, malignant_start.hi + steps * growth);
    if (lobe_prob > 0) r *= std::max(1.0, kLobeOffset + kLobeRadius);
    return r * w + jitter_px;
  }

  void validate() const {
    auto bad = [](const std::string& m) { throw std::invalid_argument("synthetic config: " + m); };
    if (image_size < 8) bad("image_size must be at least 8");
    if (length == 0) bad("length must be positive");
    for (const auto& [name, r] : {std::pair{"benign_radius", benign_radius}, std::pair{"malignant_start", malignant_start}}) {
      if (!(r.lo > 0) || r.hi < r.lo) bad(std::string(name) + " must satisfy 0 < lo <= hi");
    }
    if (growth < 0) bad("growth must be nonnegative");
    if (lobe_prob < 0 || lobe_prob > 1 || hair_prob < 0 || hair_prob > 1) bad("probabilities must lie in [0,1]");
    if (background_noise < 0 || lesion_noise < 0 || jitter_px < 0 || illumination < 0 || illumination >= 1) {
      bad("noise, jitter and illumination must be nonnegative (illumination < 1)");
    }
    const double room = static_cast<double>(image_size) / 2.0 - 0.5;
    if (max_extent_px() > room) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "lesion radius exceeds image bounds (extent %.2f px > %.2f px available)",
                    max_extent_px(), room);
      bad(buf);
    }
  }

  static constexpr double kLobeOffset = 0.6;  // lobe centre distance, in radii
  static constexpr double kLobeRadius = 0.45;  // lobe radius, in radii (at the first visit)
};

/// Ground-truth lesion geometry for one visit.
struct LesionFrame {
  double cx = 0, cy = 0;  // pixel coordinates of the centre
  double radius = 0;      // semi-major axis, pixels
  double aspect = 1;      // minor / major
  double angle = 0;       // major-axis orientation, radians
  bool lobe = false;
  double lobe_angle = 0;
  double lobe_radius = 0;  // pixels
  double lobe_offset = 0;  // pixels from the centre
};

/// Anti-aliased lesion coverage in [0,1] for pixel centre (x, y).
inline double lesion_coverage(const LesionFrame& f, double x, double y) {
  const double dx = x - f.cx, dy = y - f.cy;
  const double c = std::cos(f.angle), s = std::sin(f.angle);
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  const double minor = f.radius * f.aspect;
  const double d = std::sqrt((u / f.radius) * (u / f.radius) + (v / minor) * (v / minor));
  double cov = std::clamp(0.5 - (d - 1.0) * minor, 0.0, 1.0);
  if (f.lobe) {
    const double lx = f.cx + f.lobe_offset * std::cos(f.lobe_angle);
    const double ly = f.cy + f.lobe_offset * std::sin(f.lobe_angle);
    const double dl = std::hypot(x - lx, y - ly);
    cov = std::max(cov, std::clamp(0.5 - (dl - f.lobe_radius), 0.0, 1.0));
  }
  return cov;
}

/// Row-major H x W coverage mask.
inline std::vector<float> lesion_mask(const LesionFrame& f, std::size_t h, std::size_t w) {
  std::vector<float> m(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      m[y * w + x] = static_cast<float>(lesion_coverage(f, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5));
  return m;
}

struct SyntheticDataset {
  Dataset sequences;
  std::vector<std::vector<LesionFrame>> geometry;  // parallel to sequences
};

namespace detail {

inline std::string visit_date(std::size_t t) {
  char buf[48];
  const std::size_t months = 3 * t;
  std::snprintf(buf, sizeof buf, "%04zu-%02zu-01", 2019 + months / 12, 1 + months % 12);
  return buf;
}

struct Palette {
  double skin[3];
  double lesion[3];
};

inline void draw_hair(ImageF32& img, Rng& rng) {
  const double w = static_cast<double>(img.width), h = static_cast<double>(img.height);
  const int strands = 1 + static_cast<int>(rng.index(3));
  for (int k = 0; k < strands; ++k) {
    const double a = rng.uniform(0, std::numbers::pi);
    const double px = rng.uniform(0, w), py = rng.uniform(0, h);
    const double nx = -std::sin(a), ny = std::cos(a);
    const double shade = rng.uniform(0.05, 0.15);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const double dist = std::fabs((static_cast<double>(x) + 0.5 - px) * nx + (static_cast<double>(y) + 0.5 - py) * ny);
        const double cov = std::clamp(1.0 - dist, 0.0, 1.0) * 0.9;
        if (cov <= 0) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          float& v = img.at(c, y, x);
          v = static_cast<float>((1 - cov) * v + cov * shade);
        }
      }
  }
}

}  // namespace detail

/// Deterministic under `config.seed`; frames are 8-bit quantized so they
/// survive a PNG round trip unchanged.
inline SyntheticDataset synth_generate(const SyntheticConfig& config) {
  config.validate();
  std::vector<int> labels(config.benign, 0);
  labels.insert(labels.end(), config.malignant, 1);
  Rng order(derive_seed(config.seed, stable_hash("order")));
  order.shuffle(labels);

  const std::size_t S = config.image_size, N = config.length;
  const double W = static_cast<double>(S);
  SyntheticDataset out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Rng rng(derive_seed(config.seed, stable_hash("patient"), i));
    const int label = labels[i];
    ScreeningSequence seq;
    char id[32];
    std::snprintf(id, sizeof id, "S%04zu", i);
    seq.patient_id = id;
    seq.label = label;

    detail::Palette pal{};
    const double skin_base[3] = {0.82, 0.62, 0.52}, lesion_base[3] = {0.42, 0.27, 0.18};
    const double skin_tone = rng.uniform(0.9, 1.1), lesion_tone = rng.uniform(0.8, 1.2);
    for (int c = 0; c < 3; ++c) {
      pal.skin[c] = std::clamp(skin_base[c] * skin_tone + rng.normal(0, 0.02), 0.0, 1.0);
      pal.lesion[c] = std::clamp(lesion_base[c] * lesion_tone + rng.normal(0, 0.02), 0.0, 1.0);
    }
    const Range r = label == 0 ? config.benign_radius : config.malignant_start;
    const double r0 = rng.uniform(r.lo, r.hi) * W;
    const double aspect = rng.uniform(0.75, 1.0);
    const double angle = rng.uniform(0, std::numbers::pi);
    const bool lobe = rng.bernoulli(config.lobe_prob);
    const double lobe_angle = rng.uniform(0, 2 * std::numbers::pi);

    std::vector<LesionFrame> frames;
    for (std::size_t t = 0; t < N; ++t) {
      LesionFrame f;
      const double jr = config.jitter_px * std::sqrt(rng.uniform()), ja = rng.uniform(0, 2 * std::numbers::pi);
      f.cx = W / 2 + jr * std::cos(ja);
      f.cy = W / 2 + jr * std::sin(ja);
      const double grown = label == 1 ? static_cast<double>(t) * config.growth * W : 0.0;
      f.radius = r0 + grown;
      f.aspect = aspect;
      f.angle = angle;
      f.lobe = lobe;
      f.lobe_angle = lobe_angle;
      f.lobe_offset = SyntheticConfig::kLobeOffset * f.radius;
      f.lobe_radius = SyntheticConfig::kLobeRadius * r0 + grown;
      frames.push_back(f);

      ImageF32 img(3, S, S);
      double gain[3];
      const double common = rng.uniform(-config.illumination, config.illumination);
      for (auto& gc : gain) gc = 1.0 + common + rng.uniform(-config.illumination, config.illumination) / 2;
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          const double cov = lesion_coverage(f, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
          for (std::size_t c = 0; c < 3; ++c) {
            const double bg = pal.skin[c] + rng.normal(0, config.background_noise);
            const double fg = pal.lesion[c] + rng.normal(0, config.lesion_noise);
            img.at(c, y, x) = clamp01(static_cast<float>(gain[c] * ((1 - cov) * bg + cov * fg)));
          }
        }
      if (rng.bernoulli(config.hair_prob)) detail::draw_hair(img, rng);
      seq.images.push_back(quantize8(img));
      seq.dates.push_back(detail::visit_date(t));
    }
    out.sequences.push_back(std::move(seq));
    out.geometry.push_back(std::move(frames));
  }
  return out;
}

}  // namespace seqdiff::data
