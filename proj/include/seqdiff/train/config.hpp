#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqdiff/backbone/backbone.hpp"
#include "seqdiff/preprocess/augment.hpp"
#include "seqdiff/preprocess/difference.hpp"
#include "seqdiff/twostream/model.hpp"

namespace seqdiff::train {

using Json = nlohmann::ordered_json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ModelKind { two_stream, single_img, score_fusion, feature_pooling, cnn_lstm };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::two_stream: return "two-stream";
    case ModelKind::single_img: return "single-img";
    case ModelKind::score_fusion: return "score-fusion";
    case ModelKind::feature_pooling: return "feature-pooling";
    case ModelKind::cnn_lstm: return "cnn-lstm";
  }
  return "?";
}

inline ModelKind kind_from_string(const std::string& s) {
  for (auto k : {ModelKind::two_stream, ModelKind::single_img, ModelKind::score_fusion, ModelKind::feature_pooling,
                 ModelKind::cnn_lstm})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown model kind \"" + s +
                    "\" (expected two-stream, single-img, score-fusion, feature-pooling or cnn-lstm)");
}

/// Single-image training treats every frame as its own example.
inline bool is_sequential(ModelKind k) { return k != ModelKind::single_img; }

struct TrainConfig {
  ModelKind kind = ModelKind::two_stream;
  BackboneConfig backbone = BackboneConfig::desk();
  std::vector<bool> inject;  // two-stream only; empty injects at every stage
  std::size_t length = 4;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double decay_factor = 0.2;
  std::size_t patience = 10;
  std::size_t max_decays = 2;  // stop when a further decay is due with this many since the last improvement
  std::size_t max_epochs = 100;
  twostream::LossWeights weights;
  std::uint64_t seed = 0;
  std::size_t image_size = 32;
  std::size_t test_resize = 36;  // frames are resized to this before the ten crops of image_size
  double val_fraction = 0.2;
  bool ten_crop = true;
  preprocess::AugmentParams augment;
  preprocess::PreprocessParams preprocess;

  twostream::TwoStreamConfig two_stream() const { return {backbone, inject}; }

  void validate() const {
    auto bad = [](const std::string& m) { throw ConfigError("train config: " + m); };
    try {
      backbone.validate();
      weights.validate();
      if (kind == ModelKind::two_stream) two_stream().validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      bad(e.what());
    }
    if (batch_size < 1) bad("batch_size must be at least 1");
    if (length < 1) bad("length must be at least 1");
    if (kind == ModelKind::two_stream && length < 2) bad("two-stream needs length >= 2");
    if (!(lr > 0)) bad("lr must be positive");
    if (!(decay_factor > 0 && decay_factor < 1)) bad("decay_factor must lie in (0,1)");
    if (patience < 1) bad("patience must be at least 1");
    if (max_epochs < 1) bad("max_epochs must be at least 1");
    if (!(val_fraction > 0 && val_fraction < 1)) bad("val_fraction must lie in (0,1)");
    if (image_size < 4) bad("image_size must be at least 4");
    if (test_resize < image_size) bad("test_resize must be at least image_size");
    if (augment.scale_min <= 0 || augment.scale_max > 1 || augment.scale_min > augment.scale_max) {
      bad("augment scale must satisfy 0 < scale_min <= scale_max <= 1");
    }
    try {
      backbone.stage_sizes(image_size, image_size);
    } catch (const ShapeError& e) {
      bad(std::string(e.what()) + " at image_size " + std::to_string(image_size));
    }
  }
};

namespace detail {

/// Shortest decimal that reads back as the same float.
inline double shortest(float v) {
  char buf[32];
  for (int digits = 6; digits < 10; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(v));
    if (std::strtof(buf, nullptr) == v) break;
  }
  return std::strtod(buf, nullptr);
}

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
}

template <typename V>
void read(const Json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline Json to_json(const BackboneConfig& b) {
  Json j;
  j["blocks_per_stage"] = b.blocks_per_stage;
  j["stage_widths"] = b.stage_widths;
  j["in_channels"] = b.in_channels;
  j["stem"] = to_string(b.stem);
  return j;
}

/// Accepts the presets "desk" / "resnet34" or an object overriding desk().
inline BackboneConfig backbone_from_json(const Json& j, const std::string& where = "backbone") {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "desk") return BackboneConfig::desk();
    if (name == "resnet34") return BackboneConfig::resnet34();
    throw ConfigError(where + ": unknown preset \"" + name + "\"");
  }
  detail::check_keys(j, {"preset", "blocks_per_stage", "stage_widths", "in_channels", "stem"}, where);
  BackboneConfig b = BackboneConfig::desk();
  if (j.contains("preset")) b = backbone_from_json(j["preset"], where);
  detail::read(j, "blocks_per_stage", b.blocks_per_stage, where);
  detail::read(j, "stage_widths", b.stage_widths, where);
  detail::read(j, "in_channels", b.in_channels, where);
  if (j.contains("stem")) {
    try {
      b.stem = stem_from_string(j["stem"].get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(where + ".stem: " + e.what());
    }
  }
  return b;
}

inline Json to_json(const preprocess::AugmentParams& a) {
  Json j;
  j["scale_min"] = a.scale_min;
  j["scale_max"] = a.scale_max;
  j["ratio_min"] = a.ratio_min;
  j["ratio_max"] = a.ratio_max;
  j["flip_prob"] = a.flip_prob;
  j["jitter"] = a.jitter;
  j["color"] = a.color;
  return j;
}

inline void augment_from_json(const Json& j, preprocess::AugmentParams& a, const std::string& where = "augment") {
  detail::check_keys(j, {"scale_min", "scale_max", "ratio_min", "ratio_max", "flip_prob", "jitter", "color"}, where);
  detail::read(j, "scale_min", a.scale_min, where);
  detail::read(j, "scale_max", a.scale_max, where);
  detail::read(j, "ratio_min", a.ratio_min, where);
  detail::read(j, "ratio_max", a.ratio_max, where);
  detail::read(j, "flip_prob", a.flip_prob, where);
  detail::read(j, "jitter", a.jitter, where);
  detail::read(j, "color", a.color, where);
}

inline Json to_json(const preprocess::PreprocessParams& p) {
  Json j;
  j["minkowski_p"] = p.minkowski_p;
  j["remove_hair"] = p.remove_hair;
  j["color_constancy"] = p.color_constancy;
  j["hair_line_length"] = p.hair.line_length;
  j["hair_threshold"] = detail::shortest(p.hair.threshold);
  return j;
}

inline void preprocess_from_json(const Json& j, preprocess::PreprocessParams& p,
                                 const std::string& where = "preprocess") {
  detail::check_keys(j, {"minkowski_p", "remove_hair", "color_constancy", "hair_line_length", "hair_threshold"}, where);
  detail::read(j, "minkowski_p", p.minkowski_p, where);
  detail::read(j, "remove_hair", p.remove_hair, where);
  detail::read(j, "color_constancy", p.color_constancy, where);
  detail::read(j, "hair_line_length", p.hair.line_length, where);
  detail::read(j, "hair_threshold", p.hair.threshold, where);
}

inline Json to_json(const TrainConfig& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  j["backbone"] = to_json(c.backbone);
  j["inject"] = c.inject;
  j["length"] = c.length;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["decay_factor"] = c.decay_factor;
  j["patience"] = c.patience;
  j["max_decays"] = c.max_decays;
  j["max_epochs"] = c.max_epochs;
  j["loss_weights"] = {c.weights.spatial, c.weights.temporal, c.weights.fused};
  j["seed"] = c.seed;
  j["image_size"] = c.image_size;
  j["test_resize"] = c.test_resize;
  j["val_fraction"] = c.val_fraction;
  j["ten_crop"] = c.ten_crop;
  j["augment"] = to_json(c.augment);
  j["preprocess"] = to_json(c.preprocess);
  return j;
}

inline const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys{"kind", "backbone", "inject", "length", "batch_size", "lr",
                                          "decay_factor", "patience", "max_decays", "max_epochs", "loss_weights",
                                          "seed", "image_size", "test_resize", "val_fraction", "ten_crop",
                                          "augment", "preprocess"};
  return keys;
}

/// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(const Json& j, TrainConfig& c, const std::string& where = "train") {
  detail::check_keys(j, train_config_keys(), where);
  if (j.contains("kind")) {
    if (!j["kind"].is_string()) throw ConfigError(where + ".kind: wrong type");
    c.kind = kind_from_string(j["kind"].get<std::string>());
  }
  if (j.contains("backbone")) c.backbone = backbone_from_json(j["backbone"], where + ".backbone");
  detail::read(j, "inject", c.inject, where);
  detail::read(j, "length", c.length, where);
  detail::read(j, "batch_size", c.batch_size, where);
  detail::read(j, "lr", c.lr, where);
  detail::read(j, "decay_factor", c.decay_factor, where);
  detail::read(j, "patience", c.patience, where);
  detail::read(j, "max_decays", c.max_decays, where);
  detail::read(j, "max_epochs", c.max_epochs, where);
  if (j.contains("loss_weights")) {
    std::vector<double> w;
    detail::read(j, "loss_weights", w, where);
    if (w.size() != 3) throw ConfigError(where + ".loss_weights: expected [spatial, temporal, fused]");
    c.weights = {w[0], w[1], w[2]};
  }
  detail::read(j, "seed", c.seed, where);
  detail::read(j, "image_size", c.image_size, where);
  detail::read(j, "test_resize", c.test_resize, where);
  detail::read(j, "val_fraction", c.val_fraction, where);
  detail::read(j, "ten_crop", c.ten_crop, where);
  if (j.contains("augment")) augment_from_json(j["augment"], c.augment, where + ".augment");
  if (j.contains("preprocess")) preprocess_from_json(j["preprocess"], c.preprocess, where + ".preprocess");
  c.augment.out_size = c.image_size;
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  apply_json(j, c);
  c.validate();
  return c;
}

}  // namespace seqdiff::train
