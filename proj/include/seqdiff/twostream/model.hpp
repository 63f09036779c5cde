#pragma once

#include <string>
#include <vector>

#include "seqdiff/backbone/backbone.hpp"
#include "seqdiff/data/batch.hpp"

namespace seqdiff::twostream {

struct LossWeights {
  double spatial = 0.3;
  double temporal = 0.3;
  double fused = 0.4;

  void validate() const {
    if (spatial < 0 || temporal < 0 || fused < 0) throw std::invalid_argument("loss weights must be nonnegative");
  }
  bool operator==(const LossWeights&) const = default;
};

struct TwoStreamConfig {
  BackboneConfig backbone;
  std::vector<bool> inject;  // one flag per stage; empty means every stage

  bool injects(std::size_t stage) const { return inject.empty() || inject.at(stage); }

  void validate() const {
    backbone.validate();
    if (!inject.empty() && inject.size() != backbone.stages()) {
      throw std::invalid_argument("two-stream: inject needs one flag per backbone stage");
    }
  }
};

template <typename T>
struct ModelOutput {
  Tensor<T> spatial_logits;   // [B*N]
  Tensor<T> temporal_logits;  // [B*(N-1)]
  Tensor<T> spatial_mean;     // [B]
  Tensor<T> temporal_mean;    // [B]
  Tensor<T> fused_logit;      // [B], (spatial_mean + temporal_mean) / 2
  std::vector<Tensor<T>> spatial_stages;  // retained for visualization
  std::vector<Tensor<T>> differences;     // D per stage, [B*(N-1), C_l, H_l, W_l]
};

/// [B*L] to [B] by averaging each consecutive run of L.
template <typename T>
Tensor<T> mean_per_sequence(Graph<T>& g, const Tensor<T>& flat, std::size_t batch, std::size_t length) {
  if (flat.size() != batch * length) throw ShapeError("mean_per_sequence: size mismatch");
  return ops::mean(g, ops::reshape(g, flat, Shape{batch, length}), 1);
}

/// Stage-wise later - earlier.
template <typename T>
std::vector<Tensor<T>> feature_difference(Graph<T>& g, const std::vector<Tensor<T>>& earlier,
                                          const std::vector<Tensor<T>>& later) {
  if (earlier.size() != later.size()) throw ShapeError("feature_difference: pyramids differ in depth");
  std::vector<Tensor<T>> out;
  out.reserve(earlier.size());
  for (std::size_t l = 0; l < earlier.size(); ++l) {
    if (earlier[l].shape() != later[l].shape()) {
      throw ShapeError("feature_difference: stage " + std::to_string(l) + " shapes differ (" +
                       to_string(earlier[l].shape()) + " vs " + to_string(later[l].shape()) + ")");
    }
    out.push_back(ops::sub(g, later[l], earlier[l]));
  }
  return out;
}

/// Differences between consecutive frames of every sequence in a batched
/// pyramid laid out as rows b*N + t.
template <typename T>
std::vector<Tensor<T>> sequence_feature_differences(Graph<T>& g, const std::vector<Tensor<T>>& stages,
                                                    std::size_t batch, std::size_t length) {
  if (length < 2) throw ShapeError("feature differences need N >= 2");
  std::vector<std::size_t> prev, next;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t + 1 < length; ++t) {
      prev.push_back(b * length + t);
      next.push_back(b * length + t + 1);
    }
  std::vector<Tensor<T>> earlier, later;
  for (const auto& s : stages) {
    if (s.dim(0) != batch * length) throw ShapeError("feature differences: batch layout mismatch");
    earlier.push_back(ops::select_rows(g, s, prev));
    later.push_back(ops::select_rows(g, s, next));
  }
  return feature_difference(g, earlier, later);
}

template <typename T>
Tensor<T> combined_loss(Graph<T>& g, const ModelOutput<T>& out, const std::vector<int>& labels,
                        const LossWeights& w = {}) {
  w.validate();
  auto ls = ops::bce_with_logits(g, out.spatial_mean, labels);
  auto lt = ops::bce_with_logits(g, out.temporal_mean, labels);
  auto lf = ops::bce_with_logits(g, out.fused_logit, labels);
  return ops::add(g, ops::add(g, ops::scale(g, ls, static_cast<T>(w.spatial)), ops::scale(g, lt, static_cast<T>(w.temporal))),
                  ops::scale(g, lf, static_cast<T>(w.fused)));
}

template <typename T>
class TwoStreamModel {
 public:
  TwoStreamModel() = default;
  TwoStreamModel(TwoStreamConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    spatial_ = Backbone<T>(config_.backbone, rng);
    spatial_head_ = ClassifierHead<T>(config_.backbone.out_channels(), rng);
    temporal_ = Backbone<T>(config_.backbone, rng);
    temporal_head_ = ClassifierHead<T>(config_.backbone.out_channels(), rng);
  }

  const TwoStreamConfig& config() const { return config_; }
  TwoStreamConfig& config() { return config_; }
  Backbone<T>& spatial() { return spatial_; }
  Backbone<T>& temporal() { return temporal_; }
  ClassifierHead<T>& spatial_head() { return spatial_head_; }
  ClassifierHead<T>& temporal_head() { return temporal_head_; }

  /// Per-image spatial logits [M] and the stage taps they came from.
  std::pair<Tensor<T>, FeaturePyramid<T>> spatial_forward(Graph<T>& g, const Tensor<T>& images,
                                                          const nn::Context& ctx) {
    auto pyr = spatial_.forward(g, images, ctx);
    auto logits = spatial_head_.forward(g, pyr.top, ctx);
    return {logits, std::move(pyr)};
  }

  /// Per-pair logits; D[l] is added to temporal stage l's output wherever
  /// injection is enabled. D may be empty when nothing is injected.
  Tensor<T> temporal_forward(Graph<T>& g, const Tensor<T>& diffs, const std::vector<Tensor<T>>& d,
                             const nn::Context& ctx) {
    StageHook<T> hook = [&](Graph<T>& gg, std::size_t stage, Tensor<T> y) {
      if (!config_.injects(stage)) return y;
      if (stage >= d.size()) throw ShapeError("temporal_forward: missing feature difference for stage " + std::to_string(stage));
      if (d[stage].shape() != y.shape()) {
        throw ShapeError("temporal_forward: injection shape mismatch at stage " + std::to_string(stage) + " (" +
                         to_string(d[stage].shape()) + " vs " + to_string(y.shape()) + ")");
      }
      return ops::add(gg, y, d[stage]);
    };
    auto pyr = temporal_.forward(g, diffs, ctx, hook);
    return temporal_head_.forward(g, pyr.top, ctx);
  }

  bool injects_anywhere() const {
    for (std::size_t s = 0; s < config_.backbone.stages(); ++s)
      if (config_.injects(s)) return true;
    return false;
  }

  ModelOutput<T> forward(Graph<T>& g, const SequenceBatch<T>& batch, const nn::Context& ctx, bool retain = false) {
    if (batch.length < 2) throw ShapeError("two-stream model needs N >= 2");
    if (!batch.diffs.defined()) throw ShapeError("two-stream model needs difference images");
    ModelOutput<T> out;
    auto [s_logits, pyr] = spatial_forward(g, batch.images, ctx);
    out.spatial_logits = s_logits;
    std::vector<Tensor<T>> d;
    if (injects_anywhere() || retain) d = sequence_feature_differences(g, pyr.stages, batch.batch, batch.length);
    out.temporal_logits = temporal_forward(g, batch.diffs, d, ctx);
    out.spatial_mean = mean_per_sequence(g, out.spatial_logits, batch.batch, batch.length);
    out.temporal_mean = mean_per_sequence(g, out.temporal_logits, batch.batch, batch.length - 1);
    out.fused_logit = ops::scale(g, ops::add(g, out.spatial_mean, out.temporal_mean), T(0.5));
    if (retain) {
      out.spatial_stages = pyr.stages;
      out.differences = std::move(d);
    }
    return out;
  }

  void collect(ParamRefs<T>& refs) {
    spatial_.collect(refs, "spatial.backbone");
    spatial_head_.collect(refs, "spatial.head");
    temporal_.collect(refs, "temporal.backbone");
    temporal_head_.collect(refs, "temporal.head");
  }

 private:
  TwoStreamConfig config_;
  Backbone<T> spatial_, temporal_;
  ClassifierHead<T> spatial_head_, temporal_head_;
};

}  // namespace seqdiff::twostream
