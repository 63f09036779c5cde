#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "seqdiff/backbone/layers.hpp"

namespace seqdiff {

enum class StemKind { standard, tiny };

inline std::string to_string(StemKind s) { return s == StemKind::standard ? "standard" : "tiny"; }

inline StemKind stem_from_string(const std::string& s) {
  if (s == "standard") return StemKind::standard;
  if (s == "tiny") return StemKind::tiny;
  throw std::invalid_argument("unknown stem '" + s + "' (expected standard or tiny)");
}

struct BackboneConfig {
  std::vector<std::size_t> blocks_per_stage{1, 1, 1, 1};
  std::vector<std::size_t> stage_widths{16, 32, 64, 128};
  std::size_t in_channels = 3;
  StemKind stem = StemKind::tiny;

  static BackboneConfig desk() { return {}; }
  static BackboneConfig resnet34() { return {{3, 4, 6, 3}, {64, 128, 256, 512}, 3, StemKind::standard}; }

  std::size_t stages() const { return stage_widths.size(); }
  std::size_t out_channels() const { return stage_widths.back(); }

  void validate() const {
    if (blocks_per_stage.empty() || blocks_per_stage.size() != stage_widths.size()) {
      throw std::invalid_argument("backbone: blocks_per_stage and stage_widths must be non-empty and equal length");
    }
    for (auto w : stage_widths)
      if (w == 0) throw std::invalid_argument("backbone: stage widths must be positive");
    for (auto b : blocks_per_stage)
      if (b == 0) throw std::invalid_argument("backbone: every stage needs at least one block");
    if (in_channels == 0) throw std::invalid_argument("backbone: in_channels must be positive");
  }

  /// Spatial size of each stage output for a square-or-not input.
  std::vector<std::array<std::size_t, 2>> stage_sizes(std::size_t h, std::size_t w) const {
    auto down = [](std::size_t s, std::size_t k, std::size_t stride, std::size_t pad) {
      return (s + 2 * pad - k) / stride + 1;
    };
    auto check = [](std::size_t s, std::size_t k, std::size_t pad) {
      if (s + 2 * pad < k) throw ShapeError("backbone: input too small for the stage count");
    };
    if (stem == StemKind::standard) {
      check(h, 7, 3), check(w, 7, 3);
      h = down(h, 7, 2, 3), w = down(w, 7, 2, 3);
      h = down(h, 3, 2, 1), w = down(w, 3, 2, 1);
    }
    std::vector<std::array<std::size_t, 2>> out;
    for (std::size_t s = 0; s < stages(); ++s) {
      if (s > 0) {
        if (h < 2 || w < 2) throw ShapeError("backbone: input too small for the stage count");
        h = down(h, 3, 2, 1), w = down(w, 3, 2, 1);
      }
      out.push_back({h, w});
    }
    return out;
  }

  bool operator==(const BackboneConfig&) const = default;
};

namespace nn {

/// Two 3x3 conv+BN with a ReLU between, plus identity or 1x1-projection
/// shortcut, then ReLU.
template <typename T>
struct BasicBlock {
  ConvBn<T> conv1, conv2;
  ConvBn<T> proj;
  bool has_proj = false;

  BasicBlock() = default;
  BasicBlock(std::size_t in, std::size_t out, std::size_t stride, Rng& rng)
      : conv1(in, out, 3, stride, 1, rng), conv2(out, out, 3, 1, 1, rng) {
    has_proj = stride != 1 || in != out;
    if (has_proj) proj = ConvBn<T>(in, out, 1, stride, 0, rng);
  }

  Tensor<T> forward(Graph<T>& g, const Tensor<T>& x, const Context& ctx) {
    auto y = ops::relu(g, conv1.forward(g, x, ctx));
    y = conv2.forward(g, y, ctx);
    auto shortcut = has_proj ? proj.forward(g, x, ctx) : x;
    return ops::relu(g, ops::add(g, y, shortcut));
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    conv1.collect(refs, prefix + ".conv1");
    conv2.collect(refs, prefix + ".conv2");
    if (has_proj) proj.collect(refs, prefix + ".proj");
  }
};

}  // namespace nn

/// Per-stage outputs of one backbone pass over a batch [B,C,H,W].
/// `stages[l]` is the tap after stage l's last ReLU; `top` is what the head
/// consumes (the last stage output after any injection).
template <typename T>
struct FeaturePyramid {
  std::vector<Tensor<T>> stages;
  Tensor<T> top;

  std::size_t levels() const { return stages.size(); }
};

/// Called after every stage; its return value feeds the next stage.
template <typename T>
using StageHook = std::function<Tensor<T>(Graph<T>&, std::size_t stage, Tensor<T>)>;

template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(BackboneConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    const std::size_t w0 = config_.stage_widths.front();
    if (config_.stem == StemKind::standard) {
      stem_ = nn::ConvBn<T>(config_.in_channels, w0, 7, 2, 3, rng);
    } else {
      stem_ = nn::ConvBn<T>(config_.in_channels, w0, 3, 1, 1, rng);
    }
    std::size_t in = w0;
    stages_.resize(config_.stages());
    for (std::size_t s = 0; s < config_.stages(); ++s) {
      const std::size_t out = config_.stage_widths[s];
      for (std::size_t b = 0; b < config_.blocks_per_stage[s]; ++b) {
        const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
        stages_[s].emplace_back(in, out, stride, rng);
        in = out;
      }
    }
  }

  const BackboneConfig& config() const { return config_; }

  FeaturePyramid<T> forward(Graph<T>& g, const Tensor<T>& x, const nn::Context& ctx,
                            const StageHook<T>& hook = {}) {
    require_rank(x.shape(), 4, "backbone input");
    if (x.dim(1) != config_.in_channels) {
      throw ShapeError("backbone: expected " + std::to_string(config_.in_channels) + " input channels, got " +
                       std::to_string(x.dim(1)));
    }
    config_.stage_sizes(x.dim(2), x.dim(3));
    auto y = ops::relu(g, stem_.forward(g, x, ctx));
    if (config_.stem == StemKind::standard) y = ops::maxpool2d(g, y, 3, 2, 1);
    FeaturePyramid<T> out;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      for (auto& block : stages_[s]) y = block.forward(g, y, ctx);
      out.stages.push_back(y);
      if (hook) y = hook(g, s, y);
    }
    out.top = y;
    return out;
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    stem_.collect(refs, prefix + ".stem");
    for (std::size_t s = 0; s < stages_.size(); ++s)
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b].collect(refs, prefix + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b));
  }

  std::vector<std::vector<nn::BasicBlock<T>>>& stages() { return stages_; }

 private:
  BackboneConfig config_;
  nn::ConvBn<T> stem_;
  std::vector<std::vector<nn::BasicBlock<T>>> stages_;
};

/// dropout -> GAP -> dropout -> FC C x 16 -> BN -> ReLU -> FC 16 x 1.
template <typename T>
struct ClassifierHead {
  nn::Linear<T> fc1, fc2;
  nn::BatchNorm<T> bn;
  double drop = 0.5;

  static constexpr std::size_t kHidden = 16;

  ClassifierHead() = default;
  ClassifierHead(std::size_t in_channels, Rng& rng) : fc1(in_channels, kHidden, rng), fc2(kHidden, 1, rng), bn(kHidden) {}

  /// [B,C,H,W] map to [B] logits.
  Tensor<T> forward(Graph<T>& g, Tensor<T> map, const nn::Context& ctx) {
    return nn::squeeze_logits(g, fc2.forward(g, hidden(g, features(g, std::move(map), ctx), ctx)));
  }

  /// dropout -> GAP -> dropout, i.e. the input to the first FC layer, as [B,C].
  Tensor<T> features(Graph<T>& g, Tensor<T> map, const nn::Context& ctx) {
    require_rank(map.shape(), 4, "head input");
    if (map.dim(1) != fc1.in_features()) {
      throw ShapeError("head: expected " + std::to_string(fc1.in_features()) + " channels, got " +
                       std::to_string(map.dim(1)));
    }
    auto x = nn::dropout(g, std::move(map), drop, ctx);
    return nn::dropout(g, ops::global_avg_pool(g, x), drop, ctx);
  }

  Tensor<T> hidden(Graph<T>& g, Tensor<T> feats, const nn::Context& ctx) {
    return ops::relu(g, bn.forward(g, fc1.forward(g, std::move(feats)), ctx));
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    fc1.collect(refs, prefix + ".fc1");
    bn.collect(refs, prefix + ".bn");
    fc2.collect(refs, prefix + ".fc2");
  }
};

}  // namespace seqdiff
