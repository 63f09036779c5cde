#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "seqdiff/backbone/backbone.hpp"
#include "seqdiff/twostream/fusion.hpp"

namespace seqdiff::baselines {

/// GAP -> dropout -> FC C x 32 -> dropout -> BN -> ReLU -> FC 32 x 32 ->
/// dropout -> BN -> ReLU -> FC 32 x 1.
template <typename T>
struct BaselineHead {
  nn::Linear<T> fc1, fc2, fc3;
  nn::BatchNorm<T> bn1, bn2;
  double drop = 0.5;

  static constexpr std::size_t kHidden = 32;

  BaselineHead() = default;
  BaselineHead(std::size_t in_channels, Rng& rng)
      : fc1(in_channels, kHidden, rng), fc2(kHidden, kHidden, rng), fc3(kHidden, 1, rng), bn1(kHidden), bn2(kHidden) {}

  std::size_t in_features() const { return fc1.in_features(); }

  /// GAP only, [B,C,H,W] to [B,C].
  Tensor<T> pool(Graph<T>& g, const Tensor<T>& map) const {
    require_rank(map.shape(), 4, "baseline head input");
    if (map.dim(1) != in_features()) {
      throw ShapeError("baseline head: expected " + std::to_string(in_features()) + " channels, got " +
                       std::to_string(map.dim(1)));
    }
    return ops::global_avg_pool(g, map);
  }

  /// Everything after pooling: [B,C] features to [B] logits.
  Tensor<T> dense(Graph<T>& g, Tensor<T> feats, const nn::Context& ctx) {
    auto x = nn::dropout(g, std::move(feats), drop, ctx);
    x = nn::dropout(g, fc1.forward(g, x), drop, ctx);
    x = ops::relu(g, bn1.forward(g, x, ctx));
    x = nn::dropout(g, fc2.forward(g, x), drop, ctx);
    x = ops::relu(g, bn2.forward(g, x, ctx));
    return nn::squeeze_logits(g, fc3.forward(g, x));
  }

  Tensor<T> forward(Graph<T>& g, const Tensor<T>& map, const nn::Context& ctx) { return dense(g, pool(g, map), ctx); }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    fc1.collect(refs, prefix + ".fc1");
    bn1.collect(refs, prefix + ".bn1");
    fc2.collect(refs, prefix + ".fc2");
    bn2.collect(refs, prefix + ".bn2");
    fc3.collect(refs, prefix + ".fc3");
  }
};

/// Per-image classifier; also the scorer behind score fusion.
template <typename T>
class SingleImageModel {
 public:
  SingleImageModel() = default;
  SingleImageModel(const BackboneConfig& cfg, Rng& rng) : backbone_(cfg, rng), head_(cfg.out_channels(), rng) {}

  /// [M,C,H,W] images to [M] logits.
  Tensor<T> forward(Graph<T>& g, const Tensor<T>& images, const nn::Context& ctx) {
    return head_.forward(g, backbone_.forward(g, images, ctx).top, ctx);
  }

  Backbone<T>& backbone() { return backbone_; }
  BaselineHead<T>& head() { return head_; }

  void collect(ParamRefs<T>& refs) {
    backbone_.collect(refs, "backbone");
    head_.collect(refs, "head");
  }

 private:
  Backbone<T> backbone_;
  BaselineHead<T> head_;
};

/// Mean of per-image probabilities.
inline double score_fusion(std::span<const double> image_probabilities) {
  if (image_probabilities.empty()) throw std::invalid_argument("score_fusion: empty sequence");
  std::vector<double> sorted(image_probabilities.begin(), image_probabilities.end());
  std::sort(sorted.begin(), sorted.end());
  double s = 0;
  for (double p : sorted) s += p;
  return s / static_cast<double>(sorted.size());
}

/// Per-sequence score-fusion probabilities for a batch laid out as rows b*N + t.
template <typename T>
std::vector<double> score_fusion_predict(Graph<T>& g, SingleImageModel<T>& model, const Tensor<T>& images,
                                         std::size_t batch, std::size_t length) {
  if (length == 0) throw std::invalid_argument("score_fusion: empty sequence");
  auto logits = model.forward(g, images, {});
  if (logits.size() != batch * length) throw ShapeError("score_fusion: batch layout mismatch");
  std::vector<double> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> p(length);
    for (std::size_t t = 0; t < length; ++t) p[t] = twostream::sigmoid(static_cast<double>(logits[b * length + t]));
    out[b] = score_fusion(p);
  }
  return out;
}

/// Backbone GAP features averaged over the sequence, then the dense head.
template <typename T>
class FeaturePoolingModel {
 public:
  FeaturePoolingModel() = default;
  FeaturePoolingModel(const BackboneConfig& cfg, Rng& rng) : backbone_(cfg, rng), head_(cfg.out_channels(), rng) {}

  Tensor<T> forward(Graph<T>& g, const Tensor<T>& images, std::size_t batch, std::size_t length,
                    const nn::Context& ctx) {
    if (length == 0) throw std::invalid_argument("feature_pooling: empty sequence");
    if (images.dim(0) != batch * length) throw ShapeError("feature_pooling: batch layout mismatch");
    auto feats = head_.pool(g, backbone_.forward(g, images, ctx).top);  // [B*N, C]
    const std::size_t c = feats.dim(1);
    auto pooled = ops::order_invariant_mean(g, ops::reshape(g, feats, Shape{batch, length, c}), 1);  // [B, C]
    return head_.dense(g, pooled, ctx);
  }

  Backbone<T>& backbone() { return backbone_; }
  BaselineHead<T>& head() { return head_; }

  void collect(ParamRefs<T>& refs) {
    backbone_.collect(refs, "backbone");
    head_.collect(refs, "head");
  }

 private:
  Backbone<T> backbone_;
  BaselineHead<T> head_;
};

template <typename T>
struct LstmLayer {
  ops::LstmWeights<T> w;

  LstmLayer() = default;
  LstmLayer(std::size_t in, std::size_t hidden, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    w.w_ih = init::uniform<T>({4 * hidden, in}, bound, rng);
    w.w_hh = init::uniform<T>({4 * hidden, hidden}, bound, rng);
    w.bias = init::uniform<T>({4 * hidden}, bound, rng);
  }

  std::size_t hidden() const { return w.w_hh.dim(1); }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    refs.param(prefix + ".w_ih", w.w_ih);
    refs.param(prefix + ".w_hh", w.w_hh);
    refs.param(prefix + ".bias", w.bias);
  }
};

/// GAP -> dropout -> LSTM 32 -> dropout -> LSTM 32 -> dropout -> FC 32 x 1,
/// classified on the last timestep.
template <typename T>
class CnnLstmModel {
 public:
  static constexpr std::size_t kHidden = 32;

  CnnLstmModel() = default;
  CnnLstmModel(const BackboneConfig& cfg, Rng& rng)
      : backbone_(cfg, rng), lstm1_(cfg.out_channels(), kHidden, rng), lstm2_(kHidden, kHidden, rng), fc_(kHidden, 1, rng) {}

  Tensor<T> forward(Graph<T>& g, const Tensor<T>& images, std::size_t batch, std::size_t length,
                    const nn::Context& ctx) {
    if (length == 0) throw std::invalid_argument("cnn_lstm: empty sequence");
    if (images.dim(0) != batch * length) throw ShapeError("cnn_lstm: batch layout mismatch");
    auto feats = ops::global_avg_pool(g, backbone_.forward(g, images, ctx).top);  // [B*N, C]
    return head(g, feats, batch, length, ctx);
  }

  /// Recurrent head over [B*N, C] features laid out as rows b*N + t.
  Tensor<T> head(Graph<T>& g, const Tensor<T>& feats, std::size_t batch, std::size_t length, const nn::Context& ctx) {
    auto x = nn::dropout(g, feats, drop, ctx);
    ops::LstmState<T> s1{Tensor<T>::zeros({batch, kHidden}), Tensor<T>::zeros({batch, kHidden})};
    ops::LstmState<T> s2 = s1;
    for (std::size_t t = 0; t < length; ++t) {
      std::vector<std::size_t> rows(batch);
      for (std::size_t b = 0; b < batch; ++b) rows[b] = b * length + t;
      auto xt = ops::select_rows(g, x, rows);
      s1 = ops::lstm_cell(g, xt, s1.h, s1.c, lstm1_.w);
      s2 = ops::lstm_cell(g, nn::dropout(g, s1.h, drop, ctx), s2.h, s2.c, lstm2_.w);
    }
    return nn::squeeze_logits(g, fc_.forward(g, nn::dropout(g, s2.h, drop, ctx)));
  }

  Backbone<T>& backbone() { return backbone_; }
  LstmLayer<T>& lstm1() { return lstm1_; }
  LstmLayer<T>& lstm2() { return lstm2_; }
  nn::Linear<T>& fc() { return fc_; }

  void collect(ParamRefs<T>& refs) {
    backbone_.collect(refs, "backbone");
    lstm1_.collect(refs, "lstm1");
    lstm2_.collect(refs, "lstm2");
    fc_.collect(refs, "fc");
  }

  double drop = 0.5;

 private:
  Backbone<T> backbone_;
  LstmLayer<T> lstm1_, lstm2_;
  nn::Linear<T> fc_;
};

}  // namespace seqdiff::baselines
