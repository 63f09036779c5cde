#pragma once

#include <memory>
#include <vector>

#include "seqdiff/baselines/baselines.hpp"
#include "seqdiff/data/batch.hpp"
#include "seqdiff/train/config.hpp"
#include "seqdiff/twostream/fusion.hpp"
#include "seqdiff/twostream/model.hpp"

namespace seqdiff::train {

/// Uniform training/scoring interface over the five model kinds.
///
/// Scoring is split in two so test-time crops can be averaged per stream
/// before the streams are combined: `stream_probabilities` returns
/// [stream][sequence] probabilities and `combine` maps one sequence's
/// stream probabilities to its final score.
template <typename T>
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual ModelKind kind() const = 0;
  virtual bool needs_differences() const { return false; }
  virtual Tensor<T> loss(Graph<T>& g, const SequenceBatch<T>& batch, const nn::Context& ctx) = 0;
  virtual std::vector<std::vector<double>> stream_probabilities(Graph<T>& g, const SequenceBatch<T>& batch) = 0;
  virtual double combine(const std::vector<double>& streams) const { return streams.at(0); }
  virtual void collect(ParamRefs<T>& refs) = 0;
};

namespace detail {

template <typename T>
std::vector<double> probabilities(const Tensor<T>& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = twostream::sigmoid(static_cast<double>(logits[i]));
  return p;
}

inline std::vector<int> repeat_labels(const std::vector<int>& labels, std::size_t n) {
  std::vector<int> out;
  out.reserve(labels.size() * n);
  for (int l : labels) out.insert(out.end(), n, l);
  return out;
}

}  // namespace detail

template <typename T>
class TwoStreamAdapter final : public SequenceModel<T> {
 public:
  TwoStreamAdapter(const TrainConfig& c, Rng& rng) : model_(c.two_stream(), rng), weights_(c.weights) {}

  ModelKind kind() const override { return ModelKind::two_stream; }
  bool needs_differences() const override { return true; }

  Tensor<T> loss(Graph<T>& g, const SequenceBatch<T>& batch, const nn::Context& ctx) override {
    return twostream::combined_loss(g, model_.forward(g, batch, ctx), batch.labels, weights_);
  }

  std::vector<std::vector<double>> stream_probabilities(Graph<T>& g, const SequenceBatch<T>& batch) override {
    auto out = model_.forward(g, batch, {});
    return {detail::probabilities(out.spatial_mean), detail::probabilities(out.temporal_mean)};
  }

  double combine(const std::vector<double>& s) const override {
    return twostream::fused_probability(twostream::logit(s.at(0)), twostream::logit(s.at(1)));
  }

  void collect(ParamRefs<T>& refs) override { model_.collect(refs); }
  twostream::TwoStreamModel<T>& model() { return model_; }

 private:
  twostream::TwoStreamModel<T> model_;
  twostream::LossWeights weights_;
};

/// Trained frame by frame. Single-img scores the most recent frame;
/// score-fusion averages the per-frame probabilities.
template <typename T>
class PerImageAdapter final : public SequenceModel<T> {
 public:
  PerImageAdapter(const TrainConfig& c, Rng& rng, bool fuse) : model_(c.backbone, rng), fuse_(fuse) {}

  ModelKind kind() const override { return fuse_ ? ModelKind::score_fusion : ModelKind::single_img; }

  Tensor<T> loss(Graph<T>& g, const SequenceBatch<T>& batch, const nn::Context& ctx) override {
    return ops::bce_with_logits(g, model_.forward(g, batch.images, ctx), detail::repeat_labels(batch.labels, batch.length));
  }

  std::vector<std::vector<double>> stream_probabilities(Graph<T>& g, const SequenceBatch<T>& batch) override {
    if (fuse_) return {baselines::score_fusion_predict(g, model_, batch.images, batch.batch, batch.length)};
    std::vector<std::size_t> last;
    for (std::size_t b = 0; b < batch.batch; ++b) last.push_back(b * batch.length + batch.length - 1);
    return {detail::probabilities(model_.forward(g, ops::select_rows(g, batch.images, last), {}))};
  }

  void collect(ParamRefs<T>& refs) override { model_.collect(refs); }

 private:
  baselines::SingleImageModel<T> model_;
  bool fuse_;
};

template <typename T, typename Model, ModelKind Kind>
class SequenceAdapter final : public SequenceModel<T> {
 public:
  SequenceAdapter(const TrainConfig& c, Rng& rng) : model_(c.backbone, rng) {}

  ModelKind kind() const override { return Kind; }

  Tensor<T> loss(Graph<T>& g, const SequenceBatch<T>& batch, const nn::Context& ctx) override {
    return ops::bce_with_logits(g, model_.forward(g, batch.images, batch.batch, batch.length, ctx), batch.labels);
  }

  std::vector<std::vector<double>> stream_probabilities(Graph<T>& g, const SequenceBatch<T>& batch) override {
    return {detail::probabilities(model_.forward(g, batch.images, batch.batch, batch.length, {}))};
  }

  void collect(ParamRefs<T>& refs) override { model_.collect(refs); }

 private:
  Model model_;
};

template <typename T>
std::unique_ptr<SequenceModel<T>> make_model(const TrainConfig& c, Rng& rng) {
  switch (c.kind) {
    case ModelKind::two_stream: return std::make_unique<TwoStreamAdapter<T>>(c, rng);
    case ModelKind::single_img: return std::make_unique<PerImageAdapter<T>>(c, rng, false);
    case ModelKind::score_fusion: return std::make_unique<PerImageAdapter<T>>(c, rng, true);
    case ModelKind::feature_pooling:
      return std::make_unique<SequenceAdapter<T, baselines::FeaturePoolingModel<T>, ModelKind::feature_pooling>>(c, rng);
    case ModelKind::cnn_lstm:
      return std::make_unique<SequenceAdapter<T, baselines::CnnLstmModel<T>, ModelKind::cnn_lstm>>(c, rng);
  }
  throw ConfigError("unknown model kind");
}

}  // namespace seqdiff::train
