#pragma once

#include <cmath>
#include <string>

#include "seqdiff/tensor/graph.hpp"
#include "seqdiff/tensor/ops.hpp"
#include "seqdiff/tensor/params.hpp"
#include "seqdiff/tensor/rng.hpp"

namespace seqdiff::nn {

/// Per-forward settings shared by every layer.
struct Context {
  bool train = false;
  Rng* rng = nullptr;  // dropout masks; unused in eval mode
};

template <typename T>
Tensor<T> dropout(Graph<T>& g, Tensor<T> x, double p, const Context& ctx) {
  if (!ctx.train || p == 0.0) return x;
  if (ctx.rng == nullptr) throw std::logic_error("dropout: training forward needs an Rng");
  return ops::dropout(g, std::move(x), p, true, *ctx.rng);
}

template <typename T>
struct BatchNorm {
  Tensor<T> gamma, beta;
  ops::BatchNormState<T> state;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels)
      : gamma(init::constant<T>({channels}, T{1})), beta(init::constant<T>({channels}, T{0})), state(channels) {}

  Tensor<T> forward(Graph<T>& g, Tensor<T> x, const Context& ctx) {
    return ops::batchnorm(g, std::move(x), gamma, beta, state, ctx.train);
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    refs.param(prefix + ".gamma", gamma);
    refs.param(prefix + ".beta", beta);
    refs.buffer(prefix + ".running_mean", state.running_mean);
    refs.buffer(prefix + ".running_var", state.running_var);
  }
};

/// Bias-free convolution followed by batchnorm.
template <typename T>
struct ConvBn {
  Tensor<T> weight;
  BatchNorm<T> bn;
  std::size_t stride = 1, pad = 0;

  ConvBn() = default;
  ConvBn(std::size_t in, std::size_t out, std::size_t k, std::size_t stride_, std::size_t pad_, Rng& rng)
      : weight(init::kaiming_uniform<T>({out, in, k, k}, in * k * k, rng)), bn(out), stride(stride_), pad(pad_) {}

  Tensor<T> forward(Graph<T>& g, Tensor<T> x, const Context& ctx) {
    return bn.forward(g, ops::conv2d(g, std::move(x), weight, Tensor<T>{}, stride, pad), ctx);
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    refs.param(prefix + ".weight", weight);
    bn.collect(refs, prefix + ".bn");
  }
};

template <typename T>
struct Linear {
  Tensor<T> weight, bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : weight(init::uniform<T>({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
        bias(init::constant<T>({out}, T{0})) {}

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor<T> forward(Graph<T>& g, Tensor<T> x) const { return ops::linear(g, std::move(x), weight, bias); }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    refs.param(prefix + ".weight", weight);
    refs.param(prefix + ".bias", bias);
  }
};

/// Rank-1 view of an [B,1] logit column.
template <typename T>
Tensor<T> squeeze_logits(Graph<T>& g, Tensor<T> x) {
  const std::size_t n = x.dim(0);
  return ops::reshape(g, std::move(x), Shape{n});
}

}  // namespace seqdiff::nn
