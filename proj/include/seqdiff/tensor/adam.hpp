#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "seqdiff/tensor/tensor.hpp"

namespace seqdiff {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  long step = 0;
};

/// One bias-corrected Adam update over `params`, reading each parameter's
/// accumulated gradient (a parameter without a gradient counts as zero grad).
/// Moment buffers are created on the first call.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), T{0});
      state.v.emplace_back(p.size(), T{0});
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) +
                     " moment buffers for " + std::to_string(params.size()) + " parameters");
  }
  ++state.step;
  const auto& o = state.options;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.size() || v.size() != p.size()) {
      throw ShapeError("adam_step: moment shape does not match parameter " + std::to_string(k));
    }
    const bool has = p.has_grad();
    if (has && p.grad().size() != p.size()) throw ShapeError("adam_step: gradient shape mismatch");
    T* w = p.ptr();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = has ? static_cast<double>(p.grad()[i]) : 0.0;
      const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      w[i] = static_cast<T>(w[i] - o.lr * m_hat / (std::sqrt(v_hat) + o.eps));
    }
  }
}

}  // namespace seqdiff
