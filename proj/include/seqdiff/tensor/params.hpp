#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "seqdiff/tensor/rng.hpp"
#include "seqdiff/tensor/tensor.hpp"

namespace seqdiff {

/// Named views onto a model's trainable tensors and non-trainable buffers.
/// Entries alias the live model state; nothing is copied.
template <typename T>
struct ParamRefs {
  std::vector<std::pair<std::string, Tensor<T>>> params;
  std::vector<std::pair<std::string, std::vector<T>*>> buffers;

  void param(std::string name, Tensor<T> t) { params.emplace_back(std::move(name), std::move(t)); }
  void buffer(std::string name, std::vector<T>& b) { buffers.emplace_back(std::move(name), &b); }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : params) t.clear_grad();
  }
};

namespace init {

/// Kaiming-uniform for ReLU networks: U(-b, b), b = sqrt(6 / fan_in).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> uniform(Shape shape, double bound, Rng& rng) {
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> constant(Shape shape, T value) {
  return Tensor<T>::full(std::move(shape), value, true);
}

}  // namespace init

}  // namespace seqdiff
