#pragma once

#include <stdexcept>
#include <vector>

#include "seqdiff/tensor/rng.hpp"

namespace seqdiff::data {

enum class EqualizeMode { train, eval };

/// Indices into a length-`len` sequence giving exactly `n` entries: short
/// sequences repeat the first screening at the front; long ones take a
/// random contiguous window (train) or the most recent `n` (eval).
inline std::vector<std::size_t> equalize_indices(std::size_t len, std::size_t n, EqualizeMode mode, Rng& rng) {
  if (len == 0) throw std::invalid_argument("equalize_length: empty sequence");
  if (n == 0) throw std::invalid_argument("equalize_length: target length must be positive");
  std::vector<std::size_t> idx;
  idx.reserve(n);
  if (len <= n) {
    idx.assign(n - len, 0);
    for (std::size_t i = 0; i < len; ++i) idx.push_back(i);
    return idx;
  }
  const std::size_t start = mode == EqualizeMode::eval ? len - n : rng.index(len - n + 1);
  for (std::size_t i = 0; i < n; ++i) idx.push_back(start + i);
  return idx;
}

template <typename Item>
std::vector<Item> equalize_length(const std::vector<Item>& seq, std::size_t n, EqualizeMode mode, Rng& rng) {
  std::vector<Item> out;
  for (auto i : equalize_indices(seq.size(), n, mode, rng)) out.push_back(seq[i]);
  return out;
}

}  // namespace seqdiff::data
