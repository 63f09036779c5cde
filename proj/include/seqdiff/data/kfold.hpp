#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqdiff/tensor/rng.hpp"

namespace seqdiff::data {

struct FoldSplit {
  std::vector<std::size_t> train;  // indices into the dataset
  std::vector<std::size_t> test;
};

namespace detail {

/// Shuffles each class with the seed, then deals the classes in turn to
/// buckets 0, 1, ..., k-1, 0, ... without restarting the cycle between
/// classes, so bucket sizes differ by at most one overall and per class.
inline std::vector<std::vector<std::size_t>> stratified_deal(const std::vector<std::size_t>& items,
                                                             const std::vector<int>& labels, std::size_t k,
                                                             std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> neg, pos;
  for (auto i : items) (labels.at(i) == 1 ? pos : neg).push_back(i);
  rng.shuffle(neg);
  rng.shuffle(pos);
  std::vector<std::vector<std::size_t>> buckets(k);
  std::size_t j = 0;
  for (const auto* cls : {&neg, &pos})
    for (auto i : *cls) buckets[j++ % k].push_back(i);
  return buckets;
}

}  // namespace detail

/// Patient-level, label-stratified k-fold partition.
inline std::vector<FoldSplit> kfold_split(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be at least 2");
  if (labels.size() < k) {
    throw std::invalid_argument("kfold_split: " + std::to_string(labels.size()) + " patients cannot fill " +
                                std::to_string(k) + " folds");
  }
  std::vector<std::size_t> all(labels.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto buckets = detail::stratified_deal(all, labels, k, seed);
  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    folds[f].test = buckets[f];
    for (std::size_t o = 0; o < k; ++o)
      if (o != f) folds[f].train.insert(folds[f].train.end(), buckets[o].begin(), buckets[o].end());
  }
  return folds;
}

/// Stratified holdout of round(fraction * n) items, at least one when possible.
inline FoldSplit stratified_holdout(const std::vector<std::size_t>& items, const std::vector<int>& labels,
                                    double fraction, std::uint64_t seed) {
  if (fraction <= 0 || fraction >= 1) throw std::invalid_argument("stratified_holdout: fraction must be in (0,1)");
  Rng rng(seed);
  std::vector<std::size_t> neg, pos;
  for (auto i : items) (labels.at(i) == 1 ? pos : neg).push_back(i);
  rng.shuffle(neg);
  rng.shuffle(pos);
  FoldSplit out;
  for (auto* cls : {&neg, &pos}) {
    std::size_t take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cls->size())));
    if (take == 0 && cls->size() >= 2) take = 1;
    if (take >= cls->size() && !cls->empty()) take = cls->size() - 1;
    out.test.insert(out.test.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(take));
    out.train.insert(out.train.end(), cls->begin() + static_cast<std::ptrdiff_t>(take), cls->end());
  }
  return out;
}

}  // namespace seqdiff::data
