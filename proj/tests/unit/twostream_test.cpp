#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "seqdiff/twostream/fusion.hpp"
#include "seqdiff/twostream/model.hpp"
#include "support/batches.hpp"
#include "support/gradcheck.hpp"

namespace seqdiff::twostream {
namespace {

using testing::random_batch;
using testing::random_tensor;
using V = std::vector<double>;

TEST(Fusion, SpatialAveragesLogitsBeforeSigmoid) {
  EXPECT_DOUBLE_EQ(spatial_probability(V{0, 0, 0, 0}), 0.5);
  EXPECT_NEAR(spatial_probability(V{1, 3}), 0.880797, 1e-6);
  EXPECT_THROW(spatial_probability(V{}), std::invalid_argument);
}

TEST(Fusion, TemporalExamples) {
  EXPECT_DOUBLE_EQ(temporal_probability(V{0}), 0.5);
  EXPECT_DOUBLE_EQ(temporal_probability(V{2, -2}), 0.5);
  EXPECT_NEAR(temporal_probability(V{1, 2, 3}), 0.880797, 1e-6);
  EXPECT_THROW(temporal_probability(V{}), std::invalid_argument);
}

TEST(Fusion, FusedExamples) {
  EXPECT_DOUBLE_EQ(fused_probability(0, 0), 0.5);
  EXPECT_NEAR(fused_probability(2, 0), 0.731059, 1e-6);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
    EXPECT_EQ(fused_probability(a, b), sigmoid((a + b) / 2));
  }
}

TEST(Fusion, AveragingOrderDoesNotMatter) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    V z(5);
    for (auto& v : z) v = rng.uniform(-10, 10);
    const double p = temporal_probability(z);
    rng.shuffle(z);
    EXPECT_EQ(temporal_probability(z), p);
  }
}

TEST(Fusion, ProbabilitiesStayInsideUnitInterval) {
  for (double z : {-700.0, -30.0, 0.0, 30.0, 700.0}) {
    EXPECT_GE(sigmoid(z), 0.0);
    EXPECT_LE(sigmoid(z), 1.0);
  }
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double p = fused_probability(rng.uniform(-20, 20), rng.uniform(-20, 20));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_NEAR(logit(sigmoid(1.5)), 1.5, 1e-12);
}

std::vector<Tensor<double>> random_pyramid(Rng& rng) {
  return {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 5, 2, 2}, rng)};
}

TEST(FeatureDifference, IdenticalPyramidsGiveZero) {
  Rng rng(4);
  auto p = random_pyramid(rng);
  Graph<double> g(Graph<double>::Mode::inference);
  for (const auto& d : feature_difference(g, p, p))
    for (double v : d.data()) EXPECT_EQ(v, 0.0);
}

TEST(FeatureDifference, AntisymmetricAndMatchesLoopOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_pyramid(rng), b = random_pyramid(rng);
    Graph<double> g(Graph<double>::Mode::inference);
    auto ab = feature_difference(g, a, b), ba = feature_difference(g, b, a);
    for (std::size_t l = 0; l < a.size(); ++l)
      for (std::size_t i = 0; i < a[l].size(); ++i) {
        EXPECT_EQ(ab[l][i], b[l][i] - a[l][i]);
        EXPECT_EQ(ab[l][i], -ba[l][i]);
      }
  }
}

TEST(FeatureDifference, ShapeMismatch) {
  Rng rng(6);
  auto a = random_pyramid(rng);
  auto b = a;
  b[1] = random_tensor({2, 5, 3, 3}, rng);
  Graph<double> g(Graph<double>::Mode::inference);
  EXPECT_THROW(feature_difference(g, a, b), ShapeError);
  b.pop_back();
  EXPECT_THROW(feature_difference(g, a, b), ShapeError);
}

TEST(FeatureDifference, SequenceLayoutPairsConsecutiveFrames) {
  Rng rng(7);
  const std::size_t B = 2, N = 3;
  std::vector<Tensor<double>> stages{random_tensor({B * N, 2, 3, 3}, rng)};
  Graph<double> g(Graph<double>::Mode::inference);
  auto d = sequence_feature_differences(g, stages, B, N);
  ASSERT_EQ(d[0].dim(0), B * (N - 1));
  const std::size_t per = 2 * 3 * 3;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t + 1 < N; ++t)
      for (std::size_t i = 0; i < per; ++i)
        EXPECT_EQ(d[0][(b * (N - 1) + t) * per + i],
                  stages[0][(b * N + t + 1) * per + i] - stages[0][(b * N + t) * per + i]);
}

TwoStreamConfig small_config() { return {BackboneConfig{{1, 1}, {3, 4}, 3, StemKind::tiny}, {}}; }

TEST(TwoStreamModel, OutputShapesAndFusionIdentity) {
  Rng rng(8), data(9);
  TwoStreamModel<float> model(TwoStreamConfig{BackboneConfig::desk(), {}}, rng);
  auto batch = random_batch<float>(2, 4, 32, data);
  Graph<float> g(Graph<float>::Mode::inference);
  auto out = model.forward(g, batch, {});
  EXPECT_EQ(out.spatial_logits.shape(), Shape{8});
  EXPECT_EQ(out.temporal_logits.shape(), Shape{6});
  for (std::size_t b = 0; b < 2; ++b) {
    V s(out.spatial_logits.data().begin() + b * 4, out.spatial_logits.data().begin() + b * 4 + 4);
    V t(out.temporal_logits.data().begin() + b * 3, out.temporal_logits.data().begin() + b * 3 + 3);
    EXPECT_NEAR(out.spatial_mean[b], mean_logit(s), 1e-5);
    EXPECT_NEAR(out.temporal_mean[b], mean_logit(t), 1e-5);
    EXPECT_NEAR(sigmoid(out.fused_logit[b]), fused_probability(out.spatial_mean[b], out.temporal_mean[b]), 1e-6);
  }
}

TEST(TwoStreamModel, IdenticalFramesGiveEqualPairLogits) {
  Rng rng(10), data(11);
  TwoStreamModel<double> model(small_config(), rng);
  ImageF32 img(3, 8, 8);
  for (auto& v : img.data) v = static_cast<float>(data.uniform(0.2, 0.8));
  auto batch = make_batch<double>({{img, img, img, img}}, {1}, true);
  for (double v : batch.diffs.data()) EXPECT_EQ(v, 0.0);
  Graph<double> g(Graph<double>::Mode::inference);
  auto out = model.forward(g, batch, {});
  ASSERT_EQ(out.temporal_logits.size(), 3u);
  EXPECT_EQ(out.temporal_logits[0], out.temporal_logits[1]);
  EXPECT_EQ(out.temporal_logits[1], out.temporal_logits[2]);
}

TEST(TwoStreamModel, ZeroInjectionMatchesNoInjection) {
  Rng rng(12), data(13);
  TwoStreamModel<double> model(small_config(), rng);
  auto diffs = random_tensor({3, 3, 8, 8}, data);
  Graph<double> g(Graph<double>::Mode::inference);
  std::vector<Tensor<double>> zeros{Tensor<double>::zeros({3, 3, 8, 8}), Tensor<double>::zeros({3, 4, 4, 4})};
  auto with_zero = model.temporal_forward(g, diffs, zeros, {});
  model.config().inject = {false, false};
  auto without = model.temporal_forward(g, diffs, {}, {});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(with_zero[i], without[i]);
}

TEST(TwoStreamModel, InjectionShapeMismatch) {
  Rng rng(14), data(15);
  TwoStreamModel<double> model(small_config(), rng);
  auto diffs = random_tensor({3, 3, 8, 8}, data);
  Graph<double> g(Graph<double>::Mode::inference);
  std::vector<Tensor<double>> bad{Tensor<double>::zeros({3, 3, 8, 8}), Tensor<double>::zeros({3, 4, 2, 2})};
  EXPECT_THROW(model.temporal_forward(g, diffs, bad, {}), ShapeError);
}

TEST(TwoStreamModel, SequenceLengthGivesPairCount) {
  Rng rng(16), data(17);
  TwoStreamModel<float> model(small_config(), rng);
  for (std::size_t n : {2u, 3u, 5u}) {
    auto batch = random_batch<float>(1, n, 8, data);
    Graph<float> g(Graph<float>::Mode::inference);
    EXPECT_EQ(model.forward(g, batch, {}).temporal_logits.size(), n - 1);
  }
  auto one = random_batch<float>(1, 2, 8, data);
  one.length = 1;
  Graph<float> g(Graph<float>::Mode::inference);
  EXPECT_THROW(model.forward(g, one, {}), ShapeError);
}

TEST(TwoStreamModel, SpatialProbabilityIgnoresFrameOrder) {
  Rng rng(18), data(19);
  TwoStreamModel<double> model(small_config(), rng);
  auto batch = random_batch<double>(1, 4, 8, data);
  Graph<double> g(Graph<double>::Mode::inference);
  auto [logits, pyr] = model.spatial_forward(g, batch.images, {});
  V z(logits.data().begin(), logits.data().end());
  const double p = spatial_probability(z);
  // Permute frames at the image level and run again.
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  auto permuted = ops::select_rows(g, batch.images, perm);
  auto [logits2, pyr2] = model.spatial_forward(g, permuted, {});
  V z2(logits2.data().begin(), logits2.data().end());
  EXPECT_EQ(spatial_probability(z2), p);
}

TEST(TwoStreamModel, ReversalNegatesDifferencesButChangesOutput) {
  Rng rng(20), data(21);
  TwoStreamModel<double> model(small_config(), rng);
  std::vector<ImageF32> seq;
  for (int t = 0; t < 4; ++t) {
    ImageF32 img(3, 8, 8);
    for (auto& v : img.data) v = static_cast<float>(data.uniform(0.1, 0.9));
    seq.push_back(img);
  }
  std::vector<ImageF32> rev(seq.rbegin(), seq.rend());
  auto fwd = make_batch<double>({seq}, {1}, true);
  auto bwd = make_batch<double>({rev}, {1}, true);
  const std::size_t per = 3 * 8 * 8;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < per; ++i) EXPECT_EQ(bwd.diffs[(2 - t) * per + i], -fwd.diffs[t * per + i]);

  Graph<double> g(Graph<double>::Mode::inference);
  auto a = model.forward(g, fwd, {}, true);
  auto b = model.forward(g, bwd, {}, true);
  for (std::size_t l = 0; l < a.differences.size(); ++l) {
    const std::size_t chunk = a.differences[l].size() / 3;
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t i = 0; i < chunk; ++i)
        EXPECT_EQ(b.differences[l][(2 - t) * chunk + i], -a.differences[l][t * chunk + i]);
  }
  EXPECT_NE(a.fused_logit[0], b.fused_logit[0]);
}

ModelOutput<double> constant_output(double s, double t) {
  ModelOutput<double> out;
  out.spatial_mean = Tensor<double>::full({1}, s, true);
  out.temporal_mean = Tensor<double>::full({1}, t, true);
  out.fused_logit = Tensor<double>::full({1}, (s + t) / 2, true);
  return out;
}

TEST(CombinedLoss, Examples) {
  Graph<double> g;
  EXPECT_NEAR(combined_loss(g, constant_output(0, 0), {1}).item(), std::numbers::ln2, 1e-12);
  EXPECT_LT(combined_loss(g, constant_output(30, 30), {1}).item(), 1e-12);
  auto spatial_only = combined_loss(g, constant_output(1.3, -0.4), {0}, LossWeights{1, 0, 0}).item();
  EXPECT_NEAR(spatial_only, std::log1p(std::exp(1.3)), 1e-12);
  EXPECT_THROW(combined_loss(g, constant_output(0, 0), {2}), std::invalid_argument);
  EXPECT_THROW(combined_loss(g, constant_output(0, 0), {1}, LossWeights{-1, 0, 0}), std::invalid_argument);
}

double grad_norm(ParamRefs<double>& refs, const std::string& prefix) {
  double s = 0;
  for (auto& [name, t] : refs.params) {
    if (name.rfind(prefix, 0) != 0 || !t.has_grad()) continue;
    for (double v : t.grad()) s += v * v;
  }
  return std::sqrt(s);
}

double temporal_loss_grad_into_spatial(bool inject) {
  Rng rng(22), data(23), drop(24);
  TwoStreamConfig cfg{BackboneConfig::desk(), {}};
  if (!inject) cfg.inject.assign(4, false);
  TwoStreamModel<double> model(cfg, rng);
  auto batch = random_batch<double>(2, 3, 16, data);
  Graph<double> g;
  nn::Context ctx{true, &drop};
  auto out = model.forward(g, batch, ctx);
  g.backward(combined_loss(g, out, batch.labels, LossWeights{0, 1, 0}));
  ParamRefs<double> refs;
  model.collect(refs);
  EXPECT_GT(grad_norm(refs, "temporal."), 0.0);
  EXPECT_EQ(grad_norm(refs, "spatial.head."), 0.0);
  return grad_norm(refs, "spatial.backbone.");
}

TEST(TwoStreamModel, TemporalLossReachesSpatialBackboneOnlyThroughInjection) {
  EXPECT_GT(temporal_loss_grad_into_spatial(true), 0.0);
  EXPECT_EQ(temporal_loss_grad_into_spatial(false), 0.0);
}

TEST(TwoStreamModel, CombinedLossGradientMatchesFiniteDifferences) {
  Rng rng(25), data(26);
  TwoStreamModel<double> model(small_config(), rng);
  model.spatial_head().drop = 0;
  model.temporal_head().drop = 0;
  auto batch = random_batch<double>(3, 3, 6, data);
  ParamRefs<double> refs;
  model.collect(refs);
  std::vector<Tensor<double>> picked;
  for (auto& [name, t] : refs.params) {
    if (name.find(".weight") != std::string::npos) picked.push_back(t);
  }
  testing::Fn fn = [&](Graph<double>& g, std::vector<Tensor<double>>&) {
    auto out = model.forward(g, batch, {true, nullptr});
    return std::vector<Tensor<double>>{combined_loss(g, out, batch.labels)};
  };
  auto res = testing::gradcheck(fn, picked, 27, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_input;
}

}  // namespace
}  // namespace seqdiff::twostream
