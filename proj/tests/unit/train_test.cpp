#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "seqdiff/data/synthetic.hpp"
#include "seqdiff/train/config.hpp"
#include "seqdiff/train/schedule.hpp"
#include "seqdiff/train/trainer.hpp"

namespace seqdiff::train {
namespace {

namespace fs = std::filesystem;

data::Dataset small_synthetic(std::size_t per_class, std::size_t size = 16, std::size_t length = 4,
                              std::uint64_t seed = 5) {
  data::SyntheticConfig sc;
  sc.image_size = size;
  sc.length = length;
  sc.benign = sc.malignant = per_class;
  sc.seed = seed;
  if (length > 4) sc.growth = 0.03;
  return data::synth_generate(sc).sequences;
}

TrainConfig small_config(ModelKind kind = ModelKind::two_stream) {
  TrainConfig c;
  c.kind = kind;
  c.image_size = 16;
  c.test_resize = 18;
  c.batch_size = 8;
  c.max_epochs = 2;
  c.seed = 1;
  c.augment.out_size = 16;
  return c;
}

std::vector<std::size_t> iota(std::size_t n, std::size_t from = 0) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = from + i;
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("seqdiff_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Epoch e uses the lr in force before its validation loss is observed.
std::vector<double> simulate_trace(const std::vector<double>& val_losses, double initial) {
  PlateauSchedule s(1e-3, 0.2, 10, 2);
  s.start(initial);
  std::vector<double> lrs;
  for (double v : val_losses) {
    lrs.push_back(s.lr());
    if (s.observe(v) == PlateauSchedule::Event::stop) break;
  }
  return lrs;
}

TEST(PlateauSchedule, StagnantTrace) {
  const auto lrs = simulate_trace(std::vector<double>(100, 1.0), 1.0);
  ASSERT_GE(lrs.size(), 11u);
  for (std::size_t e = 1; e <= 10; ++e) EXPECT_DOUBLE_EQ(lrs[e - 1], 0.001) << "epoch " << e;
  for (std::size_t e = 11; e <= 20; ++e) EXPECT_DOUBLE_EQ(lrs[e - 1], 0.001 * 0.2) << "epoch " << e;
  for (std::size_t e = 21; e <= 30; ++e) EXPECT_DOUBLE_EQ(lrs[e - 1], 0.001 * 0.2 * 0.2) << "epoch " << e;
  // After two decays without improvement, the third due decay ends training.
  EXPECT_EQ(lrs.size(), 30u);
}

TEST(PlateauSchedule, ImprovementResetsPatience) {
  std::vector<double> v(9, 1.0);
  v.push_back(0.5);  // epoch 10 improves
  v.insert(v.end(), 30, 0.5);
  const auto lrs = simulate_trace(v, 1.0);
  for (std::size_t e = 1; e <= 20; ++e) EXPECT_DOUBLE_EQ(lrs[e - 1], 0.001) << "epoch " << e;
  EXPECT_DOUBLE_EQ(lrs[20], 0.0002);
}

TEST(PlateauSchedule, TraceInvariantOnRandomLosses) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v;
    double level = 1.0;
    for (int e = 0; e < 200; ++e) {
      if (rng.bernoulli(0.1)) level *= 0.99;
      v.push_back(level + rng.uniform(0, 0.05));
    }
    const auto lrs = simulate_trace(v, 1.1);
    int prev_j = 0;
    for (double lr : lrs) {
      const double j = std::log(lr / 1e-3) / std::log(0.2);
      const double jr = std::round(j);
      EXPECT_NEAR(j, jr, 1e-9);
      EXPECT_GE(static_cast<int>(jr), prev_j);
      prev_j = static_cast<int>(jr);
    }
  }
}

TEST(TrainConfig, JsonRoundTripAndStrictKeys) {
  TrainConfig c;
  c.kind = ModelKind::cnn_lstm;
  c.length = 3;
  c.max_epochs = 7;
  c.weights = {0.2, 0.5, 0.3};
  c.augment.flip_prob = 0.25;
  const auto back = train_config_from_json(Json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_EQ(back.kind, ModelKind::cnn_lstm);

  EXPECT_THROW(train_config_from_json(Json::parse(R"({"epochs": 3})")), ConfigError);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"augment": {"flip": 1}})")), ConfigError);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"kind": "resnet"})")), ConfigError);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"batch_size": 0})")), ConfigError);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"loss_weights": [0.5, -0.1, 0.6]})")), ConfigError);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"kind": "two-stream", "length": 1})")), ConfigError);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"lr": "fast"})")), ConfigError);
  EXPECT_EQ(train_config_from_json(Json::parse(R"({"backbone": "resnet34", "image_size": 64, "test_resize": 72})"))
                .backbone,
            BackboneConfig::resnet34());
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"backbone": "resnet34", "image_size": 8})")), ConfigError);
}

TEST(Adapters, EveryKindTrainsAndScores) {
  const auto ds = small_synthetic(6);
  for (auto kind : {ModelKind::two_stream, ModelKind::single_img, ModelKind::score_fusion,
                    ModelKind::feature_pooling, ModelKind::cnn_lstm}) {
    auto c = small_config(kind);
    c.max_epochs = 1;
    auto trained = train_fold(c, ds, iota(8), iota(4, 8));
    EXPECT_EQ(trained.record.model, to_string(kind));
    ASSERT_EQ(trained.record.epochs.size(), 1u);
    EXPECT_TRUE(std::isfinite(trained.record.epochs[0].train_loss));
    const auto p = predict(*trained.model, ds, iota(12), c, true);
    ASSERT_EQ(p.size(), 12u);
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(TrainFold, DeterministicUnderSeed) {
  const auto ds = small_synthetic(8);
  auto c = small_config();
  auto a = train_fold(c, ds, iota(12), iota(4, 12));
  auto b = train_fold(c, ds, iota(12), iota(4, 12));
  ASSERT_EQ(a.record.epochs.size(), b.record.epochs.size());
  for (std::size_t e = 0; e < a.record.epochs.size(); ++e) {
    EXPECT_EQ(a.record.epochs[e].train_loss, b.record.epochs[e].train_loss);
    EXPECT_EQ(a.record.epochs[e].val_loss, b.record.epochs[e].val_loss);
  }
  EXPECT_EQ(predict(*a.model, ds, iota(16), c, true), predict(*b.model, ds, iota(16), c, true));
  c.seed = 2;
  auto d = train_fold(c, ds, iota(12), iota(4, 12));
  EXPECT_NE(a.record.epochs.back().train_loss, d.record.epochs.back().train_loss);
}

TEST(TrainFold, Errors) {
  const auto ds = small_synthetic(4);
  const auto c = small_config();
  EXPECT_THROW(train_fold(c, ds, {}, iota(2)), std::invalid_argument);
  EXPECT_THROW(train_fold(c, ds, iota(4), {}), std::invalid_argument);
  EXPECT_THROW(train_fold(c, ds, iota(4), iota(2, 3)), std::invalid_argument);  // overlap
}

TEST(TrainFold, SingleScreeningsOnlyTrainTheSingleImageModel) {
  auto ds = small_synthetic(4);
  for (auto& s : ds) {
    s.images.resize(1);
    s.dates.resize(1);
  }
  EXPECT_THROW(train_fold(small_config(ModelKind::two_stream), ds, iota(6), iota(2, 6)), std::invalid_argument);
  auto c = small_config(ModelKind::single_img);
  c.max_epochs = 1;
  EXPECT_NO_THROW(train_fold(c, ds, iota(6), iota(2, 6)));
}

TEST(TrainFold, LrTraceFollowsDecayArithmetic) {
  const auto ds = small_synthetic(6);
  auto c = small_config();
  c.max_epochs = 6;
  c.patience = 1;  // every non-improving epoch decays
  const auto r = train_fold(c, ds, iota(8), iota(4, 8)).record;
  int prev_j = 0;
  for (const auto& e : r.epochs) {
    const double j = std::log(e.lr / c.lr) / std::log(c.decay_factor);
    EXPECT_NEAR(j, std::round(j), 1e-9);
    EXPECT_GE(static_cast<int>(std::round(j)), prev_j);
    prev_j = static_cast<int>(std::round(j));
  }
}

TEST(TrainFold, FixedBatchLossStrictlyDecreases) {
  data::SyntheticConfig sc;
  sc.benign = sc.malignant = 4;
  sc.seed = 9;
  const auto ds = data::synth_generate(sc).sequences;
  TrainConfig c;
  std::vector<std::vector<ImageF32>> seqs;
  std::vector<int> labels;
  for (const auto& s : ds) {
    seqs.push_back(s.images);
    labels.push_back(s.label);
  }
  const auto batch = make_batch<Scalar>(seqs, labels, true, c.preprocess);
  Rng init(4);
  auto model = make_model<Scalar>(c, init);
  ParamRefs<Scalar> refs;
  model->collect(refs);
  auto params = refs.tensors();
  AdamState<Scalar> adam;
  adam.options.lr = 1e-3;
  std::vector<double> losses;
  for (int step = 0; step <= 5; ++step) {
    Rng drop(17);  // the same dropout mask every step, so the objective is fixed
    refs.zero_grad();
    Graph<Scalar> g;
    auto loss = model->loss(g, batch, {true, &drop});
    losses.push_back(loss[0]);
    g.backward(loss);
    if (step < 5) adam_step<Scalar>(params, adam);
  }
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]) << "step " << i;
}

TEST(TrainFold, TwoStreamBeatsChanceByEpochTwenty) {
  const auto ds = small_synthetic(24);
  auto c = small_config();
  c.max_epochs = 20;
  c.batch_size = 16;
  const auto r = train_fold(c, ds, iota(38), iota(10, 38)).record;
  ASSERT_EQ(r.epochs.size(), 20u);
  EXPECT_LT(r.epochs.back().train_loss, std::log(2.0));
}

TEST(Checkpoint, ReloadedModelScoresIdentically) {
  TempDir dir("train_ckpt");
  const auto ds = small_synthetic(6);
  auto c = small_config(ModelKind::cnn_lstm);
  auto trained = train_fold(c, ds, iota(8), iota(4, 8), 0, dir.path() / "m.ckpt");
  auto loaded = load_model(dir.path() / "m.ckpt");
  EXPECT_EQ(loaded.model->kind(), ModelKind::cnn_lstm);
  EXPECT_EQ(to_json(loaded.config).dump(), to_json(c).dump());
  EXPECT_EQ(predict(*loaded.model, ds, iota(12), c, true), predict(*trained.model, ds, iota(12), c, true));
}

TEST(CrossValidation, SmokeRunOnFortyPatients) {
  TempDir dir("train_cv");
  const auto ds = small_synthetic(20);
  CrossValOptions opt;
  opt.k = 2;
  opt.split_seed = 4;
  opt.out_dir = dir.path() / "a";
  const auto res = run_cross_validation(small_config(), ds, opt);

  ASSERT_EQ(res.report.folds.size(), 2u);
  std::set<std::size_t> covered;
  for (const auto& split : res.splits) {
    std::set<std::string> train_ids;
    for (auto i : split.train) train_ids.insert(ds[i].patient_id);
    for (auto i : split.test) {
      EXPECT_FALSE(train_ids.count(ds[i].patient_id));
      EXPECT_TRUE(covered.insert(i).second) << "patient in two test folds";
    }
  }
  EXPECT_EQ(covered.size(), ds.size());

  const auto metrics = Json::parse(slurp(opt.out_dir / "metrics.json"));
  EXPECT_EQ(metrics["model"], "two-stream");
  for (const auto& name : eval::metric_names()) {
    ASSERT_TRUE(metrics.contains(name)) << name;
    EXPECT_EQ(metrics[name]["per_fold"].size(), 2u);
  }
  for (int f = 0; f < 2; ++f) {
    const auto fd = opt.out_dir / ("fold_" + std::to_string(f));
    for (const char* file : {"run.json", "model.ckpt", "roc.csv", "scores.csv"}) EXPECT_TRUE(fs::exists(fd / file)) << file;
    EXPECT_EQ(slurp(fd / "scores.csv").substr(0, 23), "patient_id,score,label\n");
  }

  opt.out_dir = dir.path() / "b";
  run_cross_validation(small_config(), ds, opt);
  EXPECT_EQ(slurp(dir.path() / "a" / "metrics.json"), slurp(dir.path() / "b" / "metrics.json"));
}

TEST(CrossValidation, LengthSweepEmitsOneReportPerLength) {
  const auto ds = small_synthetic(10, 16, 5);
  auto c = small_config();
  c.max_epochs = 1;
  CrossValOptions opt;
  opt.k = 2;
  const auto reports = length_sweep(c, ds, {2, 3, 4, 5}, opt);
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) {
    EXPECT_EQ(r.folds.size(), 2u);
    EXPECT_TRUE(r.to_json().contains("auc"));
  }
}

}  // namespace
}  // namespace seqdiff::train
