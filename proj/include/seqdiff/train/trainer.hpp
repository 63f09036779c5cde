#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqdiff/data/batch.hpp"
#include "seqdiff/data/dataset.hpp"
#include "seqdiff/data/equalize.hpp"
#include "seqdiff/data/kfold.hpp"
#include "seqdiff/eval/report.hpp"
#include "seqdiff/preprocess/augment.hpp"
#include "seqdiff/preprocess/ten_crop.hpp"
#include "seqdiff/tensor/adam.hpp"
#include "seqdiff/tensor/checkpoint.hpp"
#include "seqdiff/train/config.hpp"
#include "seqdiff/train/models.hpp"
#include "seqdiff/train/schedule.hpp"

namespace seqdiff::train {

using Scalar = float;
using Model = SequenceModel<Scalar>;
using Logger = std::function<void(const std::string&)>;

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
};

struct RunRecord {
  std::size_t fold = 0;
  std::string model;
  double initial_val_loss = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch beat the untrained model
  double best_val_loss = 0;
  bool early_stopped = false;
  std::string checkpoint;

  std::vector<double> lr_trace() const {
    std::vector<double> out;
    for (const auto& e : epochs) out.push_back(e.lr);
    return out;
  }

  Json to_json() const {
    Json j;
    j["fold"] = fold;
    j["model"] = model;
    j["initial_val_loss"] = eval::json_number(initial_val_loss);
    j["best_epoch"] = best_epoch;
    j["best_val_loss"] = eval::json_number(best_val_loss);
    j["early_stopped"] = early_stopped;
    j["checkpoint"] = checkpoint;
    Json epochs_json = Json::array();
    for (const auto& e : epochs) {
      Json je;
      je["epoch"] = e.epoch;
      je["train_loss"] = eval::json_number(e.train_loss);
      je["val_loss"] = eval::json_number(e.val_loss);
      je["lr"] = eval::json_number(e.lr);
      epochs_json.push_back(je);
    }
    j["epochs"] = epochs_json;
    return j;
  }
};

namespace detail {

inline std::vector<std::size_t> usable(const data::Dataset& ds, const std::vector<std::size_t>& idx,
                                       const TrainConfig& c) {
  std::vector<std::size_t> out;
  for (auto i : idx)
    if (!is_sequential(c.kind) || ds.at(i).length() >= 2) out.push_back(i);
  return out;
}

inline void require_disjoint(const data::Dataset& ds, const std::vector<std::size_t>& a,
                             const std::vector<std::size_t>& b, const char* what) {
  std::set<std::string> ids;
  for (auto i : a) ids.insert(ds.at(i).patient_id);
  for (auto i : b)
    if (ids.count(ds.at(i).patient_id)) throw std::invalid_argument(std::string(what) + ": patient " + ds[i].patient_id + " appears on both sides");
}

/// Equalized, augmented frames for one training sequence.
inline std::vector<ImageF32> training_view(const data::ScreeningSequence& s, const TrainConfig& c, Rng& rng) {
  auto frames = data::equalize_length(s.images, c.length, data::EqualizeMode::train, rng);
  return preprocess::augment_sequence(frames, rng, c.augment);
}

/// Equalized frames resized to the test-time source size.
inline std::vector<ImageF32> eval_view(const data::ScreeningSequence& s, const TrainConfig& c) {
  Rng unused(0);
  auto frames = data::equalize_length(s.images, c.length, data::EqualizeMode::eval, unused);
  return preprocess::resize_sequence(frames, c.test_resize);
}

template <typename T>
struct Snapshot {
  std::vector<std::vector<T>> params, buffers;

  static Snapshot take(const ParamRefs<T>& refs) {
    Snapshot s;
    for (const auto& [name, t] : refs.params) s.params.emplace_back(t.ptr(), t.ptr() + t.size());
    for (const auto& [name, b] : refs.buffers) s.buffers.push_back(*b);
    return s;
  }

  void restore(ParamRefs<T>& refs) const {
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(params[i].begin(), params[i].end(), refs.params[i].second.ptr());
    for (std::size_t i = 0; i < buffers.size(); ++i) *refs.buffers[i].second = buffers[i];
  }
};

}  // namespace detail

/// Final scores for `idx`, averaged over the ten crops (or the centre crop
/// alone) per stream before the streams are combined.
inline std::vector<double> predict(Model& model, const data::Dataset& ds, const std::vector<std::size_t>& idx,
                                   const TrainConfig& c, bool ten_crop) {
  const auto offsets = preprocess::ten_crop_offsets(c.test_resize, c.test_resize, c.image_size);
  std::vector<std::size_t> crops;
  if (ten_crop) {
    for (std::size_t i = 0; i < offsets.size(); ++i) crops.push_back(i);
  } else {
    crops.push_back(4);  // centre
  }
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t start = 0; start < idx.size(); start += c.batch_size) {
    const std::size_t end = std::min(idx.size(), start + c.batch_size);
    std::vector<std::vector<ImageF32>> views;
    std::vector<int> labels;
    for (std::size_t k = start; k < end; ++k) {
      views.push_back(detail::eval_view(ds.at(idx[k]), c));
      labels.push_back(ds[idx[k]].label);
    }
    std::vector<std::vector<double>> sums;
    for (auto ci : crops) {
      std::vector<std::vector<ImageF32>> cropped;
      for (const auto& v : views) {
        std::vector<ImageF32> frames;
        for (const auto& f : v) frames.push_back(preprocess::apply_crop(f, offsets[ci], c.image_size));
        cropped.push_back(std::move(frames));
      }
      const auto batch = make_batch<Scalar>(cropped, labels, model.needs_differences(), c.preprocess);
      Graph<Scalar> g(Graph<Scalar>::Mode::inference);
      const auto streams = model.stream_probabilities(g, batch);
      if (sums.empty()) sums.assign(streams.size(), std::vector<double>(labels.size(), 0.0));
      for (std::size_t s = 0; s < streams.size(); ++s)
        for (std::size_t b = 0; b < labels.size(); ++b) sums[s][b] += streams[s][b];
    }
    for (std::size_t b = 0; b < labels.size(); ++b) {
      std::vector<double> per_stream;
      for (const auto& s : sums) per_stream.push_back(s[b] / static_cast<double>(crops.size()));
      out.push_back(model.combine(per_stream));
    }
  }
  return out;
}

/// Mean objective over `idx` on the centre crop, in evaluation mode.
inline double evaluation_loss(Model& model, const data::Dataset& ds, const std::vector<std::size_t>& idx,
                              const TrainConfig& c) {
  const auto offsets = preprocess::ten_crop_offsets(c.test_resize, c.test_resize, c.image_size);
  double total = 0;
  for (std::size_t start = 0; start < idx.size(); start += c.batch_size) {
    const std::size_t end = std::min(idx.size(), start + c.batch_size);
    std::vector<std::vector<ImageF32>> views;
    std::vector<int> labels;
    for (std::size_t k = start; k < end; ++k) {
      std::vector<ImageF32> frames;
      for (const auto& f : detail::eval_view(ds.at(idx[k]), c)) frames.push_back(preprocess::apply_crop(f, offsets[4], c.image_size));
      views.push_back(std::move(frames));
      labels.push_back(ds[idx[k]].label);
    }
    const auto batch = make_batch<Scalar>(views, labels, model.needs_differences(), c.preprocess);
    Graph<Scalar> g(Graph<Scalar>::Mode::inference);
    total += static_cast<double>(model.loss(g, batch, {})[0]) * static_cast<double>(labels.size());
  }
  return total / static_cast<double>(idx.size());
}

inline Json checkpoint_meta(const TrainConfig& c, std::size_t fold, std::size_t best_epoch) {
  Json m;
  m["kind"] = to_string(c.kind);
  m["fold"] = fold;
  m["best_epoch"] = best_epoch;
  m["config"] = to_json(c);
  return m;
}

struct TrainedModel {
  TrainConfig config;
  std::unique_ptr<Model> model;
  RunRecord record;
};

/// Trains from scratch on `train`, scheduling and selecting on `val`; the
/// returned model holds the best-validation weights.
inline TrainedModel train_fold(const TrainConfig& config, const data::Dataset& ds, std::vector<std::size_t> train,
                               std::vector<std::size_t> val, std::size_t fold = 0,
                               const std::filesystem::path& checkpoint = {}, const Logger& log = {}) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("train_fold: empty training set");
  if (val.empty()) throw std::invalid_argument("train_fold: empty validation set");
  detail::require_disjoint(ds, train, val, "train_fold");
  train = detail::usable(ds, train, config);
  val = detail::usable(ds, val, config);
  if (train.empty() || val.empty()) throw std::invalid_argument("train_fold: no sequence long enough for this model");

  const std::uint64_t seed = config.seed;
  Rng init(derive_seed(seed, stable_hash("init"), fold));
  TrainedModel out{config, make_model<Scalar>(config, init), {}};
  Model& model = *out.model;
  ParamRefs<Scalar> refs;
  model.collect(refs);
  auto params = refs.tensors();
  AdamState<Scalar> adam;
  adam.options.lr = config.lr;

  RunRecord& rec = out.record;
  rec.fold = fold;
  rec.model = to_string(config.kind);
  rec.initial_val_loss = evaluation_loss(model, ds, val, config);
  PlateauSchedule schedule(config.lr, config.decay_factor, config.patience, config.max_decays);
  schedule.start(rec.initial_val_loss);
  rec.best_val_loss = rec.initial_val_loss;
  auto best = detail::Snapshot<Scalar>::take(refs);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    adam.options.lr = schedule.lr();
    auto order = train;
    Rng shuffle(derive_seed(seed, stable_hash("shuffle"), fold, epoch));
    shuffle.shuffle(order);
    double loss_sum = 0;
    std::size_t seen = 0, step = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start == 1 && order.size() > 1) break;  // a lone sequence would skew batch statistics
      std::vector<std::vector<ImageF32>> views;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        Rng aug(derive_seed(seed, stable_hash("augment"), fold, epoch, order[k]));
        views.push_back(detail::training_view(ds[order[k]], config, aug));
        labels.push_back(ds[order[k]].label);
      }
      const auto batch = make_batch<Scalar>(views, labels, model.needs_differences(), config.preprocess);
      Rng drop(derive_seed(seed, stable_hash("dropout"), fold, epoch, step++));
      refs.zero_grad();
      Graph<Scalar> g;
      auto loss = model.loss(g, batch, {true, &drop});
      g.backward(loss);
      adam_step<Scalar>(params, adam);
      loss_sum += static_cast<double>(loss[0]) * static_cast<double>(labels.size());
      seen += labels.size();
    }
    EpochRecord e{epoch, loss_sum / static_cast<double>(std::max<std::size_t>(seen, 1)),
                  evaluation_loss(model, ds, val, config), adam.options.lr};
    rec.epochs.push_back(e);
    const auto event = schedule.observe(e.val_loss);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "fold %zu epoch %zu train %.4f val %.4f lr %.2g%s", fold, epoch, e.train_loss,
                    e.val_loss, e.lr, event == PlateauSchedule::Event::improved ? " *" : "");
      log(buf);
    }
    if (event == PlateauSchedule::Event::improved) {
      best = detail::Snapshot<Scalar>::take(refs);
      rec.best_epoch = epoch;
      rec.best_val_loss = e.val_loss;
    } else if (event == PlateauSchedule::Event::stop) {
      rec.early_stopped = true;
      break;
    }
  }
  best.restore(refs);
  if (!checkpoint.empty()) {
    save_checkpoint(checkpoint, refs, checkpoint_meta(config, fold, rec.best_epoch));
    rec.checkpoint = checkpoint.filename().string();
  }
  return out;
}

/// Rebuilds a model and its training config from a checkpoint.
inline TrainedModel load_model(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint<Scalar>(path);
  if (!ckpt.meta.contains("config")) throw CheckpointError("checkpoint has no training config: " + path.string());
  TrainConfig c;
  try {
    c = train_config_from_json(Json::parse(ckpt.meta["config"].dump()));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  Rng rng(0);
  TrainedModel out{c, make_model<Scalar>(c, rng), {}};
  ParamRefs<Scalar> refs;
  out.model->collect(refs);
  assign_checkpoint(ckpt, refs);
  return out;
}

struct FoldOutcome {
  RunRecord record;
  std::vector<std::size_t> test;
  std::vector<double> scores;
  eval::FoldResult result;
};

inline eval::ScoredSet scored_set(const data::Dataset& ds, const std::vector<std::size_t>& idx,
                                  const std::vector<double>& scores) {
  eval::ScoredSet s;
  s.scores = scores;
  for (auto i : idx) s.labels.push_back(ds.at(i).label);
  return s;
}

inline void write_scores_csv(const std::filesystem::path& path, const data::Dataset& ds,
                             const std::vector<std::size_t>& idx, const std::vector<double>& scores) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "patient_id,score,label\n";
  for (std::size_t k = 0; k < idx.size(); ++k)
    os << ds.at(idx[k]).patient_id << ',' << eval::format_number(scores[k]) << ',' << ds[idx[k]].label << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

/// Manifest of the test patients with absolute image paths.
inline void write_test_manifest(const std::filesystem::path& path, const data::Dataset& ds,
                                const std::vector<std::size_t>& idx, const std::filesystem::path& data_root) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (auto i : idx) {
    const auto& s = ds.at(i);
    Json rec;
    rec["patient_id"] = s.patient_id;
    rec["label"] = s.label;
    std::vector<std::string> files;
    for (const auto& f : s.files) files.push_back(std::filesystem::absolute(data_root / f).lexically_normal().string());
    rec["images"] = files;
    if (!s.dates.empty()) rec["dates"] = s.dates;
    os << rec.dump() << '\n';
  }
}

/// Train on `train` (with a stratified validation carve-out) and score `test`.
inline FoldOutcome train_and_test(const TrainConfig& config, const data::Dataset& ds,
                                  const std::vector<std::size_t>& train, const std::vector<std::size_t>& test,
                                  std::size_t fold = 0, const std::filesystem::path& checkpoint = {},
                                  const Logger& log = {}) {
  if (test.empty()) throw std::invalid_argument("train_and_test: empty test set");
  detail::require_disjoint(ds, train, test, "train_and_test");
  std::vector<int> labels;
  for (const auto& s : ds) labels.push_back(s.label);
  const auto split = data::stratified_holdout(train, labels, config.val_fraction,
                                              derive_seed(config.seed, stable_hash("validation"), fold));
  auto trained = train_fold(config, ds, split.train, split.test, fold, checkpoint, log);
  FoldOutcome out;
  out.record = std::move(trained.record);
  out.test = test;
  out.scores = predict(*trained.model, ds, test, config, config.ten_crop);
  out.result = eval::evaluate(scored_set(ds, test, out.scores));
  return out;
}

struct CrossValOptions {
  std::size_t k = 5;
  std::uint64_t split_seed = 0;
  std::filesystem::path out_dir;    // per-fold artifacts and metrics.json when set
  std::filesystem::path data_root;  // directory the dataset's image paths are relative to
  Logger log;
};

struct CrossValResult {
  eval::EvalReport report;
  std::vector<FoldOutcome> folds;
  std::vector<data::FoldSplit> splits;
};

/// Trains every fold from scratch and reports per-fold test metrics.
inline CrossValResult run_cross_validation(const TrainConfig& config, const data::Dataset& ds,
                                           const CrossValOptions& opt = {}) {
  config.validate();
  std::vector<int> labels;
  for (const auto& s : ds) labels.push_back(s.label);
  CrossValResult out;
  out.splits = data::kfold_split(labels, opt.k, opt.split_seed);
  out.report.model = to_string(config.kind);
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);
  for (std::size_t f = 0; f < opt.k; ++f) {
    std::filesystem::path dir;
    if (!opt.out_dir.empty()) {
      dir = opt.out_dir / ("fold_" + std::to_string(f));
      std::filesystem::create_directories(dir);
    }
    auto fold = train_and_test(config, ds, out.splits[f].train, out.splits[f].test, f,
                               dir.empty() ? dir : dir / "model.ckpt", opt.log);
    if (!dir.empty()) {
      eval::write_json(dir / "run.json", fold.record.to_json());
      eval::write_roc_csv(dir / "roc.csv", fold.result.roc);
      write_scores_csv(dir / "scores.csv", ds, fold.test, fold.scores);
      bool have_files = true;
      for (auto i : fold.test) have_files = have_files && ds[i].files.size() == ds[i].images.size();
      if (have_files) write_test_manifest(dir / "test_manifest.jsonl", ds, fold.test, opt.data_root);
    }
    if (opt.log) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "fold %zu test auc %.4f", f, fold.result.auc);
      opt.log(buf);
    }
    out.report.folds.push_back(fold.result);
    out.folds.push_back(std::move(fold));
  }
  if (!opt.out_dir.empty()) eval::write_json(opt.out_dir / "metrics.json", out.report.to_json());
  return out;
}

/// One cross-validated report per sequence length.
inline std::vector<eval::EvalReport> length_sweep(TrainConfig config, const data::Dataset& ds,
                                                  const std::vector<std::size_t>& lengths, CrossValOptions opt = {}) {
  std::vector<eval::EvalReport> out;
  const auto root = opt.out_dir;
  for (auto n : lengths) {
    config.length = n;
    if (!root.empty()) opt.out_dir = root / ("N_" + std::to_string(n));
    out.push_back(run_cross_validation(config, ds, opt).report);
  }
  return out;
}

}  // namespace seqdiff::train
