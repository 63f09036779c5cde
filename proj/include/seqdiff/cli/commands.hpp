#pragma once

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "seqdiff/cli/run_config.hpp"
#include "seqdiff/data/dataset.hpp"
#include "seqdiff/data/synthetic.hpp"
#include "seqdiff/eval/report.hpp"
#include "seqdiff/train/trainer.hpp"
#include "seqdiff/viz/heatmap.hpp"

namespace seqdiff::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kEnvironment = 2 };

/// Usage or configuration problems the user can fix in the invocation.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Options {
  std::optional<fs::path> config;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> manifest;
  std::optional<std::string> patient;
  bool quiet = false;
};

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

/// Runs `body`, mapping failures onto the exit-code contract.
inline int guarded(const Streams& io, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CheckpointError& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const data::DataError& e) {
    io.err << "error: " << e.what() << '\n';
    return kEnvironment;
  } catch (const ImageIoError& e) {
    io.err << "error: " << e.what() << '\n';
    return kEnvironment;
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << '\n';
    return kEnvironment;
  } catch (const std::invalid_argument& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return kEnvironment;
  }
}

inline RunConfig resolve_config(const Options& o) {
  RunConfig rc = o.config ? load_run_config(*o.config) : RunConfig{};
  if (o.seed) rc.override_seed(*o.seed);
  if (o.out) rc.output = *o.out;
  return rc;
}

inline fs::path require_path(const std::optional<fs::path>& p, const char* flag) {
  if (!p) throw UsageError(std::string("missing required option ") + flag);
  return *p;
}

inline int cmd_synth(const Options& o, const Streams& io = {}) {
  return guarded(io, [&] {
    RunConfig rc = resolve_config(o);
    if (!rc.synthetic) rc.synthetic = data::SyntheticConfig{};
    if (o.seed) rc.synthetic->seed = *o.seed;
    fs::path dir = o.out ? *o.out : !rc.data_dir.empty() ? rc.data_dir : rc.output;
    if (dir.empty()) throw UsageError("synth: no output directory (use --out)");
    const auto ds = data::synth_generate(*rc.synthetic);
    const auto manifest = data::write_dataset(dir, ds.sequences);
    std::size_t malignant = 0;
    for (const auto& s : ds.sequences) malignant += static_cast<std::size_t>(s.label);
    io.out << "wrote " << ds.sequences.size() << " patients (" << ds.sequences.size() - malignant << " benign, "
           << malignant << " malignant), " << rc.synthetic->length << " screenings of " << rc.synthetic->image_size
           << "x" << rc.synthetic->image_size << " px each\n"
           << "manifest: " << manifest.string() << '\n';
    return kOk;
  });
}

inline int cmd_train(const Options& o, const Streams& io = {}) {
  return guarded(io, [&] {
    require_path(o.config, "--config");
    RunConfig rc = resolve_config(o);
    if (rc.output.empty()) throw UsageError("train: no output directory (set \"output\" or use --out)");
    fs::path manifest;
    if (rc.manifest) {
      manifest = *rc.manifest;
    } else {
      const auto synth = rc.synthetic.value_or(data::SyntheticConfig{});
      const fs::path dir = rc.data_dir.empty() ? rc.output / "data" : rc.data_dir;
      manifest = data::write_dataset(dir, data::synth_generate(synth).sequences);
    }
    const auto ds = data::load_manifest(manifest);
    fs::create_directories(rc.output);
    eval::write_json(rc.output / "config.json", rc.to_json());

    train::CrossValOptions opt;
    opt.k = rc.k;
    opt.split_seed = rc.eval_seed;
    opt.out_dir = rc.output;
    opt.data_root = manifest.parent_path();
    if (!o.quiet) opt.log = [&](const std::string& line) { io.err << line << '\n'; };
    if (rc.lengths.empty()) {
      const auto res = train::run_cross_validation(rc.train, ds, opt);
      const auto j = res.report.to_json();
      io.out << rc.output.string() << "/metrics.json: " << to_string(rc.train.kind) << " auc " << j["summary"]["auc"].get<std::string>()
             << " (" << rc.k << " folds)\n";
    } else {
      const auto reports = train::length_sweep(rc.train, ds, rc.lengths, opt);
      for (std::size_t i = 0; i < reports.size(); ++i)
        io.out << "N=" << rc.lengths[i] << ": auc " << reports[i].to_json()["summary"]["auc"].get<std::string>() << '\n';
    }
    return kOk;
  });
}

inline int cmd_eval(const Options& o, const Streams& io = {}) {
  return guarded(io, [&] {
    const auto ckpt = require_path(o.checkpoint, "--checkpoint");
    const auto manifest = require_path(o.manifest, "--manifest");
    RunConfig rc = o.config ? load_run_config(*o.config) : RunConfig{};
    const fs::path out = o.out ? *o.out : rc.output;
    if (out.empty()) throw UsageError("eval: no output directory (use --out)");
    auto model = train::load_model(ckpt);
    const auto ds = data::load_manifest(manifest);
    if (ds.empty()) throw data::DataError("manifest lists no patients: " + manifest.string());
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto scores = train::predict(*model.model, ds, idx, model.config, model.config.ten_crop);
    fs::create_directories(out);
    train::write_scores_csv(out / "scores.csv", ds, idx, scores);

    const auto set = train::scored_set(ds, idx, scores);
    eval::Json j;
    j["model"] = to_string(model.config.kind);
    j["patients"] = ds.size();
    if (set.both_classes()) {
      const auto r = eval::evaluate(set);
      j["auc"] = eval::json_number(r.auc);
      const auto point = eval::to_json(r.point);
      for (const auto& [key, value] : point.items()) j[key] = value;
      eval::write_roc_csv(out / "roc.csv", r.roc);
      io.out << "auc " << eval::format_number(r.auc) << " over " << ds.size() << " patients\n";
    } else {
      const std::string msg = "manifest holds a single class; AUC and point metrics omitted";
      j["warning"] = msg;
      io.err << "warning: " << msg << '\n';
    }
    eval::write_json(out / "metrics.json", j);
    return kOk;
  });
}

inline int cmd_visualize(const Options& o, const Streams& io = {}) {
  return guarded(io, [&] {
    const auto ckpt = require_path(o.checkpoint, "--checkpoint");
    const auto manifest = require_path(o.manifest, "--manifest");
    if (!o.patient) throw UsageError("missing required option --patient");
    RunConfig rc = o.config ? load_run_config(*o.config) : RunConfig{};
    const fs::path out = o.out ? *o.out : rc.output;
    if (out.empty()) throw UsageError("visualize: no output directory (use --out)");
    auto model = train::load_model(ckpt);
    auto* two = dynamic_cast<train::TwoStreamAdapter<train::Scalar>*>(model.model.get());
    if (!two) throw UsageError(std::string("visualize needs a two-stream checkpoint, got ") + to_string(model.config.kind));
    const auto ds = data::load_manifest(manifest);
    const data::ScreeningSequence* seq = nullptr;
    for (const auto& s : ds)
      if (s.patient_id == *o.patient) seq = &s;
    if (!seq) throw UsageError("patient " + *o.patient + " is not in " + manifest.string());
    if (seq->length() < 2) throw UsageError("patient " + *o.patient + " has fewer than two screenings");
    const auto frames = preprocess::resize_sequence(seq->images, model.config.image_size);
    const auto files = viz::write_visualizations(out, seq->patient_id,
                                                 viz::visualize_sequence(two->model(), frames, model.config.preprocess));
    io.out << "wrote " << files.size() << " images to " << out.string() << '\n';
    return kOk;
  });
}

}  // namespace seqdiff::cli
