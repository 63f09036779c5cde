#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seqdiff/data/synthetic.hpp"
#include "seqdiff/train/config.hpp"

namespace seqdiff::cli {

using train::ConfigError;
using train::Json;

inline Json to_json(const data::SyntheticConfig& s) {
  Json j;
  j["image_size"] = s.image_size;
  j["length"] = s.length;
  j["benign_radius"] = {s.benign_radius.lo, s.benign_radius.hi};
  j["malignant_start"] = {s.malignant_start.lo, s.malignant_start.hi};
  j["growth"] = s.growth;
  j["lobe_prob"] = s.lobe_prob;
  j["background_noise"] = s.background_noise;
  j["lesion_noise"] = s.lesion_noise;
  j["jitter_px"] = s.jitter_px;
  j["illumination"] = s.illumination;
  j["hair_prob"] = s.hair_prob;
  j["benign"] = s.benign;
  j["malignant"] = s.malignant;
  j["seed"] = s.seed;
  return j;
}

inline data::SyntheticConfig synthetic_from_json(const Json& j, const std::string& where = "data.synthetic") {
  train::detail::check_keys(j, {"image_size", "length", "benign_radius", "malignant_start", "growth", "lobe_prob",
                                "background_noise", "lesion_noise", "jitter_px", "illumination", "hair_prob",
                                "benign", "malignant", "seed"},
                            where);
  data::SyntheticConfig s;
  using train::detail::read;
  read(j, "image_size", s.image_size, where);
  read(j, "length", s.length, where);
  for (auto [key, range] : {std::pair{"benign_radius", &s.benign_radius}, std::pair{"malignant_start", &s.malignant_start}}) {
    if (!j.contains(key)) continue;
    std::vector<double> v;
    read(j, key, v, where);
    if (v.size() != 2) throw ConfigError(where + "." + key + ": expected [lo, hi]");
    *range = {v[0], v[1]};
  }
  read(j, "growth", s.growth, where);
  read(j, "lobe_prob", s.lobe_prob, where);
  read(j, "background_noise", s.background_noise, where);
  read(j, "lesion_noise", s.lesion_noise, where);
  read(j, "jitter_px", s.jitter_px, where);
  read(j, "illumination", s.illumination, where);
  read(j, "hair_prob", s.hair_prob, where);
  read(j, "benign", s.benign, where);
  read(j, "malignant", s.malignant, where);
  read(j, "seed", s.seed, where);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

/// Parsed run configuration. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<data::SyntheticConfig> synthetic;
  std::filesystem::path data_dir;  // where synthetic data is written; empty means {output}/data
  train::TrainConfig train;
  std::size_t k = 5;
  std::uint64_t eval_seed = 0;
  std::vector<std::size_t> lengths;  // non-empty runs one cross-validation per length
  std::filesystem::path output;

  /// One seed for data synthesis, training and fold assignment.
  void override_seed(std::uint64_t seed) {
    train.seed = seed;
    eval_seed = seed;
    if (synthetic) synthetic->seed = seed;
  }

  Json to_json() const {
    Json j;
    Json d;
    if (manifest) d["manifest"] = manifest->string();
    if (synthetic) d["synthetic"] = cli::to_json(*synthetic);
    if (!data_dir.empty()) d["dir"] = data_dir.string();
    j["data"] = d;
    const auto t = train::to_json(train);
    Json model, tr;
    for (const auto& [key, value] : t.items()) (model_keys().count(key) ? model : tr)[key] = value;
    j["model"] = model;
    j["train"] = tr;
    j["eval"] = {{"k", k}, {"seed", eval_seed}, {"lengths", lengths}};
    j["output"] = output.string();
    return j;
  }

  static const std::set<std::string>& model_keys() {
    static const std::set<std::string> keys{"kind", "backbone", "length", "inject"};
    return keys;
  }
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base = {}) {
  train::detail::check_keys(j, {"data", "model", "train", "eval", "output"}, "config");
  RunConfig rc;
  if (j.contains("data")) {
    const auto& d = j["data"];
    train::detail::check_keys(d, {"manifest", "synthetic", "dir"}, "data");
    if (d.contains("manifest") && d.contains("synthetic")) throw ConfigError("data: give either manifest or synthetic, not both");
    std::string s;
    if (d.contains("manifest")) {
      train::detail::read(d, "manifest", s, "data");
      rc.manifest = resolve(base, s);
    }
    if (d.contains("synthetic")) rc.synthetic = synthetic_from_json(d["synthetic"]);
    if (d.contains("dir")) {
      train::detail::read(d, "dir", s, "data");
      rc.data_dir = resolve(base, s);
    }
  }
  Json merged = Json::object();
  if (j.contains("model")) {
    train::detail::check_keys(j["model"], RunConfig::model_keys(), "model");
    for (const auto& [key, value] : j["model"].items()) merged[key] = value;
  }
  if (j.contains("train")) {
    std::set<std::string> allowed;
    for (const auto& key : train::train_config_keys())
      if (!RunConfig::model_keys().count(key)) allowed.insert(key);
    train::detail::check_keys(j["train"], allowed, "train");
    for (const auto& [key, value] : j["train"].items()) merged[key] = value;
  }
  train::apply_json(merged, rc.train, "model/train");
  rc.train.validate();
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    train::detail::check_keys(e, {"k", "seed", "lengths"}, "eval");
    train::detail::read(e, "k", rc.k, "eval");
    train::detail::read(e, "seed", rc.eval_seed, "eval");
    train::detail::read(e, "lengths", rc.lengths, "eval");
    if (rc.k < 2) throw ConfigError("eval.k must be at least 2");
  }
  if (j.contains("output")) {
    std::string s;
    train::detail::read(j, "output", s, "config");
    rc.output = resolve(base, s);
  }
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

}  // namespace seqdiff::cli
