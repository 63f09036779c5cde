#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqdiff/eval/metrics.hpp"

namespace seqdiff::eval {

using Json = nlohmann::ordered_json;

/// Rounds to 6 significant digits; infinities become "inf" / "-inf".
inline Json json_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

inline Json json_numbers(const std::vector<double>& vs) {
  Json a = Json::array();
  for (double v : vs) a.push_back(json_number(v));
  return a;
}

inline Json to_json(const Aggregate& a) {
  Json j;
  j["per_fold"] = json_numbers(a.per_fold);
  j["mean"] = json_number(a.mean);
  j["std"] = json_number(a.std);
  return j;
}

inline Json to_json(const PointMetrics& m) {
  Json j;
  j["threshold"] = json_number(m.threshold);
  j["accuracy"] = json_number(m.accuracy);
  j["precision"] = json_number(m.precision);
  j["sensitivity"] = json_number(m.sensitivity);
  j["specificity"] = json_number(m.specificity);
  return j;
}

struct FoldResult {
  double auc = 0;
  PointMetrics point;
  std::vector<RocPoint> roc;
  std::size_t test_size = 0;
};

inline FoldResult evaluate(const ScoredSet& set) {
  FoldResult r;
  r.auc = roc_auc(set);
  r.point = optimal_threshold_metrics(set);
  r.roc = roc_curve(set);
  r.test_size = set.scores.size();
  return r;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"accuracy", "auc", "precision", "sensitivity", "specificity"};
  return names;
}

inline double metric_value(const FoldResult& f, const std::string& name) {
  if (name == "accuracy") return f.point.accuracy;
  if (name == "auc") return f.auc;
  if (name == "precision") return f.point.precision;
  if (name == "sensitivity") return f.point.sensitivity;
  if (name == "specificity") return f.point.specificity;
  throw std::invalid_argument("unknown metric: " + name);
}

struct EvalReport {
  std::string model;
  std::vector<FoldResult> folds;

  Aggregate aggregate(const std::string& metric) const {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(metric_value(f, metric));
    return aggregate_folds(v);
  }

  Json to_json() const {
    Json j;
    j["model"] = model;
    j["folds"] = folds.size();
    for (const auto& name : metric_names()) j[name] = eval::to_json(aggregate(name));
    std::vector<double> thr;
    for (const auto& f : folds) thr.push_back(f.point.threshold);
    j["thresholds"] = json_numbers(thr);
    Json summary;
    for (const auto& name : metric_names()) summary[name] = percent_summary(aggregate(name));
    j["summary"] = summary;
    return j;
  }
};

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline std::string format_number(double v) {
  const Json j = json_number(v);
  return j.is_string() ? j.get<std::string>() : j.dump();
}

inline void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& roc) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "threshold,tpr,fpr\n";
  for (const auto& p : roc) os << format_number(p.threshold) << ',' << format_number(p.tpr) << ',' << format_number(p.fpr) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace seqdiff::eval
