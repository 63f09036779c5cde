#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqdiff/preprocess/image_io.hpp"

namespace seqdiff::data {

/// Problems with the data itself (missing or malformed files and records).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingFileError : public DataError {
 public:
  explicit MissingFileError(const std::filesystem::path& p)
      : DataError("missing file: " + p.string()), path_(p) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct ScreeningSequence {
  std::string patient_id;
  int label = 0;  // 0 benign, 1 malignant
  std::vector<ImageF32> images;  // visit order
  std::vector<std::string> dates;  // empty or one per image
  std::vector<std::string> files;  // manifest-relative paths, when loaded from disk

  std::size_t length() const { return images.size(); }
};

using Dataset = std::vector<ScreeningSequence>;

inline void validate_label(int label, const std::string& who) {
  if (label != 0 && label != 1) throw DataError(who + ": label must be 0 or 1, got " + std::to_string(label));
}

namespace detail {

inline bool looks_iso8601(const std::string& s) {
  static const std::regex re(R"(^\d{4}-\d{2}-\d{2}([T ][0-9:.+\-Z]*)?$)");
  return std::regex_match(s, re);
}

}  // namespace detail

/// Reads a JSON-lines manifest; image paths resolve against its directory.
/// Sequences with dates are re-sorted ascending (stable for equal dates).
inline Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError(path);
  const auto root = path.parent_path();
  Dataset out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": invalid JSON (" + e.what() + ")");
    }
    ScreeningSequence seq;
    try {
      seq.patient_id = rec.at("patient_id").get<std::string>();
      seq.label = rec.at("label").get<int>();
      seq.files = rec.at("images").get<std::vector<std::string>>();
      if (rec.contains("dates")) {
        seq.dates = rec.at("dates").get<std::vector<std::string>>();
        if (seq.dates.size() != seq.files.size()) throw DataError(where + ": dates and images differ in count");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": bad record (" + e.what() + ")");
    }
    validate_label(seq.label, where);
    if (seq.files.empty()) throw DataError(where + ": patient " + seq.patient_id + " has an empty sequence");
    if (!seen.insert(seq.patient_id).second) throw DataError(where + ": duplicate patient_id " + seq.patient_id);
    if (!seq.dates.empty()) {
      for (const auto& d : seq.dates)
        if (!detail::looks_iso8601(d)) throw DataError(where + ": not an ISO-8601 date: " + d);
      std::vector<std::size_t> order(seq.files.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return seq.dates[a] < seq.dates[b]; });
      std::vector<std::string> files, dates;
      for (auto i : order) {
        files.push_back(seq.files[i]);
        dates.push_back(seq.dates[i]);
      }
      seq.files = std::move(files);
      seq.dates = std::move(dates);
    }
    for (const auto& f : seq.files) {
      const auto p = root / f;
      if (!std::filesystem::exists(p)) throw MissingFileError(p);
      try {
        seq.images.push_back(read_image(p));
      } catch (const ImageIoError& e) {
        throw DataError(where + ": " + e.what());
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

/// Writes `{dir}/{patient}/{t}.png` frames plus `{dir}/manifest.jsonl`.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  const auto manifest = dir / "manifest.jsonl";
  std::ofstream os(manifest, std::ios::binary);
  if (!os) throw DataError("cannot write " + manifest.string());
  for (const auto& seq : ds) {
    std::filesystem::create_directories(dir / seq.patient_id, ec);
    if (ec) throw DataError("cannot create " + (dir / seq.patient_id).string() + ": " + ec.message());
    nlohmann::ordered_json rec;
    rec["patient_id"] = seq.patient_id;
    rec["label"] = seq.label;
    std::vector<std::string> files;
    for (std::size_t t = 0; t < seq.images.size(); ++t) {
      const std::string rel = seq.patient_id + "/" + std::to_string(t) + ".png";
      try {
        write_png(dir / rel, seq.images[t]);
      } catch (const ImageIoError& e) {
        throw DataError(e.what());
      }
      files.push_back(rel);
    }
    rec["images"] = files;
    if (!seq.dates.empty()) rec["dates"] = seq.dates;
    os << rec.dump() << '\n';
  }
  if (!os) throw DataError("write failed: " + manifest.string());
  return manifest;
}

}  // namespace seqdiff::data
