#pragma once

// Checkpoint container
//
//   offset 0   8 bytes   magic "SQDCKPT1"
//   offset 8   8 bytes   header length L, unsigned little-endian
//   offset 16  L bytes   UTF-8 JSON header
//   offset 16+L          payload: every tensor's scalars, little-endian,
//                        concatenated in header order
//
// Header: {"format": "seqdiff-checkpoint", "version": 1, "dtype": "f32"|"f64",
//          "meta": {...caller data...},
//          "tensors": [{"name", "kind": "param"|"buffer", "shape": [...],
//                       "offset": byte offset into payload}]}
//
// Scalars are stored at the model's precision, so save/load is bit-exact.

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "seqdiff/tensor/params.hpp"

namespace seqdiff {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'S', 'Q', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian host");

}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamRefs<T>& refs,
                     const nlohmann::json& meta) {
  nlohmann::json header;
  header["format"] = "seqdiff-checkpoint";
  header["version"] = 1;
  header["dtype"] = detail::dtype_name<T>();
  header["meta"] = meta;
  auto& entries = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : refs.params) {
    entries.push_back({{"name", name}, {"kind", "param"}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(T);
  }
  for (const auto& [name, b] : refs.buffers) {
    entries.push_back({{"name", name}, {"kind", "buffer"}, {"shape", Shape{b->size()}}, {"offset", offset}});
    offset += b->size() * sizeof(T);
  }
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  os.write(detail::kCheckpointMagic, 8);
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : refs.params) {
    os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  }
  for (const auto& [name, b] : refs.buffers) {
    os.write(reinterpret_cast<const char*>(b->data()), static_cast<std::streamsize>(b->size() * sizeof(T)));
  }
  if (!os) throw CheckpointError("write failed: " + path.string());
}

/// Parsed checkpoint: header plus raw tensors by name.
template <typename T>
struct CheckpointData {
  nlohmann::json meta;
  std::map<std::string, std::pair<Shape, std::vector<T>>> tensors;
};

template <typename T>
CheckpointData<T> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
    throw CheckpointError("not a seqdiff checkpoint: " + path.string());
  }
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw CheckpointError("truncated checkpoint header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("dtype", "") != detail::dtype_name<T>()) {
    throw CheckpointError("checkpoint dtype " + header.value("dtype", std::string("?")) +
                          " does not match requested " + detail::dtype_name<T>());
  }
  std::vector<char> payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CheckpointData<T> out;
  out.meta = header["meta"];
  for (const auto& e : header["tensors"]) {
    Shape shape = e["shape"].get<Shape>();
    const auto offset = e["offset"].get<std::uint64_t>();
    const auto count = numel(shape);
    if (offset + count * sizeof(T) > payload.size()) throw CheckpointError("truncated checkpoint payload");
    std::vector<T> data(count);
    std::memcpy(data.data(), payload.data() + offset, count * sizeof(T));
    out.tensors.emplace(e["name"].get<std::string>(), std::make_pair(std::move(shape), std::move(data)));
  }
  return out;
}

/// Copies checkpoint values into the live tensors named by `refs`.
/// Every name must be present with a matching shape.
template <typename T>
void assign_checkpoint(const CheckpointData<T>& ckpt, ParamRefs<T>& refs) {
  for (auto& [name, t] : refs.params) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint lacks parameter " + name);
    if (it->second.first != t.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": " + to_string(it->second.first) + " vs " +
                            to_string(t.shape()));
    }
    std::copy(it->second.second.begin(), it->second.second.end(), t.ptr());
  }
  for (auto& [name, b] : refs.buffers) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint lacks buffer " + name);
    if (it->second.second.size() != b->size()) throw CheckpointError("size mismatch for buffer " + name);
    *b = it->second.second;
  }
}

}  // namespace seqdiff
