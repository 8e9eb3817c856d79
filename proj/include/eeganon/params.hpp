// Copyright 2026 The eeganon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "eeganon/errors.hpp"
#include "eeganon/tensor.hpp"
#include "json.hpp"

namespace eeganon {

inline constexpr char kCheckpointMagic[8] = {'E', 'E', 'G', 'A', 'N', 'O', 'N', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Named learnable arrays of one model, in insertion order. `kind` and
// `config` describe the architecture the arrays belong to.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(std::string kind, nlohmann::json config)
      : kind_(std::move(kind)), config_(std::move(config)) {}

  void Add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) {
      throw Error(ErrorCode::kContract, "duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(value));
  }

  bool Contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& Get(const std::string& name) { return entries_[IndexOf(name)].second; }
  const Tensor<T>& Get(const std::string& name) const {
    return entries_[IndexOf(name)].second;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& NameAt(std::size_t i) const { return entries_[i].first; }
  Tensor<T>& At(std::size_t i) { return entries_[i].second; }
  const Tensor<T>& At(std::size_t i) const { return entries_[i].second; }

  const std::string& kind() const noexcept { return kind_; }
  const nlohmann::json& config() const noexcept { return config_; }

  std::size_t TotalParameterCount() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
  }

  bool AllFinite() const {
    for (const auto& [name, t] : entries_) {
      if (!t.AllFinite()) return false;
    }
    return true;
  }

  // FNV-1a over names, shapes and raw value bytes.
  std::uint64_t Checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto& [name, t] : entries_) {
      mix(name.data(), name.size());
      for (const std::size_t d : t.shape()) mix(&d, sizeof d);
      mix(t.data(), t.size() * sizeof(T));
    }
    return h;
  }

  template <typename U>
  ParameterStore<U> Cast() const {
    ParameterStore<U> out(kind_, config_);
    for (const auto& [name, t] : entries_) out.Add(name, t.template Cast<U>());
    return out;
  }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    return a.kind_ == b.kind_ && a.config_ == b.config_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t IndexOf(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) {
      throw Error(ErrorCode::kContract, "unknown parameter '" + name + "'");
    }
    return it->second;
  }

  std::string kind_;
  nlohmann::json config_;
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
constexpr const char* DtypeName() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

// Layout: 8-byte magic, u32 version, u64 header length, JSON header
// (kind, config, dtype, array table), then raw little-endian values.
template <typename T>
void SaveParams(const ParameterStore<T>& store, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["kind"] = store.kind();
  header["config"] = store.config();
  header["dtype"] = DtypeName<T>();
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    arrays.push_back({{"name", store.NameAt(i)},
                      {"shape", store.At(i).shape()},
                      {"offset", offset}});
    offset += store.At(i).size() * sizeof(T);
  }
  header["arrays"] = std::move(arrays);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    out.write(reinterpret_cast<const char*>(store.At(i).data()),
              static_cast<std::streamsize>(store.At(i).size() * sizeof(T)));
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing checkpoint " + path.string());
}

template <typename T>
ParameterStore<T> LoadParams(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::kIncompatibleCheckpoint, path.string() + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kIncompatibleCheckpoint,
                "checkpoint format version " + std::to_string(version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIncompatibleCheckpoint, std::string("bad header: ") + e.what());
  }
  if (header.value("dtype", "") != DtypeName<T>()) {
    throw Error(ErrorCode::kIncompatibleCheckpoint,
                "checkpoint dtype " + header.value("dtype", "?") + ", expected " +
                    DtypeName<T>());
  }
  ParameterStore<T> store(header.at("kind").get<std::string>(), header.at("config"));
  for (const auto& a : header.at("arrays")) {
    Tensor<T> t(a.at("shape").get<Shape>());
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!in) {
      throw Error(ErrorCode::kIncompatibleCheckpoint,
                  "truncated data for array '" + a.at("name").get<std::string>() + "'");
    }
    store.Add(a.at("name").get<std::string>(), std::move(t));
  }
  return store;
}

// Loads a checkpoint and checks it against a freshly initialized layout:
// kind, array names and shapes must all match.
template <typename T>
ParameterStore<T> LoadParamsMatching(const std::filesystem::path& path,
                                     const ParameterStore<T>& layout) {
  ParameterStore<T> loaded = LoadParams<T>(path);
  if (loaded.kind() != layout.kind()) {
    throw Error(ErrorCode::kIncompatibleCheckpoint,
                "checkpoint holds a '" + loaded.kind() + "' model, expected '" +
                    layout.kind() + "'");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const std::string& name = layout.NameAt(i);
    if (!loaded.Contains(name)) {
      throw Error(ErrorCode::kIncompatibleCheckpoint, "checkpoint lacks array '" + name + "'");
    }
    if (loaded.Get(name).shape() != layout.At(i).shape()) {
      throw Error(ErrorCode::kIncompatibleCheckpoint,
                  "array '" + name + "' has shape " + ShapeString(loaded.Get(name).shape()) +
                      ", expected " + ShapeString(layout.At(i).shape()));
    }
  }
  if (loaded.size() != layout.size()) {
    throw Error(ErrorCode::kIncompatibleCheckpoint, "checkpoint has extra arrays");
  }
  return loaded;
}

}  // namespace eeganon
