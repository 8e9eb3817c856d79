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

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eeganon/errors.hpp"
#include "eeganon/tensor.hpp"
#include "json.hpp"

namespace eeganon {

// AASM stages in fixed index order.
enum class SleepStage : int { kW = 0, kN1 = 1, kN2 = 2, kN3 = 3, kREM = 4 };
inline constexpr int kNumStages = 5;
inline constexpr std::array<SleepStage, kNumStages> kAllStages = {
    SleepStage::kW, SleepStage::kN1, SleepStage::kN2, SleepStage::kN3, SleepStage::kREM};

inline std::string_view StageName(SleepStage s) {
  static constexpr std::array<std::string_view, kNumStages> kNames = {"W", "N1", "N2", "N3",
                                                                      "REM"};
  return kNames[static_cast<int>(s)];
}

inline std::optional<SleepStage> StageFromName(std::string_view name) {
  for (const SleepStage s : kAllStages) {
    if (StageName(s) == name) return s;
  }
  return std::nullopt;
}

inline constexpr double kEpochSeconds = 30.0;

// One 30 s multichannel segment. `data` is channel-major:
// data[c * n_samples + i].
struct Epoch {
  std::uint64_t id = 0;
  std::string subject_id;
  SleepStage stage = SleepStage::kW;
  int n_channels = 2;
  int n_samples = 3000;
  std::vector<float> data;

  bool AllFinite() const {
    for (const float v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

class EpochDataset {
 public:
  EpochDataset() = default;

  // Builds the dense subject index in order of first appearance.
  explicit EpochDataset(std::vector<Epoch> epochs, double sampling_rate_hz = 100.0)
      : epochs_(std::move(epochs)), sampling_rate_hz_(sampling_rate_hz) {
    for (const Epoch& e : epochs_) {
      if (!subject_index_.count(e.subject_id)) {
        const int next = static_cast<int>(subject_index_.size());
        subject_index_.emplace(e.subject_id, next);
      }
    }
    Validate();
  }

  // Keeps an externally supplied index, e.g. the parent's after a split.
  EpochDataset(std::vector<Epoch> epochs, std::map<std::string, int> subject_index,
               double sampling_rate_hz, std::string split = "")
      : epochs_(std::move(epochs)),
        subject_index_(std::move(subject_index)),
        sampling_rate_hz_(sampling_rate_hz),
        split_(std::move(split)) {
    Validate();
  }

  const std::vector<Epoch>& epochs() const noexcept { return epochs_; }
  std::size_t size() const noexcept { return epochs_.size(); }
  bool empty() const noexcept { return epochs_.empty(); }
  const Epoch& operator[](std::size_t i) const { return epochs_[i]; }

  const std::map<std::string, int>& subject_index() const noexcept { return subject_index_; }
  int n_subjects() const noexcept { return static_cast<int>(subject_index_.size()); }
  double sampling_rate_hz() const noexcept { return sampling_rate_hz_; }
  const std::string& split() const noexcept { return split_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  void AddWarning(std::string w) { warnings_.push_back(std::move(w)); }

  int n_channels() const { return epochs_.empty() ? 2 : epochs_.front().n_channels; }
  int n_samples() const { return epochs_.empty() ? 3000 : epochs_.front().n_samples; }

  int SubjectLabel(std::size_t i) const { return subject_index_.at(epochs_[i].subject_id); }
  int StageLabel(std::size_t i) const { return static_cast<int>(epochs_[i].stage); }

  // Subject ids ordered by class index.
  std::vector<std::string> SubjectNames() const {
    std::vector<std::string> names(subject_index_.size());
    for (const auto& [id, idx] : subject_index_) names[idx] = id;
    return names;
  }

  // Stacks the selected epochs into [B, C, L].
  template <typename T = float>
  Tensor<T> Batch(std::span<const std::size_t> indices) const {
    const std::size_t c = n_channels(), l = n_samples();
    Tensor<T> out({indices.size(), c, l});
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const Epoch& e = epochs_.at(indices[b]);
      std::copy(e.data.begin(), e.data.end(), out.data() + b * c * l);
    }
    return out;
  }

 private:
  void Validate() const {
    for (std::size_t i = 0; i < epochs_.size(); ++i) {
      const Epoch& e = epochs_[i];
      if (!subject_index_.count(e.subject_id)) {
        throw Error(ErrorCode::kValidation, "epoch " + std::to_string(i) + " has subject '" +
                                                e.subject_id + "' missing from the index");
      }
      if (e.data.size() != static_cast<std::size_t>(e.n_channels) * e.n_samples ||
          e.n_channels != epochs_.front().n_channels ||
          e.n_samples != epochs_.front().n_samples) {
        throw Error(ErrorCode::kValidation, "epoch " + std::to_string(i) + " has inconsistent shape");
      }
    }
    std::vector<bool> seen(subject_index_.size(), false);
    for (const auto& [id, idx] : subject_index_) {
      if (idx < 0 || idx >= static_cast<int>(seen.size()) || seen[idx]) {
        throw Error(ErrorCode::kValidation, "subject index is not dense");
      }
      seen[idx] = true;
    }
  }

  std::vector<Epoch> epochs_;
  std::map<std::string, int> subject_index_;
  double sampling_rate_hz_ = 100.0;
  std::string split_;
  std::vector<std::string> warnings_;
};

// Binary dataset container: magic, u64 header length, JSON header (index,
// rate, per-epoch metadata), then float32 samples in epoch order.
inline constexpr char kDatasetMagic[8] = {'E', 'E', 'G', 'A', 'N', 'O', 'N', 'D'};

inline void SaveDataset(const EpochDataset& ds, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["sampling_rate_hz"] = ds.sampling_rate_hz();
  header["subject_index"] = ds.subject_index();
  header["split"] = ds.split();
  header["warnings"] = ds.warnings();
  nlohmann::json meta = nlohmann::json::array();
  for (const Epoch& e : ds.epochs()) {
    meta.push_back({e.id, e.subject_id, static_cast<int>(e.stage), e.n_channels, e.n_samples});
  }
  header["epochs"] = std::move(meta);
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write dataset " + path.string());
  out.write(kDatasetMagic, sizeof kDatasetMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(len));
  for (const Epoch& e : ds.epochs()) {
    out.write(reinterpret_cast<const char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing dataset " + path.string());
}

inline EpochDataset LoadDataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open dataset " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::kParse, path.string() + " is not a dataset file", 0);
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const nlohmann::json header = nlohmann::json::parse(text);
  std::vector<Epoch> epochs;
  for (const auto& m : header.at("epochs")) {
    Epoch e;
    e.id = m.at(0).get<std::uint64_t>();
    e.subject_id = m.at(1).get<std::string>();
    e.stage = static_cast<SleepStage>(m.at(2).get<int>());
    e.n_channels = m.at(3).get<int>();
    e.n_samples = m.at(4).get<int>();
    e.data.resize(static_cast<std::size_t>(e.n_channels) * e.n_samples);
    in.read(reinterpret_cast<char*>(e.data.data()),
            static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::kParse, "truncated dataset " + path.string());
    epochs.push_back(std::move(e));
  }
  EpochDataset ds(std::move(epochs), header.at("subject_index").get<std::map<std::string, int>>(),
                  header.at("sampling_rate_hz").get<double>(), header.value("split", ""));
  for (const auto& w : header.value("warnings", std::vector<std::string>{})) ds.AddWarning(w);
  return ds;
}

}  // namespace eeganon
