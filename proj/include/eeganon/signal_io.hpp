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

// EDF recordings, hypnogram CSVs, stage mapping, sleep-period extraction,
// epoching and the stratified train/test split.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "eeganon/dataset.hpp"
#include "eeganon/errors.hpp"
#include "eeganon/random.hpp"

namespace eeganon {

// Per-channel linear digital <-> physical calibration.
struct ChannelCalibration {
  double physical_min = -200.0;
  double physical_max = 200.0;
  int digital_min = -2048;
  int digital_max = 2047;
  std::string physical_dimension = "uV";
  std::string transducer;
  std::string prefiltering;

  double Gain() const {
    return (physical_max - physical_min) / static_cast<double>(digital_max - digital_min);
  }
  double ToPhysical(int digital) const {
    return static_cast<double>(digital - digital_min) * Gain() + physical_min;
  }
  // Nearest digital word; nullopt when outside the digital range.
  std::optional<int> ToDigital(double physical) const {
    const double d = std::round((physical - physical_min) / Gain() + digital_min);
    if (!(d >= digital_min && d <= digital_max)) return std::nullopt;
    return static_cast<int>(d);
  }
};

struct Recording {
  std::string subject_id;
  double sampling_rate_hz = 100.0;
  std::vector<std::string> channel_labels;
  std::vector<std::vector<double>> samples;  // per channel, physical units
  double duration_s = 0.0;
  // Position of sample 0 on the hypnogram timeline.
  double start_offset_s = 0.0;
  // Empty, or one entry per channel. Preserved by ReadEdf for round trips.
  std::vector<ChannelCalibration> calibration;

  std::size_t SampleCount() const { return samples.empty() ? 0 : samples.front().size(); }

  void Validate() const {
    if (!(sampling_rate_hz > 0)) throw Error(ErrorCode::kValidation, "sampling rate must be positive");
    if (channel_labels.size() != samples.size()) {
      throw Error(ErrorCode::kValidation, "channel label count does not match channel count");
    }
    for (const auto& ch : samples) {
      if (ch.size() != SampleCount()) {
        throw Error(ErrorCode::kValidation, "channels have unequal sample counts");
      }
    }
    const double expected = duration_s * sampling_rate_hz;
    if (std::abs(expected - static_cast<double>(SampleCount())) > 1e-6) {
      throw Error(ErrorCode::kValidation, "sample count " + std::to_string(SampleCount()) +
                                              " != duration x rate " + std::to_string(expected));
    }
    if (!calibration.empty() && calibration.size() != samples.size()) {
      throw Error(ErrorCode::kValidation, "calibration count does not match channel count");
    }
  }
};

namespace edf_internal {

inline std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::string Text(std::size_t offset, std::size_t width) const {
    if (offset + width > bytes_.size()) {
      throw Error(ErrorCode::kParse, "header truncated", static_cast<std::int64_t>(offset));
    }
    for (std::size_t i = offset; i < offset + width; ++i) {
      const auto c = static_cast<unsigned char>(bytes_[i]);
      if (c < 32 || c > 126) {
        throw Error(ErrorCode::kParse, "non-ASCII header byte", static_cast<std::int64_t>(i));
      }
    }
    return Trim(std::string_view(bytes_).substr(offset, width));
  }

  double Number(std::size_t offset, std::size_t width, const char* field) const {
    const std::string t = Text(offset, width);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw Error(ErrorCode::kParse,
                  std::string("bad numeric field '") + field + "' = \"" + t + "\"",
                  static_cast<std::int64_t>(offset));
    }
    return v;
  }

  long long Integer(std::size_t offset, std::size_t width, const char* field) const {
    const std::string t = Text(offset, width);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw Error(ErrorCode::kParse,
                  std::string("bad integer field '") + field + "' = \"" + t + "\"",
                  static_cast<std::int64_t>(offset));
    }
    return v;
  }

 private:
  const std::string& bytes_;
};

// Shortest decimal text for `v` that fits `width` characters.
inline std::string FitNumber(double v, std::size_t width) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  if (s.size() <= width) return s;
  for (int prec = static_cast<int>(width); prec > 0; --prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strlen(buf) <= width) return buf;
  }
  throw Error(ErrorCode::kRange, "value " + std::to_string(v) + " does not fit an EDF field");
}

inline void Field(std::string& out, std::string_view text, std::size_t width) {
  std::string f(text.substr(0, width));
  f.resize(width, ' ');
  out += f;
}

}  // namespace edf_internal

struct EdfReadOptions {
  // Labels to keep, compared after trimming. Empty keeps every signal.
  std::vector<std::string> channel_allowlist;
};

// Reads a continuous EDF file (16-bit little-endian samples).
inline Recording ReadEdf(const std::filesystem::path& path, const EdfReadOptions& options = {}) {
  using edf_internal::HeaderReader;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 256) throw Error(ErrorCode::kParse, "file shorter than EDF preamble", 0);
  const HeaderReader hdr(bytes);

  const std::string patient = hdr.Text(8, 80);
  const long long header_bytes = hdr.Integer(184, 8, "header bytes");
  long long n_records = hdr.Integer(236, 8, "number of data records");
  const double record_s = hdr.Number(244, 8, "data record duration");
  const long long ns = hdr.Integer(252, 4, "number of signals");
  if (ns < 1) throw Error(ErrorCode::kParse, "file declares no signals", 252);
  if (header_bytes != 256 * (ns + 1)) {
    throw Error(ErrorCode::kParse, "header byte count inconsistent with signal count", 184);
  }
  if (!(record_s > 0)) throw Error(ErrorCode::kParse, "non-positive record duration", 244);
  const auto n = static_cast<std::size_t>(ns);
  auto field_offset = [n](std::size_t field_start, std::size_t width, std::size_t i) {
    return 256 + field_start * n + i * width;
  };
  // Per-signal field starts, in units of n bytes.
  constexpr std::size_t kLabel = 0, kTransducer = 16, kDimension = 96, kPhysMin = 104,
                        kPhysMax = 112, kDigMin = 120, kDigMax = 128, kPrefilter = 136,
                        kSamples = 216;

  struct SignalInfo {
    std::string label;
    ChannelCalibration cal;
    long long samples_per_record;
  };
  std::vector<SignalInfo> signals(n);
  long long record_words = 0;
  for (std::size_t i = 0; i < n; ++i) {
    SignalInfo& s = signals[i];
    s.label = hdr.Text(field_offset(kLabel, 16, i), 16);
    s.cal.transducer = hdr.Text(field_offset(kTransducer, 80, i), 80);
    s.cal.physical_dimension = hdr.Text(field_offset(kDimension, 8, i), 8);
    s.cal.physical_min = hdr.Number(field_offset(kPhysMin, 8, i), 8, "physical minimum");
    s.cal.physical_max = hdr.Number(field_offset(kPhysMax, 8, i), 8, "physical maximum");
    s.cal.digital_min =
        static_cast<int>(hdr.Integer(field_offset(kDigMin, 8, i), 8, "digital minimum"));
    s.cal.digital_max =
        static_cast<int>(hdr.Integer(field_offset(kDigMax, 8, i), 8, "digital maximum"));
    s.cal.prefiltering = hdr.Text(field_offset(kPrefilter, 80, i), 80);
    s.samples_per_record = hdr.Integer(field_offset(kSamples, 8, i), 8, "samples per record");
    if (s.samples_per_record < 1) {
      throw Error(ErrorCode::kParse, "non-positive samples per record",
                  static_cast<std::int64_t>(field_offset(kSamples, 8, i)));
    }
    record_words += s.samples_per_record;
  }

  const auto data_bytes = static_cast<long long>(bytes.size()) - header_bytes;
  const long long record_bytes = 2 * record_words;
  if (n_records < 0) n_records = data_bytes / record_bytes;  // -1: unknown count
  if (data_bytes < n_records * record_bytes) {
    throw Error(ErrorCode::kParse, "data section shorter than declared record count",
                static_cast<std::int64_t>(bytes.size()));
  }

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& allow = options.channel_allowlist;
    if (allow.empty() || std::find(allow.begin(), allow.end(), signals[i].label) != allow.end()) {
      keep.push_back(i);
    }
  }
  if (keep.empty()) throw Error(ErrorCode::kUnsupportedFormat, "no signal matches the channel allowlist");
  for (const std::size_t i : keep) {
    if (signals[i].samples_per_record != signals[keep.front()].samples_per_record) {
      throw Error(ErrorCode::kUnsupportedFormat,
                  "retained signals have mixed sampling rates ('" + signals[keep.front()].label +
                      "' vs '" + signals[i].label + "')");
    }
    if (signals[i].cal.digital_max <= signals[i].cal.digital_min) {
      throw Error(ErrorCode::kInvalidCalibration,
                  "digital maximum <= digital minimum for '" + signals[i].label + "'");
    }
  }

  Recording rec;
  rec.subject_id = patient;
  const long long spr = signals[keep.front()].samples_per_record;
  rec.sampling_rate_hz = static_cast<double>(spr) / record_s;
  rec.duration_s = static_cast<double>(n_records) * record_s;
  for (const std::size_t i : keep) {
    rec.channel_labels.push_back(signals[i].label);
    rec.calibration.push_back(signals[i].cal);
    rec.samples.emplace_back();
    rec.samples.back().reserve(static_cast<std::size_t>(n_records * spr));
  }
  std::vector<long long> word_offset(n, 0);
  for (std::size_t i = 1; i < n; ++i) word_offset[i] = word_offset[i - 1] + signals[i - 1].samples_per_record;
  for (long long r = 0; r < n_records; ++r) {
    const std::size_t record_start = static_cast<std::size_t>(header_bytes + r * record_bytes);
    for (std::size_t k = 0; k < keep.size(); ++k) {
      const std::size_t i = keep[k];
      const ChannelCalibration& cal = signals[i].cal;
      const std::size_t base = record_start + 2 * static_cast<std::size_t>(word_offset[i]);
      for (long long j = 0; j < spr; ++j) {
        const auto lo = static_cast<unsigned char>(bytes[base + 2 * j]);
        const auto hi = static_cast<unsigned char>(bytes[base + 2 * j + 1]);
        const auto word = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        rec.samples[k].push_back(cal.ToPhysical(word));
      }
    }
  }
  rec.Validate();
  return rec;
}

// Digital words of each channel as they would be written, for
// round-trip checks.
inline std::vector<std::vector<std::int16_t>> DigitizeRecording(const Recording& rec) {
  std::vector<std::vector<std::int16_t>> out;
  for (std::size_t c = 0; c < rec.samples.size(); ++c) {
    const ChannelCalibration& cal = rec.calibration.at(c);
    out.emplace_back();
    out.back().reserve(rec.samples[c].size());
    for (std::size_t j = 0; j < rec.samples[c].size(); ++j) {
      const auto d = cal.ToDigital(rec.samples[c][j]);
      if (!d) {
        throw Error(ErrorCode::kRange, "sample " + std::to_string(j) + " of '" +
                                           rec.channel_labels[c] + "' (" +
                                           std::to_string(rec.samples[c][j]) +
                                           ") is outside the channel calibration");
      }
      out.back().push_back(static_cast<std::int16_t>(*d));
    }
  }
  return out;
}

// Calibration covering [lo, hi] with header-representable endpoints.
inline ChannelCalibration FitCalibration(double lo, double hi, int digital_min = -2048,
                                         int digital_max = 2047) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  ChannelCalibration cal;
  cal.digital_min = digital_min;
  cal.digital_max = digital_max;
  // Round outward to a grid coarse enough for 8-character fields.
  const double mag = std::max(std::abs(lo), std::abs(hi));
  const double step = std::pow(10.0, std::floor(std::log10(mag)) - 3);
  cal.physical_min = std::floor(lo / step) * step;
  cal.physical_max = std::ceil(hi / step) * step;
  cal.physical_min = std::stod(edf_internal::FitNumber(cal.physical_min, 8));
  cal.physical_max = std::stod(edf_internal::FitNumber(cal.physical_max, 8));
  if (cal.physical_min > lo) cal.physical_min -= step;
  if (cal.physical_max < hi) cal.physical_max += step;
  cal.physical_min = std::stod(edf_internal::FitNumber(cal.physical_min, 8));
  cal.physical_max = std::stod(edf_internal::FitNumber(cal.physical_max, 8));
  return cal;
}

// Writes a continuous EDF file. Channels without calibration get a 12-bit
// calibration fitted to their range.
inline void WriteEdf(const Recording& input, const std::filesystem::path& path) {
  using edf_internal::Field;
  using edf_internal::FitNumber;
  if (input.samples.empty()) throw Error(ErrorCode::kValidation, "recording has no channels");
  input.Validate();
  Recording rec = input;
  if (rec.calibration.empty()) {
    for (const auto& ch : rec.samples) {
      const auto [mn, mx] = std::minmax_element(ch.begin(), ch.end());
      rec.calibration.push_back(ch.empty() ? ChannelCalibration{} : FitCalibration(*mn, *mx));
    }
  }
  const auto words = DigitizeRecording(rec);

  const std::size_t total = rec.SampleCount();
  const double rate = rec.sampling_rate_hz;
  std::size_t spr = total;
  double record_s = rec.duration_s;
  if (std::abs(rate - std::round(rate)) < 1e-9 && std::round(rate) >= 1 &&
      total % static_cast<std::size_t>(std::round(rate)) == 0) {
    spr = static_cast<std::size_t>(std::round(rate));
    record_s = 1.0;
  }
  const std::size_t n_records = spr == 0 ? 0 : total / spr;
  const std::size_t ns = rec.samples.size();

  std::string h;
  Field(h, "0", 8);
  Field(h, rec.subject_id.empty() ? "X" : rec.subject_id, 80);
  Field(h, "Startdate X X X X", 80);
  Field(h, "01.01.00", 8);
  Field(h, "00.00.00", 8);
  Field(h, std::to_string(256 * (ns + 1)), 8);
  Field(h, "", 44);
  Field(h, std::to_string(n_records), 8);
  Field(h, FitNumber(record_s, 8), 8);
  Field(h, std::to_string(ns), 4);
  for (std::size_t i = 0; i < ns; ++i) Field(h, rec.channel_labels[i], 16);
  for (std::size_t i = 0; i < ns; ++i) Field(h, rec.calibration[i].transducer, 80);
  for (std::size_t i = 0; i < ns; ++i) Field(h, rec.calibration[i].physical_dimension, 8);
  for (std::size_t i = 0; i < ns; ++i) Field(h, FitNumber(rec.calibration[i].physical_min, 8), 8);
  for (std::size_t i = 0; i < ns; ++i) Field(h, FitNumber(rec.calibration[i].physical_max, 8), 8);
  for (std::size_t i = 0; i < ns; ++i) Field(h, std::to_string(rec.calibration[i].digital_min), 8);
  for (std::size_t i = 0; i < ns; ++i) Field(h, std::to_string(rec.calibration[i].digital_max), 8);
  for (std::size_t i = 0; i < ns; ++i) Field(h, rec.calibration[i].prefiltering, 80);
  for (std::size_t i = 0; i < ns; ++i) Field(h, std::to_string(spr), 8);
  for (std::size_t i = 0; i < ns; ++i) Field(h, "", 32);

  std::string data;
  data.reserve(2 * total * ns);
  for (std::size_t r = 0; r < n_records; ++r)
    for (std::size_t c = 0; c < ns; ++c)
      for (std::size_t j = 0; j < spr; ++j) {
        const auto w = static_cast<std::uint16_t>(words[c][r * spr + j]);
        data.push_back(static_cast<char>(w & 0xff));
        data.push_back(static_cast<char>(w >> 8));
      }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

// Rechtschaffen & Kales vocabulary as found in the source annotations.
enum class RawStage { kW, kS1, kS2, kS3, kS4, kREM, kMovement, kUnknown };

inline std::string_view RawStageName(RawStage s) {
  switch (s) {
    case RawStage::kW: return "W";
    case RawStage::kS1: return "S1";
    case RawStage::kS2: return "S2";
    case RawStage::kS3: return "S3";
    case RawStage::kS4: return "S4";
    case RawStage::kREM: return "REM";
    case RawStage::kMovement: return "MOVEMENT";
    case RawStage::kUnknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

inline std::optional<RawStage> ParseRawStage(std::string_view token) {
  for (const RawStage s : {RawStage::kW, RawStage::kS1, RawStage::kS2, RawStage::kS3,
                           RawStage::kS4, RawStage::kREM, RawStage::kMovement, RawStage::kUnknown}) {
    if (RawStageName(s) == token) return s;
  }
  return std::nullopt;
}

// R&K -> AASM. Stages 3 and 4 merge into N3; movement and unscored
// segments have no AASM class and are dropped (nullopt).
inline std::optional<SleepStage> MapStage(RawStage raw) {
  switch (raw) {
    case RawStage::kW: return SleepStage::kW;
    case RawStage::kS1: return SleepStage::kN1;
    case RawStage::kS2: return SleepStage::kN2;
    case RawStage::kS3:
    case RawStage::kS4: return SleepStage::kN3;
    case RawStage::kREM: return SleepStage::kREM;
    case RawStage::kMovement:
    case RawStage::kUnknown: return std::nullopt;
  }
  return std::nullopt;
}

inline RawStage ToRawStage(SleepStage s) {
  switch (s) {
    case SleepStage::kW: return RawStage::kW;
    case SleepStage::kN1: return RawStage::kS1;
    case SleepStage::kN2: return RawStage::kS2;
    case SleepStage::kN3: return RawStage::kS3;
    case SleepStage::kREM: return RawStage::kREM;
  }
  return RawStage::kUnknown;
}

struct HypnogramEntry {
  double onset_s = 0.0;
  double duration_s = 0.0;
  RawStage raw_stage = RawStage::kUnknown;

  double end_s() const { return onset_s + duration_s; }
  friend bool operator==(const HypnogramEntry&, const HypnogramEntry&) = default;
};

inline void ValidateHypnogram(const std::vector<HypnogramEntry>& entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const HypnogramEntry& e = entries[i];
    if (!(e.onset_s >= 0) || !(e.duration_s > 0)) {
      throw Error(ErrorCode::kValidation, "row " + std::to_string(i + 1) +
                                              ": onset must be >= 0 and duration > 0");
    }
    if (i > 0) {
      const HypnogramEntry& prev = entries[i - 1];
      if (e.onset_s < prev.onset_s) {
        throw Error(ErrorCode::kValidation, "row " + std::to_string(i + 1) + " is out of order");
      }
      if (e.onset_s < prev.end_s() - 1e-9) {
        throw Error(ErrorCode::kValidation, "row " + std::to_string(i + 1) +
                                                " overlaps the previous entry");
      }
    }
  }
}

// CSV rows "onset_s,duration_s,stage"; an optional header line is skipped.
inline std::vector<HypnogramEntry> ParseHypnogram(std::istream& in) {
  std::vector<HypnogramEntry> out;
  std::string line;
  std::size_t line_no = 0;
  auto number = [&line_no](const std::string& text, const char* what) {
    const std::string t = edf_internal::Trim(text);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": bad " + what + " \"" +
                                         t + "\"",
                  static_cast<std::int64_t>(line_no));
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = edf_internal::Trim(line);
    if (trimmed.empty()) continue;
    if (line_no == 1 && trimmed.rfind("onset", 0) == 0) continue;
    std::vector<std::string> cols;
    std::stringstream ss(trimmed);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 3) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected 3 columns",
                  static_cast<std::int64_t>(line_no));
    }
    const std::string token = edf_internal::Trim(cols[2]);
    const auto stage = ParseRawStage(token);
    if (!stage) {
      throw Error(ErrorCode::kParse,
                  "line " + std::to_string(line_no) + ": unknown stage token '" + token + "'",
                  static_cast<std::int64_t>(line_no));
    }
    out.push_back({number(cols[0], "onset"), number(cols[1], "duration"), *stage});
  }
  ValidateHypnogram(out);
  return out;
}

inline std::vector<HypnogramEntry> ReadHypnogram(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return ParseHypnogram(in);
}

inline void WriteHypnogram(const std::vector<HypnogramEntry>& entries,
                           const std::filesystem::path& path) {
  ValidateHypnogram(entries);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "onset_s,duration_s,stage\n";
  for (const auto& e : entries) {
    out << edf_internal::FitNumber(e.onset_s, 32) << ',' << edf_internal::FitNumber(e.duration_s, 32)
        << ',' << RawStageName(e.raw_stage) << '\n';
  }
}

struct SleepPeriodOptions {
  double padding_s = 1800.0;
  // Anchor the window on the first N1 entry instead of any sleep stage.
  bool require_n1_onset = false;
};

// Sleep-period window [start, end) in hypnogram time.
inline std::pair<double, double> SleepWindow(const Recording& rec,
                                             const std::vector<HypnogramEntry>& hyp,
                                             const SleepPeriodOptions& options = {}) {
  auto is_sleep = [](RawStage r) {
    const auto s = MapStage(r);
    return s && *s != SleepStage::kW;
  };
  std::optional<double> first, last;
  for (const HypnogramEntry& e : hyp) {
    if (!is_sleep(e.raw_stage)) continue;
    if (!first && (!options.require_n1_onset || MapStage(e.raw_stage) == SleepStage::kN1)) {
      first = e.onset_s;
    }
    last = e.end_s();
  }
  if (!first || !last) {
    throw Error(ErrorCode::kEmptySleep, options.require_n1_onset ? "hypnogram has no N1 entry"
                                                                 : "hypnogram has no sleep stage");
  }
  const double grid = hyp.front().onset_s;
  const double rec_start = rec.start_offset_s;
  const double rec_end = rec.start_offset_s + rec.duration_s;
  double start = grid + std::floor((*first - options.padding_s - grid) / kEpochSeconds) * kEpochSeconds;
  double end = grid + std::ceil((*last + options.padding_s - grid) / kEpochSeconds) * kEpochSeconds;
  start = std::max(start, rec_start);
  end = std::min(end, rec_end);
  return {start, end};
}

// Trims the recording to the padded sleep period.
inline Recording ExtractSleepPeriod(const Recording& rec, const std::vector<HypnogramEntry>& hyp,
                                    const SleepPeriodOptions& options = {}) {
  const auto [start, end] = SleepWindow(rec, hyp, options);
  const auto first = static_cast<std::size_t>(std::llround((start - rec.start_offset_s) * rec.sampling_rate_hz));
  const auto last = static_cast<std::size_t>(std::llround((end - rec.start_offset_s) * rec.sampling_rate_hz));
  Recording out = rec;
  for (auto& ch : out.samples) {
    ch = std::vector<double>(ch.begin() + static_cast<std::ptrdiff_t>(first),
                             ch.begin() + static_cast<std::ptrdiff_t>(last));
  }
  out.start_offset_s = start;
  out.duration_s = static_cast<double>(last - first) / rec.sampling_rate_hz;
  return out;
}

// Cuts consecutive 30 s windows aligned to the hypnogram grid. A window is
// labeled by the mapped stage covering most of it; windows touching a
// dropped stage or an unannotated gap, and the trailing partial window,
// are omitted.
inline std::vector<Epoch> Epochize(const Recording& rec, const std::vector<HypnogramEntry>& hyp,
                                   std::uint64_t first_id = 0) {
  std::vector<Epoch> out;
  if (hyp.empty() || rec.samples.empty()) return out;
  const double fs = rec.sampling_rate_hz;
  const double len_d = kEpochSeconds * fs;
  const auto len = static_cast<std::size_t>(std::llround(len_d));
  if (std::abs(len_d - static_cast<double>(len)) > 1e-9) {
    throw Error(ErrorCode::kUnsupportedFormat, "30 s is not a whole number of samples");
  }
  const double grid = hyp.front().onset_s;
  double t = grid + std::ceil((rec.start_offset_s - grid) / kEpochSeconds - 1e-9) * kEpochSeconds;
  const double rec_end = rec.start_offset_s + rec.duration_s;
  std::size_t h = 0;
  std::uint64_t id = first_id;
  for (; t + kEpochSeconds <= rec_end + 1e-9; t += kEpochSeconds) {
    const double w_end = t + kEpochSeconds;
    while (h < hyp.size() && hyp[h].end_s() <= t + 1e-9) ++h;
    std::array<double, kNumStages> cover{};
    double covered = 0;
    bool dropped = false;
    for (std::size_t k = h; k < hyp.size() && hyp[k].onset_s < w_end - 1e-9; ++k) {
      const double overlap = std::min(w_end, hyp[k].end_s()) - std::max(t, hyp[k].onset_s);
      if (overlap <= 1e-9) continue;
      const auto stage = MapStage(hyp[k].raw_stage);
      if (!stage) {
        dropped = true;
        break;
      }
      cover[static_cast<int>(*stage)] += overlap;
      covered += overlap;
    }
    if (dropped || covered < kEpochSeconds - 1e-6) continue;
    const auto best = static_cast<int>(std::max_element(cover.begin(), cover.end()) - cover.begin());
    Epoch e;
    e.id = id++;
    e.subject_id = rec.subject_id;
    e.stage = static_cast<SleepStage>(best);
    e.n_channels = static_cast<int>(rec.samples.size());
    e.n_samples = static_cast<int>(len);
    e.data.resize(e.n_channels * len);
    const auto first = static_cast<std::size_t>(std::llround((t - rec.start_offset_s) * fs));
    for (std::size_t c = 0; c < rec.samples.size(); ++c)
      for (std::size_t j = 0; j < len; ++j)
        e.data[c * len + j] = static_cast<float>(rec.samples[c][first + j]);
    if (!e.AllFinite()) continue;
    out.push_back(std::move(e));
  }
  return out;
}

struct SplitResult {
  EpochDataset train;
  EpochDataset test;
  std::vector<std::string> warnings;
};

// Splits each (subject, stage) stratum: floor(fraction * n) epochs to train,
// at least one when n >= 2; singleton strata go to train with a warning.
inline SplitResult StratifiedSplit(const EpochDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train_fraction must lie in (0, 1)");
  }
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    strata[{ds[i].subject_id, static_cast<int>(ds[i].stage)}].push_back(i);
  }
  std::vector<bool> to_train(ds.size(), false);
  std::vector<std::string> warnings;
  for (auto& [key, members] : strata) {
    const std::string label = key.first + "/" + std::string(StageName(static_cast<SleepStage>(key.second)));
    Rng rng(DeriveSeed(seed, label));
    rng.Shuffle(members.begin(), members.end());
    std::size_t n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(members.size())));
    if (members.size() == 1) {
      n_train = 1;
      warnings.push_back("stratum " + label + " has a single epoch; assigned to train");
    } else if (n_train == 0) {
      n_train = 1;
    }
    for (std::size_t k = 0; k < n_train; ++k) to_train[members[k]] = true;
  }
  std::vector<Epoch> train, test;
  for (std::size_t i = 0; i < ds.size(); ++i) (to_train[i] ? train : test).push_back(ds[i]);
  SplitResult result{EpochDataset(std::move(train), ds.subject_index(), ds.sampling_rate_hz(), "train"),
                     EpochDataset(std::move(test), ds.subject_index(), ds.sampling_rate_hz(), "test"),
                     warnings};
  for (const auto& w : warnings) result.train.AddWarning(w);
  return result;
}

}  // namespace eeganon
