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

#include "eeganon/signal_io.hpp"

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace eeganon {
namespace {

std::filesystem::path TempPath(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "eeganon_signal_io_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string Pad(const std::string& s, std::size_t w) {
  std::string out = s.substr(0, w);
  out.resize(w, ' ');
  return out;
}

struct SignalSpec {
  std::string label = "EEG Fpz-Cz";
  std::string phys_min = "-200";
  std::string phys_max = "200";
  std::string dig_min = "-2048";
  std::string dig_max = "2047";
  int samples_per_record = 100;
};

// Builds an EDF byte image field by field, independently of WriteEdf.
std::string BuildEdf(const std::vector<SignalSpec>& signals, int n_records,
                     const std::vector<std::vector<std::int16_t>>& words) {
  const std::size_t ns = signals.size();
  std::string h = Pad("0", 8) + Pad("subj01", 80) + Pad("Startdate X X X X", 80) +
                  Pad("01.01.00", 8) + Pad("00.00.00", 8) + Pad(std::to_string(256 * (ns + 1)), 8) +
                  Pad("", 44) + Pad(std::to_string(n_records), 8) + Pad("1", 8) +
                  Pad(std::to_string(ns), 4);
  for (const auto& s : signals) h += Pad(s.label, 16);
  for (std::size_t i = 0; i < ns; ++i) h += Pad("", 80);
  for (std::size_t i = 0; i < ns; ++i) h += Pad("uV", 8);
  for (const auto& s : signals) h += Pad(s.phys_min, 8);
  for (const auto& s : signals) h += Pad(s.phys_max, 8);
  for (const auto& s : signals) h += Pad(s.dig_min, 8);
  for (const auto& s : signals) h += Pad(s.dig_max, 8);
  for (std::size_t i = 0; i < ns; ++i) h += Pad("", 80);
  for (const auto& s : signals) h += Pad(std::to_string(s.samples_per_record), 8);
  for (std::size_t i = 0; i < ns; ++i) h += Pad("", 32);
  for (int r = 0; r < n_records; ++r)
    for (std::size_t c = 0; c < ns; ++c)
      for (int j = 0; j < signals[c].samples_per_record; ++j) {
        const auto w = static_cast<std::uint16_t>(words[c][r * signals[c].samples_per_record + j]);
        h.push_back(static_cast<char>(w & 0xff));
        h.push_back(static_cast<char>(w >> 8));
      }
  return h;
}

void WriteBytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

TEST(ReadEdfTest, ScalingMatchesReferenceReader) {
  // Reference values were produced by pyedflib reading the same byte image.
  std::vector<std::int16_t> words(100, 0);
  words[1] = -2048;
  words[2] = 2047;
  words[3] = 1;
  words[4] = -1;
  words[5] = 1000;
  const auto path = TempPath("ref.edf");
  WriteBytes(path, BuildEdf({SignalSpec{}}, 1, {words}));
  const Recording rec = ReadEdf(path);
  ASSERT_EQ(rec.samples.size(), 1u);
  const std::vector<double> reference = {0.048840048840, -200.0, 200.0,
                                         0.146520146520, -0.048840048840, 97.728937728938};
  for (std::size_t i = 0; i < reference.size(); ++i) {
    EXPECT_NEAR(rec.samples[0][i], reference[i], 1e-5) << "sample " << i;
  }
  EXPECT_EQ(rec.samples[0][1], -200.0);
  EXPECT_EQ(rec.subject_id, "subj01");
  EXPECT_EQ(rec.sampling_rate_hz, 100.0);
}

TEST(ReadEdfTest, TwoChannelsSixtySeconds) {
  SignalSpec a, b;
  b.label = "EEG Pz-Oz";
  std::vector<std::vector<std::int16_t>> words(2, std::vector<std::int16_t>(6000, 7));
  const auto path = TempPath("two.edf");
  WriteBytes(path, BuildEdf({a, b}, 60, words));
  const Recording rec = ReadEdf(path);
  ASSERT_EQ(rec.samples.size(), 2u);
  EXPECT_EQ(rec.samples[0].size(), 6000u);
  EXPECT_EQ(rec.samples[1].size(), 6000u);
  EXPECT_EQ(rec.duration_s, 60.0);
  EXPECT_EQ(rec.channel_labels[1], "EEG Pz-Oz");
}

TEST(ReadEdfTest, AllowlistKeepsMatchingChannels) {
  SignalSpec a, b, c;
  b.label = "EEG Pz-Oz";
  c.label = "EOG horizontal";
  c.samples_per_record = 50;
  std::vector<std::vector<std::int16_t>> words = {std::vector<std::int16_t>(200, 1),
                                                  std::vector<std::int16_t>(200, 2),
                                                  std::vector<std::int16_t>(100, 3)};
  const auto path = TempPath("allow.edf");
  WriteBytes(path, BuildEdf({a, b, c}, 2, words));
  EdfReadOptions opts;
  opts.channel_allowlist = {"EEG Fpz-Cz", "EEG Pz-Oz"};
  const Recording rec = ReadEdf(path, opts);
  EXPECT_EQ(rec.channel_labels, (std::vector<std::string>{"EEG Fpz-Cz", "EEG Pz-Oz"}));
  try {
    ReadEdf(path);
    FAIL() << "mixed rates accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedFormat);
  }
}

TEST(ReadEdfTest, InvalidCalibration) {
  SignalSpec s;
  s.dig_min = "100";
  s.dig_max = "100";
  const auto path = TempPath("badcal.edf");
  WriteBytes(path, BuildEdf({s}, 1, {std::vector<std::int16_t>(100, 0)}));
  try {
    ReadEdf(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidCalibration);
  }
}

TEST(ReadEdfTest, MalformedHeaderReportsByteOffset) {
  SignalSpec s;
  s.phys_max = "2x0";
  const auto path = TempPath("badnum.edf");
  WriteBytes(path, BuildEdf({s}, 1, {std::vector<std::int16_t>(100, 0)}));
  try {
    ReadEdf(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    ASSERT_TRUE(e.location().has_value());
    // Physical maximum of signal 0 sits after 256 + 16 + 80 + 8 + 8 bytes.
    EXPECT_EQ(*e.location(), 256 + 112);
  }
  WriteBytes(path, std::string(100, ' '));
  EXPECT_THROW(ReadEdf(path), Error);
}

TEST(WriteEdfTest, DigitalWordsRoundTripBitExact) {
  std::vector<std::int16_t> words(300);
  for (int i = 0; i < 300; ++i) words[i] = static_cast<std::int16_t>((i * 37) % 4096 - 2048);
  const auto path = TempPath("rt_in.edf");
  WriteBytes(path, BuildEdf({SignalSpec{}}, 3, {words}));
  const Recording rec = ReadEdf(path);
  const auto out = TempPath("rt_out.edf");
  WriteEdf(rec, out);
  const Recording again = ReadEdf(out);
  EXPECT_EQ(DigitizeRecording(again)[0], words);
  EXPECT_EQ(again.samples, rec.samples);
}

TEST(WriteEdfTest, RejectsEmptyAndUnrepresentable) {
  Recording empty;
  EXPECT_THROW(WriteEdf(empty, TempPath("empty.edf")), Error);

  Recording rec;
  rec.subject_id = "s";
  rec.channel_labels = {"EEG"};
  rec.samples = {std::vector<double>(100, 500.0)};
  rec.duration_s = 1.0;
  rec.calibration = {ChannelCalibration{}};
  try {
    WriteEdf(rec, TempPath("range.edf"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRange);
  }
}

TEST(WriteEdfTest, FittedCalibrationErrorWithinQuantizationStep) {
  Recording rec;
  rec.subject_id = "s";
  rec.channel_labels = {"A", "B"};
  rec.duration_s = 30.0;
  rec.samples.resize(2);
  for (int i = 0; i < 3000; ++i) {
    rec.samples[0].push_back(35.3 * std::sin(0.013 * ((i * i) % 97)));
    rec.samples[1].push_back(-12.1 + 0.01 * i);
  }
  const auto path = TempPath("fit.edf");
  WriteEdf(rec, path);
  const Recording back = ReadEdf(path);
  for (int c = 0; c < 2; ++c) {
    const ChannelCalibration& cal = back.calibration[c];
    const double step = (cal.physical_max - cal.physical_min) / 4095.0;
    for (int i = 0; i < 3000; ++i) {
      EXPECT_LE(std::abs(back.samples[c][i] - rec.samples[c][i]), step);
    }
  }
}

TEST(HypnogramTest, ParsesRows) {
  std::istringstream in("onset_s,duration_s,stage\n0,1800,W\n1800,30,S4\n");
  const auto hyp = ParseHypnogram(in);
  ASSERT_EQ(hyp.size(), 2u);
  EXPECT_EQ(hyp[0], (HypnogramEntry{0, 1800, RawStage::kW}));
  EXPECT_EQ(hyp[1].raw_stage, RawStage::kS4);
}

TEST(HypnogramTest, RejectsDisorderOverlapAndUnknownTokens) {
  std::istringstream disorder("60,30,W\n0,30,W\n");
  EXPECT_THROW(ParseHypnogram(disorder), Error);
  std::istringstream overlap("0,60,W\n30,30,S1\n");
  try {
    ParseHypnogram(overlap);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
  }
  std::istringstream unknown("0,30,N5\n");
  try {
    ParseHypnogram(unknown);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("N5"), std::string::npos);
  }
}

TEST(HypnogramTest, FileRoundTrip) {
  const std::vector<HypnogramEntry> hyp = {{0, 30, RawStage::kW}, {30, 90, RawStage::kS2},
                                           {120, 30, RawStage::kMovement}};
  const auto path = TempPath("hyp.csv");
  WriteHypnogram(hyp, path);
  EXPECT_EQ(ReadHypnogram(path), hyp);
}

TEST(MapStageTest, MergesAndDrops) {
  EXPECT_EQ(MapStage(RawStage::kS4), SleepStage::kN3);
  EXPECT_EQ(MapStage(RawStage::kS3), SleepStage::kN3);
  EXPECT_EQ(MapStage(RawStage::kW), SleepStage::kW);
  EXPECT_EQ(MapStage(RawStage::kS1), SleepStage::kN1);
  EXPECT_EQ(MapStage(RawStage::kS2), SleepStage::kN2);
  EXPECT_EQ(MapStage(RawStage::kREM), SleepStage::kREM);
  EXPECT_FALSE(MapStage(RawStage::kMovement).has_value());
  EXPECT_FALSE(MapStage(RawStage::kUnknown).has_value());
}

TEST(MapStageTest, SurjectiveOntoAasmStages) {
  std::set<SleepStage> image;
  for (int r = 0; r <= static_cast<int>(RawStage::kUnknown); ++r) {
    if (const auto s = MapStage(static_cast<RawStage>(r))) image.insert(*s);
  }
  EXPECT_EQ(image.size(), static_cast<std::size_t>(kNumStages));
}

Recording FlatRecording(double duration_s, double fs = 1.0) {
  Recording rec;
  rec.subject_id = "s";
  rec.sampling_rate_hz = fs;
  rec.channel_labels = {"A", "B"};
  const auto n = static_cast<std::size_t>(duration_s * fs);
  rec.samples = {std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    rec.samples[0][i] = static_cast<double>(i);
    rec.samples[1][i] = -static_cast<double>(i);
  }
  rec.duration_s = duration_s;
  return rec;
}

TEST(SleepPeriodTest, PadsThirtyMinutesEachSide) {
  const std::vector<HypnogramEntry> hyp = {{0, 3600, RawStage::kW},
                                           {3600, 26400, RawStage::kS2},
                                           {30000, 6000, RawStage::kW}};
  const Recording rec = FlatRecording(36000);
  const auto [start, end] = SleepWindow(rec, hyp);
  EXPECT_EQ(start, 1800.0);
  EXPECT_EQ(end, 31800.0);
  const Recording cut = ExtractSleepPeriod(rec, hyp);
  EXPECT_EQ(cut.duration_s, 30000.0);
  EXPECT_EQ(cut.samples[0].front(), 1800.0);
  EXPECT_EQ(cut.start_offset_s, 1800.0);
}

TEST(SleepPeriodTest, ClipsToRecordingBounds) {
  const std::vector<HypnogramEntry> hyp = {{0, 600, RawStage::kW}, {600, 3000, RawStage::kS1},
                                           {3600, 600, RawStage::kW}};
  const Recording rec = FlatRecording(4200);
  const auto [start, end] = SleepWindow(rec, hyp);
  EXPECT_EQ(start, 0.0);
  EXPECT_EQ(end, 4200.0);
}

TEST(SleepPeriodTest, AllWakeIsEmptySleep) {
  const std::vector<HypnogramEntry> hyp = {{0, 3600, RawStage::kW}};
  try {
    ExtractSleepPeriod(FlatRecording(3600), hyp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptySleep);
  }
}

TEST(SleepPeriodTest, RequireN1Flag) {
  const std::vector<HypnogramEntry> hyp = {{0, 3600, RawStage::kW},
                                           {3600, 1800, RawStage::kS2},
                                           {5400, 600, RawStage::kS1},
                                           {6000, 6000, RawStage::kW}};
  const Recording rec = FlatRecording(12000);
  EXPECT_EQ(SleepWindow(rec, hyp).first, 1800.0);
  SleepPeriodOptions opts;
  opts.require_n1_onset = true;
  EXPECT_EQ(SleepWindow(rec, hyp, opts).first, 3600.0);
}

TEST(EpochizeTest, CountsAndLabels) {
  const Recording rec = FlatRecording(300, 100.0);
  const auto epochs = Epochize(rec, {{0, 300, RawStage::kW}});
  ASSERT_EQ(epochs.size(), 10u);
  for (const Epoch& e : epochs) {
    EXPECT_EQ(e.stage, SleepStage::kW);
    EXPECT_EQ(e.data.size(), 6000u);
    EXPECT_TRUE(e.AllFinite());
  }
  EXPECT_EQ(epochs[1].data[0], 3000.0f);
  EXPECT_EQ(epochs[1].data[3000], -3000.0f);
}

TEST(EpochizeTest, DropsTrailingPartialWindow) {
  const Recording rec = FlatRecording(299, 100.0);
  EXPECT_EQ(Epochize(rec, {{0, 299, RawStage::kW}}).size(), 9u);
}

TEST(EpochizeTest, OmitsWindowsTouchingMovement) {
  const Recording rec = FlatRecording(120, 100.0);
  const std::vector<HypnogramEntry> hyp = {
      {0, 40, RawStage::kS2}, {40, 10, RawStage::kMovement}, {50, 70, RawStage::kS3}};
  const auto epochs = Epochize(rec, hyp);
  // Windows [0,30) N2, [30,60) dropped, [60,90) and [90,120) N3.
  ASSERT_EQ(epochs.size(), 3u);
  EXPECT_EQ(epochs[0].stage, SleepStage::kN2);
  EXPECT_EQ(epochs[1].stage, SleepStage::kN3);
  EXPECT_EQ(epochs[2].stage, SleepStage::kN3);
  EXPECT_EQ(epochs[1].data[0], 6000.0f);
}

EpochDataset StrataDataset(const std::vector<std::pair<std::string, int>>& strata) {
  std::vector<Epoch> epochs;
  std::uint64_t id = 0;
  for (const auto& [subject, count] : strata)
    for (int i = 0; i < count; ++i) {
      Epoch e;
      e.id = id++;
      e.subject_id = subject;
      e.stage = static_cast<SleepStage>(i % 2 == 0 ? 0 : 2);
      e.n_samples = 4;
      e.data.assign(8, static_cast<float>(e.id));
      epochs.push_back(e);
    }
  return EpochDataset(std::move(epochs));
}

TEST(StratifiedSplitTest, EightyPercentOfTen) {
  std::vector<Epoch> epochs;
  for (int i = 0; i < 10; ++i) {
    Epoch e;
    e.id = i;
    e.subject_id = "a";
    e.n_samples = 4;
    e.data.assign(8, 0.f);
    epochs.push_back(e);
  }
  const auto split = StratifiedSplit(EpochDataset(std::move(epochs)), 0.8, 3);
  EXPECT_EQ(split.train.size(), 8u);
  EXPECT_EQ(split.test.size(), 2u);
}

TEST(StratifiedSplitTest, HalfOfTwoAndSingletonWarning) {
  // Subject "a": strata W x1 and N2 x1 (singletons); subject "b": W x2, N2 x2.
  const auto ds = StrataDataset({{"a", 2}, {"b", 4}});
  const auto split = StratifiedSplit(ds, 0.5, 11);
  EXPECT_EQ(split.train.size(), 4u);
  EXPECT_EQ(split.test.size(), 2u);
  EXPECT_EQ(split.warnings.size(), 2u);
  EXPECT_EQ(split.train.n_subjects(), 2);
}

TEST(StratifiedSplitTest, PartitionIsDeterministicAndDisjoint) {
  const auto ds = StrataDataset({{"a", 17}, {"b", 23}, {"c", 9}});
  const auto s1 = StratifiedSplit(ds, 0.8, 42);
  const auto s2 = StratifiedSplit(ds, 0.8, 42);
  std::vector<std::uint64_t> ids1, ids2, all;
  for (const auto& e : s1.train.epochs()) ids1.push_back(e.id);
  for (const auto& e : s2.train.epochs()) ids2.push_back(e.id);
  EXPECT_EQ(ids1, ids2);
  for (const auto& e : s1.train.epochs()) all.push_back(e.id);
  for (const auto& e : s1.test.epochs()) all.push_back(e.id);
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_THROW(StratifiedSplit(ds, 1.0, 1), Error);
}

TEST(StratifiedSplitTest, PerStratumProportionWithinOneEpoch) {
  const auto ds = StrataDataset({{"a", 13}, {"b", 7}, {"c", 30}});
  const auto split = StratifiedSplit(ds, 0.8, 5);
  std::map<std::pair<std::string, int>, std::pair<int, int>> counts;
  for (const auto& e : split.train.epochs()) counts[{e.subject_id, static_cast<int>(e.stage)}].first++;
  for (const auto& e : split.test.epochs()) counts[{e.subject_id, static_cast<int>(e.stage)}].second++;
  for (const auto& [key, c] : counts) {
    const double n = c.first + c.second;
    EXPECT_LE(std::abs(c.first - 0.8 * n), 1.0) << key.first;
  }
}

}  // namespace
}  // namespace eeganon
