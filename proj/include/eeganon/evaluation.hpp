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

// Classification metrics, report comparison tables, and the qualitative
// signal/PSD exports.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eeganon/dataset.hpp"
#include "eeganon/dsp.hpp"
#include "eeganon/errors.hpp"
#include "eeganon/tensor.hpp"
#include "json.hpp"

namespace eeganon {

struct EvalReport {
  std::vector<std::string> class_names;
  double accuracy = 0;
  std::vector<double> f1_per_class;
  std::vector<bool> zero_support;
  // confusion[true][predicted]
  std::vector<std::vector<long long>> confusion;
  double chance_level = 0;
  long long n_examples = 0;
  // Filled for re-identification reports, keyed by subject id.
  std::map<std::string, double> f1_per_subject;

  std::size_t n_classes() const { return class_names.size(); }

  double MacroF1() const {
    double s = 0;
    for (const double f : f1_per_class) s += f;
    return f1_per_class.empty() ? 0.0 : s / static_cast<double>(f1_per_class.size());
  }

  long long Support(std::size_t c) const {
    long long s = 0;
    for (const long long v : confusion[c]) s += v;
    return s;
  }
};

inline std::string FormatMetric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::vector<std::string> DefaultClassNames(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::to_string(i));
  return names;
}

inline std::vector<std::string> StageClassNames() {
  std::vector<std::string> names;
  for (const SleepStage s : kAllStages) names.emplace_back(StageName(s));
  return names;
}

// F1 = 2PR / (P + R), defined as 0 whenever precision or recall is
// undefined or both are 0.
inline double F1FromCounts(long long tp, long long fp, long long fn) {
  const long long denom = 2 * tp + fp + fn;
  return denom == 0 || tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

inline EvalReport Evaluate(std::span<const int> predictions, std::span<const int> labels,
                           std::vector<std::string> class_names) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "predictions and labels differ in length");
  }
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot evaluate an empty set");
  const std::size_t k = class_names.size();
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "no classes");
  EvalReport r;
  r.class_names = std::move(class_names);
  r.confusion.assign(k, std::vector<long long>(k, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k || predictions[i] < 0 ||
        static_cast<std::size_t>(predictions[i]) >= k) {
      throw Error(ErrorCode::kInvalidArgument, "class index out of range at example " + std::to_string(i));
    }
    r.confusion[labels[i]][predictions[i]]++;
  }
  r.n_examples = static_cast<long long>(labels.size());
  long long trace = 0;
  for (std::size_t c = 0; c < k; ++c) trace += r.confusion[c][c];
  r.accuracy = static_cast<double>(trace) / static_cast<double>(r.n_examples);
  r.chance_level = 1.0 / static_cast<double>(k);
  for (std::size_t c = 0; c < k; ++c) {
    long long fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += r.confusion[o][c];
      fn += r.confusion[c][o];
    }
    r.f1_per_class.push_back(F1FromCounts(r.confusion[c][c], fp, fn));
    r.zero_support.push_back(r.Support(c) == 0);
  }
  return r;
}

inline EvalReport Evaluate(std::span<const int> predictions, std::span<const int> labels,
                           std::size_t n_classes) {
  return Evaluate(predictions, labels, DefaultClassNames(n_classes));
}

inline std::vector<int> ArgmaxLogits(const Tensor<float>& logits) {
  if (logits.rank() != 2) throw Error(ErrorCode::kContract, "logits must be [N, K]");
  std::vector<int> out(logits.dim(0));
  const std::size_t k = logits.dim(1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float* r = logits.data() + i * k;
    out[i] = static_cast<int>(std::max_element(r, r + k) - r);
  }
  return out;
}

inline EvalReport EvaluateLogits(const Tensor<float>& logits, std::span<const int> labels,
                                 std::vector<std::string> class_names) {
  if (logits.rank() != 2 || logits.dim(1) != class_names.size()) {
    throw Error(ErrorCode::kContract, "logit width does not match the class count");
  }
  const auto pred = ArgmaxLogits(logits);
  return Evaluate(pred, labels, std::move(class_names));
}

// One-vs-rest F1 per subject from the joint confusion.
inline std::map<std::string, double> F1PerSubject(std::span<const int> predictions,
                                                  std::span<const int> subject_labels,
                                                  const std::vector<std::string>& subject_names) {
  const EvalReport r = Evaluate(predictions, subject_labels, subject_names);
  std::map<std::string, double> out;
  for (std::size_t c = 0; c < subject_names.size(); ++c) out[subject_names[c]] = r.f1_per_class[c];
  return out;
}

// Subjects sorted by descending F1 (ties by id); the first k are returned.
inline std::vector<std::pair<std::string, double>> TopSubjects(const std::map<std::string, double>& f1,
                                                               std::size_t k = 6) {
  std::vector<std::pair<std::string, double>> v(f1.begin(), f1.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (v.size() > k) v.resize(k);
  return v;
}

inline double Mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "mse: shape mismatch");
  if (a.empty()) throw Error(ErrorCode::kInvalidArgument, "mse: empty input");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double Mse(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "mse: shape mismatch");
  if (a.empty()) throw Error(ErrorCode::kInvalidArgument, "mse: empty input");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

struct ReportDelta {
  std::vector<std::string> class_names;
  double accuracy_delta = 0;
  std::vector<double> f1_delta;
};

// after - before, per class and overall.
inline ReportDelta CompareReports(const EvalReport& before, const EvalReport& after) {
  if (before.class_names != after.class_names) {
    throw Error(ErrorCode::kInvalidArgument, "reports cover different class sets");
  }
  ReportDelta d;
  d.class_names = before.class_names;
  d.accuracy_delta = after.accuracy - before.accuracy;
  for (std::size_t c = 0; c < before.f1_per_class.size(); ++c) {
    d.f1_delta.push_back(after.f1_per_class[c] - before.f1_per_class[c]);
  }
  return d;
}

// Rows of (evaluation name, report) laid out as per-class F1 then accuracy.
inline std::string ReportTableCsv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  if (rows.empty()) return "evaluation,acc\n";
  const auto& names = rows.front().second.class_names;
  std::ostringstream out;
  out << "evaluation";
  for (const auto& n : names) out << ',' << n;
  out << ",acc\n";
  for (const auto& [label, r] : rows) {
    if (r.class_names != names) throw Error(ErrorCode::kInvalidArgument, "table rows differ in classes");
    out << label;
    for (const double f : r.f1_per_class) out << ',' << FormatMetric(f);
    out << ',' << FormatMetric(r.accuracy) << '\n';
  }
  return out.str();
}

inline std::string ReportTableText(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  if (rows.empty()) return "";
  std::size_t label_w = 10;
  for (const auto& row : rows) label_w = std::max(label_w, row.first.size());
  std::ostringstream out;
  auto cell = [&out](const std::string& s, std::size_t w) {
    out << s << std::string(w > s.size() ? w - s.size() : 1, ' ');
  };
  cell("Evaluation", label_w + 2);
  for (const auto& n : rows.front().second.class_names) cell(n, 7);
  out << "Acc\n";
  for (const auto& [label, r] : rows) {
    cell(label, label_w + 2);
    char buf[16];
    for (const double f : r.f1_per_class) {
      std::snprintf(buf, sizeof buf, "%.2f", f);
      cell(buf, 7);
    }
    std::snprintf(buf, sizeof buf, "%.2f", r.accuracy);
    out << buf << '\n';
  }
  return out.str();
}

inline std::string DeltaCsv(const ReportDelta& d) {
  std::ostringstream out;
  out << "metric,delta\n";
  for (std::size_t c = 0; c < d.class_names.size(); ++c) {
    out << "f1_" << d.class_names[c] << ',' << FormatMetric(d.f1_delta[c]) << '\n';
  }
  out << "accuracy," << FormatMetric(d.accuracy_delta) << '\n';
  return out.str();
}

inline nlohmann::json ToJson(const EvalReport& r) {
  nlohmann::json zero = nlohmann::json::array();
  for (const bool z : r.zero_support) zero.push_back(z);
  return {{"class_names", r.class_names},   {"accuracy", r.accuracy},
          {"macro_f1", r.MacroF1()},         {"f1_per_class", r.f1_per_class},
          {"zero_support", zero},            {"confusion", r.confusion},
          {"chance_level", r.chance_level},  {"n_examples", r.n_examples},
          {"f1_per_subject", r.f1_per_subject}};
}

inline void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

// Report CSV: one row per class with support and F1, then summary rows.
inline std::string ReportCsv(const EvalReport& r) {
  std::ostringstream out;
  out << "class,support,f1,zero_support\n";
  for (std::size_t c = 0; c < r.n_classes(); ++c) {
    out << r.class_names[c] << ',' << r.Support(c) << ',' << FormatMetric(r.f1_per_class[c]) << ','
        << (r.zero_support[c] ? 1 : 0) << '\n';
  }
  out << "accuracy,," << FormatMetric(r.accuracy) << ",\n";
  out << "chance_level,," << FormatMetric(r.chance_level) << ",\n";
  return out.str();
}

// Original vs anonymized samples of one epoch: time_s, then per channel
// the original and anonymized values.
inline std::string SignalOverlayCsv(const Epoch& original, const Epoch& anonymized, double fs) {
  if (original.data.size() != anonymized.data.size()) {
    throw Error(ErrorCode::kInvalidArgument, "overlay epochs differ in shape");
  }
  std::ostringstream out;
  out << "time_s";
  for (int c = 0; c < original.n_channels; ++c) out << ",original_ch" << c << ",anonymized_ch" << c;
  out << '\n';
  char buf[32];
  for (int i = 0; i < original.n_samples; ++i) {
    std::snprintf(buf, sizeof buf, "%.2f", i / fs);
    out << buf;
    for (int c = 0; c < original.n_channels; ++c) {
      const std::size_t j = static_cast<std::size_t>(c) * original.n_samples + i;
      std::snprintf(buf, sizeof buf, ",%.4f", original.data[j]);
      out << buf;
      std::snprintf(buf, sizeof buf, ",%.4f", anonymized.data[j]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

// Welch PSD of one channel after a 0.2-40 Hz zero-phase band-pass.
inline std::vector<double> FilteredChannelPsd(const Epoch& e, int channel, double fs,
                                              std::vector<double>* freqs = nullptr) {
  const float* p = e.data.data() + static_cast<std::size_t>(channel) * e.n_samples;
  const std::vector<double> x(p, p + e.n_samples);
  WelchParams wp;
  wp.fs = fs;
  const PsdReport r = WelchPsd({Bandpass(x, fs, 0.2, 40.0)}, wp);
  if (freqs) *freqs = r.frequencies_hz;
  return r.power[0];
}

// Mean filtered PSD over epochs, original vs anonymized, per channel.
inline std::string PsdComparisonCsv(const EpochDataset& original, const EpochDataset& anonymized) {
  if (original.size() != anonymized.size() || original.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "PSD comparison needs paired, non-empty datasets");
  }
  const double fs = original.sampling_rate_hz();
  const int nc = original.n_channels();
  std::vector<double> freqs;
  std::vector<std::vector<double>> orig(nc), anon(nc);
  for (std::size_t i = 0; i < original.size(); ++i)
    for (int c = 0; c < nc; ++c) {
      const auto po = FilteredChannelPsd(original[i], c, fs, &freqs);
      const auto pa = FilteredChannelPsd(anonymized[i], c, fs);
      if (orig[c].empty()) {
        orig[c].assign(po.size(), 0.0);
        anon[c].assign(pa.size(), 0.0);
      }
      for (std::size_t k = 0; k < po.size(); ++k) {
        orig[c][k] += po[k] / static_cast<double>(original.size());
        anon[c][k] += pa[k] / static_cast<double>(original.size());
      }
    }
  std::ostringstream out;
  out << "frequency_hz";
  for (int c = 0; c < nc; ++c) out << ",original_ch" << c << ",anonymized_ch" << c;
  out << '\n';
  char buf[40];
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.2f", freqs[k]);
    out << buf;
    for (int c = 0; c < nc; ++c) {
      std::snprintf(buf, sizeof buf, ",%.6e,%.6e", orig[c][k], anon[c][k]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace eeganon
