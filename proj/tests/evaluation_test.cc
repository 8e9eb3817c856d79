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

#include "eeganon/evaluation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "eeganon/random.hpp"

namespace eeganon {
namespace {

// Class 0: tp 5, fp 5, fn 0. Class 1: tp 5, fp 0, fn 5. Class 2: 4 correct.
struct ThreeClass {
  std::vector<int> labels, preds;
  ThreeClass() {
    for (int i = 0; i < 5; ++i) labels.push_back(0), preds.push_back(0);
    for (int i = 0; i < 5; ++i) labels.push_back(1), preds.push_back(0);
    for (int i = 0; i < 5; ++i) labels.push_back(1), preds.push_back(1);
    for (int i = 0; i < 4; ++i) labels.push_back(2), preds.push_back(2);
  }
};

TEST(EvaluateTest, HandBuiltConfusion) {
  const ThreeClass t;
  const EvalReport r = Evaluate(t.preds, t.labels, 3);
  EXPECT_EQ(r.f1_per_class[0], 2.0 / 3.0);
  EXPECT_EQ(r.f1_per_class[1], 2.0 / 3.0);
  EXPECT_EQ(r.f1_per_class[2], 1.0);
  EXPECT_EQ(r.accuracy, 14.0 / 19.0);
  EXPECT_EQ(r.n_examples, 19);
  EXPECT_EQ(r.confusion[1][0], 5);
  EXPECT_EQ(r.Support(1), 10);
  EXPECT_EQ(r.chance_level, 1.0 / 3.0);
}

TEST(EvaluateTest, F1FromCountsDefinition) {
  EXPECT_EQ(F1FromCounts(5, 5, 0), 2.0 / 3.0);
  EXPECT_EQ(F1FromCounts(0, 0, 0), 0.0);
  EXPECT_EQ(F1FromCounts(0, 3, 2), 0.0);
  EXPECT_EQ(F1FromCounts(7, 0, 0), 1.0);
}

TEST(EvaluateTest, ChanceLevelOfThirtyFiveClasses) {
  Rng rng(3);
  std::vector<int> labels(35000), preds(35000);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<int>(i % 35);
    preds[i] = static_cast<int>(rng.Below(35));
  }
  const EvalReport r = Evaluate(preds, labels, 35);
  EXPECT_EQ(r.chance_level, 1.0 / 35.0);
  EXPECT_EQ(FormatMetric(r.chance_level).substr(0, 6), "0.0285");
  EXPECT_NEAR(r.accuracy, 1.0 / 35.0, 0.004);
}

TEST(EvaluateTest, PerfectPredictions) {
  const std::vector<int> y = {0, 1, 2, 3, 4, 2};
  const EvalReport r = Evaluate(y, y, StageClassNames());
  EXPECT_EQ(r.accuracy, 1.0);
  for (const double f : r.f1_per_class) EXPECT_EQ(f, 1.0);
  EXPECT_EQ(r.class_names, (std::vector<std::string>{"W", "N1", "N2", "N3", "REM"}));
}

TEST(EvaluateTest, ZeroSupportClassIsFlagged) {
  const std::vector<int> y = {0, 1, 0}, p = {0, 1, 1};
  const EvalReport r = Evaluate(p, y, 3);
  EXPECT_TRUE(r.zero_support[2]);
  EXPECT_FALSE(r.zero_support[0]);
  EXPECT_EQ(r.f1_per_class[2], 0.0);
}

TEST(EvaluateTest, InvalidInputs) {
  const std::vector<int> empty;
  EXPECT_THROW(Evaluate(empty, empty, 2), Error);
  const std::vector<int> a = {0, 1}, b = {0};
  EXPECT_THROW(Evaluate(a, b, 2), Error);
  const std::vector<int> out = {0, 5};
  EXPECT_THROW(Evaluate(out, a, 2), Error);
}

TEST(EvaluateTest, RelabelingClassesPermutesF1) {
  const ThreeClass t;
  const std::vector<int> perm = {2, 0, 1};
  std::vector<int> pl, pp;
  for (const int v : t.labels) pl.push_back(perm[v]);
  for (const int v : t.preds) pp.push_back(perm[v]);
  const EvalReport a = Evaluate(t.preds, t.labels, 3), b = Evaluate(pp, pl, 3);
  EXPECT_EQ(a.accuracy, b.accuracy);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(a.f1_per_class[c], b.f1_per_class[perm[c]]);
}

TEST(EvaluateTest, LogitsArgmax) {
  const Tensor<float> logits({2, 3}, std::vector<float>{0.1f, 2.0f, -1.0f, 5.0f, 0.0f, 4.9f});
  const std::vector<int> labels = {1, 2};
  const EvalReport r = EvaluateLogits(logits, labels, DefaultClassNames(3));
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_THROW(EvaluateLogits(logits, labels, DefaultClassNames(4)), Error);
}

TEST(SubjectF1Test, NeverSeenSubjectScoresZero) {
  const std::vector<int> y = {0, 0, 1}, p = {0, 0, 1};
  const auto f1 = F1PerSubject(p, y, {"S01", "S02", "S03"});
  EXPECT_EQ(f1.at("S01"), 1.0);
  EXPECT_EQ(f1.at("S03"), 0.0);
}

TEST(SubjectF1Test, SingleSubjectPerfect) {
  const std::vector<int> y = {0, 0, 0};
  EXPECT_EQ(F1PerSubject(y, y, {"S01"}).at("S01"), 1.0);
}

TEST(SubjectF1Test, TopSubjectsSortedWithDefaultSix) {
  std::map<std::string, double> f1;
  for (int i = 0; i < 9; ++i) f1["S0" + std::to_string(i + 1)] = 0.1 * ((i * 4) % 9);
  const auto top = TopSubjects(f1);
  ASSERT_EQ(top.size(), 6u);
  for (std::size_t i = 1; i < top.size(); ++i) EXPECT_GE(top[i - 1].second, top[i].second);
  EXPECT_EQ(top.front().second, 0.8);
  EXPECT_EQ(TopSubjects(f1, 2).size(), 2u);
  EXPECT_EQ(TopSubjects(f1, 20).size(), 9u);
}

TEST(MseTest, Examples) {
  const std::vector<double> a = {1, 2, 3}, b = {1, 2, 3}, c = {2, 2, 5};
  EXPECT_EQ(Mse(a, b), 0.0);
  EXPECT_EQ(Mse(a, c), 5.0 / 3.0);
  const std::vector<double> d = {1, 2};
  EXPECT_THROW(Mse(a, d), Error);
}

TEST(CompareTest, DeltaAndClassMismatch) {
  const ThreeClass t;
  const EvalReport before = Evaluate(t.labels, t.labels, 3);
  const EvalReport after = Evaluate(t.preds, t.labels, 3);
  const ReportDelta d = CompareReports(before, after);
  EXPECT_EQ(d.accuracy_delta, 14.0 / 19.0 - 1.0);
  EXPECT_EQ(d.f1_delta[0], 2.0 / 3.0 - 1.0);
  EXPECT_THROW(CompareReports(before, Evaluate(t.preds, t.labels, 4)), Error);
  EXPECT_NE(DeltaCsv(d).find("accuracy,"), std::string::npos);
}

TEST(TableTest, LayoutIsClassesThenAccuracy) {
  std::vector<int> y = {0, 1, 2, 3, 4};
  const EvalReport r = Evaluate(y, y, StageClassNames());
  const std::string csv = ReportTableCsv({{"baseline", r}, {"anonymized", r}});
  std::istringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "evaluation,W,N1,N2,N3,REM,acc");
  EXPECT_EQ(row, "baseline,1.000000,1.000000,1.000000,1.000000,1.000000,1.000000");
  EXPECT_NE(ReportTableText({{"baseline", r}}).find("Acc"), std::string::npos);
}

TEST(ReportOutputTest, CsvAndJsonFields) {
  const ThreeClass t;
  const EvalReport r = Evaluate(t.preds, t.labels, 3);
  EXPECT_NE(ReportCsv(r).find("0,5,0.666667,0"), std::string::npos);
  const nlohmann::json j = ToJson(r);
  EXPECT_EQ(j.at("n_examples").get<long long>(), 19);
  EXPECT_EQ(j.at("confusion")[1][0].get<long long>(), 5);
}

TEST(PsdOutputTest, FilteredPsdPeaksAtToneFrequency) {
  Epoch e;
  e.n_channels = 1;
  e.n_samples = 3000;
  for (int i = 0; i < 3000; ++i)
    e.data.push_back(static_cast<float>(10.0 * std::sin(2 * std::numbers::pi * 10.0 * i / 100.0) + 30.0));
  std::vector<double> freqs;
  const auto p = FilteredChannelPsd(e, 0, 100.0, &freqs);
  const auto peak = std::max_element(p.begin(), p.end()) - p.begin();
  EXPECT_EQ(freqs[peak], 10.0);
  // The offset is removed by the band-pass.
  EXPECT_LT(p[0], 1e-2 * p[peak]);
}

}  // namespace
}  // namespace eeganon
