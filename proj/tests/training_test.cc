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

#include "eeganon/training.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "eeganon/synthetic.hpp"

namespace eeganon {
namespace {

const EpochDataset& Toy() {
  static const EpochDataset ds = GenerateCorpus(ToyCorpusConfig()).dataset;
  return ds;
}

// Small classifier and autoencoder widths keep the toy jobs fast.
ClassifierConfig SmallReid(int n) {
  ClassifierConfig c = ClassifierConfig::Reid(n);
  c.d_model = 16;
  c.n_heads = 2;
  c.ff_dim = 32;
  c.n_layers = 1;
  return c;
}

ClassifierConfig SmallUtility() {
  ClassifierConfig c = ClassifierConfig::Utility(5);
  c.conv_filters = 8;
  c.hidden = 16;
  return c;
}

AutoencoderConfig SmallAutoencoder() {
  AutoencoderConfig c;
  c.d_model = 32;
  c.n_heads = 4;
  c.ff_dim = 64;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 1;
  return c;
}

TEST(TrainConfigTest, PresetsCarryTheirWeights) {
  const TrainConfig deep = NamedPreset("deepsleep-preset");
  EXPECT_EQ(deep.omega_util, 2000);
  EXPECT_EQ(deep.omega_id, 25);
  EXPECT_EQ(deep.omega_dist, 1);
  const TrainConfig robust = NamedPreset("robustsleep-preset");
  EXPECT_EQ(robust.omega_util, 1300);
  EXPECT_EQ(robust.omega_id, 10);
  EXPECT_EQ(robust.omega_dist, 1);
  EXPECT_NO_THROW(NamedPreset("desk-preset").Validate(true));
  EXPECT_THROW(NamedPreset("nope"), Error);
}

TEST(TrainConfigTest, JsonRoundTripAndCeiling) {
  TrainConfig c = NamedPreset("deepsleep-preset");
  c.seed = 42;
  c.id_loss_ceiling_auto = false;
  c.id_loss_ceiling = 3.5;
  const nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  EXPECT_EQ(back.omega_util, 2000);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.Ceiling(8), 3.5);
  EXPECT_EQ(j.at("optimizer").at("type"), "adam");
  EXPECT_NEAR(TrainConfig{}.Ceiling(8), 2 * std::log(8.0), 1e-12);
  const TrainConfig none = nlohmann::json::parse(R"({"id_loss_ceiling": null})").get<TrainConfig>();
  EXPECT_TRUE(std::isinf(none.Ceiling(8)));
  EXPECT_THROW(nlohmann::json::parse(R"({"id_loss_ceiling": "big"})").get<TrainConfig>(), Error);
}

TEST(TrainConfigTest, ValidationNamesField) {
  TrainConfig c;
  c.omega_util = c.omega_id = c.omega_dist = 0;
  try {
    c.Validate(true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find("train.omega"), std::string::npos);
  }
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.Validate(false), Error);
}

TEST(CombineLossTest, DeepsleepPresetArithmetic) {
  EXPECT_NEAR(CombineLoss(0.5, 3.0, 0.01, {2000, 25, 1}), 925.01, 1e-9);
}

TEST(CombineLossTest, LinearInEachWeight) {
  const double u = 0.7, i = 1.9, d = 0.3;
  const LossWeights a{1, 2, 3}, b{4, 5, 6}, sum{5, 7, 9};
  EXPECT_NEAR(CombineLoss(u, i, d, a) + CombineLoss(u, i, d, b), CombineLoss(u, i, d, sum), 1e-12);
  EXPECT_NEAR(CombineLoss(u, i, d, {0, 1, 0}), -i, 1e-12);
  EXPECT_NEAR(CombineLoss(u, i, d, {0, 1, 0, 1.5}), -1.5, 1e-12);
}

class CombinedLossTest : public ::testing::Test {
 protected:
  CombinedLossTest()
      : m_(TinyModelConfigs(3)),
        util_(InitClassifier<double>(m_.utility, 1)),
        reid_(InitClassifier<double>(m_.reid, 2)) {
    Rng rng(3);
    x_ = Tensor<double>({2, 2, 40});
    for (std::size_t i = 0; i < x_.size(); ++i) x_[i] = 10 * rng.Normal();
    stats_ = ComputeRowStats(x_, 40);
    xs_ = Standardize(x_, stats_, 40);
  }
  LossBreakdown Run(const Tensor<double>& recon, const LossWeights& w) {
    Tape<double> tape;
    BoundParams<double> u(tape, util_, false), r(tape, reid_, false);
    return CombinedLoss(tape.Constant(recon), tape.Constant(xs_), stats_, stages_, subjects_, u, m_.utility,
                        r, m_.reid, w)
        .breakdown;
  }
  TinyModels m_;
  ParameterStore<double> util_, reid_;
  Tensor<double> x_, xs_;
  RowStats<double> stats_;
  std::vector<int> stages_ = {0, 3}, subjects_ = {1, 2};
};

TEST_F(CombinedLossTest, IdentityReconstructionHasZeroDistortion) {
  const LossBreakdown b = Run(xs_, {0, 0, 1});
  EXPECT_EQ(b.l_dist, 0.0);
  EXPECT_EQ(b.combined, 0.0);
}

TEST_F(CombinedLossTest, UniformUtilityLogits) {
  std::fill_n(util_.Get("fc2.w").data(), util_.Get("fc2.w").size(), 0.0);
  std::fill_n(util_.Get("fc2.b").data(), util_.Get("fc2.b").size(), 0.0);
  const LossBreakdown b = Run(xs_, {1, 0, 0});
  EXPECT_NEAR(b.l_util, std::log(5.0), 1e-12);
  EXPECT_NEAR(b.combined, std::log(5.0), 1e-12);
}

TEST_F(CombinedLossTest, ComponentsMatchDirectEvaluation) {
  Tensor<double> recon = xs_;
  for (std::size_t i = 0; i < recon.size(); ++i) recon[i] = 0.5 * recon[i] + 0.1;
  const LossBreakdown b = Run(recon, {2, 3, 4});
  double mse = 0;
  for (std::size_t i = 0; i < recon.size(); ++i) mse += (recon[i] - xs_[i]) * (recon[i] - xs_[i]);
  EXPECT_NEAR(b.l_dist, mse / recon.size(), 1e-12);
  EXPECT_NEAR(b.combined, 2 * b.l_util - 3 * b.l_id + 4 * b.l_dist, 1e-9);
  // The classifiers see the reconstruction mapped back to microvolts.
  Tensor<double> micro = recon;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 40; ++j) micro[r * 40 + j] = recon[r * 40 + j] * stats_.stddev[r] + stats_.mean[r];
  Tape<double> tape;
  BoundParams<double> u(tape, util_, false);
  const double direct = ops::CrossEntropy(UtilityForward(u, m_.utility, tape.Constant(micro)),
                                          std::span<const int>(stages_))
                            .value()[0];
  EXPECT_NEAR(b.l_util, direct, 1e-12);
}

TEST_F(CombinedLossTest, NonFiniteComponentIsNamed) {
  Tensor<double> recon = xs_;
  recon[0] = std::numeric_limits<double>::infinity();
  try {
    Run(recon, {0, 0, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumericFailure);
  }
}

TEST(GradientCheckTest, ReconstructionOnly) {
  const auto r = TinyAutoencoderGradientCheck({0, 0, 1}, 1);
  EXPECT_GT(r.n_checked, 1000u);
  EXPECT_LE(r.max_relative_error, 1e-4) << r.worst_array << "[" << r.worst_index << "]";
}

TEST(GradientCheckTest, FullObjective) {
  const auto r = TinyAutoencoderGradientCheck({2000, 25, 1}, 2);
  EXPECT_LE(r.max_relative_error, 1e-3) << r.worst_array << "[" << r.worst_index << "]";
}

TEST(GradientCheckTest, Classifiers) {
  EXPECT_LE(TinyClassifierGradientCheck(ClassifierKind::kUtilityCnn, 3).max_relative_error, 1e-4);
  EXPECT_LE(TinyClassifierGradientCheck(ClassifierKind::kReidTransformer, 4).max_relative_error, 1e-4);
}

TEST(GradientCheckTest, StoreIsRestored) {
  const TinyModels m = TinyModelConfigs();
  ParameterStore<double> store = InitClassifier<double>(m.reid, 5);
  const auto before = store.Checksum();
  Tensor<double> x({1, 2, 40}, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.3 * i);
  const std::vector<int> labels = {0};
  GradientCheck(store, [&](Tape<double>& tape, const BoundParams<double>& p) {
    return ops::CrossEntropy(ClassifierForward(p, m.reid, tape.Constant(x)), std::span<const int>(labels));
  });
  EXPECT_EQ(store.Checksum(), before);
}

TEST(TrainClassifierTest, ToyLossDecreases) {
  TrainConfig c = NamedPreset("classifier-default");
  c.n_epochs = 5;
  c.batch_size = 8;
  c.seed = 3;
  const auto reid = TrainClassifier(Toy(), c, SmallReid(2), LabelKind::kSubject);
  ASSERT_EQ(reid.loss_trace.size(), 5u);
  EXPECT_LT(MeanClassifierLoss(reid.params, SmallReid(2), Toy(), Labels(Toy(), LabelKind::kSubject)),
            reid.initial_loss);
  const auto util = TrainClassifier(Toy(), c, SmallUtility(), LabelKind::kStage);
  EXPECT_LT(MeanClassifierLoss(util.params, SmallUtility(), Toy(), Labels(Toy(), LabelKind::kStage)),
            util.initial_loss);
}

TEST(TrainClassifierTest, ZeroEpochsReturnsInitialization) {
  TrainConfig c = NamedPreset("classifier-default");
  c.n_epochs = 0;
  c.seed = 9;
  const auto r = TrainClassifier(Toy(), c, SmallReid(2), LabelKind::kSubject);
  EXPECT_TRUE(r.params == InitClassifier<float>(SmallReid(2), DeriveSeed(9, std::string_view("init"))));
  EXPECT_TRUE(r.loss_trace.empty());
}

TEST(TrainClassifierTest, SameSeedSameParams) {
  TrainConfig c = NamedPreset("classifier-default");
  c.n_epochs = 2;
  c.batch_size = 16;
  c.seed = 4;
  const auto a = TrainClassifier(Toy(), c, SmallUtility(), LabelKind::kStage);
  const auto b = TrainClassifier(Toy(), c, SmallUtility(), LabelKind::kStage);
  EXPECT_EQ(a.params.Checksum(), b.params.Checksum());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(TrainClassifierTest, EmptyDatasetIsRejected) {
  EXPECT_THROW(TrainClassifier(EpochDataset(), NamedPreset("classifier-default"), SmallReid(2),
                               LabelKind::kSubject),
               Error);
}

class AutoencoderTrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    TrainConfig c = NamedPreset("classifier-default");
    c.n_epochs = 3;
    c.batch_size = 8;
    c.seed = 1;
    util_ = new ParameterStore<float>(TrainClassifier(Toy(), c, SmallUtility(), LabelKind::kStage).params);
    reid_ = new ParameterStore<float>(TrainClassifier(Toy(), c, SmallReid(2), LabelKind::kSubject).params);
  }
  static void TearDownTestSuite() {
    delete util_;
    delete reid_;
  }
  static TrainConfig Config(double wu, double wi, double wd, int epochs) {
    TrainConfig c = NamedPreset("desk-preset");
    c.omega_util = wu;
    c.omega_id = wi;
    c.omega_dist = wd;
    c.n_epochs = epochs;
    c.batch_size = 8;
    c.seed = 2;
    return c;
  }
  static ParameterStore<float>* util_;
  static ParameterStore<float>* reid_;
};
ParameterStore<float>* AutoencoderTrainingTest::util_ = nullptr;
ParameterStore<float>* AutoencoderTrainingTest::reid_ = nullptr;

TEST_F(AutoencoderTrainingTest, PureReconstructionReducesDistortion) {
  const auto r = TrainAutoencoder(Toy(), Config(0, 0, 1, 3), SmallAutoencoder(), *util_, *reid_);
  ASSERT_EQ(r.epoch_trace.size(), 3u);
  EXPECT_EQ(r.batch_trace.size(), 15u);
  EXPECT_LT(r.epoch_trace.back().mean.l_dist, r.epoch_trace.front().mean.l_dist);
  EXPECT_LT(r.batch_trace.back().l_dist, r.batch_trace.front().l_dist);
}

TEST_F(AutoencoderTrainingTest, FrozenClassifiersUnchanged) {
  const auto util_sum = util_->Checksum(), reid_sum = reid_->Checksum();
  TrainAutoencoder(Toy(), Config(1, 1, 1, 1), SmallAutoencoder(), *util_, *reid_);
  EXPECT_EQ(util_->Checksum(), util_sum);
  EXPECT_EQ(reid_->Checksum(), reid_sum);
}

TEST_F(AutoencoderTrainingTest, DeterministicGivenSeed) {
  const auto a = TrainAutoencoder(Toy(), Config(1, 1, 1, 1), SmallAutoencoder(), *util_, *reid_);
  const auto b = TrainAutoencoder(Toy(), Config(1, 1, 1, 1), SmallAutoencoder(), *util_, *reid_);
  EXPECT_EQ(a.params.Checksum(), b.params.Checksum());
}

TEST_F(AutoencoderTrainingTest, ReidSubjectCountMustMatch) {
  const auto wrong = InitClassifier<float>(SmallReid(3), 1);
  try {
    TrainAutoencoder(Toy(), Config(1, 1, 1, 1), SmallAutoencoder(), *util_, wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContract);
  }
}

TEST_F(AutoencoderTrainingTest, DivergenceAdvisesCeiling) {
  TrainConfig c = Config(0, 1e12, 0, 1);
  c.id_loss_ceiling_auto = false;
  c.id_loss_ceiling.reset();
  try {
    TrainAutoencoder(Toy(), c, SmallAutoencoder(), *util_, *reid_);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
    EXPECT_NE(std::string(e.what()).find("id_loss_ceiling"), std::string::npos);
  }
}

TEST_F(AutoencoderTrainingTest, AnonymizePreservesShapesAndLabels) {
  const auto ae = InitAutoencoder<float>(SmallAutoencoder(), 3);
  const AnonymizeResult r = AnonymizeDataset(Toy(), ae);
  ASSERT_EQ(r.dataset.size(), Toy().size());
  ASSERT_EQ(r.epoch_mse.size(), Toy().size());
  for (std::size_t i = 0; i < Toy().size(); ++i) {
    EXPECT_EQ(r.dataset[i].subject_id, Toy()[i].subject_id);
    EXPECT_EQ(r.dataset[i].stage, Toy()[i].stage);
    EXPECT_EQ(r.dataset[i].data.size(), Toy()[i].data.size());
  }
  EXPECT_TRUE(std::isfinite(r.MedianMse()));
  EXPECT_EQ(r.dataset.subject_index(), Toy().subject_index());
  // Applying twice is well defined.
  EXPECT_EQ(AnonymizeDataset(r.dataset, ae).dataset.size(), Toy().size());
  // And deterministic.
  EXPECT_EQ(AnonymizeDataset(Toy(), ae).dataset[5].data, r.dataset[5].data);
}

TEST(FreshAuditTest, UntrainedClassifiersScoreOnTestSet) {
  TrainConfig c = NamedPreset("classifier-default");
  c.n_epochs = 1;
  c.batch_size = 8;
  const FreshAuditResult r = FreshRetrainAudit(Toy(), Toy(), c, SmallUtility(), SmallReid(2));
  EXPECT_EQ(r.fresh_reid.n_examples, 40);
  EXPECT_EQ(r.fresh_reid.chance_level, 0.5);
  EXPECT_EQ(r.fresh_utility.n_classes(), 5u);
  EXPECT_EQ(r.fresh_reid.f1_per_subject.size(), 2u);
}

}  // namespace
}  // namespace eeganon
