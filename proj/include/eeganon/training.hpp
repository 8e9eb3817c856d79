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

// Classifier pretraining, autoencoder training against frozen classifiers,
// anonymization, the fresh-model audit and gradient checking.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eeganon/dataset.hpp"
#include "eeganon/evaluation.hpp"
#include "eeganon/models.hpp"
#include "eeganon/ops.hpp"
#include "eeganon/optim.hpp"
#include "eeganon/params.hpp"
#include "eeganon/random.hpp"
#include "json.hpp"

namespace eeganon {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int n_epochs = 10;
  double omega_util = 1.0;
  double omega_id = 1.0;
  double omega_dist = 1.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Unset means no ceiling. When `id_loss_ceiling_auto` is true the
  // ceiling is 2 ln(n_subjects) of the training set.
  std::optional<double> id_loss_ceiling;
  bool id_loss_ceiling_auto = true;

  AdamOptions Adam() const { return {learning_rate, beta1, beta2, epsilon}; }

  double Ceiling(int n_subjects) const {
    if (id_loss_ceiling_auto) return 2.0 * std::log(static_cast<double>(std::max(n_subjects, 2)));
    return id_loss_ceiling.value_or(std::numeric_limits<double>::infinity());
  }

  void Validate(bool autoencoder) const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, "train." + m); };
    if (!(learning_rate > 0)) fail("learning_rate: must be positive");
    if (batch_size < 1) fail("batch_size: must be >= 1");
    if (n_epochs < 0) fail("n_epochs: must be >= 0");
    if (!(omega_util >= 0) || !(omega_id >= 0) || !(omega_dist >= 0)) fail("omega: must be non-negative");
    if (autoencoder && omega_util == 0 && omega_id == 0 && omega_dist == 0) {
      fail("omega: at least one weight must be positive");
    }
    if (id_loss_ceiling && !(*id_loss_ceiling > 0)) fail("id_loss_ceiling: must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(epsilon > 0)) {
      fail("optimizer: invalid moment coefficients");
    }
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"n_epochs", c.n_epochs},
       {"omega_util", c.omega_util},
       {"omega_id", c.omega_id},
       {"omega_dist", c.omega_dist},
       {"seed", c.seed},
       {"optimizer", {{"type", "adam"}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}}}};
  if (c.id_loss_ceiling_auto) {
    j["id_loss_ceiling"] = "auto";
  } else if (c.id_loss_ceiling) {
    j["id_loss_ceiling"] = *c.id_loss_ceiling;
  } else {
    j["id_loss_ceiling"] = nullptr;
  }
}

// Overlays the fields present in `j` onto `c`.
inline void MergeTrainConfig(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.n_epochs = j.value("n_epochs", c.n_epochs);
  c.omega_util = j.value("omega_util", c.omega_util);
  c.omega_id = j.value("omega_id", c.omega_id);
  c.omega_dist = j.value("omega_dist", c.omega_dist);
  c.seed = j.value("seed", c.seed);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.beta1 = o.value("beta1", c.beta1);
    c.beta2 = o.value("beta2", c.beta2);
    c.epsilon = o.value("epsilon", c.epsilon);
  }
  if (j.contains("id_loss_ceiling")) {
    const auto& v = j.at("id_loss_ceiling");
    if (v.is_string()) {
      if (v.get<std::string>() != "auto") {
        throw Error(ErrorCode::kConfig, "train.id_loss_ceiling: expected a number, \"auto\" or null");
      }
      c.id_loss_ceiling_auto = true;
      c.id_loss_ceiling.reset();
    } else if (v.is_null()) {
      c.id_loss_ceiling_auto = false;
      c.id_loss_ceiling.reset();
    } else {
      c.id_loss_ceiling_auto = false;
      c.id_loss_ceiling = v.get<double>();
    }
  }
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  MergeTrainConfig(j, c);
}

// Weight presets. The deepsleep and robustsleep presets carry full-scale weights;
// the desk preset is tuned for the synthetic corpus and small models.
inline TrainConfig NamedPreset(const std::string& name) {
  TrainConfig c;
  if (name == "deepsleep-preset") {
    c.omega_util = 2000;
    c.omega_id = 25;
    c.omega_dist = 1;
    c.learning_rate = 4e-6;
    c.batch_size = 32;
    c.n_epochs = 30;
  } else if (name == "robustsleep-preset") {
    c.omega_util = 1300;
    c.omega_id = 10;
    c.omega_dist = 1;
    c.learning_rate = 8e-7;
    c.batch_size = 64;
    c.n_epochs = 30;
  } else if (name == "desk-preset") {
    c.omega_util = 25;
    c.omega_id = 25;
    c.omega_dist = 250;
    c.learning_rate = 1e-3;
    c.batch_size = 32;
    c.n_epochs = 15;
  } else if (name == "classifier-default") {
    c.omega_util = c.omega_id = c.omega_dist = 0;
    c.learning_rate = 1e-3;
    c.batch_size = 32;
    c.n_epochs = 12;
  } else {
    throw Error(ErrorCode::kConfig, "unknown preset '" + name + "'");
  }
  return c;
}

struct LossBreakdown {
  double l_util = 0;
  double l_id = 0;
  double l_dist = 0;
  double combined = 0;
};

struct LossWeights {
  double omega_util = 0;
  double omega_id = 0;
  double omega_dist = 0;
  double id_ceiling = std::numeric_limits<double>::infinity();
};

inline double CombineLoss(double l_util, double l_id, double l_dist, const LossWeights& w) {
  return w.omega_util * l_util - w.omega_id * std::min(l_id, w.id_ceiling) + w.omega_dist * l_dist;
}

template <typename T>
struct FrozenClassifier {
  const ParameterStore<T>* store;
  ClassifierConfig config;
};

template <typename T>
struct CombinedLossVars {
  Var<T> combined;
  LossBreakdown breakdown;
};

// The weighted objective on one batch. `original` holds the standardized input, `recon`
// the standardized autoencoder output, and `stats` the per-row scale that
// maps both back to microvolts for the classifiers.
template <typename T>
CombinedLossVars<T> CombinedLoss(Var<T> recon, Var<T> original, const RowStats<T>& stats,
                                 std::span<const int> stage_labels,
                                 std::span<const int> subject_labels,
                                 const BoundParams<T>& utility, const ClassifierConfig& utility_cfg,
                                 const BoundParams<T>& reid, const ClassifierConfig& reid_cfg,
                                 const LossWeights& w) {
  const std::size_t row_len = recon.value().dim(2);
  Var<T> micro = ops::AffineRows(recon, row_len, std::span<const T>(stats.stddev),
                                 std::span<const T>(stats.mean));
  Var<T> l_util = ops::CrossEntropy(UtilityForward(utility, utility_cfg, micro), stage_labels);
  Var<T> l_id = ops::CrossEntropy(ReidForward(reid, reid_cfg, micro), subject_labels);
  Var<T> l_dist = ops::MeanSquaredError(recon, original);
  const struct {
    const char* name;
    Var<T> v;
  } parts[] = {{"l_util", l_util}, {"l_id", l_id}, {"l_dist", l_dist}};
  for (const auto& p : parts) {
    if (!std::isfinite(static_cast<double>(p.v.value()[0]))) {
      throw Error(ErrorCode::kNumericFailure, std::string("loss component ") + p.name + " is not finite");
    }
  }
  Var<T> combined = ops::WeightedObjective(l_util, l_id, l_dist, static_cast<T>(w.omega_util),
                                           static_cast<T>(w.omega_id), static_cast<T>(w.omega_dist),
                                           static_cast<T>(w.id_ceiling));
  LossBreakdown b{static_cast<double>(l_util.value()[0]), static_cast<double>(l_id.value()[0]),
                  static_cast<double>(l_dist.value()[0]), static_cast<double>(combined.value()[0])};
  return {combined, b};
}

struct EpochLoss {
  int epoch = 0;
  LossBreakdown mean;
};

struct ClassifierTrainResult {
  ParameterStore<float> params;
  // Mean cross-entropy per training epoch.
  std::vector<double> loss_trace;
  double initial_loss = 0;
};

enum class LabelKind { kStage, kSubject };

inline std::vector<int> Labels(const EpochDataset& ds, LabelKind kind) {
  std::vector<int> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out[i] = kind == LabelKind::kStage ? ds.StageLabel(i) : ds.SubjectLabel(i);
  }
  return out;
}

inline std::vector<int> Gather(const std::vector<int>& v, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (const std::size_t i : idx) out.push_back(v[i]);
  return out;
}

// Seeded permutation for one training epoch.
inline std::vector<std::size_t> EpochOrder(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(DeriveSeed(DeriveSeed(seed, std::string_view("shuffle")), static_cast<std::uint64_t>(epoch)));
  rng.Shuffle(order.begin(), order.end());
  return order;
}

inline double MeanClassifierLoss(const ParameterStore<float>& params, const ClassifierConfig& cfg,
                                 const EpochDataset& ds, const std::vector<int>& labels,
                                 int batch_size = 64) {
  double total = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    Tape<float> tape;
    BoundParams<float> p(tape, params, false);
    const auto lab = Gather(labels, idx);
    Var<float> loss = ops::CrossEntropy(ClassifierForward(p, cfg, tape.Constant(ds.Batch<float>(idx))),
                                        std::span<const int>(lab));
    total += static_cast<double>(loss.value()[0]) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(ds.size());
}

// Trains a classifier from a seeded initialization with Adam on mean
// cross-entropy.
inline ClassifierTrainResult TrainClassifier(const EpochDataset& dataset, const TrainConfig& config,
                                             const ClassifierConfig& model_cfg, LabelKind labels_kind,
                                             const std::function<void(int, double)>& on_epoch = {}) {
  config.Validate(false);
  model_cfg.Validate();
  if (dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  const std::vector<int> labels = Labels(dataset, labels_kind);
  ClassifierTrainResult result{InitClassifier<float>(model_cfg, DeriveSeed(config.seed, std::string_view("init"))),
                               {},
                               0.0};
  if (config.n_epochs == 0) return result;
  result.initial_loss = MeanClassifierLoss(result.params, model_cfg, dataset, labels);
  Adam<float> adam(result.params, config.Adam());
  Rng dropout_rng(DeriveSeed(config.seed, std::string_view("dropout")));
  for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
    const auto order = EpochOrder(dataset.size(), config.seed, epoch);
    double total = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min<std::size_t>(config.batch_size, order.size() - start));
      const auto lab = Gather(labels, idx);
      Tape<float> tape;
      BoundParams<float> p(tape, result.params, true);
      ForwardMode mode{true, &dropout_rng};
      Var<float> loss;
      try {
        loss = ops::CrossEntropy(ClassifierForward(p, model_cfg, tape.Constant(dataset.Batch<float>(idx)), mode),
                                 std::span<const int>(lab));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumericFailure) throw;
        throw Error(ErrorCode::kNumericFailure, std::string(e.what()) + " at epoch " +
                                                    std::to_string(epoch) + ", batch " +
                                                    std::to_string(batch_index));
      }
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::kNumericFailure, "classifier loss is NaN at epoch " + std::to_string(epoch) +
                                                    ", batch " + std::to_string(batch_index));
      }
      tape.Backpropagate(loss);
      adam.Step(result.params, p.Gradients());
      total += value * static_cast<double>(idx.size());
    }
    result.loss_trace.push_back(total / static_cast<double>(dataset.size()));
    if (on_epoch) on_epoch(epoch, result.loss_trace.back());
  }
  return result;
}

struct AutoencoderTrainResult {
  ParameterStore<float> params;
  std::vector<LossBreakdown> batch_trace;
  std::vector<EpochLoss> epoch_trace;
};

// Optimizes only the autoencoder; the classifiers are bound as constants
// and their checksums are verified after training.
inline AutoencoderTrainResult TrainAutoencoder(const EpochDataset& dataset, const TrainConfig& config,
                                               const AutoencoderConfig& ae_cfg,
                                               const ParameterStore<float>& utility_params,
                                               const ParameterStore<float>& reid_params,
                                               const std::function<void(const EpochLoss&)>& on_epoch = {},
                                               const ParameterStore<float>* init = nullptr) {
  config.Validate(true);
  ae_cfg.Validate();
  if (dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  const ClassifierConfig util_cfg = ClassifierConfigOf(utility_params);
  const ClassifierConfig reid_cfg = ClassifierConfigOf(reid_params);
  if (reid_cfg.n_classes != dataset.n_subjects()) {
    throw Error(ErrorCode::kContract, "re-id model has " + std::to_string(reid_cfg.n_classes) +
                                          " classes but the dataset has " +
                                          std::to_string(dataset.n_subjects()) + " subjects");
  }
  const std::uint64_t util_sum = utility_params.Checksum();
  const std::uint64_t reid_sum = reid_params.Checksum();
  const LossWeights w{config.omega_util, config.omega_id, config.omega_dist,
                      config.Ceiling(dataset.n_subjects())};
  const std::vector<int> stages = Labels(dataset, LabelKind::kStage);
  const std::vector<int> subjects = Labels(dataset, LabelKind::kSubject);

  AutoencoderTrainResult result{
      init ? *init : InitAutoencoder<float>(ae_cfg, DeriveSeed(config.seed, std::string_view("init"))), {}, {}};
  Adam<float> adam(result.params, config.Adam());
  Rng dropout_rng(DeriveSeed(config.seed, std::string_view("dropout")));
  for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
    const auto order = EpochOrder(dataset.size(), config.seed, epoch);
    LossBreakdown sum;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min<std::size_t>(config.batch_size, order.size() - start));
      const Tensor<float> x = dataset.Batch<float>(idx);
      const RowStats<float> stats = ComputeRowStats(x, ae_cfg.n_samples);
      Tape<float> tape;
      BoundParams<float> ae(tape, result.params, true);
      BoundParams<float> util(tape, utility_params, false);
      BoundParams<float> reid(tape, reid_params, false);
      Var<float> xs = tape.Constant(Standardize(x, stats, ae_cfg.n_samples));
      ForwardMode mode{true, &dropout_rng};
      const auto st = Gather(stages, idx), sb = Gather(subjects, idx);
      CombinedLossVars<float> loss;
      try {
        Var<float> recon = AutoencoderForward(ae, ae_cfg, xs, mode);
        loss = CombinedLoss(recon, xs, stats, st, sb, util, util_cfg, reid, reid_cfg, w);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumericFailure) throw;
        throw Error(ErrorCode::kNumericFailure, std::string(e.what()) + " at epoch " +
                                                    std::to_string(epoch) + ", batch " +
                                                    std::to_string(batch_index));
      }
      if (std::abs(loss.breakdown.combined) > 1e9) {
        throw Error(ErrorCode::kDivergence,
                    "combined loss " + std::to_string(loss.breakdown.combined) + " at epoch " +
                        std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                        "; set id_loss_ceiling to bound the identity term");
      }
      tape.Backpropagate(loss.combined);
      adam.Step(result.params, ae.Gradients());
      result.batch_trace.push_back(loss.breakdown);
      const double n = static_cast<double>(idx.size());
      sum.l_util += loss.breakdown.l_util * n;
      sum.l_id += loss.breakdown.l_id * n;
      sum.l_dist += loss.breakdown.l_dist * n;
      sum.combined += loss.breakdown.combined * n;
    }
    const double n = static_cast<double>(dataset.size());
    result.epoch_trace.push_back({epoch, {sum.l_util / n, sum.l_id / n, sum.l_dist / n, sum.combined / n}});
    if (on_epoch) on_epoch(result.epoch_trace.back());
  }
  if (utility_params.Checksum() != util_sum || reid_params.Checksum() != reid_sum) {
    throw Error(ErrorCode::kContract, "frozen classifier parameters changed during training");
  }
  return result;
}

struct AnonymizeResult {
  EpochDataset dataset;
  // Per-epoch mean squared error in microvolts^2.
  std::vector<double> epoch_mse;

  double MedianMse() const {
    if (epoch_mse.empty()) return 0.0;
    std::vector<double> v = epoch_mse;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return v[v.size() / 2];
  }
};

// Replaces every epoch with its reconstruction; labels and ids are kept.
inline AnonymizeResult AnonymizeDataset(const EpochDataset& dataset, const ParameterStore<float>& ae_params,
                                        std::size_t batch_size = 32) {
  const AutoencoderConfig cfg = AutoencoderConfigOf(ae_params);
  std::vector<Epoch> out;
  out.reserve(dataset.size());
  std::vector<double> mse;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(dataset.size(), start + batch_size); ++i) idx.push_back(i);
    const Tensor<float> recon = Reconstruct(ae_params, cfg, dataset.Batch<float>(idx));
    const std::size_t len = static_cast<std::size_t>(cfg.n_channels) * cfg.n_samples;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      Epoch e = dataset[idx[b]];
      std::copy(recon.data() + b * len, recon.data() + (b + 1) * len, e.data.begin());
      mse.push_back(Mse(std::span<const float>(e.data), std::span<const float>(dataset[idx[b]].data)));
      out.push_back(std::move(e));
    }
  }
  EpochDataset ds(std::move(out), dataset.subject_index(), dataset.sampling_rate_hz(), dataset.split());
  return {std::move(ds), std::move(mse)};
}

// Predictions of a classifier over a dataset, in dataset order.
inline std::vector<int> Predict(const ParameterStore<float>& params, const EpochDataset& ds,
                                std::size_t batch_size = 64) {
  const ClassifierConfig cfg = ClassifierConfigOf(params);
  std::vector<int> out;
  out.reserve(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    const auto pred = ArgmaxLogits(ClassifierLogits(params, cfg, ds.Batch<float>(idx)));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

inline EvalReport EvaluateUtility(const ParameterStore<float>& params, const EpochDataset& ds) {
  const auto labels = Labels(ds, LabelKind::kStage);
  return Evaluate(Predict(params, ds), labels, StageClassNames());
}

inline EvalReport EvaluateReid(const ParameterStore<float>& params, const EpochDataset& ds) {
  const auto labels = Labels(ds, LabelKind::kSubject);
  const auto names = ds.SubjectNames();
  const auto pred = Predict(params, ds);
  EvalReport r = Evaluate(pred, labels, names);
  r.f1_per_subject = F1PerSubject(pred, labels, names);
  return r;
}

struct FreshAuditResult {
  EvalReport fresh_reid;
  EvalReport fresh_utility;
  ClassifierTrainResult reid;
  ClassifierTrainResult utility;
};

// Trains new classifiers from scratch on anonymized training data and
// evaluates them on anonymized test data.
inline FreshAuditResult FreshRetrainAudit(const EpochDataset& anonymized_train,
                                          const EpochDataset& anonymized_test, const TrainConfig& config,
                                          const ClassifierConfig& utility_cfg, const ClassifierConfig& reid_cfg) {
  TrainConfig reid_train = config;
  reid_train.seed = DeriveSeed(config.seed, std::string_view("fresh-reid"));
  TrainConfig util_train = config;
  util_train.seed = DeriveSeed(config.seed, std::string_view("fresh-utility"));
  auto reid = TrainClassifier(anonymized_train, reid_train, reid_cfg, LabelKind::kSubject);
  auto util = TrainClassifier(anonymized_train, util_train, utility_cfg, LabelKind::kStage);
  FreshAuditResult r{EvaluateReid(reid.params, anonymized_test), EvaluateUtility(util.params, anonymized_test),
                     std::move(reid), std::move(util)};
  return r;
}

struct GradientCheckResult {
  double max_relative_error = 0;
  std::size_t n_checked = 0;
  std::string worst_array;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

// Compares reverse-mode gradients of `objective` with central differences
// over every trainable element. Relative error is
// |a - n| / max(|a|, |n|, floor), where floor is `floor_fraction` of the
// largest analytic gradient magnitude (elements whose true gradient is
// exactly zero, such as attention key biases, would otherwise compare
// finite-difference rounding noise against zero). The store is restored
// bit-exactly.
inline GradientCheckResult GradientCheck(
    ParameterStore<double>& store,
    const std::function<Var<double>(Tape<double>&, const BoundParams<double>&)>& objective,
    double step = 1e-4, double floor_fraction = 1e-6) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    BoundParams<double> p(tape, store, true);
    Var<double> loss = objective(tape, p);
    tape.Backpropagate(loss);
    analytic = p.Gradients();
  }
  double largest = 0;
  for (const auto& g : analytic)
    for (std::size_t j = 0; j < g.size(); ++j) largest = std::max(largest, std::abs(g[j]));
  const double floor = std::max(floor_fraction * largest, 1e-12);
  auto eval = [&]() {
    Tape<double> tape;
    BoundParams<double> p(tape, store, false);
    return objective(tape, p).value()[0];
  };
  GradientCheckResult r;
  for (std::size_t a = 0; a < store.size(); ++a) {
    Tensor<double>& t = store.At(a);
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double saved = t[j];
      t[j] = saved + step;
      const double up = eval();
      t[j] = saved - step;
      const double down = eval();
      t[j] = saved;
      const double numeric = (up - down) / (2 * step);
      const double an = analytic[a].empty() ? 0.0 : analytic[a][j];
      const double rel = std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), floor});
      ++r.n_checked;
      if (rel > r.max_relative_error) {
        r.max_relative_error = rel;
        r.worst_array = store.NameAt(a);
        r.worst_index = j;
        r.worst_analytic = an;
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

// Miniature versions of the three networks for gradient checking.
struct TinyModels {
  AutoencoderConfig ae;
  ClassifierConfig utility;
  ClassifierConfig reid;
};

inline TinyModels TinyModelConfigs(int n_subjects = 3) {
  TinyModels m;
  m.ae.n_samples = 40;
  m.ae.patch_len = 4;
  m.ae.d_model = 8;
  m.ae.n_encoder_layers = 1;
  m.ae.n_decoder_layers = 1;
  m.ae.n_heads = 2;
  m.ae.ff_dim = 8;
  m.utility = ClassifierConfig::Utility(5);
  m.utility.n_samples = 40;
  m.utility.small_kernel = 5;
  m.utility.small_stride = 2;
  m.utility.large_kernel = 20;
  m.utility.large_stride = 5;
  m.utility.conv_filters = 2;
  m.utility.hidden = 4;
  m.reid = ClassifierConfig::Reid(n_subjects);
  m.reid.n_samples = 40;
  m.reid.patch_len = 4;
  m.reid.d_model = 8;
  m.reid.n_layers = 1;
  m.reid.n_heads = 2;
  m.reid.ff_dim = 8;
  return m;
}

// Gradient of the full weighted objective with respect to the tiny
// autoencoder, with the tiny classifiers frozen, in double precision.
inline GradientCheckResult TinyAutoencoderGradientCheck(const LossWeights& w, std::uint64_t seed,
                                                        std::size_t batch = 3) {
  const TinyModels m = TinyModelConfigs();
  ParameterStore<double> ae = InitAutoencoder<double>(m.ae, DeriveSeed(seed, 1));
  const ParameterStore<double> util = InitClassifier<double>(m.utility, DeriveSeed(seed, 2));
  const ParameterStore<double> reid = InitClassifier<double>(m.reid, DeriveSeed(seed, 3));
  Rng rng(DeriveSeed(seed, 4));
  Tensor<double> x({batch, 2, static_cast<std::size_t>(m.ae.n_samples)});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 20.0 * rng.Normal() + 3.0;
  std::vector<int> stages, subjects;
  for (std::size_t b = 0; b < batch; ++b) {
    stages.push_back(static_cast<int>(rng.Below(5)));
    subjects.push_back(static_cast<int>(rng.Below(3)));
  }
  const RowStats<double> stats = ComputeRowStats(x, m.ae.n_samples);
  const Tensor<double> xs = Standardize(x, stats, m.ae.n_samples);
  return GradientCheck(ae, [&](Tape<double>& tape, const BoundParams<double>& p) {
    BoundParams<double> up(tape, util, false);
    BoundParams<double> rp(tape, reid, false);
    Var<double> in = tape.Constant(xs);
    Var<double> recon = AutoencoderForward(p, m.ae, in);
    return CombinedLoss(recon, in, stats, stages, subjects, up, m.utility, rp, m.reid, w).combined;
  });
}

// Gradient of mean cross-entropy with respect to a tiny classifier.
inline GradientCheckResult TinyClassifierGradientCheck(ClassifierKind kind, std::uint64_t seed,
                                                       std::size_t batch = 3) {
  const TinyModels m = TinyModelConfigs();
  const ClassifierConfig cfg = kind == ClassifierKind::kUtilityCnn ? m.utility : m.reid;
  ParameterStore<double> store = InitClassifier<double>(cfg, DeriveSeed(seed, 1));
  Rng rng(DeriveSeed(seed, 4));
  Tensor<double> x({batch, 2, static_cast<std::size_t>(cfg.n_samples)});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 20.0 * rng.Normal();
  std::vector<int> labels;
  for (std::size_t b = 0; b < batch; ++b) labels.push_back(static_cast<int>(rng.Below(cfg.n_classes)));
  return GradientCheck(store, [&](Tape<double>& tape, const BoundParams<double>& p) {
    return ops::CrossEntropy(ClassifierForward(p, cfg, tape.Constant(x)), std::span<const int>(labels));
  });
}

}  // namespace eeganon
