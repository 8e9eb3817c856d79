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

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "eeganon/dataset.hpp"
#include "eeganon/errors.hpp"
#include "eeganon/evaluation.hpp"
#include "eeganon/models.hpp"
#include "eeganon/params.hpp"
#include "eeganon/signal_io.hpp"
#include "eeganon/synthetic.hpp"
#include "eeganon/training.hpp"
#include "json.hpp"

namespace eeganon {

namespace fs = std::filesystem;

inline constexpr const char* kRunRootEnv = "EEGANON_RUN_ROOT";

struct Thresholds {
  double min_baseline_reid = 0.80;
  double max_frozen_reid = 0.25;
  double min_baseline_utility = 0.85;
  double max_utility_drop = 0.10;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Thresholds, min_baseline_reid, max_frozen_reid,
                                                min_baseline_utility, max_utility_drop)

// A training phase: a named preset with optional field overrides.
struct PhaseConfig {
  std::string preset;
  TrainConfig train;
};

struct PipelineConfig {
  fs::path data_dir = "data";
  // Prepared dataset; defaults to data_dir/dataset.eds.
  fs::path dataset;
  SynthConfig synth;
  std::vector<std::string> channels = {"EEG Fpz-Cz", "EEG Pz-Oz"};
  SleepPeriodOptions sleep_period;
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
  PhaseConfig utility{"classifier-default", NamedPreset("classifier-default")};
  PhaseConfig reid{"classifier-default", NamedPreset("classifier-default")};
  PhaseConfig anon{"desk-preset", NamedPreset("desk-preset")};
  PhaseConfig fresh{"classifier-default", NamedPreset("classifier-default")};
  AutoencoderConfig autoencoder;
  ClassifierConfig utility_model = ClassifierConfig::Utility(kNumStages);
  // n_classes is taken from the training split.
  ClassifierConfig reid_model = ClassifierConfig::Reid(1);
  Thresholds thresholds;

  fs::path DatasetPath() const { return dataset.empty() ? data_dir / "dataset.eds" : dataset; }
};

namespace pipeline_internal {

inline PhaseConfig ParsePhase(const nlohmann::json& j, const std::string& name, const PhaseConfig& fallback,
                              std::uint64_t master_seed) {
  PhaseConfig p = fallback;
  bool explicit_seed = false;
  if (j.is_string()) {
    p.preset = j.get<std::string>();
    p.train = NamedPreset(p.preset);
  } else if (j.is_object()) {
    if (j.contains("preset")) {
      p.preset = j.at("preset").get<std::string>();
      p.train = NamedPreset(p.preset);
    }
    MergeTrainConfig(j, p.train);
    explicit_seed = j.contains("seed");
  } else if (!j.is_null()) {
    throw Error(ErrorCode::kConfig, name + ": expected a preset name or an object");
  }
  if (!explicit_seed) p.train.seed = DeriveSeed(master_seed, std::string_view(name));
  p.train.Validate(name == "anon");
  return p;
}

inline nlohmann::json PhaseJson(const PhaseConfig& p) {
  nlohmann::json j = p.train;
  j["preset"] = p.preset;
  return j;
}

}  // namespace pipeline_internal

// Builds the effective configuration. Phase seeds not given explicitly are
// derived from the master seed, which `seed_override` replaces.
inline PipelineConfig ParsePipelineConfig(const nlohmann::json& j,
                                          std::optional<std::uint64_t> seed_override = std::nullopt) {
  using pipeline_internal::ParsePhase;
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "pipeline config must be a JSON object");
  PipelineConfig c;
  try {
    c.seed = seed_override.value_or(j.value("seed", c.seed));
    c.data_dir = j.value("data_dir", c.data_dir.string());
    c.dataset = j.value("dataset", std::string());
    if (j.contains("synth")) c.synth = j.at("synth").get<SynthConfig>();
    c.synth.Validate();
    c.channels = j.value("channels", c.channels);
    if (j.contains("sleep_period")) {
      const auto& s = j.at("sleep_period");
      c.sleep_period.padding_s = s.value("padding_s", c.sleep_period.padding_s);
      c.sleep_period.require_n1_onset = s.value("require_n1_onset", c.sleep_period.require_n1_onset);
    }
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    if (!(c.train_fraction > 0 && c.train_fraction < 1)) {
      throw Error(ErrorCode::kConfig, "train_fraction: must lie in (0, 1)");
    }
    const nlohmann::json none;
    auto phase = [&](const char* key, const PhaseConfig& fallback) {
      return ParsePhase(j.contains(key) ? j.at(key) : none, key, fallback, c.seed);
    };
    c.utility = phase("utility", c.utility);
    c.reid = phase("reid", c.reid);
    c.anon = phase("anon", c.anon);
    c.fresh = phase("fresh", c.fresh);
    if (j.contains("models")) {
      const auto& m = j.at("models");
      if (m.contains("autoencoder")) c.autoencoder = m.at("autoencoder").get<AutoencoderConfig>();
      if (m.contains("utility")) c.utility_model = m.at("utility").get<ClassifierConfig>();
      if (m.contains("reid")) c.reid_model = m.at("reid").get<ClassifierConfig>();
    }
    c.utility_model.kind = ClassifierKind::kUtilityCnn;
    c.reid_model.kind = ClassifierKind::kReidTransformer;
    c.autoencoder.Validate();
    c.utility_model.Validate();
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds").get<Thresholds>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  return c;
}

inline PipelineConfig LoadPipelineConfig(const fs::path& path,
                                         std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return ParsePipelineConfig(j, seed_override);
}

inline nlohmann::json ToJson(const PipelineConfig& c) {
  using pipeline_internal::PhaseJson;
  return {{"data_dir", c.data_dir.string()},
          {"dataset", c.DatasetPath().string()},
          {"synth", c.synth},
          {"channels", c.channels},
          {"sleep_period",
           {{"padding_s", c.sleep_period.padding_s}, {"require_n1_onset", c.sleep_period.require_n1_onset}}},
          {"train_fraction", c.train_fraction},
          {"seed", c.seed},
          {"utility", PhaseJson(c.utility)},
          {"reid", PhaseJson(c.reid)},
          {"anon", PhaseJson(c.anon)},
          {"fresh", PhaseJson(c.fresh)},
          {"models", {{"autoencoder", c.autoencoder}, {"utility", c.utility_model}, {"reid", c.reid_model}}},
          {"thresholds", c.thresholds}};
}

// Default run directory: $EEGANON_RUN_ROOT (or ./runs) / seed-<seed>.
inline fs::path DefaultRunDir(std::uint64_t seed) {
  const char* root = std::getenv(kRunRootEnv);
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / ("seed-" + std::to_string(seed));
}

using Logger = std::function<void(const std::string&)>;

inline Logger StderrLogger() {
  return [](const std::string& m) { std::cerr << m << '\n'; };
}

// Artifact locations inside a run directory.
struct RunLayout {
  fs::path root;

  fs::path Config() const { return root / "config.json"; }
  fs::path TrainSplit() const { return root / "split" / "train.eds"; }
  fs::path TestSplit() const { return root / "split" / "test.eds"; }
  fs::path UtilityCheckpoint() const { return root / "utility" / "model.ckpt"; }
  fs::path ReidCheckpoint() const { return root / "reid" / "model.ckpt"; }
  fs::path AnonDir() const { return root / "anon"; }
  fs::path AnonCheckpoint() const { return AnonDir() / "model.ckpt"; }
  fs::path AnonymizedTrain() const { return root / "anonymized" / "train.eds"; }
  fs::path AnonymizedTest() const { return root / "anonymized" / "test.eds"; }
  fs::path FreshReidCheckpoint() const { return root / "fresh" / "reid.ckpt"; }
  fs::path FreshUtilityCheckpoint() const { return root / "fresh" / "utility.ckpt"; }
  fs::path Reports() const { return root / "reports"; }
  fs::path SweepDir() const { return root / "sweep"; }
};

namespace pipeline_internal {

inline void Require(const fs::path& artifact, const std::string& producer) {
  if (!fs::exists(artifact)) {
    throw Error(ErrorCode::kDependency,
                artifact.string() + " not found; run `eeganon " + producer + "` first");
  }
}

// Runs are append-only: a phase refuses to replace its own outputs.
inline void RequireFresh(const fs::path& artifact) {
  if (fs::exists(artifact)) {
    throw Error(ErrorCode::kConfig,
                artifact.string() + " already exists; runs are append-only, use a new --run-dir");
  }
}

inline void WriteJson(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline std::string ClassifierTraceCsv(const ClassifierTrainResult& r) {
  std::ostringstream out;
  out << "epoch,loss\n";
  out << "init," << FormatMetric(r.initial_loss) << '\n';
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i) out << i << ',' << FormatMetric(r.loss_trace[i]) << '\n';
  return out.str();
}

inline std::string BreakdownRow(const LossBreakdown& b) {
  return FormatMetric(b.l_util) + ',' + FormatMetric(b.l_id) + ',' + FormatMetric(b.l_dist) + ',' +
         FormatMetric(b.combined);
}

inline std::string OmegaLabel(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace pipeline_internal

// Opens or creates a run directory. An existing run must have been created
// with the same effective configuration.
inline RunLayout OpenRun(const fs::path& run_dir, const PipelineConfig& cfg) {
  RunLayout run{run_dir};
  const nlohmann::json echo = ToJson(cfg);
  if (fs::exists(run.Config())) {
    std::ifstream in(run.Config());
    const nlohmann::json existing = nlohmann::json::parse(in);
    if (existing != echo) {
      throw Error(ErrorCode::kConfig, run_dir.string() + " was created with a different configuration");
    }
  } else {
    pipeline_internal::WriteJson(run.Config(), echo);
  }
  return run;
}

// --- synth -------------------------------------------------------------------

// Generates the synthetic corpus and exports it as EDF + hypnogram CSV.
inline fs::path CmdSynth(const PipelineConfig& cfg, const fs::path& out_dir, const Logger& log = {}) {
  const SyntheticCorpus corpus = GenerateCorpus(cfg.synth);
  ExportCorpus(corpus, out_dir);
  if (log) log("synthesized " + std::to_string(corpus.dataset.size()) + " epochs into " + out_dir.string());
  return out_dir / "manifest.json";
}

// --- prepare -----------------------------------------------------------------

struct PrepareResult {
  EpochDataset dataset;
  std::vector<std::string> warnings;
  std::string counts_csv;
};

inline std::string StageCountsCsv(const EpochDataset& ds) {
  std::map<std::string, std::array<int, kNumStages>> counts;
  for (const Epoch& e : ds.epochs()) counts[e.subject_id][static_cast<int>(e.stage)]++;
  std::ostringstream out;
  out << "subject";
  for (const SleepStage s : kAllStages) out << ',' << StageName(s);
  out << ",total\n";
  for (const auto& [subject, c] : counts) {
    out << subject;
    int total = 0;
    for (const int n : c) {
      out << ',' << n;
      total += n;
    }
    out << ',' << total << '\n';
  }
  return out.str();
}

// Reads every *.edf in `edf_dir` with its <stem>.hyp.csv from `hyp_dir`,
// trims to the padded sleep period and cuts labeled epochs. Recordings
// without sleep are skipped with a warning.
inline PrepareResult PrepareDataset(const fs::path& edf_dir, const fs::path& hyp_dir, const PipelineConfig& cfg,
                                    const Logger& log = {}) {
  if (!fs::is_directory(edf_dir)) throw Error(ErrorCode::kIo, "not a directory: " + edf_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(edf_dir)) {
    if (entry.path().extension() == ".edf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::kIo, "no .edf files in " + edf_dir.string());
  EdfReadOptions options;
  options.channel_allowlist = cfg.channels;
  std::vector<Epoch> epochs;
  PrepareResult result;
  std::optional<double> rate;
  for (const fs::path& file : files) {
    const fs::path hyp_path = hyp_dir / (file.stem().string() + ".hyp.csv");
    try {
      const Recording rec = ReadEdf(file, options);
      if (rate && *rate != rec.sampling_rate_hz) {
        throw Error(ErrorCode::kUnsupportedFormat, "sampling rate differs from earlier recordings");
      }
      rate = rec.sampling_rate_hz;
      const auto hyp = ReadHypnogram(hyp_path);
      Recording trimmed;
      try {
        trimmed = ExtractSleepPeriod(rec, hyp, cfg.sleep_period);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptySleep) throw;
        result.warnings.push_back(file.filename().string() + ": " + e.message() + "; skipped");
        continue;
      }
      auto cut = Epochize(trimmed, hyp, epochs.size());
      if (log) log(file.filename().string() + ": " + std::to_string(cut.size()) + " epochs");
      for (auto& e : cut) epochs.push_back(std::move(e));
    } catch (const Error& e) {
      throw Error(e.code(), file.filename().string() + ": " + e.message(), e.location());
    }
  }
  if (epochs.empty()) throw Error(ErrorCode::kEmptySleep, "no epochs extracted from " + edf_dir.string());
  result.dataset = EpochDataset(std::move(epochs), rate.value_or(100.0));
  for (const auto& w : result.warnings) result.dataset.AddWarning(w);
  result.counts_csv = StageCountsCsv(result.dataset);
  return result;
}

inline PrepareResult CmdPrepare(const fs::path& edf_dir, const fs::path& hyp_dir, const fs::path& out,
                                const PipelineConfig& cfg, const Logger& log = {}) {
  PrepareResult r = PrepareDataset(edf_dir, hyp_dir, cfg, log);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  SaveDataset(r.dataset, out);
  WriteText(fs::path(out.string() + ".counts.csv"), r.counts_csv);
  for (const auto& w : r.warnings) {
    if (log) log("warning: " + w);
  }
  return r;
}

// --- splits ------------------------------------------------------------------

struct Splits {
  EpochDataset train;
  EpochDataset test;
};

// Loads the run's split, creating it from the prepared dataset on first use.
inline Splits EnsureSplit(const RunLayout& run, const PipelineConfig& cfg, const Logger& log = {}) {
  if (fs::exists(run.TrainSplit()) && fs::exists(run.TestSplit())) {
    return {LoadDataset(run.TrainSplit()), LoadDataset(run.TestSplit())};
  }
  pipeline_internal::Require(cfg.DatasetPath(), "prepare");
  const EpochDataset all = LoadDataset(cfg.DatasetPath());
  SplitResult s = StratifiedSplit(all, cfg.train_fraction, DeriveSeed(cfg.seed, std::string_view("split")));
  fs::create_directories(run.TrainSplit().parent_path());
  SaveDataset(s.train, run.TrainSplit());
  SaveDataset(s.test, run.TestSplit());
  if (log) {
    log("split " + std::to_string(s.train.size()) + " train / " + std::to_string(s.test.size()) + " test epochs");
    for (const auto& w : s.warnings) log("warning: " + w);
  }
  return {std::move(s.train), std::move(s.test)};
}

// --- train -------------------------------------------------------------------

inline ClassifierTrainResult CmdTrainClassifier(const RunLayout& run, const PipelineConfig& cfg, LabelKind kind,
                                                const Logger& log = {}) {
  using namespace pipeline_internal;
  const bool utility = kind == LabelKind::kStage;
  const fs::path ckpt = utility ? run.UtilityCheckpoint() : run.ReidCheckpoint();
  RequireFresh(ckpt);
  const Splits s = EnsureSplit(run, cfg, log);
  ClassifierConfig model = utility ? cfg.utility_model : cfg.reid_model;
  if (!utility) model.n_classes = s.train.n_subjects();
  const PhaseConfig& phase = utility ? cfg.utility : cfg.reid;
  const char* name = utility ? "utility" : "reid";
  auto r = TrainClassifier(s.train, phase.train, model, kind, [&](int epoch, double loss) {
    if (log) log(std::string(name) + " epoch " + std::to_string(epoch) + " loss " + FormatMetric(loss));
  });
  WriteJson(ckpt.parent_path() / "train_config.json", PhaseJson(phase));
  SaveParams(r.params, ckpt);
  WriteText(ckpt.parent_path() / "loss_trace.csv", ClassifierTraceCsv(r));
  return r;
}

// Trains an autoencoder against the run's frozen classifiers into `dir`.
inline AutoencoderTrainResult TrainAnonInto(const RunLayout& run, const PipelineConfig& cfg, const PhaseConfig& phase,
                                            const fs::path& dir, const Logger& log = {}) {
  using namespace pipeline_internal;
  Require(run.UtilityCheckpoint(), "train utility");
  Require(run.ReidCheckpoint(), "train reid");
  RequireFresh(dir / "model.ckpt");
  const Splits s = EnsureSplit(run, cfg, log);
  const auto util = LoadParams<float>(run.UtilityCheckpoint());
  const auto reid = LoadParams<float>(run.ReidCheckpoint());
  if (util.kind() != kUtilityKind || reid.kind() != kReidKind) {
    throw Error(ErrorCode::kIncompatibleCheckpoint, "utility/reid checkpoints hold the wrong model kinds");
  }
  auto r = TrainAutoencoder(s.train, phase.train, cfg.autoencoder, util, reid, [&](const EpochLoss& e) {
    if (log) {
      log("anon epoch " + std::to_string(e.epoch) + " l_util " + FormatMetric(e.mean.l_util) + " l_id " +
          FormatMetric(e.mean.l_id) + " l_dist " + FormatMetric(e.mean.l_dist) + " combined " +
          FormatMetric(e.mean.combined));
    }
  });
  WriteJson(dir / "train_config.json", PhaseJson(phase));
  SaveParams(r.params, dir / "model.ckpt");
  std::ostringstream epochs, batches;
  epochs << "epoch,l_util,l_id,l_dist,combined\n";
  for (const auto& e : r.epoch_trace) epochs << e.epoch << ',' << BreakdownRow(e.mean) << '\n';
  batches << "step,l_util,l_id,l_dist,combined\n";
  for (std::size_t i = 0; i < r.batch_trace.size(); ++i) batches << i << ',' << BreakdownRow(r.batch_trace[i]) << '\n';
  WriteText(dir / "loss_trace.csv", epochs.str());
  WriteText(dir / "batch_trace.csv", batches.str());
  return r;
}

inline AutoencoderTrainResult CmdTrainAnon(const RunLayout& run, const PipelineConfig& cfg, const Logger& log = {}) {
  return TrainAnonInto(run, cfg, cfg.anon, run.AnonDir(), log);
}

// --- anonymize ---------------------------------------------------------------

struct AnonymizedSplits {
  AnonymizeResult train;
  AnonymizeResult test;
};

inline AnonymizedSplits AnonymizeSplits(const Splits& s, const fs::path& ae_ckpt, const fs::path& out_dir) {
  pipeline_internal::RequireFresh(out_dir / "test.eds");
  const auto ae = LoadParams<float>(ae_ckpt);
  if (ae.kind() != kAutoencoderKind) {
    throw Error(ErrorCode::kIncompatibleCheckpoint, ae_ckpt.string() + " is not an autoencoder checkpoint");
  }
  AnonymizedSplits out{AnonymizeDataset(s.train, ae), AnonymizeDataset(s.test, ae)};
  fs::create_directories(out_dir);
  SaveDataset(out.train.dataset, out_dir / "train.eds");
  SaveDataset(out.test.dataset, out_dir / "test.eds");
  std::ostringstream mse;
  mse << "split,epoch_id,subject,stage,mse_uv2\n";
  for (const auto* part : {&out.train, &out.test}) {
    for (std::size_t i = 0; i < part->dataset.size(); ++i) {
      const Epoch& e = part->dataset[i];
      mse << part->dataset.split() << ',' << e.id << ',' << e.subject_id << ',' << StageName(e.stage) << ','
          << FormatMetric(part->epoch_mse[i]) << '\n';
    }
  }
  WriteText(out_dir / "epoch_mse.csv", mse.str());
  return out;
}

inline AnonymizedSplits CmdAnonymize(const RunLayout& run, const PipelineConfig& cfg, const Logger& log = {}) {
  pipeline_internal::Require(run.AnonCheckpoint(), "train anon");
  const Splits s = EnsureSplit(run, cfg, log);
  auto out = AnonymizeSplits(s, run.AnonCheckpoint(), run.AnonymizedTest().parent_path());
  if (log) log("anonymized test median MSE " + FormatMetric(out.test.MedianMse()) + " uV^2");
  return out;
}

// --- fresh audit -------------------------------------------------------------

inline FreshAuditResult CmdFreshAudit(const RunLayout& run, const PipelineConfig& cfg, const Logger& log = {}) {
  using namespace pipeline_internal;
  Require(run.AnonymizedTrain(), "anonymize");
  Require(run.AnonymizedTest(), "anonymize");
  RequireFresh(run.FreshReidCheckpoint());
  const EpochDataset train = LoadDataset(run.AnonymizedTrain());
  const EpochDataset test = LoadDataset(run.AnonymizedTest());
  ClassifierConfig reid_model = cfg.reid_model;
  reid_model.n_classes = train.n_subjects();
  FreshAuditResult r = FreshRetrainAudit(train, test, cfg.fresh.train, cfg.utility_model, reid_model);
  fs::create_directories(run.FreshReidCheckpoint().parent_path());
  SaveParams(r.reid.params, run.FreshReidCheckpoint());
  SaveParams(r.utility.params, run.FreshUtilityCheckpoint());
  WriteText(run.root / "fresh" / "reid_loss_trace.csv", ClassifierTraceCsv(r.reid));
  WriteText(run.root / "fresh" / "utility_loss_trace.csv", ClassifierTraceCsv(r.utility));
  WriteJson(run.root / "fresh" / "train_config.json", PhaseJson(cfg.fresh));
  if (log) {
    log("fresh re-id accuracy on anonymized test " + FormatMetric(r.fresh_reid.accuracy) +
        ", fresh utility " + FormatMetric(r.fresh_utility.accuracy));
  }
  return r;
}

// --- eval --------------------------------------------------------------------

struct ThresholdCheck {
  std::string name;
  double value = 0;
  double limit = 0;
  bool passed = false;
};

struct EvalOutcome {
  EvalReport baseline_reid;
  EvalReport frozen_reid;
  EvalReport fresh_reid;
  EvalReport baseline_utility;
  EvalReport frozen_utility;
  EvalReport fresh_utility;
  double chance = 0;
  std::vector<ThresholdCheck> checks;
  bool passed = false;
};

inline std::string PrivacySummaryCsv(const EvalOutcome& o) {
  std::ostringstream out;
  out << "evaluation,accuracy\n";
  out << "baseline_reid," << FormatMetric(o.baseline_reid.accuracy) << '\n';
  out << "frozen_reid_on_anonymized," << FormatMetric(o.frozen_reid.accuracy) << '\n';
  out << "fresh_reid_on_anonymized," << FormatMetric(o.fresh_reid.accuracy) << '\n';
  out << "chance," << FormatMetric(o.chance) << '\n';
  return out.str();
}

inline std::string SubjectF1Csv(const EvalOutcome& o) {
  std::ostringstream out;
  out << "subject,baseline_f1,frozen_on_anonymized_f1,fresh_on_anonymized_f1\n";
  for (const auto& [subject, f1] : o.baseline_reid.f1_per_subject) {
    out << subject << ',' << FormatMetric(f1) << ',' << FormatMetric(o.frozen_reid.f1_per_subject.at(subject)) << ','
        << FormatMetric(o.fresh_reid.f1_per_subject.at(subject)) << '\n';
  }
  return out.str();
}

// Evaluates every model of the run, writes the report set and checks the
// configured thresholds.
inline EvalOutcome CmdEval(const RunLayout& run, const PipelineConfig& cfg, const Logger& log = {}) {
  using namespace pipeline_internal;
  Require(run.UtilityCheckpoint(), "train utility");
  Require(run.ReidCheckpoint(), "train reid");
  Require(run.TestSplit(), "train utility");
  Require(run.AnonymizedTest(), "anonymize");
  Require(run.FreshReidCheckpoint(), "train fresh-audit");
  const EpochDataset test = LoadDataset(run.TestSplit());
  const EpochDataset anon = LoadDataset(run.AnonymizedTest());
  const auto util = LoadParams<float>(run.UtilityCheckpoint());
  const auto reid = LoadParams<float>(run.ReidCheckpoint());
  const auto fresh_util = LoadParams<float>(run.FreshUtilityCheckpoint());
  const auto fresh_reid = LoadParams<float>(run.FreshReidCheckpoint());

  EvalOutcome o;
  o.baseline_reid = EvaluateReid(reid, test);
  o.frozen_reid = EvaluateReid(reid, anon);
  o.fresh_reid = EvaluateReid(fresh_reid, anon);
  o.baseline_utility = EvaluateUtility(util, test);
  o.frozen_utility = EvaluateUtility(util, anon);
  o.fresh_utility = EvaluateUtility(fresh_util, anon);
  o.chance = 1.0 / static_cast<double>(test.n_subjects());

  const Thresholds& t = cfg.thresholds;
  o.checks = {
      {"baseline_reid_min", o.baseline_reid.accuracy, t.min_baseline_reid,
       o.baseline_reid.accuracy >= t.min_baseline_reid},
      {"frozen_reid_max", o.frozen_reid.accuracy, t.max_frozen_reid, o.frozen_reid.accuracy <= t.max_frozen_reid},
      {"baseline_utility_min", o.baseline_utility.accuracy, t.min_baseline_utility,
       o.baseline_utility.accuracy >= t.min_baseline_utility},
      {"frozen_utility_min", o.frozen_utility.accuracy, o.baseline_utility.accuracy - t.max_utility_drop,
       o.frozen_utility.accuracy >= o.baseline_utility.accuracy - t.max_utility_drop},
  };
  o.passed = std::all_of(o.checks.begin(), o.checks.end(), [](const ThresholdCheck& c) { return c.passed; });

  const fs::path dir = run.Reports();
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, EvalReport>> utility_rows = {
      {"baseline", o.baseline_utility}, {"frozen_on_anonymized", o.frozen_utility},
      {"fresh_on_anonymized", o.fresh_utility}};
  WriteText(dir / "privacy_summary.csv", PrivacySummaryCsv(o));
  WriteText(dir / "utility_table.csv", ReportTableCsv(utility_rows));
  WriteText(dir / "utility_table.txt", ReportTableText(utility_rows));
  WriteText(dir / "utility_delta.csv", DeltaCsv(CompareReports(o.baseline_utility, o.frozen_utility)));
  WriteText(dir / "reid_subject_f1.csv", SubjectF1Csv(o));
  std::ostringstream top;
  top << "rank,subject,baseline_f1\n";
  const auto ranked = TopSubjects(o.baseline_reid.f1_per_subject);
  for (std::size_t i = 0; i < ranked.size(); ++i)
    top << i + 1 << ',' << ranked[i].first << ',' << FormatMetric(ranked[i].second) << '\n';
  WriteText(dir / "top_subjects.csv", top.str());
  WriteText(dir / "psd_comparison.csv", PsdComparisonCsv(test, anon));
  WriteText(dir / "signal_overlay.csv", SignalOverlayCsv(test[0], anon[0], test.sampling_rate_hz()));
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : o.checks) {
    checks.push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"passed", c.passed}});
  }
  WriteJson(dir / "eval.json", {{"baseline_reid", ToJson(o.baseline_reid)},
                                {"frozen_reid_on_anonymized", ToJson(o.frozen_reid)},
                                {"fresh_reid_on_anonymized", ToJson(o.fresh_reid)},
                                {"baseline_utility", ToJson(o.baseline_utility)},
                                {"frozen_utility_on_anonymized", ToJson(o.frozen_utility)},
                                {"fresh_utility_on_anonymized", ToJson(o.fresh_utility)},
                                {"chance", o.chance},
                                {"checks", checks},
                                {"passed", o.passed}});
  if (log) {
    log(PrivacySummaryCsv(o));
    log(ReportTableText(utility_rows));
    for (const auto& c : o.checks) {
      log(std::string(c.passed ? "ok   " : "FAIL ") + c.name + " " + FormatMetric(c.value) + " vs " +
          FormatMetric(c.limit));
    }
  }
  return o;
}

// --- sweep -------------------------------------------------------------------

struct SweepRow {
  double omega_id = 0;
  double frozen_reid_acc = 0;
  double fresh_reid_acc = 0;
  double utility_acc = 0;
};

inline std::string SweepCsv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "omega_id,frozen_reid_acc,fresh_reid_acc,utility_acc\n";
  for (const auto& r : rows) {
    out << pipeline_internal::OmegaLabel(r.omega_id) << ',' << FormatMetric(r.frozen_reid_acc) << ','
        << FormatMetric(r.fresh_reid_acc) << ',' << FormatMetric(r.utility_acc) << '\n';
  }
  return out.str();
}

// Retrains the autoencoder for each omega_id against the run's frozen
// classifiers. Values are deduplicated and sorted.
inline std::vector<SweepRow> CmdSweep(const RunLayout& run, const PipelineConfig& cfg, std::vector<double> values,
                                      const Logger& log = {}) {
  using namespace pipeline_internal;
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one value");
  for (const double v : values) {
    if (!(v >= 0)) throw Error(ErrorCode::kInvalidArgument, "omega_id values must be non-negative");
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  Require(run.UtilityCheckpoint(), "train utility");
  Require(run.ReidCheckpoint(), "train reid");
  RequireFresh(run.SweepDir() / "sweep_omega_id.csv");
  const Splits s = EnsureSplit(run, cfg, log);
  const auto util = LoadParams<float>(run.UtilityCheckpoint());
  const auto reid = LoadParams<float>(run.ReidCheckpoint());
  std::vector<SweepRow> rows;
  for (const double v : values) {
    const fs::path dir = run.SweepDir() / ("omega_id_" + OmegaLabel(v));
    if (log) log("sweep omega_id = " + OmegaLabel(v));
    PhaseConfig phase = cfg.anon;
    phase.train.omega_id = v;
    if (phase.train.omega_util == 0 && phase.train.omega_id == 0 && phase.train.omega_dist == 0) {
      throw Error(ErrorCode::kConfig, "sweep point omega_id = 0 leaves every weight at zero");
    }
    TrainAnonInto(run, cfg, phase, dir, log);
    const AnonymizedSplits anon = AnonymizeSplits(s, dir / "model.ckpt", dir / "anonymized");
    ClassifierConfig reid_model = cfg.reid_model;
    reid_model.n_classes = s.train.n_subjects();
    TrainConfig fresh = cfg.fresh.train;
    fresh.seed = DeriveSeed(fresh.seed, std::string_view("fresh-reid"));
    const auto fresh_reid = TrainClassifier(anon.train.dataset, fresh, reid_model, LabelKind::kSubject);
    SaveParams(fresh_reid.params, dir / "fresh_reid.ckpt");
    SweepRow row{v, EvaluateReid(reid, anon.test.dataset).accuracy,
                 EvaluateReid(fresh_reid.params, anon.test.dataset).accuracy,
                 EvaluateUtility(util, anon.test.dataset).accuracy};
    if (log) {
      log("omega_id " + OmegaLabel(v) + ": frozen re-id " + FormatMetric(row.frozen_reid_acc) + ", fresh re-id " +
          FormatMetric(row.fresh_reid_acc) + ", utility " + FormatMetric(row.utility_acc));
    }
    rows.push_back(row);
  }
  WriteText(run.SweepDir() / "sweep_omega_id.csv", SweepCsv(rows));
  return rows;
}

// synth -> prepare -> utility -> reid -> anon -> anonymize -> fresh-audit -> eval.
inline EvalOutcome RunFullPipeline(const PipelineConfig& cfg, const fs::path& run_dir, const Logger& log = {}) {
  CmdSynth(cfg, cfg.data_dir, log);
  CmdPrepare(cfg.data_dir, cfg.data_dir, cfg.DatasetPath(), cfg, log);
  const RunLayout run = OpenRun(run_dir, cfg);
  CmdTrainClassifier(run, cfg, LabelKind::kStage, log);
  CmdTrainClassifier(run, cfg, LabelKind::kSubject, log);
  CmdTrainAnon(run, cfg, log);
  CmdAnonymize(run, cfg, log);
  CmdFreshAudit(run, cfg, log);
  return CmdEval(run, cfg, log);
}

}  // namespace eeganon
