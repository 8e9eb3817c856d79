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
// Command-line driver for the anonymization pipeline.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eeganon/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using eeganon::PipelineConfig;

constexpr int kExitThresholdsFailed = 1;
constexpr int kExitError = 2;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
};

PipelineConfig LoadConfig(const GlobalOptions& g) {
  if (g.config.empty()) return eeganon::ParsePipelineConfig(nlohmann::json::object(), g.seed);
  return eeganon::LoadPipelineConfig(g.config, g.seed);
}

fs::path RunDir(const GlobalOptions& g, const PipelineConfig& cfg) {
  return g.run_dir.empty() ? eeganon::DefaultRunDir(cfg.seed) : fs::path(g.run_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG subject anonymization: train, apply and audit an anonymizing autoencoder"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the master seed");
  app.add_option("--run-dir", g.run_dir,
                 std::string("Run directory (default: $") + eeganon::kRunRootEnv + "/seed-<seed>, or ./runs/...)");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus as EDF + hypnogram CSV");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory (default: config data_dir)");

  auto* prepare = app.add_subcommand("prepare", "Extract sleep periods and epochs from EDF recordings");
  std::string edf_dir, hyp_dir, prepare_out;
  prepare->add_option("--edf-dir", edf_dir, "Directory of .edf files (default: config data_dir)");
  prepare->add_option("--hyp-dir", hyp_dir, "Directory of <name>.hyp.csv files (default: --edf-dir)");
  prepare->add_option("--out", prepare_out, "Dataset file (default: config dataset)");

  auto* train = app.add_subcommand("train", "Train one phase");
  std::string phase;
  train->add_option("phase", phase, "utility | reid | anon | fresh-audit")
      ->required()
      ->check(CLI::IsMember({"utility", "reid", "anon", "fresh-audit"}));

  auto* anonymize = app.add_subcommand("anonymize", "Apply the trained autoencoder to both splits");
  auto* eval = app.add_subcommand("eval", "Write reports; exit 0 iff the configured thresholds hold");

  auto* sweep = app.add_subcommand("sweep", "Retrain the autoencoder over a range of weights");
  std::string param = "omega_id";
  std::vector<double> values;
  sweep->add_option("--param", param, "Swept weight")->check(CLI::IsMember({"omega_id"}));
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  const eeganon::Logger log = eeganon::StderrLogger();
  try {
    const PipelineConfig cfg = LoadConfig(g);
    if (synth->parsed()) {
      const fs::path manifest = eeganon::CmdSynth(cfg, synth_out.empty() ? cfg.data_dir : fs::path(synth_out), log);
      std::cout << manifest.string() << '\n';
      return 0;
    }
    if (prepare->parsed()) {
      const fs::path in = edf_dir.empty() ? cfg.data_dir : fs::path(edf_dir);
      const fs::path out = prepare_out.empty() ? cfg.DatasetPath() : fs::path(prepare_out);
      const auto r = eeganon::CmdPrepare(in, hyp_dir.empty() ? in : fs::path(hyp_dir), out, cfg, log);
      std::cout << r.counts_csv;
      return 0;
    }
    const eeganon::RunLayout run = eeganon::OpenRun(RunDir(g, cfg), cfg);
    if (train->parsed()) {
      if (phase == "utility") eeganon::CmdTrainClassifier(run, cfg, eeganon::LabelKind::kStage, log);
      if (phase == "reid") eeganon::CmdTrainClassifier(run, cfg, eeganon::LabelKind::kSubject, log);
      if (phase == "anon") eeganon::CmdTrainAnon(run, cfg, log);
      if (phase == "fresh-audit") eeganon::CmdFreshAudit(run, cfg, log);
      return 0;
    }
    if (anonymize->parsed()) {
      eeganon::CmdAnonymize(run, cfg, log);
      return 0;
    }
    if (eval->parsed()) {
      const auto outcome = eeganon::CmdEval(run, cfg, log);
      std::cout << eeganon::PrivacySummaryCsv(outcome);
      return outcome.passed ? 0 : kExitThresholdsFailed;
    }
    if (sweep->parsed()) {
      std::cout << eeganon::SweepCsv(eeganon::CmdSweep(run, cfg, values, log));
      return 0;
    }
  } catch (const eeganon::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
