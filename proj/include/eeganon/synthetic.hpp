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

// Synthetic two-channel sleep EEG with planted subject fingerprints and
// stage signatures, plus spectral oracles for both labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eeganon/dataset.hpp"
#include "eeganon/dsp.hpp"
#include "eeganon/errors.hpp"
#include "eeganon/random.hpp"
#include "eeganon/signal_io.hpp"
#include "json.hpp"

namespace eeganon {

struct SubjectProfile {
  std::string subject_id;
  double alpha_peak_hz = 10.0;
  double spectral_tilt = -1.0;
  double amplitude_scale = 1.0;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SubjectProfile, subject_id, alpha_peak_hz, spectral_tilt,
                                   amplitude_scale, seed)

struct SynthConfig {
  int n_subjects = 8;
  int epochs_per_subject = 200;
  std::array<double, kNumStages> stage_mix = {0.2, 0.2, 0.2, 0.2, 0.2};
  double noise_sigma_uv = 8.0;
  double sampling_rate_hz = 100.0;
  double epoch_s = 30.0;
  std::uint64_t master_seed = 7;

  int SamplesPerEpoch() const { return static_cast<int>(std::lround(epoch_s * sampling_rate_hz)); }

  void Validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw Error(ErrorCode::kConfig, "synth." + field + ": " + why);
    };
    if (n_subjects < 2) fail("n_subjects", "must be >= 2");
    // Peaks spread over [8, 12] Hz must stay >= 0.3 Hz apart.
    if (n_subjects > 14) fail("n_subjects", "at most 14 subjects fit the 8-12 Hz alpha grid");
    if (epochs_per_subject < 1) fail("epochs_per_subject", "must be >= 1");
    double sum = 0;
    for (const double p : stage_mix) {
      if (!(p > 0)) fail("stage_mix", "every stage probability must be > 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("stage_mix", "probabilities must sum to 1");
    if (!(noise_sigma_uv >= 0)) fail("noise_sigma_uv", "must be >= 0");
    if (sampling_rate_hz != 100.0) fail("sampling_rate_hz", "must be 100");
    if (epoch_s != 30.0) fail("epoch_s", "must be 30");
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"n_subjects", c.n_subjects},         {"epochs_per_subject", c.epochs_per_subject},
       {"stage_mix", c.stage_mix},           {"noise_sigma_uv", c.noise_sigma_uv},
       {"sampling_rate_hz", c.sampling_rate_hz}, {"epoch_s", c.epoch_s},
       {"master_seed", c.master_seed}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  const SynthConfig d;
  c.n_subjects = j.value("n_subjects", d.n_subjects);
  c.epochs_per_subject = j.value("epochs_per_subject", d.epochs_per_subject);
  if (j.contains("stage_mix")) {
    const auto& m = j.at("stage_mix");
    if (!m.is_array() || m.size() != kNumStages) {
      throw Error(ErrorCode::kConfig, "synth.stage_mix: expected 5 probabilities");
    }
    for (int i = 0; i < kNumStages; ++i) c.stage_mix[i] = m.at(i).get<double>();
  } else {
    c.stage_mix = d.stage_mix;
  }
  c.noise_sigma_uv = j.value("noise_sigma_uv", d.noise_sigma_uv);
  c.sampling_rate_hz = j.value("sampling_rate_hz", d.sampling_rate_hz);
  c.epoch_s = j.value("epoch_s", d.epoch_s);
  c.master_seed = j.value("master_seed", d.master_seed);
}

// Two subjects, 20 epochs each, split between W and N3 with a weak
// background. Small enough for unit-scale training jobs and compressible
// enough for the autoencoder to reconstruct closely.
inline SynthConfig ToyCorpusConfig() {
  SynthConfig c;
  c.n_subjects = 2;
  c.epochs_per_subject = 20;
  c.stage_mix = {0.0, 1e-6, 1e-6, 0.5 - 1e-6, 1e-6};
  c.stage_mix[0] = 1.0 - (c.stage_mix[1] + c.stage_mix[2] + c.stage_mix[3] + c.stage_mix[4]);
  c.noise_sigma_uv = 1.0;
  return c;
}

inline std::string SubjectName(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02d", index + 1);
  return buf;
}

// Alpha peaks on an even grid with seeded jitter, tilts from a seeded
// permutation of an even grid, amplitudes uniform in [0.8, 1.2].
inline std::vector<SubjectProfile> MakeProfiles(const SynthConfig& config) {
  config.Validate();
  const int n = config.n_subjects;
  Rng rng(DeriveSeed(config.master_seed, std::string_view("profiles")));
  // The inner grid keeps peaks off the band edges; it widens to [8, 12]
  // when it cannot hold 0.3 Hz spacing.
  double lo = 8.2, hi = 11.8;
  if ((hi - lo) / (n - 1) < 0.3) lo = 8.0, hi = 12.0;
  const double spacing = (hi - lo) / (n - 1);
  const double jitter = std::min(0.05, std::max(0.0, (spacing - 0.3) / 2));
  std::vector<double> tilts(n);
  for (int i = 0; i < n; ++i) tilts[i] = -1.5 + static_cast<double>(i) / (n - 1);
  rng.Shuffle(tilts.begin(), tilts.end());
  std::vector<SubjectProfile> out;
  for (int i = 0; i < n; ++i) {
    SubjectProfile p;
    p.subject_id = SubjectName(i);
    p.alpha_peak_hz = lo + spacing * i + rng.Uniform(-jitter, jitter);
    p.spectral_tilt = tilts[i];
    p.amplitude_scale = rng.Uniform(0.8, 1.2);
    p.seed = DeriveSeed(config.master_seed, std::string_view(p.subject_id));
    out.push_back(p);
  }
  return out;
}

namespace synth_internal {

inline void ScaleToStd(std::vector<double>& x, double target) {
  double mean = 0;
  for (const double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (const double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  for (double& v : x) v = sd > 0 ? (v - mean) * target / sd : 0.0;
}

// White Gaussian noise shaped in the frequency domain by `gain(f)`, then
// rescaled to the requested standard deviation.
template <typename Gain>
std::vector<double> ShapedNoise(Rng& rng, std::size_t n, double fs, double target_std, Gain gain) {
  std::vector<double> white(n);
  for (double& v : white) v = rng.Normal();
  auto spec = Rfft(white);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    spec[k] *= gain(static_cast<double>(k) * fs / static_cast<double>(n));
  }
  std::vector<double> out = Irfft(spec, n);
  ScaleToStd(out, target_std);
  return out;
}

inline std::vector<double> BandNoise(Rng& rng, std::size_t n, double fs, double lo, double hi,
                                     double target_std) {
  return ShapedNoise(rng, n, fs, target_std,
                     [lo, hi](double f) { return f >= lo && f <= hi ? 1.0 : 0.0; });
}

// Unit-variance noise with power spectrum proportional to 1/f^|tilt|,
// flat below 0.5 Hz and without a DC component.
inline std::vector<double> PowerLawNoise(Rng& rng, std::size_t n, double fs, double tilt) {
  const double exponent = std::abs(tilt) / 2.0;
  return ShapedNoise(rng, n, fs, 1.0, [exponent](double f) {
    if (f == 0.0) return 0.0;
    return std::pow(std::max(f, 0.5), -exponent);
  });
}

}  // namespace synth_internal

// Amplitudes of the stage signatures in microvolts.
struct SignatureLevels {
  double alpha_uv = 5.0;
  double wake_alpha_gain = 2.5;
  double rem_alpha_gain = 0.3;
  double wake_beta_std = 5.0;
  double n1_theta_std = 10.0;
  double n2_theta_std = 6.0;
  double spindle_uv = 15.0;
  double n3_delta_std = 30.0;
  double rem_theta_std = 5.0;
  double rem_beta_std = 2.0;
};

// Channel amplitude ratios applied to the shared signature.
inline constexpr std::array<double, 2> kChannelRatio = {1.0, 0.9};

// One epoch of the generator. Background noise is independent per channel;
// the stage signature and alpha oscillator are shared.
inline Epoch GenerateEpoch(const SubjectProfile& profile, SleepStage stage, double noise_sigma_uv,
                           std::uint64_t epoch_seed, const SignatureLevels& lv = {},
                           double fs = 100.0, double epoch_s = 30.0) {
  using synth_internal::BandNoise;
  Rng rng(epoch_seed);
  const auto n = static_cast<std::size_t>(std::lround(fs * epoch_s));
  std::vector<double> sig(n, 0.0);
  auto add = [&sig](const std::vector<double>& x) {
    for (std::size_t i = 0; i < sig.size(); ++i) sig[i] += x[i];
  };

  double alpha_gain = 1.0;
  switch (stage) {
    case SleepStage::kW:
      alpha_gain = lv.wake_alpha_gain;
      add(BandNoise(rng, n, fs, 16.0, 30.0, lv.wake_beta_std));
      break;
    case SleepStage::kN1:
      add(BandNoise(rng, n, fs, 4.0, 7.0, lv.n1_theta_std));
      break;
    case SleepStage::kN2: {
      add(BandNoise(rng, n, fs, 4.0, 7.0, lv.n2_theta_std));
      const int bursts = 2 + static_cast<int>(rng.Below(3));
      for (int b = 0; b < bursts; ++b) {
        const double dur = rng.Uniform(0.5, 1.5);
        const double freq = rng.Uniform(12.0, 14.0);
        const double start = rng.Uniform(0.0, epoch_s - dur);
        const double phase = rng.Uniform(0.0, 2 * std::numbers::pi);
        const auto i0 = static_cast<std::size_t>(start * fs);
        const auto len = static_cast<std::size_t>(dur * fs);
        for (std::size_t j = 0; j < len && i0 + j < n; ++j) {
          const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * j / static_cast<double>(len));
          sig[i0 + j] += lv.spindle_uv * w * std::sin(2 * std::numbers::pi * freq * j / fs + phase);
        }
      }
      break;
    }
    case SleepStage::kN3:
      add(BandNoise(rng, n, fs, 0.5, 2.0, lv.n3_delta_std));
      break;
    case SleepStage::kREM:
      alpha_gain = lv.rem_alpha_gain;
      add(BandNoise(rng, n, fs, 4.0, 7.0, lv.rem_theta_std));
      add(BandNoise(rng, n, fs, 16.0, 30.0, lv.rem_beta_std));
      break;
  }
  const double phase = rng.Uniform(0.0, 2 * std::numbers::pi);
  const double a = lv.alpha_uv * alpha_gain;
  for (std::size_t i = 0; i < n; ++i) {
    sig[i] += a * std::sin(2 * std::numbers::pi * profile.alpha_peak_hz * static_cast<double>(i) / fs + phase);
  }

  Epoch e;
  e.subject_id = profile.subject_id;
  e.stage = stage;
  e.n_channels = 2;
  e.n_samples = static_cast<int>(n);
  e.data.resize(2 * n);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> bg(n, 0.0);
    if (noise_sigma_uv > 0) bg = synth_internal::PowerLawNoise(rng, n, fs, profile.spectral_tilt);
    const double bg_scale = noise_sigma_uv * profile.amplitude_scale;
    for (std::size_t i = 0; i < n; ++i) {
      e.data[c * n + i] = static_cast<float>(bg_scale * bg[i] + kChannelRatio[c] * sig[i]);
    }
  }
  return e;
}

// Exact per-subject stage counts by largest remainder, in shuffled order.
inline std::vector<SleepStage> StageSequence(const SynthConfig& config, Rng& rng) {
  const int total = config.epochs_per_subject;
  std::array<int, kNumStages> counts{};
  std::array<double, kNumStages> rem{};
  int assigned = 0;
  for (int s = 0; s < kNumStages; ++s) {
    const double exact = config.stage_mix[s] * total;
    counts[s] = static_cast<int>(std::floor(exact));
    rem[s] = exact - counts[s];
    assigned += counts[s];
  }
  std::array<int, kNumStages> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&rem](int a, int b) { return rem[a] > rem[b]; });
  for (int k = 0; assigned < total; ++k, ++assigned) counts[order[k % kNumStages]]++;
  std::vector<SleepStage> seq;
  for (int s = 0; s < kNumStages; ++s) seq.insert(seq.end(), counts[s], static_cast<SleepStage>(s));
  rng.Shuffle(seq.begin(), seq.end());
  return seq;
}

struct SyntheticCorpus {
  SynthConfig config;
  std::vector<SubjectProfile> profiles;
  EpochDataset dataset;
};

inline SyntheticCorpus GenerateCorpus(const SynthConfig& config, const SignatureLevels& levels = {}) {
  config.Validate();
  SyntheticCorpus corpus{config, MakeProfiles(config), {}};
  std::vector<Epoch> epochs;
  epochs.reserve(static_cast<std::size_t>(config.n_subjects) * config.epochs_per_subject);
  for (int s = 0; s < config.n_subjects; ++s) {
    const SubjectProfile& p = corpus.profiles[s];
    Rng stage_rng(DeriveSeed(p.seed, std::string_view("stages")));
    const auto stages = StageSequence(config, stage_rng);
    for (int i = 0; i < config.epochs_per_subject; ++i) {
      Epoch e = GenerateEpoch(p, stages[i], config.noise_sigma_uv, DeriveSeed(p.seed, i), levels,
                              config.sampling_rate_hz, config.epoch_s);
      e.id = static_cast<std::uint64_t>(s) * config.epochs_per_subject + i;
      epochs.push_back(std::move(e));
    }
  }
  corpus.dataset = EpochDataset(std::move(epochs), config.sampling_rate_hz);
  return corpus;
}

// Channel-averaged Welch PSD of one epoch.
inline PsdReport EpochPsd(const Epoch& e, double fs = 100.0) {
  std::vector<std::vector<double>> ch(e.n_channels);
  for (int c = 0; c < e.n_channels; ++c) {
    ch[c].assign(e.data.begin() + static_cast<std::ptrdiff_t>(c) * e.n_samples,
                 e.data.begin() + static_cast<std::ptrdiff_t>(c + 1) * e.n_samples);
  }
  WelchParams wp;
  wp.fs = fs;
  return WelchPsd(ch, wp);
}

inline std::vector<double> MeanPower(const PsdReport& r) {
  std::vector<double> m(r.frequencies_hz.size(), 0.0);
  for (const auto& p : r.power)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += p[k] / static_cast<double>(r.power.size());
  return m;
}

struct Band {
  const char* name;
  double lo, hi;
};
inline constexpr std::array<Band, 5> kEegBands = {Band{"delta", 0.5, 4.0}, Band{"theta", 4.0, 8.0},
                                                  Band{"alpha", 8.0, 12.0}, Band{"sigma", 12.0, 15.0},
                                                  Band{"beta", 15.0, 30.0}};

// Band powers of the channel-averaged PSD.
inline std::array<double, 5> BandPowers(const Epoch& e, double fs = 100.0) {
  const PsdReport r = EpochPsd(e, fs);
  const auto m = MeanPower(r);
  std::array<double, 5> out{};
  for (std::size_t b = 0; b < kEegBands.size(); ++b) {
    out[b] = BandPower(m, r.resolution_hz(), kEegBands[b].lo, kEegBands[b].hi);
  }
  return out;
}

// Index into kEegBands of the band holding the most power.
inline int DominantBand(const Epoch& e, double fs = 100.0) {
  const auto p = BandPowers(e, fs);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

// Nearest-centroid stage oracle on log relative band powers.
class StageOracle {
 public:
  static std::array<double, 5> Features(const Epoch& e, double fs = 100.0) {
    const auto p = BandPowers(e, fs);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    std::array<double, 5> f{};
    for (std::size_t b = 0; b < p.size(); ++b) f[b] = std::log((p[b] + 1e-12) / (total + 1e-12));
    return f;
  }

  static StageOracle Fit(const EpochDataset& calibration) {
    StageOracle o;
    std::array<int, kNumStages> counts{};
    for (const Epoch& e : calibration.epochs()) {
      const auto f = Features(e, calibration.sampling_rate_hz());
      const int s = static_cast<int>(e.stage);
      for (std::size_t b = 0; b < f.size(); ++b) o.centroids_[s][b] += f[b];
      counts[s]++;
    }
    for (int s = 0; s < kNumStages; ++s) {
      o.present_[s] = counts[s] > 0;
      for (double& v : o.centroids_[s]) v = counts[s] ? v / counts[s] : 0.0;
    }
    return o;
  }

  // Centroids of noiseless reference epochs, one per stage.
  static StageOracle FromReference(const SubjectProfile& profile, const SignatureLevels& levels = {}) {
    std::vector<Epoch> epochs;
    for (const SleepStage s : kAllStages) {
      epochs.push_back(GenerateEpoch(profile, s, 0.0, DeriveSeed(profile.seed, 1000 + static_cast<int>(s)), levels));
    }
    return Fit(EpochDataset(std::move(epochs)));
  }

  SleepStage Predict(const Epoch& e, double fs = 100.0) const {
    const auto f = Features(e, fs);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int s = 0; s < kNumStages; ++s) {
      if (!present_[s]) continue;
      double d = 0;
      for (std::size_t b = 0; b < f.size(); ++b) d += (f[b] - centroids_[s][b]) * (f[b] - centroids_[s][b]);
      if (d < best) {
        best = d;
        arg = s;
      }
    }
    return static_cast<SleepStage>(arg);
  }

 private:
  std::array<std::array<double, 5>, kNumStages> centroids_{};
  std::array<bool, kNumStages> present_{};
};

struct SpectralFingerprint {
  double alpha_peak_hz = 0;
  std::optional<double> tilt;
};

// Alpha peak by parabolic interpolation around the PSD maximum in
// [7.5, 12.5] Hz; tilt by a log-log fit over bands no stage signature
// touches. Tilt is absent when those bands hold only window leakage.
inline SpectralFingerprint EstimateFingerprint(const Epoch& e, double fs = 100.0) {
  const PsdReport r = EpochPsd(e, fs);
  const auto m = MeanPower(r);
  const double res = r.resolution_hz();
  std::size_t best = 0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double f = k * res;
    if (f >= 7.5 && f <= 12.5 && (best == 0 || m[k] > m[best])) best = k;
  }
  SpectralFingerprint fp;
  double offset = 0;
  if (best > 0 && best + 1 < m.size()) {
    const double a = m[best - 1], b = m[best], c = m[best + 1];
    const double denom = a - 2 * b + c;
    if (denom < 0) offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
  }
  fp.alpha_peak_hz = (static_cast<double>(best) + offset) * res;

  double sx = 0, sy = 0, sxx = 0, sxy = 0, high_power = 0;
  int count = 0, high_count = 0;
  for (std::size_t k = 1; k < m.size(); ++k) {
    const double f = k * res;
    const bool low = f >= 2.25 && f <= 3.75;
    const bool high = f >= 32.0 && f <= 48.0;
    if (!low && !high) continue;
    const double x = std::log10(f), y = std::log10(std::max(m[k], 1e-30));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
    if (high) {
      high_power += m[k];
      ++high_count;
    }
  }
  const double peak = *std::max_element(m.begin(), m.end());
  if (count > 2 && high_count > 0 && high_power / high_count > 1e-8 * peak) {
    fp.tilt = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  }
  return fp;
}

// Nearest profile in (alpha peak, tilt), each coordinate divided by its
// spread across the profiles.
inline std::string OracleSubject(const Epoch& e, std::span<const SubjectProfile> profiles,
                                 double fs = 100.0) {
  if (profiles.empty()) throw Error(ErrorCode::kInvalidArgument, "no profiles");
  if (profiles.size() == 1) return profiles.front().subject_id;
  auto spread = [&profiles](auto get) {
    double mean = 0, var = 0;
    for (const auto& p : profiles) mean += get(p);
    mean /= static_cast<double>(profiles.size());
    for (const auto& p : profiles) var += (get(p) - mean) * (get(p) - mean);
    const double sd = std::sqrt(var / static_cast<double>(profiles.size()));
    return sd > 0 ? sd : 1.0;
  };
  const double peak_sd = spread([](const SubjectProfile& p) { return p.alpha_peak_hz; });
  const double tilt_sd = spread([](const SubjectProfile& p) { return p.spectral_tilt; });
  const SpectralFingerprint fp = EstimateFingerprint(e, fs);
  double best = std::numeric_limits<double>::infinity();
  const SubjectProfile* arg = &profiles.front();
  for (const auto& p : profiles) {
    const double dp = (fp.alpha_peak_hz - p.alpha_peak_hz) / peak_sd;
    const double dt = fp.tilt ? (*fp.tilt - p.spectral_tilt) / tilt_sd : 0.0;
    const double d = dp * dp + dt * dt;
    if (d < best) {
      best = d;
      arg = &p;
    }
  }
  return arg->subject_id;
}

inline nlohmann::json Manifest(const SyntheticCorpus& corpus) {
  nlohmann::json counts = nlohmann::json::object();
  for (const Epoch& e : corpus.dataset.epochs()) {
    auto& c = counts[e.subject_id];
    if (c.is_null()) c = nlohmann::json::object();
    const std::string stage(StageName(e.stage));
    c[stage] = c.value(stage, 0) + 1;
  }
  return {{"format_version", 1},
          {"config", corpus.config},
          {"profiles", corpus.profiles},
          {"epoch_counts", counts},
          {"n_epochs", corpus.dataset.size()}};
}

// Writes one EDF and one hypnogram CSV per subject plus manifest.json.
// Epochs are laid end to end in generation order; N3 alternates between
// the S3 and S4 tokens so the importer exercises the stage merge.
inline void ExportCorpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const double fs = corpus.dataset.sampling_rate_hz();
  std::map<std::string, std::vector<const Epoch*>> by_subject;
  for (const Epoch& e : corpus.dataset.epochs()) by_subject[e.subject_id].push_back(&e);
  for (const auto& [subject, epochs] : by_subject) {
    Recording rec;
    rec.subject_id = subject;
    rec.sampling_rate_hz = fs;
    rec.channel_labels = {"EEG Fpz-Cz", "EEG Pz-Oz"};
    rec.samples.assign(2, {});
    std::vector<HypnogramEntry> hyp;
    int n3 = 0;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
      const Epoch& e = *epochs[i];
      for (int c = 0; c < 2; ++c) {
        const float* p = e.data.data() + static_cast<std::size_t>(c) * e.n_samples;
        rec.samples[c].insert(rec.samples[c].end(), p, p + e.n_samples);
      }
      RawStage raw = ToRawStage(e.stage);
      if (e.stage == SleepStage::kN3 && (n3++ % 2 == 1)) raw = RawStage::kS4;
      hyp.push_back({kEpochSeconds * static_cast<double>(i), kEpochSeconds, raw});
    }
    rec.duration_s = kEpochSeconds * static_cast<double>(epochs.size());
    WriteEdf(rec, dir / (subject + ".edf"));
    WriteHypnogram(hyp, dir / (subject + ".hyp.csv"));
  }
  std::ofstream(dir / "manifest.json") << Manifest(corpus).dump(2) << '\n';
}

}  // namespace eeganon
