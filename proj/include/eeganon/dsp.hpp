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

// Spectral estimation and zero-phase IIR filtering.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "eeganon/errors.hpp"

namespace eeganon {

namespace dsp_internal {

// FFTW planning is not thread-safe and not free; plans are made once per
// length with FFTW_ESTIMATE (deterministic) and executed on caller buffers.
class PlanCache {
 public:
  static PlanCache& Instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan Forward(int n) { return Get(n, true); }
  fftw_plan Inverse(int n) { return Get(n, false); }

 private:
  fftw_plan Get(int n, bool forward) {
    std::lock_guard<std::mutex> lock(mu_);
    auto& plans = forward ? forward_ : inverse_;
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    std::vector<double> real(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(n / 2 + 1));
    auto* c = reinterpret_cast<fftw_complex*>(spec.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan p = forward ? fftw_plan_dft_r2c_1d(n, real.data(), c, flags)
                          : fftw_plan_dft_c2r_1d(n, c, real.data(), flags);
    if (!p) throw Error(ErrorCode::kDependency, "FFTW failed to plan length " + std::to_string(n));
    plans.emplace(n, p);
    return p;
  }

  std::mutex mu_;
  std::map<int, fftw_plan> forward_;
  std::map<int, fftw_plan> inverse_;
};

}  // namespace dsp_internal

// Unnormalized real-to-half-complex DFT, n/2 + 1 bins.
inline std::vector<std::complex<double>> Rfft(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(x.size() / 2 + 1);
  fftw_execute_dft_r2c(dsp_internal::PlanCache::Instance().Forward(n), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

// Inverse of Rfft including the 1/n factor.
inline std::vector<double> Irfft(std::span<const std::complex<double>> spec, std::size_t n) {
  if (spec.size() != n / 2 + 1) throw Error(ErrorCode::kContract, "Irfft size mismatch");
  std::vector<std::complex<double>> in(spec.begin(), spec.end());
  std::vector<double> out(n);
  fftw_execute_dft_c2r(dsp_internal::PlanCache::Instance().Inverse(static_cast<int>(n)),
                       reinterpret_cast<fftw_complex*>(in.data()), out.data());
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

struct WelchParams {
  double fs = 100.0;
  double window_s = 4.0;
  double overlap = 0.5;
};

struct PsdReport {
  std::vector<double> frequencies_hz;
  std::vector<std::vector<double>> power;  // per channel, units^2 / Hz
  WelchParams params;
  std::size_t segment_len = 0;
  std::size_t n_segments = 0;

  double resolution_hz() const { return params.fs / static_cast<double>(segment_len); }
};

inline std::vector<double> HannPeriodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

// Welch estimate for one channel: periodic Hann segments, one-sided
// density scaling, no detrending.
inline std::vector<double> WelchDensity(std::span<const double> x, const WelchParams& p,
                                        std::size_t* segments_out = nullptr) {
  if (!(p.fs > 0) || !(p.window_s > 0) || !(p.overlap >= 0 && p.overlap < 1)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid Welch parameters");
  }
  const auto nseg = static_cast<std::size_t>(std::llround(p.window_s * p.fs));
  if (nseg < 2 || x.size() < nseg) {
    throw Error(ErrorCode::kInvalidArgument, "signal of " + std::to_string(x.size()) +
                                                 " samples is shorter than the " +
                                                 std::to_string(nseg) + "-sample window");
  }
  const auto step = std::max<std::size_t>(1, nseg - static_cast<std::size_t>(std::llround(p.overlap * nseg)));
  const std::vector<double> w = HannPeriodic(nseg);
  double wss = 0;
  for (const double v : w) wss += v * v;
  const double scale = 1.0 / (p.fs * wss);
  std::vector<double> acc(nseg / 2 + 1, 0.0), seg(nseg);
  std::size_t count = 0;
  for (std::size_t start = 0; start + nseg <= x.size(); start += step, ++count) {
    for (std::size_t i = 0; i < nseg; ++i) seg[i] = x[start + i] * w[i];
    const auto spec = Rfft(seg);
    for (std::size_t k = 0; k < spec.size(); ++k) acc[k] += std::norm(spec[k]);
  }
  for (std::size_t k = 0; k < acc.size(); ++k) {
    const bool edge = k == 0 || (nseg % 2 == 0 && k == nseg / 2);
    acc[k] *= scale * (edge ? 1.0 : 2.0) / static_cast<double>(count);
  }
  if (segments_out) *segments_out = count;
  return acc;
}

inline PsdReport WelchPsd(const std::vector<std::vector<double>>& channels, const WelchParams& p = {}) {
  if (channels.empty()) throw Error(ErrorCode::kInvalidArgument, "no channels for PSD");
  PsdReport r;
  r.params = p;
  for (const auto& ch : channels) r.power.push_back(WelchDensity(ch, p, &r.n_segments));
  r.segment_len = static_cast<std::size_t>(std::llround(p.window_s * p.fs));
  r.frequencies_hz.resize(r.power.front().size());
  for (std::size_t k = 0; k < r.frequencies_hz.size(); ++k) {
    r.frequencies_hz[k] = static_cast<double>(k) * p.fs / static_cast<double>(r.segment_len);
  }
  return r;
}

// Power in [lo, hi) by rectangle-rule integration over bins.
inline double BandPower(std::span<const double> psd, double resolution_hz, double lo, double hi) {
  double total = 0;
  for (std::size_t k = 0; k < psd.size(); ++k) {
    const double f = static_cast<double>(k) * resolution_hz;
    if (f >= lo && f < hi) total += psd[k];
  }
  return total * resolution_hz;
}

// Second-order section, a0 = 1.
struct Biquad {
  double b0, b1, b2, a1, a2;

  double DcGain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
  std::complex<double> Response(double omega) const {
    const std::complex<double> z1 = std::polar(1.0, -omega), z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }
};

// Digital Butterworth low- or high-pass of even order via the bilinear
// transform with prewarping.
inline std::vector<Biquad> ButterworthSections(int order, double cutoff_hz, double fs, bool highpass) {
  if (order < 2 || order % 2 != 0) throw Error(ErrorCode::kInvalidArgument, "order must be even");
  if (!(cutoff_hz > 0 && cutoff_hz < fs / 2)) {
    throw Error(ErrorCode::kInvalidArgument, "cutoff must lie in (0, fs/2)");
  }
  const double k = 2.0 * fs;
  const double wc = k * std::tan(std::numbers::pi * cutoff_hz / fs);
  std::vector<Biquad> out;
  for (int i = 0; i < order / 2; ++i) {
    const double theta = std::numbers::pi * (2.0 * i + 1.0 + order) / (2.0 * order);
    const std::complex<double> proto = std::polar(1.0, theta);
    const std::complex<double> s = highpass ? wc / proto : wc * proto;
    const std::complex<double> z = (k + s) / (k - s);
    const double a1 = -2.0 * z.real();
    const double a2 = std::norm(z);
    Biquad q{1.0, highpass ? -2.0 : 2.0, 1.0, a1, a2};
    // Unit gain at DC (low-pass) or Nyquist (high-pass).
    const double g = std::abs(q.Response(highpass ? std::numbers::pi : 0.0));
    q.b0 /= g;
    q.b1 /= g;
    q.b2 /= g;
    out.push_back(q);
  }
  return out;
}

inline std::vector<Biquad> ButterworthBandpass(double low_hz, double high_hz, double fs, int order = 4) {
  if (!(low_hz > 0 && low_hz < high_hz && high_hz < fs / 2)) {
    throw Error(ErrorCode::kInvalidArgument, "band-pass needs 0 < low < high < fs/2");
  }
  std::vector<Biquad> sos = ButterworthSections(order, low_hz, fs, true);
  const std::vector<Biquad> lp = ButterworthSections(order, high_hz, fs, false);
  sos.insert(sos.end(), lp.begin(), lp.end());
  return sos;
}

// Transposed direct form II cascade with per-section state (z1, z2).
inline void SosFilterInPlace(std::span<const Biquad> sos, std::vector<double>& x,
                             std::vector<std::array<double, 2>> state) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& q = sos[s];
    double z1 = state[s][0], z2 = state[s][1];
    for (double& v : x) {
      const double in = v;
      const double y = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * y + z2;
      z2 = q.b2 * in - q.a2 * y;
      v = y;
    }
  }
}

// Initial states giving a step response already at steady state.
inline std::vector<std::array<double, 2>> SosSteadyState(std::span<const Biquad> sos, double x0) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double level = x0;
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& q = sos[s];
    const double y = q.DcGain() * level;
    const double z2 = q.b2 * level - q.a2 * y;
    const double z1 = q.b1 * level - q.a1 * y + z2;
    zi[s] = {z1, z2};
    level = y;
  }
  return zi;
}

// Forward-backward filtering with odd reflection padding.
inline std::vector<double> SosFiltFilt(std::span<const Biquad> sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::size_t pad = 3 * (2 * sos.size() + 1);
  pad = std::min(pad, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  SosFilterInPlace(sos, ext, SosSteadyState(sos, ext.front()));
  std::reverse(ext.begin(), ext.end());
  SosFilterInPlace(sos, ext, SosSteadyState(sos, ext.front()));
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

// Zero-phase band-pass: 4th-order Butterworth high-pass at `low_hz`
// cascaded with a 4th-order Butterworth low-pass at `high_hz`.
inline std::vector<double> Bandpass(std::span<const double> x, double fs, double low_hz = 0.2,
                                    double high_hz = 40.0) {
  const auto sos = ButterworthBandpass(low_hz, high_hz, fs);
  return SosFiltFilt(sos, x);
}

}  // namespace eeganon
