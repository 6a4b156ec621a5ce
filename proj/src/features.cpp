// Copyright 2026 The stylevc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stylevc/features.hpp"

#include <fftw3.h>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>

#include "stylevc/error.hpp"
#include "stylevc/rng.hpp"

namespace stylevc {

void AudioClip::validate() const {
  if (sample_rate <= 0) throw InputError("audio: sample rate must be positive");
  if (samples.empty()) throw InputError("audio: empty clip");
  for (double s : samples)
    if (!std::isfinite(s)) throw InputError("audio: non-finite sample");
}

void FeatureConfig::validate() const {
  if (n_mels == 0 || n_fft == 0 || hop_length == 0 || sample_rate <= 0)
    throw ConfigError("feature: sizes must be positive");
  if (win_length > n_fft) throw ConfigError("feature: win_length must not exceed n_fft");
  if (hop_length > win_length) throw ConfigError("feature: hop_length must not exceed win_length");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw ConfigError("feature: need 0 <= f_min < f_max <= sample_rate / 2");
  if (!(log_floor > 0.0)) throw ConfigError("feature: log_floor must be positive");
}

// ---------------------------------------------------------------------------
// Mel scale.

namespace {
constexpr double kFsp = 200.0 / 3.0;
constexpr double kMinLogHz = 1000.0;
constexpr double kMinLogMel = kMinLogHz / kFsp;
const double kLogStep = std::log(6.4) / 27.0;
}  // namespace

double hz_to_mel(double hz) {
  return hz < kMinLogHz ? hz / kFsp : kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
}

double mel_to_hz(double mel) {
  return mel < kMinLogMel ? mel * kFsp : kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
}

std::vector<double> mel_band_edges_hz(const FeatureConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  return edges;
}

Matrix mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const auto edges = mel_band_edges_hz(cfg);
  Matrix fb(cfg.n_mels, cfg.n_bins());
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    const double enorm = 2.0 / (f2 - f0);
    for (std::size_t k = 0; k < cfg.n_bins(); ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      const double lower = (f - f0) / (f1 - f0);
      const double upper = (f2 - f) / (f2 - f1);
      fb(m, k) = std::max(0.0, std::min(lower, upper)) * enorm;
    }
  }
  return fb;
}

// ---------------------------------------------------------------------------
// FFT plumbing (FFTW). Plans are created once per size under a lock; the
// new-array execute functions are thread-safe.

namespace {

struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const FftPlans& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, FftPlans> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> re(n);
  std::vector<fftw_complex> cx(n / 2 + 1);
  const int ni = static_cast<int>(n);
  FftPlans p;
  p.forward = fftw_plan_dft_r2c_1d(ni, re.data(), cx.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.inverse = fftw_plan_dft_c2r_1d(ni, cx.data(), re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  return cache.emplace(n, p).first->second;
}

long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> padded_window(const FeatureConfig& cfg) {
  std::vector<double> w(cfg.n_fft, 0.0);
  const std::size_t offset = (cfg.n_fft - cfg.win_length) / 2;
  for (std::size_t i = 0; i < cfg.win_length; ++i)
    w[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(cfg.win_length));
  return w;
}

std::size_t frame_count(std::size_t n_samples, std::size_t hop) { return (n_samples + hop - 1) / hop; }

using Spectrum = std::vector<std::complex<double>>;

// Complex STFT, one spectrum per frame.
std::vector<Spectrum> stft(const std::vector<double>& x, const FeatureConfig& cfg) {
  const auto& plans = plans_for(cfg.n_fft);
  const auto window = padded_window(cfg);
  const long n = static_cast<long>(x.size());
  const long half = static_cast<long>(cfg.n_fft / 2);
  const std::size_t frames = frame_count(x.size(), cfg.hop_length);
  std::vector<Spectrum> out(frames, Spectrum(cfg.n_bins()));
  std::vector<double> buf(cfg.n_fft);
  std::vector<fftw_complex> spec(cfg.n_bins());
  for (std::size_t t = 0; t < frames; ++t) {
    const long center = static_cast<long>(t * cfg.hop_length);
    for (std::size_t i = 0; i < cfg.n_fft; ++i)
      buf[i] = window[i] * x[static_cast<std::size_t>(reflect_index(center - half + static_cast<long>(i), n))];
    fftw_execute_dft_r2c(plans.forward, buf.data(), spec.data());
    for (std::size_t k = 0; k < cfg.n_bins(); ++k) out[t][k] = {spec[k][0], spec[k][1]};
  }
  return out;
}

// Weighted overlap-add inverse of stft(); output has frames * hop samples.
std::vector<double> istft(const std::vector<Spectrum>& frames, const FeatureConfig& cfg) {
  const auto& plans = plans_for(cfg.n_fft);
  const auto window = padded_window(cfg);
  const long half = static_cast<long>(cfg.n_fft / 2);
  const std::size_t n_out = frames.size() * cfg.hop_length;
  std::vector<double> acc(n_out, 0.0), wsum(n_out, 0.0);
  std::vector<fftw_complex> spec(cfg.n_bins());
  std::vector<double> buf(cfg.n_fft);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (std::size_t k = 0; k < cfg.n_bins(); ++k) {
      spec[k][0] = frames[t][k].real();
      spec[k][1] = frames[t][k].imag();
    }
    fftw_execute_dft_c2r(plans.inverse, spec.data(), buf.data());
    const long start = static_cast<long>(t * cfg.hop_length) - half;
    for (std::size_t i = 0; i < cfg.n_fft; ++i) {
      const long pos = start + static_cast<long>(i);
      if (pos < 0 || pos >= static_cast<long>(n_out)) continue;
      acc[static_cast<std::size_t>(pos)] += window[i] * buf[i] / static_cast<double>(cfg.n_fft);
      wsum[static_cast<std::size_t>(pos)] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < n_out; ++i)
    if (wsum[i] > 1e-8) acc[i] /= wsum[i];
  return acc;
}

}  // namespace

Matrix power_spectrogram(const AudioClip& clip, const FeatureConfig& cfg) {
  const auto spec = stft(clip.samples, cfg);
  Matrix p(spec.size(), cfg.n_bins());
  for (std::size_t t = 0; t < spec.size(); ++t)
    for (std::size_t k = 0; k < cfg.n_bins(); ++k) p(t, k) = std::norm(spec[t][k]);
  return p;
}

MelSpectrogram extract_logmel(const AudioClip& clip, const FeatureConfig& cfg) {
  cfg.validate();
  clip.validate();
  if (clip.sample_rate != cfg.sample_rate)
    throw ConfigError("extract_logmel: clip sample rate " + std::to_string(clip.sample_rate) +
                      " does not match configured " + std::to_string(cfg.sample_rate));
  const Matrix power = power_spectrogram(clip, cfg);
  const Matrix fb = mel_filterbank(cfg);
  MelSpectrogram mel;
  mel.hop_length = cfg.hop_length;
  mel.sample_rate = cfg.sample_rate;
  mel.values = Matrix(power.rows(), cfg.n_mels);
  for (std::size_t t = 0; t < power.rows(); ++t)
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double s = 0.0;
      for (std::size_t k = 0; k < cfg.n_bins(); ++k) s += fb(m, k) * power(t, k);
      mel.values(t, m) = std::log(std::max(s, cfg.log_floor));
    }
  return mel;
}

MelSpectrogram crop_segment(const MelSpectrogram& mel, std::size_t start, std::size_t length) {
  if (length == 0 || length % 16 != 0)
    throw InputError("crop_segment: length " + std::to_string(length) + " is not a positive multiple of 16");
  if (start + length > mel.frames())
    throw InputError("crop_segment: rows [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceed " + std::to_string(mel.frames()) +
                     " frames");
  MelSpectrogram out;
  out.hop_length = mel.hop_length;
  out.sample_rate = mel.sample_rate;
  out.values = mel.values.row_range(start, length);
  return out;
}

AudioClip inverse_logmel(const MelSpectrogram& mel, const FeatureConfig& cfg, int n_iters,
                         std::uint64_t seed) {
  if (n_iters < 1) throw InputError("inverse_logmel: n_iters must be >= 1");
  cfg.validate();
  if (mel.bins() != cfg.n_mels)
    throw InputError("inverse_logmel: mel has " + std::to_string(mel.bins()) + " bins, config " +
                     std::to_string(cfg.n_mels));
  // Linear power from mel power: ridge pseudo-inverse clamped at zero, then
  // refined by nonnegative least-squares multiplicative updates.
  const Matrix fb = mel_filterbank(cfg);
  Eigen::MatrixXd M(cfg.n_mels, cfg.n_bins());
  for (std::size_t m = 0; m < cfg.n_mels; ++m)
    for (std::size_t k = 0; k < cfg.n_bins(); ++k) M(static_cast<long>(m), static_cast<long>(k)) = fb(m, k);
  Eigen::MatrixXd gram = M * M.transpose();
  gram.diagonal().array() += 1e-6 * gram.diagonal().mean();
  const Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  const Eigen::MatrixXd MtM = M.transpose() * M;
  constexpr int kNnlsIters = 60;

  std::vector<std::vector<double>> magnitude(mel.frames(), std::vector<double>(cfg.n_bins()));
  for (std::size_t t = 0; t < mel.frames(); ++t) {
    Eigen::VectorXd y(cfg.n_mels);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) y(static_cast<long>(m)) = std::exp(mel.values(t, m));
    const Eigen::VectorXd mty = M.transpose() * y;
    Eigen::VectorXd s = (M.transpose() * solver.solve(y)).cwiseMax(1e-3 * cfg.log_floor);
    for (int it = 0; it < kNnlsIters; ++it) {
      const Eigen::VectorXd denom = (MtM * s).array() + 1e-30;
      s = s.cwiseProduct(mty.cwiseQuotient(denom));
    }
    for (std::size_t k = 0; k < cfg.n_bins(); ++k)
      magnitude[t][k] = std::sqrt(std::max(0.0, s(static_cast<long>(k))));
  }

  Rng rng(seed);
  std::vector<Spectrum> spec(mel.frames(), Spectrum(cfg.n_bins()));
  for (std::size_t t = 0; t < spec.size(); ++t)
    for (std::size_t k = 0; k < cfg.n_bins(); ++k)
      spec[t][k] = std::polar(magnitude[t][k], 2.0 * std::numbers::pi * rng.uniform());

  std::vector<double> x = istft(spec, cfg);
  for (int it = 0; it < n_iters; ++it) {
    const auto est = stft(x, cfg);
    for (std::size_t t = 0; t < spec.size(); ++t)
      for (std::size_t k = 0; k < cfg.n_bins(); ++k) {
        const double a = std::abs(est[t][k]);
        const std::complex<double> phase = a > 0.0 ? est[t][k] / a : std::complex<double>(1.0, 0.0);
        spec[t][k] = magnitude[t][k] * phase;
      }
    x = istft(spec, cfg);
  }
  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.samples.resize(x.size());
  std::transform(x.begin(), x.end(), clip.samples.begin(),
                 [](double v) { return std::clamp(v, -1.0, 1.0); });
  return clip;
}

double pearson(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b) || a.empty()) throw InputError("pearson: shape mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a.data()[i];
    mb += b.data()[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a.data()[i] - ma, db = b.data()[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace stylevc
