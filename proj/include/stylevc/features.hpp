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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylevc/matrix.hpp"

namespace stylevc {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 22050;

  void validate() const;  // throws InputError
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct FeatureConfig {
  std::size_t n_mels = 80;
  std::size_t n_fft = 1024;
  std::size_t win_length = 1024;
  std::size_t hop_length = 256;
  int sample_rate = 22050;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-5;

  void validate() const;  // throws ConfigError
  std::size_t n_bins() const { return n_fft / 2 + 1; }
  bool operator==(const FeatureConfig&) const = default;
};

// Natural-log mel power spectrogram, [frames x n_mels].
struct MelSpectrogram {
  Matrix values;
  std::size_t hop_length = 256;
  int sample_rate = 22050;

  std::size_t frames() const { return values.rows(); }
  std::size_t bins() const { return values.cols(); }
};

// Slaney-style mel scale (linear below 1 kHz, logarithmic above).
double hz_to_mel(double hz);
double mel_to_hz(double mel);
// n_mels + 2 band edge frequencies in Hz; filter m spans edges[m]..edges[m+2]
// with its peak at edges[m+1].
std::vector<double> mel_band_edges_hz(const FeatureConfig& cfg);
// Triangular filters with area (Slaney) normalization, [n_mels x n_bins].
Matrix mel_filterbank(const FeatureConfig& cfg);

// Power STFT with centered, reflect-padded frames: [ceil(N / hop) x n_bins].
Matrix power_spectrogram(const AudioClip& clip, const FeatureConfig& cfg);

// log(max(filterbank * power, log_floor)).
MelSpectrogram extract_logmel(const AudioClip& clip, const FeatureConfig& cfg);

// Rows [start, start + length). length must be a multiple of 16.
MelSpectrogram crop_segment(const MelSpectrogram& mel, std::size_t start, std::size_t length);

// Griffin-Lim reconstruction from a log-mel spectrogram. Output length is
// frames * hop samples, clipped to [-1, 1].
AudioClip inverse_logmel(const MelSpectrogram& mel, const FeatureConfig& cfg, int n_iters,
                         std::uint64_t seed = 0);

// Pearson correlation of two equally shaped matrices, over all cells.
double pearson(const Matrix& a, const Matrix& b);

}  // namespace stylevc
