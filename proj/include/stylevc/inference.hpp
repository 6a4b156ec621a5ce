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

// Source-to-target conversion: features, model, sidecar mel and optional
// Griffin-Lim waveform.

#include <filesystem>
#include <string>
#include <vector>

#include "stylevc/data.hpp"
#include "stylevc/features.hpp"
#include "stylevc/model.hpp"

namespace stylevc {

inline constexpr char kSidecarMagic[8] = {'P', 'F', 'V', 'C', 'M', 'E', 'L', '1'};

// Sidecar: magic, u32 L, u32 D, L*D float32 row-major, f32 hop, f32 rate.
void write_sidecar(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram read_sidecar(const std::filesystem::path& path);
// float32 view of a mel as stored in a sidecar.
Matrix quantize_f32(const Matrix& m);

// Pads the source to a multiple of 16 frames by repeating its last frame,
// converts in evaluation mode, trims back to the source length. Throws
// InputError for sources < 16 frames or targets < 16 frames.
Matrix convert_mel(const Model& model, const Matrix& source, const Matrix& target);

enum class VocoderMode { kGriffinLim, kExternal };

struct ConversionRequest {
  std::filesystem::path source_audio;
  std::filesystem::path target_audio;
  std::filesystem::path output;  // WAV path; sidecar is output with ".mel"
  VocoderMode vocoder = VocoderMode::kGriffinLim;
  int griffin_lim_iters = 32;
};

struct ConversionResult {
  std::filesystem::path sidecar;
  std::filesystem::path wav;  // empty in external mode
  MelSpectrogram mel;
};

std::filesystem::path sidecar_path_for(const std::filesystem::path& output);

// Throws IoError for unreadable audio and ConfigError when the audio's
// sample rate does not match the feature configuration.
ConversionResult convert_file(const Model& model, const FeatureConfig& features, const ConversionRequest& req);

struct BatchRow {
  std::string utterance_id;
  std::string output;  // sidecar path, empty on failure
  bool ok = false;
  std::string error;
};

struct BatchReport {
  std::vector<BatchRow> rows;
  std::size_t failures() const;
};

// Converts every manifest entry to the timbre of `target_ref`, writing
// <out_dir>/<utterance_id>.mel (and .wav in Griffin-Lim mode) plus
// <out_dir>/report.csv. Per-entry failures are recorded and skipped.
BatchReport batch_convert(const Model& model, const FeatureConfig& features, const Manifest& manifest,
                          const std::filesystem::path& target_ref, const std::filesystem::path& out_dir,
                          VocoderMode vocoder = VocoderMode::kExternal, int griffin_lim_iters = 32);

}  // namespace stylevc
