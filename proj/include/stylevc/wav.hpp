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

#include <filesystem>

#include "stylevc/features.hpp"

namespace stylevc {

// Reads RIFF/WAVE PCM 16-bit or IEEE float 32-bit. Multi-channel audio is
// averaged to mono. Throws IoError.
AudioClip read_wav(const std::filesystem::path& path);

// Writes mono PCM 16-bit; samples are clipped to [-1, 1].
void write_wav_pcm16(const std::filesystem::path& path, const AudioClip& clip);

// Writes mono IEEE float 32-bit (used by tests for the float reader path).
void write_wav_float32(const std::filesystem::path& path, const AudioClip& clip);

}  // namespace stylevc
