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

// Complete training state, its single-file checkpoint container, and the
// training loop that drives train_step.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>

#include "stylevc/config.hpp"
#include "stylevc/training.hpp"

namespace stylevc {

inline constexpr char kCheckpointMagic[8] = {'S', 'V', 'C', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainState {
  RunConfig config;
  std::unique_ptr<Model> model;
  AdamState adam;
  std::size_t step = 0;  // completed steps
  Rng rng;               // sampler stream: triplets, noise, dropout seeds

  // Fresh state: model initialized from config.seed.
  static TrainState create(const RunConfig& cfg);
};

// Layout: magic, u32 version, u64 header length, JSON header (config,
// step, RNG state, tensor index with shapes, offsets and CRC32), then the
// raw little-endian float64 payloads. Written atomically via a temp file.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
// Throws IntegrityError for truncated or corrupted files and ConfigError
// for a version mismatch.
TrainState load_checkpoint(const std::filesystem::path& path);
// Loads parameters and optimizer moments into an existing state whose
// model shapes must agree (ConfigError naming the first mismatched tensor).
void restore_checkpoint(const std::filesystem::path& path, TrainState& into);

struct TrainHooks {
  std::function<void(std::size_t step, const StepResult&)> on_step;
  std::ostream* log = nullptr;             // progress lines
  std::filesystem::path metrics_csv;       // appended; header written when new
  std::filesystem::path checkpoint_path;   // saved every checkpoint_every and at the end
};

// Runs until state.step == target_step. Batches come from `sampler` driven
// by state.rng (optionally produced ahead on a worker thread through a
// bounded queue; the consumed sequence is identical either way). On a
// non-finite loss throws NumericError naming the last good checkpoint.
void train(TrainState& state, const TripletSampler& sampler, std::size_t target_step, const TrainHooks& hooks = {});

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, std::size_t step, const LossBreakdown& b);

}  // namespace stylevc
