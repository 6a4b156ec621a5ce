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

// Run configuration: every tunable of a run in one value, readable from a
// TOML-style file of [section] headers and key = value lines.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "stylevc/features.hpp"
#include "stylevc/losses.hpp"
#include "stylevc/model.hpp"
#include "stylevc/training.hpp"

namespace stylevc {

struct DataConfig {
  std::string manifest;  // relative paths resolve against the config file
  std::size_t holdout_per_speaker = 0;
  std::size_t synth_speakers = 4;
  std::size_t synth_utts = 8;
  double synth_duration_s = 1.0;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  FeatureConfig feature;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  DataConfig data;
  std::uint64_t seed = 0;
  std::string out_dir = "run";

  // Per-section checks plus cross-field ones (segment length divisible by
  // 16, d_model divisible by n_heads, matching mel bin counts).
  void validate() const;  // throws ConfigError
  bool operator==(const RunConfig&) const = default;
};

// Flat "section.key" -> value view, the canonical text form of a config.
using ConfigMap = std::map<std::string, std::string>;
ConfigMap to_map(const RunConfig& cfg);
// Sets one key; unknown keys and malformed values throw ConfigError.
void apply_entry(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig from_map(const ConfigMap& m);

// Parses the config text. Throws ConfigError naming the line on failure.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
// Throws IoError when unreadable; manifest paths are made relative to the
// file's directory.
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);

// Enables paper-literal variants from a comma list of {kl, triplet,
// attention}.
void apply_paper_literal(RunConfig& cfg, const std::string& list);

// Desk-scale configuration used for the synthetic-corpus experiments.
RunConfig toy_config();

}  // namespace stylevc
