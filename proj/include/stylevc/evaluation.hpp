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

// Objective metrics: mel-cepstral distortion, embedding-cosine voice
// similarity, embedding export and cluster quality.

#include <filesystem>
#include <string>
#include <vector>

#include "stylevc/data.hpp"
#include "stylevc/model.hpp"

namespace stylevc {

inline constexpr std::size_t kCepstralOrder = 13;  // c1..c13, c0 excluded

// (10 / ln 10) * sqrt(2).
double mcd_constant();

// Orthonormal DCT-II of each log-mel frame, coefficients 1..n_coeffs.
Matrix mel_cepstrum(const Matrix& logmel, std::size_t n_coeffs = kCepstralOrder);

// Mean per-frame cepstral distance in dB. Without DTW the frame counts must
// match; with DTW frames are aligned on cepstral Euclidean distance and the
// mean runs over the warping path. Bin mismatch -> InputError.
double mcd(const Matrix& mel_ref, const Matrix& mel_gen, bool use_dtw = false);
double mcd_from_cepstra(const Matrix& c_ref, const Matrix& c_gen, bool use_dtw = false);

// Cosine between the embedding of `generated` and the mean embedding of the
// references. Throws InputError without references.
double vss_surrogate(const Model& embedder, const Matrix& generated, const std::vector<Matrix>& target_refs);
double vss_surrogate_embeddings(const Matrix& generated, const std::vector<Matrix>& target_embeddings);

// One row per utterance: utterance_id, speaker_id, embedding components.
std::size_t export_embeddings(const Model& embedder, const FeatureBank& bank, const Manifest& manifest,
                              const std::filesystem::path& out_csv);
std::vector<Matrix> embed_all(const Model& embedder, const std::vector<Matrix>& mels);

// Mean silhouette coefficient under cosine distance (1 - cos).
double silhouette_cosine(const std::vector<Matrix>& embeddings, const std::vector<std::size_t>& labels);

struct MetricRow {
  std::string source_id, target_id;
  double mcd_db = 0.0;
  double vss_cosine = 0.0;
};

struct Aggregate {
  double mean = 0.0;
  double half_width = 0.0;  // 95% CI, Student t over rows
  std::size_t n = 0;
};
Aggregate mean_ci95(const std::vector<double>& values);

struct MetricReport {
  std::vector<MetricRow> rows;
  Aggregate mcd, vss;
};

MetricReport summarize(std::vector<MetricRow> rows);
void write_report(const MetricReport& r, const std::filesystem::path& path);

// Evaluation pair list: tab-separated source_id, source_path, target_id,
// target_path[, generated_mel]. Relative paths resolve against the file.
struct EvalPair {
  std::string source_id, target_id;
  std::filesystem::path source, target, generated;
};
std::vector<EvalPair> load_eval_pairs(const std::filesystem::path& path);

}  // namespace stylevc
