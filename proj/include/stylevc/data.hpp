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

// Corpus manifests, speaker-triplet sampling, an in-memory feature bank and
// the synthetic multi-speaker corpus generator.

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "stylevc/features.hpp"
#include "stylevc/rng.hpp"

namespace stylevc {

struct ManifestEntry {
  std::string utterance_id;
  std::filesystem::path audio_path;  // as written in the file (relative)
  std::string speaker_id;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> speakers;  // sorted, unique
  std::filesystem::path root;         // directory relative paths resolve against

  std::filesystem::path resolve(const ManifestEntry& e) const;
  // Index of a speaker id in `speakers`, which doubles as its class label.
  std::size_t speaker_index(const std::string& speaker_id) const;
  // Entries per speaker, in manifest order.
  std::vector<std::vector<std::size_t>> by_speaker() const;
  // Recomputes `speakers` and checks invariants. Throws ParseError for
  // duplicate ids and DataError for too few speakers / utterances.
  void validate(bool require_pairs = true);
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

// Splits off the last `per_speaker` utterances of every speaker.
std::pair<Manifest, Manifest> split_holdout(const Manifest& m, std::size_t per_speaker);
// Keeps the class labels of `reference` (its speaker list) for `subset`.
Manifest with_speakers_of(const Manifest& subset, const Manifest& reference);

// All utterances of a manifest as log-mel features plus class labels.
struct FeatureBank {
  std::vector<MelSpectrogram> mels;
  std::vector<std::size_t> labels;
  std::vector<std::string> utterance_ids;
  std::size_t n_speakers = 0;

  static FeatureBank build(const Manifest& m, const FeatureConfig& cfg);
};

struct Triplet {
  Matrix anc, pos, neg;
  std::size_t spk_anc = 0, spk_neg = 0;
  std::size_t utt_anc = 0, utt_pos = 0, utt_neg = 0;
};

struct TripletBatch {
  std::vector<Triplet> rows;
  // Per-row randomness drawn with the batch so the trainer stays
  // deterministic whatever thread produced it.
  std::vector<Matrix> noise;                 // reparameterization draws
  std::vector<std::uint64_t> dropout_seeds;  // per row
  std::string rng_state_after;               // sampler RNG after this batch

  // Label and shape invariants; throws DataError.
  void validate(std::size_t segment_frames) const;
};

class TripletSampler {
 public:
  // Throws DataError when the bank cannot supply triplets: fewer than two
  // speakers, no speaker with two utterances, or utterances shorter than
  // segment_frames. segment_frames must be a positive multiple of 16.
  TripletSampler(const FeatureBank& bank, std::size_t segment_frames);

  // Negative speaker first, then the anchor speaker among the others, then
  // two distinct anchor utterances; every crop uniform over valid offsets.
  Triplet sample(Rng& rng) const;
  TripletBatch sample_batch(Rng& rng, std::size_t batch_size, std::size_t latent_dim) const;

  std::size_t segment_frames() const { return seg_; }

 private:
  const FeatureBank& bank_;
  std::size_t seg_;
  std::vector<std::vector<std::size_t>> by_speaker_;
};

inline constexpr int kMaxAnchorRetries = 64;

// ---- synthetic corpus ----

struct SynthConfig {
  std::size_t n_speakers = 4;
  std::size_t n_utts = 8;
  double duration_s = 1.0;
  int sample_rate = 22050;

  void validate() const;  // throws ConfigError
};

struct SyntheticVoice {
  std::string speaker_id;
  double formants_hz[3];
  double bandwidths_hz[3];
  double f0_lo = 100.0, f0_hi = 150.0;
};

// Formant regions; each is split into n_speakers disjoint slots.
inline constexpr double kFormantBands[3][2] = {{300.0, 900.0}, {1000.0, 2400.0}, {2600.0, 3800.0}};

std::vector<SyntheticVoice> make_voices(std::size_t n_speakers, Rng& rng);
AudioClip synthesize_utterance(const SyntheticVoice& voice, double duration_s, int sample_rate,
                               Rng& rng);
// Writes <out_dir>/wav/<utt>.wav and <out_dir>/manifest.tsv. Refuses a
// non-empty out_dir unless `force`. Throws IoError.
Manifest make_synthetic_corpus(const SynthConfig& cfg, Rng& rng, const std::filesystem::path& out_dir,
                               bool force = false, std::vector<SyntheticVoice>* voices = nullptr);

// ---- bounded hand-off queue ----

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  // Returns false when the queue was closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }
  // nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

}  // namespace stylevc
