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

#include "stylevc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "stylevc/error.hpp"
#include "stylevc/wav.hpp"

namespace stylevc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

fs::path Manifest::resolve(const ManifestEntry& e) const {
  return e.audio_path.is_absolute() ? e.audio_path : root / e.audio_path;
}

std::size_t Manifest::speaker_index(const std::string& id) const {
  auto it = std::lower_bound(speakers.begin(), speakers.end(), id);
  if (it == speakers.end() || *it != id) throw DataError("unknown speaker '" + id + "'");
  return static_cast<std::size_t>(it - speakers.begin());
}

std::vector<std::vector<std::size_t>> Manifest::by_speaker() const {
  std::vector<std::vector<std::size_t>> out(speakers.size());
  for (std::size_t i = 0; i < entries.size(); ++i) out[speaker_index(entries[i].speaker_id)].push_back(i);
  return out;
}

void Manifest::validate(bool require_pairs) {
  std::set<std::string> ids;
  std::set<std::string> spk;
  for (const auto& e : entries) {
    if (!ids.insert(e.utterance_id).second) throw ParseError("duplicate utterance_id '" + e.utterance_id + "'");
    spk.insert(e.speaker_id);
  }
  speakers.assign(spk.begin(), spk.end());
  if (!require_pairs) return;
  if (speakers.size() < 2)
    throw DataError("manifest needs >= 2 distinct speakers, found " + std::to_string(speakers.size()));
  const auto groups = by_speaker();
  for (std::size_t s = 0; s < groups.size(); ++s)
    if (groups[s].size() < 2)
      throw DataError("speaker '" + speakers[s] + "' has " + std::to_string(groups[s].size()) +
                      " utterance(s); >= 2 required");
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected 3 tab-separated fields (utterance_id, path, speaker_id)");
    if (!seen.insert(fields[0]).second)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate utterance_id '" +
                       fields[0] + "'");
    m.entries.push_back({fields[0], fs::path(fields[1]), fields[2]});
  }
  m.validate();
  return m;
}

void save_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest " + path.string());
  for (const auto& e : m.entries)
    os << e.utterance_id << '\t' << e.audio_path.generic_string() << '\t' << e.speaker_id << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

std::pair<Manifest, Manifest> split_holdout(const Manifest& m, std::size_t per_speaker) {
  Manifest train, held;
  train.root = held.root = m.root;
  train.speakers = held.speakers = m.speakers;
  const auto groups = m.by_speaker();
  std::vector<bool> hold(m.entries.size(), false);
  for (const auto& g : groups) {
    if (g.size() < per_speaker + 2)
      throw DataError("split_holdout: a speaker has too few utterances to hold out " +
                      std::to_string(per_speaker));
    for (std::size_t k = g.size() - per_speaker; k < g.size(); ++k) hold[g[k]] = true;
  }
  for (std::size_t i = 0; i < m.entries.size(); ++i) (hold[i] ? held : train).entries.push_back(m.entries[i]);
  return {train, held};
}

Manifest with_speakers_of(const Manifest& subset, const Manifest& reference) {
  Manifest m = subset;
  m.speakers = reference.speakers;
  for (const auto& e : m.entries) (void)m.speaker_index(e.speaker_id);
  return m;
}

// ---------------------------------------------------------------------------
// Features and sampling

FeatureBank FeatureBank::build(const Manifest& m, const FeatureConfig& cfg) {
  FeatureBank b;
  const std::size_t n = m.entries.size();
  b.mels.resize(n);
  b.labels.resize(n);
  b.utterance_ids.resize(n);
  b.n_speakers = m.speakers.size();
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      b.mels[i] = extract_logmel(read_wav(m.resolve(m.entries[i])), cfg);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw IoError(errors[i]);
    b.labels[i] = m.speaker_index(m.entries[i].speaker_id);
    b.utterance_ids[i] = m.entries[i].utterance_id;
  }
  return b;
}

void TripletBatch::validate(std::size_t seg) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Triplet& t = rows[i];
    if (t.spk_anc == t.spk_neg) throw DataError("triplet " + std::to_string(i) + ": negative shares anchor speaker");
    if (t.utt_anc == t.utt_pos) throw DataError("triplet " + std::to_string(i) + ": anchor and positive coincide");
    for (const Matrix* x : {&t.anc, &t.pos, &t.neg})
      if (x->rows() != seg || seg % 16 != 0)
        throw DataError("triplet " + std::to_string(i) + ": segment length " + std::to_string(x->rows()));
  }
}

TripletSampler::TripletSampler(const FeatureBank& bank, std::size_t seg) : bank_(bank), seg_(seg) {
  if (seg == 0 || seg % 16 != 0)
    throw ConfigError("segment length " + std::to_string(seg) + " is not a positive multiple of 16");
  by_speaker_.resize(bank.n_speakers);
  for (std::size_t i = 0; i < bank.mels.size(); ++i) {
    if (bank.mels[i].frames() < seg)
      throw DataError("utterance '" + bank.utterance_ids[i] + "' has " + std::to_string(bank.mels[i].frames()) +
                      " frames, shorter than the segment length " + std::to_string(seg));
    by_speaker_.at(bank.labels[i]).push_back(i);
  }
  std::size_t present = 0, pairable = 0;
  for (const auto& g : by_speaker_) {
    present += !g.empty();
    pairable += g.size() >= 2;
  }
  if (present < 2) throw DataError("triplet sampling needs >= 2 speakers with data");
  if (pairable == 0) throw DataError("triplet sampling needs a speaker with >= 2 utterances");
}

Triplet TripletSampler::sample(Rng& rng) const {
  const std::size_t n_spk = by_speaker_.size();
  std::size_t neg_spk;
  do {
    neg_spk = rng.index(n_spk);
  } while (by_speaker_[neg_spk].empty());

  std::size_t anc_spk = n_spk;
  for (int attempt = 0; attempt < kMaxAnchorRetries; ++attempt) {
    std::size_t s = rng.index(n_spk - 1);
    if (s >= neg_spk) ++s;
    if (by_speaker_[s].size() >= 2) {
      anc_spk = s;
      break;
    }
  }
  if (anc_spk == n_spk) throw DataError("no anchor speaker with >= 2 utterances after retries");

  const auto& anc_utts = by_speaker_[anc_spk];
  const std::size_t a = rng.index(anc_utts.size());
  std::size_t p = rng.index(anc_utts.size() - 1);
  if (p >= a) ++p;
  const auto& neg_utts = by_speaker_[neg_spk];

  Triplet t;
  t.spk_anc = anc_spk;
  t.spk_neg = neg_spk;
  t.utt_anc = anc_utts[a];
  t.utt_pos = anc_utts[p];
  t.utt_neg = neg_utts[rng.index(neg_utts.size())];
  auto crop = [&](std::size_t utt) {
    const MelSpectrogram& mel = bank_.mels[utt];
    const std::size_t start = rng.index(mel.frames() - seg_ + 1);
    return mel.values.row_range(start, seg_);
  };
  t.anc = crop(t.utt_anc);
  t.pos = crop(t.utt_pos);
  t.neg = crop(t.utt_neg);
  return t;
}

TripletBatch TripletSampler::sample_batch(Rng& rng, std::size_t batch_size, std::size_t latent_dim) const {
  TripletBatch b;
  b.rows.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    b.rows.push_back(sample(rng));
    b.noise.push_back(rng.normal_matrix(seg_ / 16, latent_dim));
    b.dropout_seeds.push_back(rng.next_u64());
  }
  b.rng_state_after = rng.serialize();
  return b;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SynthConfig::validate() const {
  if (n_speakers < 2) throw ConfigError("synthetic corpus needs n_speakers >= 2, got " + std::to_string(n_speakers));
  if (n_utts < 2) throw ConfigError("synthetic corpus needs n_utts >= 2, got " + std::to_string(n_utts));
  if (!(duration_s > 0.0)) throw ConfigError("synthetic corpus duration must be positive");
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
}

std::vector<SyntheticVoice> make_voices(std::size_t n, Rng& rng) {
  std::vector<SyntheticVoice> voices(n);
  for (int band = 0; band < 3; ++band) {
    std::vector<std::size_t> slots(n);
    for (std::size_t i = 0; i < n; ++i) slots[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(slots[i - 1], slots[rng.index(i)]);
    const double lo = kFormantBands[band][0];
    const double width = (kFormantBands[band][1] - lo) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double jitter = (rng.uniform() - 0.5) * 0.5;  // stays inside the slot
      voices[i].formants_hz[band] = lo + (static_cast<double>(slots[i]) + 0.5 + jitter) * width;
      voices[i].bandwidths_hz[band] = (80.0 + 40.0 * band) * (0.8 + 0.4 * rng.uniform());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    voices[i].speaker_id = "spk" + std::to_string(i);
    voices[i].f0_lo = 90.0 + 90.0 * rng.uniform();
    voices[i].f0_hi = voices[i].f0_lo * 1.6;
  }
  return voices;
}

namespace {

double envelope(const SyntheticVoice& v, double f) {
  constexpr double kGain[3] = {1.0, 0.6, 0.35};
  double e = 0.01;
  for (int k = 0; k < 3; ++k) {
    const double u = (f - v.formants_hz[k]) / (0.5 * v.bandwidths_hz[k]);
    e += kGain[k] / (1.0 + u * u);
  }
  return e;
}

}  // namespace

AudioClip synthesize_utterance(const SyntheticVoice& v, double duration_s, int sample_rate, Rng& rng) {
  AudioClip clip;
  clip.sample_rate = sample_rate;
  const auto total = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  clip.samples.assign(total, 0.0);
  const double sr = sample_rate;
  const double f_top = std::min(5000.0, 0.45 * sr);
  std::vector<double> phase;
  std::size_t pos = 0;
  while (pos < total) {
    const auto len = std::min<std::size_t>(total - pos, static_cast<std::size_t>((0.12 + 0.18 * rng.uniform()) * sr));
    const double f_start = v.f0_lo + (v.f0_hi - v.f0_lo) * rng.uniform();
    const double f_end = std::clamp(f_start * (0.8 + 0.4 * rng.uniform()), v.f0_lo, v.f0_hi);
    const double amp = 0.5 + 0.5 * rng.uniform();
    const auto n_harm = static_cast<std::size_t>(f_top / v.f0_lo);
    phase.assign(n_harm, 0.0);
    for (auto& ph : phase) ph = 2.0 * std::numbers::pi * rng.uniform();
    const double ramp = 0.01 * sr;
    for (std::size_t i = 0; i < len; ++i) {
      const double frac = len > 1 ? static_cast<double>(i) / static_cast<double>(len - 1) : 0.0;
      const double f0 = f_start + (f_end - f_start) * frac;
      double gate = 1.0;
      if (i < ramp) gate = 0.5 - 0.5 * std::cos(std::numbers::pi * i / ramp);
      if (len - 1 - i < ramp) gate = std::min(gate, 0.5 - 0.5 * std::cos(std::numbers::pi * (len - 1 - i) / ramp));
      double s = 0.0;
      for (std::size_t h = 0; h < n_harm; ++h) {
        const double f = f0 * static_cast<double>(h + 1);
        phase[h] += 2.0 * std::numbers::pi * f / sr;
        if (f < f_top) s += envelope(v, f) * std::sin(phase[h]);
      }
      clip.samples[pos + i] = amp * gate * s;
    }
    pos += len;
  }
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  const double g = peak > 0.0 ? 0.5 / peak : 1.0;
  for (double& s : clip.samples) s = s * g + 1e-4 * (2.0 * rng.uniform() - 1.0);
  return clip;
}

Manifest make_synthetic_corpus(const SynthConfig& cfg, Rng& rng, const fs::path& out_dir, bool force,
                               std::vector<SyntheticVoice>* voices_out) {
  cfg.validate();
  std::error_code ec;
  if (fs::exists(out_dir, ec) && !fs::is_empty(out_dir, ec) && !force)
    throw IoError("output directory " + out_dir.string() + " is not empty (use --force)");
  fs::create_directories(out_dir / "wav", ec);
  if (ec || !fs::is_directory(out_dir / "wav"))
    throw IoError("cannot create " + (out_dir / "wav").string());

  const auto voices = make_voices(cfg.n_speakers, rng);
  Manifest m;
  m.root = out_dir;
  for (const auto& v : voices) {
    for (std::size_t u = 0; u < cfg.n_utts; ++u) {
      const std::string id = v.speaker_id + "_u" + std::to_string(u);
      const fs::path rel = fs::path("wav") / (id + ".wav");
      write_wav_pcm16(out_dir / rel, synthesize_utterance(v, cfg.duration_s, cfg.sample_rate, rng));
      m.entries.push_back({id, rel, v.speaker_id});
    }
  }
  m.validate();
  save_manifest(m, out_dir / "manifest.tsv");
  if (voices_out) *voices_out = voices;
  return m;
}

}  // namespace stylevc
