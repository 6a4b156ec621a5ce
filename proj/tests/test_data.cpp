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

#include <fstream>
#include <set>
#include <thread>

#include "doctest.h"
#include "stylevc/data.hpp"
#include "stylevc/error.hpp"
#include "stylevc/wav.hpp"
#include "test_util.hpp"

using namespace stylevc;
namespace fs = std::filesystem;

namespace {

fs::path write_text(const fs::path& dir, const std::string& name, const std::string& text) {
  std::ofstream(dir / name) << text;
  return dir / name;
}

// In-memory bank: `per_speaker[s]` utterances of `frames` frames each.
FeatureBank toy_bank(const std::vector<std::size_t>& per_speaker, std::size_t frames, std::uint64_t seed = 1) {
  FeatureBank bank;
  bank.n_speakers = per_speaker.size();
  Rng rng(seed);
  for (std::size_t s = 0; s < per_speaker.size(); ++s)
    for (std::size_t u = 0; u < per_speaker[s]; ++u) {
      MelSpectrogram m;
      m.values = test::random_matrix(rng, frames, 80);
      bank.mels.push_back(m);
      bank.labels.push_back(s);
      bank.utterance_ids.push_back("s" + std::to_string(s) + "_" + std::to_string(u));
    }
  return bank;
}

void check_triplet(const FeatureBank& bank, const Triplet& t, std::size_t seg) {
  CHECK(bank.labels[t.utt_anc] == t.spk_anc);
  CHECK(bank.labels[t.utt_pos] == t.spk_anc);
  CHECK(bank.labels[t.utt_neg] == t.spk_neg);
  CHECK(t.spk_anc != t.spk_neg);
  CHECK(t.utt_anc != t.utt_pos);
  for (const Matrix* m : {&t.anc, &t.pos, &t.neg}) {
    CHECK(m->rows() == seg);
    CHECK(m->rows() % 16 == 0);
  }
}

}  // namespace

TEST_CASE("manifest parsing") {
  const auto dir = test::temp_dir("manifest");
  const auto ok = write_text(dir, "ok.tsv", "# comment\na\twav/a.wav\tA\nb\twav/b.wav\tA\n\nc\twav/c.wav\tB\nd\td.wav\tB\n");
  const Manifest m = load_manifest(ok);
  CHECK(m.entries.size() == 4);
  CHECK(m.speakers == std::vector<std::string>{"A", "B"});
  CHECK(m.speaker_index("B") == 1);
  CHECK(m.resolve(m.entries[0]) == dir / "wav/a.wav");
  CHECK(m.by_speaker() == std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}});

  // Three lines load when the invariants are skipped.
  Manifest three;
  three.entries = {{"a", "a.wav", "A"}, {"b", "b.wav", "A"}, {"c", "c.wav", "B"}};
  three.validate(false);
  CHECK(three.entries.size() == 3);
  CHECK_THROWS_AS(three.validate(), DataError);

  const auto bad = write_text(dir, "bad.tsv", "a\ta.wav\tA\nb a.wav B\n");
  try {
    load_manifest(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  const auto dup = write_text(dir, "dup.tsv", "a\ta.wav\tA\nb\tb.wav\tA\na\tc.wav\tB\nd\td.wav\tB\n");
  CHECK_THROWS_AS(load_manifest(dup), ParseError);
  const auto single = write_text(dir, "single.tsv", "a\ta.wav\tA\nb\tb.wav\tA\n");
  try {
    load_manifest(single);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(">= 2 distinct speakers") != std::string::npos);
  }
  const auto lonely = write_text(dir, "lonely.tsv", "a\ta.wav\tA\nb\tb.wav\tA\nc\tc.wav\tB\n");
  try {
    load_manifest(lonely);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("'B'") != std::string::npos);
  }
  CHECK_THROWS_AS(load_manifest(dir / "missing.tsv"), IoError);
}

TEST_CASE("manifest save/load round trip and holdout split") {
  const auto dir = test::temp_dir("manifest_rt");
  Manifest m;
  for (const char* s : {"A", "B"})
    for (int u = 0; u < 4; ++u)
      m.entries.push_back({std::string(s) + std::to_string(u), fs::path("wav") / (std::string(s) + ".wav"), s});
  m.validate();
  save_manifest(m, dir / "m.tsv");
  const Manifest r = load_manifest(dir / "m.tsv");
  REQUIRE(r.entries.size() == m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(r.entries[i].utterance_id == m.entries[i].utterance_id);
    CHECK(r.entries[i].audio_path == m.entries[i].audio_path);
    CHECK(r.entries[i].speaker_id == m.entries[i].speaker_id);
  }
  const auto [train, held] = split_holdout(m, 2);
  CHECK(train.entries.size() == 4);
  CHECK(held.entries.size() == 4);
  CHECK(held.entries[0].utterance_id == "A2");
  CHECK(held.speakers == m.speakers);
  CHECK_THROWS_AS(split_holdout(m, 3), DataError);
}

TEST_CASE("triplet constraints on a minimal corpus") {
  const FeatureBank bank = toy_bank({2, 2}, 40);
  const TripletSampler sampler(bank, 32);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) check_triplet(bank, sampler.sample(rng), 32);
}

TEST_CASE("crops are windows of the source utterances") {
  const FeatureBank bank = toy_bank({3, 3, 3}, 50);
  const TripletSampler sampler(bank, 16);
  Rng rng(4);
  std::set<std::size_t> offsets;
  for (int i = 0; i < 300; ++i) {
    const Triplet t = sampler.sample(rng);
    const Matrix& src = bank.mels[t.utt_anc].values;
    bool found = false;
    for (std::size_t off = 0; off + 16 <= src.rows() && !found; ++off)
      if (src.row_range(off, 16) == t.anc) {
        found = true;
        offsets.insert(off);
      }
    CHECK(found);
  }
  CHECK(offsets.size() > 25);  // 35 valid offsets
}

TEST_CASE("batch validator over 10,000 batches") {
  const FeatureBank bank = toy_bank({3, 2, 4, 2}, 32);
  const TripletSampler sampler(bank, 32);
  Rng rng(5);
  std::size_t bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const TripletBatch b = sampler.sample_batch(rng, 2, 4);
    try {
      b.validate(32);
    } catch (const DataError&) {
      ++bad;
    }
    for (const auto& t : b.rows)
      if (bank.labels[t.utt_anc] != t.spk_anc || bank.labels[t.utt_pos] != t.spk_anc || t.spk_anc == t.spk_neg ||
          t.utt_anc == t.utt_pos)
        ++bad;
  }
  CHECK(bad == 0);
  TripletBatch broken = sampler.sample_batch(rng, 1, 4);
  broken.rows[0].spk_neg = broken.rows[0].spk_anc;
  CHECK_THROWS_AS(broken.validate(32), DataError);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  const FeatureBank bank = toy_bank({3, 3, 3}, 48);
  const TripletSampler sampler(bank, 32);
  Rng a(9), b(9);
  for (int i = 0; i < 50; ++i) {
    const TripletBatch x = sampler.sample_batch(a, 3, 2), y = sampler.sample_batch(b, 3, 2);
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(x.rows[r].anc == y.rows[r].anc);
      CHECK(x.rows[r].neg == y.rows[r].neg);
      CHECK(x.noise[r] == y.noise[r]);
      CHECK(x.dropout_seeds[r] == y.dropout_seeds[r]);
    }
    CHECK(x.rng_state_after == y.rng_state_after);
  }
}

TEST_CASE("anchor speakers are uniform") {
  const FeatureBank bank = toy_bank({2, 3, 4, 5}, 32);
  const TripletSampler sampler(bank, 32);
  Rng rng(6);
  std::vector<double> counts(4, 0.0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[sampler.sample(rng).spk_anc] += 1.0;
  const double expect = n / 4.0;
  double chi2 = 0.0;
  for (double c : counts) {
    CHECK(std::abs(c - expect) < 0.05 * expect);
    chi2 += (c - expect) * (c - expect) / expect;
  }
  MESSAGE("anchor chi-square " << chi2);
  CHECK(chi2 < 7.815);  // 95th percentile, 3 degrees of freedom
}

TEST_CASE("sampler preconditions") {
  CHECK_THROWS_AS(TripletSampler(toy_bank({3}, 32), 32), DataError);
  CHECK_THROWS_AS(TripletSampler(toy_bank({1, 1}, 32), 32), DataError);
  CHECK_THROWS_AS(TripletSampler(toy_bank({2, 2}, 20), 32), DataError);
  CHECK_THROWS_AS(TripletSampler(toy_bank({2, 2}, 40), 24), ConfigError);
  // A speaker with one utterance can only be a negative.
  const FeatureBank bank = toy_bank({1, 2, 2}, 32);
  const TripletSampler sampler(bank, 32);
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const Triplet t = sampler.sample(rng);
    CHECK(t.spk_anc != 0);
    check_triplet(bank, t, 32);
  }
}

TEST_CASE("synthetic corpus") {
  const auto dir = test::temp_dir("synth");
  SynthConfig cfg;
  Rng rng(11);
  std::vector<SyntheticVoice> voices;
  const Manifest m = make_synthetic_corpus(cfg, rng, dir / "c", false, &voices);
  CHECK(m.entries.size() == 32);
  CHECK(m.speakers.size() == 4);
  std::size_t wavs = 0;
  for (const auto& e : fs::directory_iterator(dir / "c" / "wav")) wavs += e.path().extension() == ".wav";
  CHECK(wavs == 32);
  CHECK(load_manifest(dir / "c" / "manifest.tsv").entries.size() == 32);
  const AudioClip clip = read_wav(m.resolve(m.entries[0]));
  CHECK(clip.sample_rate == 22050);
  CHECK(clip.samples.size() == 22050);

  // Distinct speakers differ in every formant (disjoint slots per band).
  for (std::size_t i = 0; i < voices.size(); ++i)
    for (std::size_t j = i + 1; j < voices.size(); ++j) {
      int differ = 0;
      for (int k = 0; k < 3; ++k) {
        const double width = (kFormantBands[k][1] - kFormantBands[k][0]) / 4.0;
        differ += std::abs(voices[i].formants_hz[k] - voices[j].formants_hz[k]) > 0.4 * width;
      }
      CHECK(differ >= 2);
    }

  // Long-term average spectrum peaks per formant region agree across
  // utterances of one speaker.
  const FeatureConfig fc;
  const auto edges = mel_band_edges_hz(fc);
  auto ltas_peaks = [&](const ManifestEntry& e) {
    const Matrix mel = extract_logmel(read_wav(m.resolve(e)), fc).values;
    std::vector<double> ltas(fc.n_mels, 0.0);
    for (std::size_t t = 0; t < mel.rows(); ++t)
      for (std::size_t b = 0; b < fc.n_mels; ++b) ltas[b] += std::exp(mel(t, b));
    std::vector<std::size_t> peaks;
    for (const auto& band : kFormantBands) {
      std::size_t best = fc.n_mels;
      for (std::size_t b = 0; b < fc.n_mels; ++b) {
        const double centre = edges[b + 1];
        if (centre < band[0] || centre > band[1]) continue;
        if (best == fc.n_mels || ltas[b] > ltas[best]) best = b;
      }
      peaks.push_back(best);
    }
    return peaks;
  };
  const auto groups = m.by_speaker();
  for (const auto& g : groups) {
    const auto ref = ltas_peaks(m.entries[g[0]]);
    for (std::size_t u = 1; u < 3; ++u) {
      const auto other = ltas_peaks(m.entries[g[u]]);
      for (int k = 0; k < 3; ++k)
        CHECK(std::abs(static_cast<long>(ref[k]) - static_cast<long>(other[k])) <= 1);
    }
  }

  CHECK_THROWS_AS(make_synthetic_corpus(cfg, rng, dir / "c"), IoError);
  SynthConfig bad = cfg;
  bad.n_speakers = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.n_utts = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("bounded queue hands off in order and closes") {
  BoundedQueue<int> q(2);
  std::thread producer([&] {
    for (int i = 0; i < 100; ++i) q.push(i);
    q.close();
  });
  int expect = 0;
  while (auto v = q.pop()) CHECK(*v == expect++);
  producer.join();
  CHECK(expect == 100);
  CHECK(!q.push(1));
  CHECK(BoundedQueue<int>(0).capacity() == 1);
}
