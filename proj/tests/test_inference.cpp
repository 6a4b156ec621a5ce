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

#include "doctest.h"
#include "stylevc/error.hpp"
#include "stylevc/inference.hpp"
#include "stylevc/training.hpp"
#include "stylevc/wav.hpp"
#include "test_util.hpp"

using namespace stylevc;
namespace fs = std::filesystem;
using test::random_matrix;

namespace {

// Two synthetic voices, `n` utterances each, written under dir/wav.
Manifest write_corpus(const fs::path& dir, std::size_t n, double seconds = 0.4) {
  Rng rng(41);
  const auto voices = make_voices(2, rng);
  Manifest m;
  m.root = dir;
  fs::create_directories(dir / "wav");
  for (const auto& v : voices)
    for (std::size_t u = 0; u < n; ++u) {
      const std::string id = v.speaker_id + "_" + std::to_string(u);
      write_wav_pcm16(dir / "wav" / (id + ".wav"), synthesize_utterance(v, seconds, 22050, rng));
      m.entries.push_back({id, fs::path("wav") / (id + ".wav"), v.speaker_id});
    }
  m.validate(n >= 2);
  return m;
}

}  // namespace

TEST_CASE("sidecar round trip is bit-exact in float32") {
  const auto dir = test::temp_dir("sidecar");
  Rng rng(40);
  MelSpectrogram mel;
  mel.values = random_matrix(rng, 37, 80, -11.0, 3.0);
  write_sidecar(dir / "a.mel", mel);
  const MelSpectrogram r = read_sidecar(dir / "a.mel");
  CHECK(r.values == quantize_f32(mel.values));
  CHECK(r.hop_length == 256);
  CHECK(r.sample_rate == 22050);
  write_sidecar(dir / "b.mel", r);
  CHECK(read_sidecar(dir / "b.mel").values == r.values);
  CHECK(sidecar_path_for("out/x.wav") == fs::path("out/x.mel"));

  std::ofstream(dir / "junk.mel") << "not a sidecar";
  CHECK_THROWS_AS(read_sidecar(dir / "junk.mel"), IntegrityError);
  CHECK_THROWS_AS(read_sidecar(dir / "missing.mel"), IoError);
}

TEST_CASE("convert_mel pads to a multiple of 16 and trims back") {
  const Model model(tiny_model_config(2), 42);
  Rng rng(42);
  const Matrix tgt = random_matrix(rng, 40, 80, -8.0, 1.0);
  for (std::size_t L : {16u, 17u, 31u, 33u, 100u}) {
    const Matrix src = random_matrix(rng, L, 80, -8.0, 1.0);
    const Matrix out = convert_mel(model, src, tgt);
    CHECK(out.rows() == L);
    CHECK(out.cols() == 80);
    // Same as converting the explicitly padded source.
    const std::size_t padded = (L + 15) / 16 * 16;
    Matrix p(padded, 80);
    for (std::size_t t = 0; t < padded; ++t)
      for (std::size_t c = 0; c < 80; ++c) p(t, c) = src(std::min(t, L - 1), c);
    CHECK(out == model.convert(p, tgt).x_dec.row_range(0, L));
  }
  CHECK_THROWS_AS(convert_mel(model, random_matrix(rng, 15, 80), tgt), InputError);
  CHECK_THROWS_AS(convert_mel(model, tgt, random_matrix(rng, 15, 80)), InputError);
  CHECK(convert_mel(model, tgt, tgt) == convert_mel(model, tgt, tgt));
}

TEST_CASE("convert_file composes features, model and sidecar") {
  const auto dir = test::temp_dir("convert_file");
  const Manifest m = write_corpus(dir, 1);
  const Model model(tiny_model_config(2), 43);
  const FeatureConfig fc;
  ConversionRequest req;
  req.source_audio = m.resolve(m.entries[0]);
  req.target_audio = m.resolve(m.entries[1]);
  req.output = dir / "out" / "ext.wav";
  req.vocoder = VocoderMode::kExternal;
  const auto res = convert_file(model, fc, req);
  CHECK(res.wav.empty());
  CHECK(!fs::exists(req.output));
  CHECK(fs::exists(res.sidecar));
  const Matrix manual = convert_mel(model, extract_logmel(read_wav(req.source_audio), fc).values,
                                    extract_logmel(read_wav(req.target_audio), fc).values);
  CHECK(res.mel.values == manual);
  CHECK(read_sidecar(res.sidecar).values == quantize_f32(manual));

  req.output = dir / "out" / "gl.wav";
  req.vocoder = VocoderMode::kGriffinLim;
  req.griffin_lim_iters = 4;
  const auto gl = convert_file(model, fc, req);
  CHECK(gl.wav == req.output);
  const AudioClip clip = read_wav(gl.wav);
  CHECK(clip.sample_rate == 22050);
  CHECK(extract_logmel(clip, fc).frames() == res.mel.frames());

  req.source_audio = dir / "missing.wav";
  CHECK_THROWS_AS(convert_file(model, fc, req), IoError);
  AudioClip other;
  other.sample_rate = 16000;
  other.samples.assign(8000, 0.1);
  write_wav_pcm16(dir / "16k.wav", other);
  req.source_audio = dir / "16k.wav";
  CHECK_THROWS_AS(convert_file(model, fc, req), ConfigError);
}

TEST_CASE("batch conversion counts outputs and isolates failures") {
  const auto dir = test::temp_dir("batch");
  Manifest m = write_corpus(dir, 5);
  REQUIRE(m.entries.size() == 10);
  const Model model(tiny_model_config(2), 44);
  const FeatureConfig fc;
  const fs::path target = m.resolve(m.entries[9]);

  auto count_mels = [](const fs::path& d) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(d)) n += e.path().extension() == ".mel";
    return n;
  };
  auto report_rows = [](const fs::path& csv) {
    std::ifstream is(csv);
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) ++n;
    return n - 1;  // header
  };

  const auto all = batch_convert(model, fc, m, target, dir / "all");
  CHECK(all.rows.size() == 10);
  CHECK(all.failures() == 0);
  CHECK(count_mels(dir / "all") == 10);
  CHECK(report_rows(dir / "all" / "report.csv") == 10);
  // Deterministic: the same run reproduces every sidecar.
  const auto again = batch_convert(model, fc, m, target, dir / "again");
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(read_sidecar(again.rows[i].output).values == read_sidecar(all.rows[i].output).values);

  Manifest empty;
  empty.root = dir;
  const auto none = batch_convert(model, fc, empty, target, dir / "none");
  CHECK(none.rows.empty());
  CHECK(report_rows(dir / "none" / "report.csv") == 0);

  std::ofstream(dir / "wav" / "broken.wav") << "garbage";
  m.entries[3].audio_path = fs::path("wav") / "broken.wav";
  const auto bad = batch_convert(model, fc, m, target, dir / "bad");
  CHECK(bad.failures() == 1);
  CHECK(!bad.rows[3].ok);
  CHECK(!bad.rows[3].error.empty());
  CHECK(count_mels(dir / "bad") == 9);
  CHECK(report_rows(dir / "bad" / "report.csv") == 10);
}
