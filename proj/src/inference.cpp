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

#include "stylevc/inference.hpp"

#include <cstring>
#include <fstream>

#include "stylevc/error.hpp"
#include "stylevc/wav.hpp"

namespace stylevc {

namespace fs = std::filesystem;

void write_sidecar(const fs::path& path, const MelSpectrogram& mel) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write sidecar " + path.string());
  const auto L = static_cast<std::uint32_t>(mel.frames());
  const auto D = static_cast<std::uint32_t>(mel.bins());
  os.write(kSidecarMagic, 8);
  os.write(reinterpret_cast<const char*>(&L), 4);
  os.write(reinterpret_cast<const char*>(&D), 4);
  std::vector<float> buf(mel.values.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(mel.values.data()[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  const float hop = static_cast<float>(mel.hop_length);
  const float rate = static_cast<float>(mel.sample_rate);
  os.write(reinterpret_cast<const char*>(&hop), 4);
  os.write(reinterpret_cast<const char*>(&rate), 4);
  if (!os) throw IoError("write failed: " + path.string());
}

MelSpectrogram read_sidecar(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open sidecar " + path.string());
  std::vector<char> b((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (b.size() < 16 || std::memcmp(b.data(), kSidecarMagic, 8) != 0)
    throw IntegrityError(path.string() + ": not a sidecar mel file");
  std::uint32_t L, D;
  std::memcpy(&L, b.data() + 8, 4);
  std::memcpy(&D, b.data() + 12, 4);
  const std::size_t n = static_cast<std::size_t>(L) * D;
  if (b.size() != 16 + n * 4 + 8) throw IntegrityError(path.string() + ": sidecar size does not match its header");
  MelSpectrogram mel;
  mel.values = Matrix(L, D);
  for (std::size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, b.data() + 16 + 4 * i, 4);
    mel.values.data()[i] = f;
  }
  float hop, rate;
  std::memcpy(&hop, b.data() + 16 + 4 * n, 4);
  std::memcpy(&rate, b.data() + 20 + 4 * n, 4);
  mel.hop_length = static_cast<std::size_t>(hop);
  mel.sample_rate = static_cast<int>(rate);
  return mel;
}

Matrix quantize_f32(const Matrix& m) {
  Matrix q = m;
  for (double& v : q.flat()) v = static_cast<float>(v);
  return q;
}

Matrix convert_mel(const Model& model, const Matrix& source, const Matrix& target) {
  const std::size_t L = source.rows();
  if (L < kTimeReduction)
    throw InputError("source has " + std::to_string(L) + " frames; at least 16 are required");
  if (target.rows() < kMinSpeakerFrames)
    throw InputError("target reference has " + std::to_string(target.rows()) + " frames; at least 16 are required");
  const std::size_t padded = (L + kTimeReduction - 1) / kTimeReduction * kTimeReduction;
  Matrix src(padded, source.cols());
  for (std::size_t t = 0; t < padded; ++t) {
    const auto from = source.row(std::min(t, L - 1));
    std::copy(from.begin(), from.end(), src.row(t).begin());
  }
  Matrix out = model.convert(src, target).x_dec;
  return padded == L ? out : out.row_range(0, L);
}

fs::path sidecar_path_for(const fs::path& output) {
  fs::path p = output;
  p.replace_extension(".mel");
  return p;
}

ConversionResult convert_file(const Model& model, const FeatureConfig& features, const ConversionRequest& req) {
  const MelSpectrogram src = extract_logmel(read_wav(req.source_audio), features);
  const MelSpectrogram tgt = extract_logmel(read_wav(req.target_audio), features);
  ConversionResult res;
  res.mel.values = convert_mel(model, src.values, tgt.values);
  res.mel.hop_length = features.hop_length;
  res.mel.sample_rate = features.sample_rate;
  if (!req.output.parent_path().empty()) fs::create_directories(req.output.parent_path());
  res.sidecar = sidecar_path_for(req.output);
  write_sidecar(res.sidecar, res.mel);
  if (req.vocoder == VocoderMode::kGriffinLim) {
    res.wav = req.output;
    write_wav_pcm16(res.wav, inverse_logmel(res.mel, features, req.griffin_lim_iters));
  }
  return res;
}

std::size_t BatchReport::failures() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += !r.ok;
  return n;
}

BatchReport batch_convert(const Model& model, const FeatureConfig& features, const Manifest& manifest,
                          const fs::path& target_ref, const fs::path& out_dir, VocoderMode vocoder,
                          int griffin_lim_iters) {
  fs::create_directories(out_dir);
  const MelSpectrogram tgt = extract_logmel(read_wav(target_ref), features);
  BatchReport report;
  report.rows.resize(manifest.entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    BatchRow& row = report.rows[i];
    row.utterance_id = e.utterance_id;
    try {
      const MelSpectrogram src = extract_logmel(read_wav(manifest.resolve(e)), features);
      MelSpectrogram mel;
      mel.values = convert_mel(model, src.values, tgt.values);
      mel.hop_length = features.hop_length;
      mel.sample_rate = features.sample_rate;
      const fs::path wav = out_dir / (e.utterance_id + ".wav");
      const fs::path side = sidecar_path_for(wav);
      write_sidecar(side, mel);
      if (vocoder == VocoderMode::kGriffinLim) write_wav_pcm16(wav, inverse_logmel(mel, features, griffin_lim_iters));
      row.output = side.string();
      row.ok = true;
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
  }
  std::ofstream os(out_dir / "report.csv");
  if (!os) throw IoError("cannot write " + (out_dir / "report.csv").string());
  os << "utterance_id,output,status,error\n";
  for (const auto& r : report.rows) {
    std::string err = r.error;
    for (char& c : err)
      if (c == ',' || c == '\n') c = ';';
    os << r.utterance_id << ',' << r.output << ',' << (r.ok ? "ok" : "failed") << ',' << err << '\n';
  }
  return report;
}

}  // namespace stylevc
