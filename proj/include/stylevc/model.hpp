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

// Generator assembly: content encoder (Conformer + instance norm + pooling,
// Gaussian posterior heads), speaker encoder (Conformer without instance
// norm, attentive statistics pooling) with its angular-margin class head,
// and the stylized decoder.

#include <cstdint>
#include <vector>

#include "stylevc/autograd.hpp"
#include "stylevc/nnblocks.hpp"
#include "stylevc/params.hpp"

namespace stylevc {

inline constexpr std::size_t kTimeReduction = 16;  // four pooling blocks
inline constexpr std::size_t kMinSpeakerFrames = 16;

struct ModelConfig {
  std::size_t n_mels = 80;
  std::size_t d_model = 128;
  std::size_t d_content = 64;
  std::size_t n_heads = 4;
  std::size_t conv_kernel = 15;
  std::size_t ff_expansion = 4;
  double dropout = 0.1;
  std::size_t speaker_blocks = 3;
  std::size_t rel_pos_clip = 16;
  std::size_t content_head_kernel = 3;
  std::size_t pool_hidden = 64;
  // Scale of the speaker output projection at init. 0 zero-initializes it,
  // which makes every embedding zero and the initial style the identity.
  double style_init_scale = 0.01;
  bool paper_literal_attention = false;
  std::size_t n_speakers = 4;  // angular-margin classes

  void validate() const;  // throws ConfigError
  nn::BlockConfig block_config() const;
  std::size_t embedding_dim() const { return 2 * d_model; }
  bool operator==(const ModelConfig&) const = default;
};

struct ContentLatent {
  Matrix r_m;  // posterior mean
  Matrix r_s;  // posterior std, > 0
  Matrix r_c;  // reparameterized sample
};

struct SpeakerEmbedding {
  Matrix values;  // [1 x 2 d_model]
  Matrix logits;  // angular-margin-free cosine logits, [1 x n_speakers]
};

struct GeneratorOutput {
  Matrix x_dec;
  ContentLatent latent;
  SpeakerEmbedding speaker;
};

// Graph-level latent.
struct LatentVars {
  ag::Var r_m, log_std, r_s, r_c;
};

// r_c = r_m + noise * r_s, noise ~ N(0, I).
ag::Var reparameterize(ag::Var r_m, ag::Var r_s, const Matrix& noise);

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  // ---- graph level ----
  // noise == nullptr means evaluation mode (e = 0, r_c = r_m).
  LatentVars content_encode(nn::Context& ctx, ag::Var mel, const Matrix* noise) const;
  ag::Var speaker_encode(nn::Context& ctx, ag::Var mel) const;
  nn::StyleVars split_style(nn::Context& ctx, ag::Var embedding) const;
  ag::Var decode(nn::Context& ctx, ag::Var r_c, const nn::StyleVars& style) const;
  ag::Var class_weights(nn::Context& ctx) const;

  // ---- value level, evaluation mode ----
  // rng == nullptr: e = 0.
  ContentLatent content_encode(const Matrix& mel, Rng* rng = nullptr) const;
  SpeakerEmbedding speaker_encode(const Matrix& mel) const;
  Matrix decode(const Matrix& r_c, const nn::StyleParams& style) const;
  // decode(content_encode(src), split_style(speaker_encode(tgt))).
  GeneratorOutput convert(const Matrix& src, const Matrix& tgt) const;

  // First half -> 1 + tanh(.), second half unchanged. Odd length -> InputError.
  static nn::StyleParams split_style(const Matrix& embedding);
  // Inverse of split_style: recovers the pre-activation embedding.
  static Matrix merge_style(const nn::StyleParams& style);

  // Latent frames for an input of `frames` mel frames.
  static std::size_t latent_frames(std::size_t frames) { return frames / kTimeReduction; }

 private:
  void check_mel(const Matrix& mel, const char* op) const;

  ModelConfig cfg_;
  ParamStore params_;
  // content encoder
  nn::Linear content_in_;
  std::vector<nn::ConformerBlock> content_blocks_;
  nn::Linear mean_conv_, std_conv_;
  // speaker encoder
  nn::Linear speaker_in_;
  std::vector<nn::ConformerBlock> speaker_blocks_;
  nn::AttentiveStatsPool pool_;
  nn::Linear speaker_out_;
  int aam_weights_ = -1;
  // decoder
  nn::Linear decoder_in_;
  std::vector<nn::ZipformerBlock> decoder_blocks_;
  nn::Linear decoder_out_;
};

}  // namespace stylevc
