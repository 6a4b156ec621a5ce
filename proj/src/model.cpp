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

#include "stylevc/model.hpp"

#include <cmath>

#include "stylevc/error.hpp"

namespace stylevc {

using ag::Var;

void ModelConfig::validate() const {
  block_config().validate();
  if (n_mels == 0 || d_content == 0) throw ConfigError("model: n_mels and d_content must be positive");
  if (content_head_kernel % 2 == 0) throw ConfigError("model: content_head_kernel must be odd");
  if (speaker_blocks == 0) throw ConfigError("model: speaker_blocks must be >= 1");
  if (n_speakers < 2) throw ConfigError("model: need at least 2 speaker classes");
  if (style_init_scale < 0.0) throw ConfigError("model: style_init_scale must be >= 0");
  if (pool_hidden == 0) throw ConfigError("model: pool_hidden must be positive");
}

nn::BlockConfig ModelConfig::block_config() const {
  nn::BlockConfig b;
  b.d_model = d_model;
  b.n_heads = n_heads;
  b.conv_kernel = conv_kernel;
  b.ff_expansion = ff_expansion;
  b.dropout = dropout;
  b.rel_pos_clip = rel_pos_clip;
  b.attention = paper_literal_attention ? nn::AttentionVariant::kPaperLiteral
                                        : nn::AttentionVariant::kSoftmax;
  return b;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const auto block = cfg_.block_config();
  const std::size_t d = cfg_.d_model;

  content_in_ = nn::Linear(params_, "content.input", cfg_.n_mels, d, rng);
  for (std::size_t i = 0; i < 4; ++i)
    content_blocks_.emplace_back(params_, "content.block" + std::to_string(i), block, rng, true, true);
  const std::size_t k = cfg_.content_head_kernel;
  mean_conv_ = nn::Linear(params_, "content.mean_conv", k * d, cfg_.d_content, rng);
  std_conv_ = nn::Linear(params_, "content.std_conv", k * d, cfg_.d_content, rng, nn::Init::kSmall);

  speaker_in_ = nn::Linear(params_, "speaker.input", cfg_.n_mels, d, rng);
  for (std::size_t i = 0; i < cfg_.speaker_blocks; ++i)
    speaker_blocks_.emplace_back(params_, "speaker.block" + std::to_string(i), block, rng, false, false);
  pool_ = nn::AttentiveStatsPool(params_, "speaker.pool", d, cfg_.pool_hidden, rng);
  speaker_out_ = nn::Linear(params_, "speaker.output", 2 * d, cfg_.embedding_dim(), rng,
                            cfg_.style_init_scale == 0.0 ? nn::Init::kZero : nn::Init::kSmall, true,
                            cfg_.style_init_scale);
  aam_weights_ = params_.add("aam.class_weights",
                             rng.normal_matrix(cfg_.n_speakers, cfg_.embedding_dim(), 1.0));

  decoder_in_ = nn::Linear(params_, "decoder.input", cfg_.d_content, d, rng);
  for (std::size_t i = 0; i < 4; ++i)
    decoder_blocks_.emplace_back(params_, "decoder.block" + std::to_string(i), block, rng);
  decoder_out_ = nn::Linear(params_, "decoder.output", d, cfg_.n_mels, rng);
}

void Model::check_mel(const Matrix& mel, const char* op) const {
  if (mel.cols() != cfg_.n_mels)
    throw InputError(std::string(op) + ": expected " + std::to_string(cfg_.n_mels) +
                     " mel bins, got " + std::to_string(mel.cols()));
}

Var reparameterize(Var r_m, Var r_s, const Matrix& noise) {
  return ag::add(r_m, ag::mul(r_m.tape()->constant(noise), r_s));
}

LatentVars Model::content_encode(nn::Context& ctx, Var mel, const Matrix* noise) const {
  check_mel(mel.value(), "content_encode");
  const std::size_t L = mel.rows();
  if (L == 0 || L % kTimeReduction != 0)
    throw InputError("content_encode: frame count " + std::to_string(L) +
                     " is not a positive multiple of 16");
  Var h = content_in_(ctx, mel);
  for (const auto& b : content_blocks_) h = b(ctx, h);
  Var unfolded = ag::unfold_time(h, cfg_.content_head_kernel);
  LatentVars z;
  z.r_m = mean_conv_(ctx, unfolded);
  z.log_std = std_conv_(ctx, unfolded);
  z.r_s = ag::exp(z.log_std);
  if (noise) {
    if (!noise->same_shape(z.r_m.value()))
      throw InputError("content_encode: noise " + noise->shape_string() + " for latent " +
                       z.r_m.value().shape_string());
    z.r_c = reparameterize(z.r_m, z.r_s, *noise);
  } else {
    z.r_c = z.r_m;
  }
  return z;
}

Var Model::speaker_encode(nn::Context& ctx, Var mel) const {
  check_mel(mel.value(), "speaker_encode");
  if (mel.rows() < kMinSpeakerFrames)
    throw InputError("speaker_encode: need at least 16 frames, got " + std::to_string(mel.rows()));
  Var h = speaker_in_(ctx, mel);
  for (const auto& b : speaker_blocks_) h = b(ctx, h);
  return speaker_out_(ctx, pool_(ctx, h));
}

nn::StyleVars Model::split_style(nn::Context&, Var embedding) const {
  const std::size_t d = cfg_.d_model;
  if (embedding.cols() != 2 * d) throw InputError("split_style: embedding length mismatch");
  Var a = ag::slice_cols(embedding, 0, d);
  Var b = ag::slice_cols(embedding, d, d);
  return {ag::add_scalar(ag::tanh(a), 1.0), b};
}

Var Model::decode(nn::Context& ctx, Var r_c, const nn::StyleVars& style) const {
  if (r_c.cols() != cfg_.d_content)
    throw InputError("decode: latent has " + std::to_string(r_c.cols()) + " channels, expected " +
                     std::to_string(cfg_.d_content));
  if (style.active() && (style.s1.cols() != cfg_.d_model || style.s2.cols() != cfg_.d_model))
    throw InputError("decode: style length mismatch");
  Var h = decoder_in_(ctx, r_c);
  for (const auto& b : decoder_blocks_) h = b(ctx, ag::upsample_linear(h, 2), style);
  return decoder_out_(ctx, h);
}

Var Model::class_weights(nn::Context& ctx) const { return ctx.params(aam_weights_); }

// ---------------------------------------------------------------------------

ContentLatent Model::content_encode(const Matrix& mel, Rng* rng) const {
  ag::Tape tape;
  ParamBinding binding(tape, params_);
  nn::Context ctx{binding};
  Matrix noise;
  const std::size_t lat = latent_frames(mel.rows());
  if (rng) noise = rng->normal_matrix(lat, cfg_.d_content);
  LatentVars z = content_encode(ctx, tape.constant(mel), rng ? &noise : nullptr);
  return {z.r_m.value(), z.r_s.value(), z.r_c.value()};
}

SpeakerEmbedding Model::speaker_encode(const Matrix& mel) const {
  ag::Tape tape;
  ParamBinding binding(tape, params_);
  nn::Context ctx{binding};
  Var e = speaker_encode(ctx, tape.constant(mel));
  Var cos = ag::matmul_nt(ag::normalize_rows(e, 1e-12), ag::normalize_rows(class_weights(ctx), 1e-12));
  return {e.value(), cos.value()};
}

Matrix Model::decode(const Matrix& r_c, const nn::StyleParams& style) const {
  ag::Tape tape;
  ParamBinding binding(tape, params_);
  nn::Context ctx{binding};
  nn::StyleVars sv{tape.constant(style.s1), tape.constant(style.s2)};
  return decode(ctx, tape.constant(r_c), sv).value();
}

GeneratorOutput Model::convert(const Matrix& src, const Matrix& tgt) const {
  GeneratorOutput out;
  out.latent = content_encode(src);
  out.speaker = speaker_encode(tgt);
  out.x_dec = decode(out.latent.r_c, split_style(out.speaker.values));
  return out;
}

nn::StyleParams Model::split_style(const Matrix& embedding) {
  if (embedding.rows() != 1 || embedding.cols() % 2 != 0)
    throw InputError("split_style: embedding must be a row of even length, got " +
                     embedding.shape_string());
  const std::size_t d = embedding.cols() / 2;
  nn::StyleParams s{Matrix(1, d), Matrix(1, d)};
  for (std::size_t j = 0; j < d; ++j) {
    s.s1(0, j) = 1.0 + std::tanh(embedding(0, j));
    s.s2(0, j) = embedding(0, d + j);
  }
  return s;
}

Matrix Model::merge_style(const nn::StyleParams& style) {
  const std::size_t d = style.dim();
  Matrix e(1, 2 * d);
  for (std::size_t j = 0; j < d; ++j) {
    e(0, j) = std::atanh(style.s1(0, j) - 1.0);
    e(0, d + j) = style.s2(0, j);
  }
  return e;
}

}  // namespace stylevc
