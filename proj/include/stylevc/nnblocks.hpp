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

// Neural building blocks: instance/weight normalization, the stylized
// attention mechanism, Conformer blocks (optionally with instance norm and
// time pooling) and the simplified Zipformer-style decoder block.
//
// Each block exists as a graph-level module (parameters registered in a
// ParamStore, forward on a tape) and the parameter-free pieces are also
// exposed as plain value functions on Matrix.

#include <cstddef>
#include <string>
#include <vector>

#include "stylevc/autograd.hpp"
#include "stylevc/matrix.hpp"
#include "stylevc/params.hpp"
#include "stylevc/rng.hpp"

namespace stylevc::nn {

inline constexpr double kInstanceNormEps = 1e-8;
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kWeightNormEps = 1e-12;

// Split speaker embedding: multiplicative scale s1 and additive shift s2,
// each [1 x d_model].
struct StyleParams {
  Matrix s1;
  Matrix s2;

  static StyleParams identity(std::size_t d_model);
  std::size_t dim() const noexcept { return s1.cols(); }
};

// Query, key, value and bypass projections, each [d_model x d_model].
struct AttentionWeights {
  Matrix w_q, w_k, w_v, w_u;
};

enum class AttentionVariant {
  kSoftmax,       // softmax(QK^T / sqrt(d)) V + U
  kPaperLiteral,  // (QK^T / sqrt(d)) K + U, no softmax
};

struct BlockConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t conv_kernel = 15;
  std::size_t ff_expansion = 4;
  double dropout = 0.1;
  std::size_t rel_pos_clip = 16;  // relative position bias range (Conformer MHSA)
  AttentionVariant attention = AttentionVariant::kSoftmax;

  void validate() const;  // throws ConfigError
};

// ---- value-level operations ----

// Per-channel standardization over time. Throws InputError when L < 2.
Matrix instance_norm(const Matrix& x);

struct WeightNormResult {
  Matrix weights;
  std::size_t degenerate_rows = 0;  // all-zero rows, returned as (near) zero
};
// Each row divided by its L2 norm.
WeightNormResult weight_norm(const Matrix& w);

// w[i][j] * s1[j] + s2[j] for each of the four matrices.
AttentionWeights stylize_weights(const AttentionWeights& w, const StyleParams& style);

// Attention with stylized weights and stylized, normalized input.
Matrix stylized_attention(const Matrix& x, const AttentionWeights& w, const StyleParams& style,
                          std::size_t n_heads = 1,
                          AttentionVariant variant = AttentionVariant::kSoftmax);
// Same attention with the raw (unstylized) weights.
Matrix plain_attention(const Matrix& x, const AttentionWeights& w, std::size_t n_heads = 1,
                       AttentionVariant variant = AttentionVariant::kSoftmax);

Matrix upsample_time(const Matrix& x, std::size_t factor);

// ---- graph-level modules ----

// Capture points for tests and diagnostics. Filled only when attached.
struct BlockTrace {
  std::vector<Matrix> post_instance_norm;  // Conformer, one per block with IN
  std::vector<Matrix> shared_scores_first;   // Zipformer: per head, first use
  std::vector<Matrix> shared_scores_second;  // Zipformer: per head, reuse
  std::vector<Matrix> attention_probs;       // every softmax score matrix
};

// Per-forward-pass context: tape, bound parameters, mode.
struct Context {
  ParamBinding& params;
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
  BlockTrace* trace = nullptr;

  ag::Tape& tape() { return params.tape(); }
  ag::Var dropout(ag::Var x, double p);
};

// Graph-level style: both [1 x d_model]. Invalid vars mean "no style".
struct StyleVars {
  ag::Var s1, s2;
  bool active() const { return s1.valid(); }
};

enum class Init { kXavier, kZero, kSmall };

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         Init init = Init::kXavier, bool bias = true, double small_scale = 0.01);
  ag::Var operator()(Context& ctx, ag::Var x) const;
  int weight_index() const { return w_; }
  int bias_index() const { return b_; }

 private:
  int w_ = -1, b_ = -1;
};

// Learned per-channel gain and shift after parameter-free layer norm.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t dim);
  ag::Var operator()(Context& ctx, ag::Var x) const;

 private:
  int gain_ = -1, shift_ = -1;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, const BlockConfig& cfg, Rng& rng,
              Init out_init);
  ag::Var operator()(Context& ctx, ag::Var x) const;

 private:
  LayerNorm norm_;
  Linear up_, down_;
  double dropout_ = 0.0;
};

class ConvModule {
 public:
  ConvModule() = default;
  ConvModule(ParamStore& store, const std::string& name, const BlockConfig& cfg, Rng& rng,
             Init out_init);
  ag::Var operator()(Context& ctx, ag::Var x) const;

 private:
  LayerNorm norm_, mid_norm_;
  Linear pointwise_in_, pointwise_out_;
  int depthwise_w_ = -1, depthwise_b_ = -1;
  double dropout_ = 0.0;
};

// Multi-head self-attention with a learned relative-position bias per head.
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(ParamStore& store, const std::string& name, const BlockConfig& cfg, Rng& rng,
                Init out_init);
  ag::Var operator()(Context& ctx, ag::Var x) const;

 private:
  LayerNorm norm_;
  Linear q_, k_, v_, out_;
  std::vector<int> rel_bias_;
  std::size_t n_heads_ = 1;
  double dropout_ = 0.0;
};

class ConformerBlock {
 public:
  ConformerBlock() = default;
  // out_init = kZero zero-initializes the last projection of every residual
  // branch.
  ConformerBlock(ParamStore& store, const std::string& name, const BlockConfig& cfg, Rng& rng,
                 bool use_instance_norm, bool use_pool, Init out_init = Init::kXavier);
  ag::Var operator()(Context& ctx, ag::Var x) const;

  bool pools() const { return use_pool_; }

 private:
  FeedForward ff1_, ff2_;
  SelfAttention mhsa_;
  ConvModule conv_;
  LayerNorm final_norm_;
  bool use_in_ = false, use_pool_ = false;
};

// Graph-level attention core. When style is active, weights are stylized
// and x' = norm(s1 * x + s2); otherwise x' = norm(x) and raw weights are
// used. `probs` receives the per-head score matrices.
struct AttentionGraphWeights {
  ag::Var w_q, w_k, w_v, w_u;
};
ag::Var attention_graph(Context& ctx, ag::Var x, const AttentionGraphWeights& w,
                        const StyleVars& style, std::size_t n_heads, AttentionVariant variant,
                        std::vector<ag::Var>* probs);
// Second application reusing precomputed per-head scores `probs` with value
// weights w_v and bypass w_u; under kPaperLiteral the values come from w_k.
ag::Var shared_score_attention_graph(Context& ctx, ag::Var x, const std::vector<ag::Var>& probs,
                                     ag::Var w_value, ag::Var w_u, const StyleVars& style);

class ZipformerBlock {
 public:
  ZipformerBlock() = default;
  ZipformerBlock(ParamStore& store, const std::string& name, const BlockConfig& cfg, Rng& rng);
  ag::Var operator()(Context& ctx, ag::Var x, const StyleVars& style) const;

 private:
  FeedForward ff1_, ff2_;
  ConvModule conv_;
  LayerNorm final_norm_;
  int w_q_ = -1, w_k_ = -1, w_v_ = -1, w_u_ = -1;  // first application
  int w_v2_ = -1, w_u2_ = -1;                      // shared-score application
  std::size_t n_heads_ = 1;
  AttentionVariant variant_ = AttentionVariant::kSoftmax;
};

// Attentive statistics pooling: [L x d] -> [1 x 2d] (weighted mean, std).
class AttentiveStatsPool {
 public:
  AttentiveStatsPool() = default;
  AttentiveStatsPool(ParamStore& store, const std::string& name, std::size_t dim,
                     std::size_t hidden, Rng& rng);
  ag::Var operator()(Context& ctx, ag::Var h) const;

 private:
  Linear hidden_;
  int score_ = -1;
};

}  // namespace stylevc::nn
