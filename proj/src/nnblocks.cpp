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

#include "stylevc/nnblocks.hpp"

#include <cmath>

#include "stylevc/error.hpp"

namespace stylevc::nn {

using ag::Var;

StyleParams StyleParams::identity(std::size_t d_model) {
  return StyleParams{Matrix(1, d_model, 1.0), Matrix(1, d_model, 0.0)};
}

void BlockConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (ff_expansion == 0) throw ConfigError("ff_expansion must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

// ---------------------------------------------------------------------------
// Value-level operations.

Matrix instance_norm(const Matrix& x) {
  if (x.rows() < 2)
    throw InputError("instance_norm needs at least 2 frames, got " + std::to_string(x.rows()));
  ag::Tape tape;
  return ag::instance_norm(tape.constant(x), kInstanceNormEps).value();
}

WeightNormResult weight_norm(const Matrix& w) {
  WeightNormResult res;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    bool zero = true;
    for (double v : w.row(r)) zero = zero && v == 0.0;
    if (zero) ++res.degenerate_rows;
  }
  ag::Tape tape;
  res.weights = ag::normalize_rows(tape.constant(w), kWeightNormEps).value();
  return res;
}

namespace {

Matrix stylize_one(const Matrix& w, const StyleParams& style) {
  if (w.rows() != w.cols() || w.cols() != style.dim() || style.s2.cols() != style.dim())
    throw InputError("stylize_weights: weight " + w.shape_string() + " vs style length " +
                     std::to_string(style.dim()));
  Matrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = w(i, j) * style.s1(0, j) + style.s2(0, j);
  return out;
}

Matrix run_attention(const Matrix& x, const AttentionWeights& w, const StyleParams* style,
                     std::size_t n_heads, AttentionVariant variant) {
  ag::Tape tape;
  ParamStore empty;
  ParamBinding binding(tape, empty);
  Context ctx{binding};
  AttentionGraphWeights gw{tape.constant(w.w_q), tape.constant(w.w_k), tape.constant(w.w_v),
                           tape.constant(w.w_u)};
  StyleVars sv;
  if (style) {
    if (style->dim() != x.cols()) throw InputError("stylized_attention: style length mismatch");
    sv = {tape.constant(style->s1), tape.constant(style->s2)};
  }
  Var out = attention_graph(ctx, tape.constant(x), gw, sv, n_heads, variant, nullptr);
  if (!out.value().all_finite()) throw NumericError("stylized_attention: non-finite output");
  return out.value();
}

}  // namespace

AttentionWeights stylize_weights(const AttentionWeights& w, const StyleParams& style) {
  return {stylize_one(w.w_q, style), stylize_one(w.w_k, style), stylize_one(w.w_v, style),
          stylize_one(w.w_u, style)};
}

Matrix stylized_attention(const Matrix& x, const AttentionWeights& w, const StyleParams& style,
                          std::size_t n_heads, AttentionVariant variant) {
  return run_attention(x, w, &style, n_heads, variant);
}

Matrix plain_attention(const Matrix& x, const AttentionWeights& w, std::size_t n_heads,
                       AttentionVariant variant) {
  return run_attention(x, w, nullptr, n_heads, variant);
}

Matrix upsample_time(const Matrix& x, std::size_t factor) {
  if (factor < 1) throw InputError("upsample_time: factor must be >= 1");
  ag::Tape tape;
  return ag::upsample_linear(tape.constant(x), factor).value();
}

// ---------------------------------------------------------------------------
// Graph-level modules.

Var Context::dropout(Var x, double p) {
  if (!training || p <= 0.0) return x;
  if (!dropout_rng) throw ConfigError("dropout in training mode needs an RNG");
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 - p;
  for (double& m : mask.flat()) m = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
  return ag::mul(x, tape().constant(std::move(mask)));
}

namespace {

Matrix init_matrix(std::size_t rows, std::size_t cols, Rng& rng, Init init, double small_scale) {
  switch (init) {
    case Init::kZero:
      return Matrix(rows, cols);
    case Init::kSmall:
      return rng.normal_matrix(rows, cols, small_scale / std::sqrt(static_cast<double>(cols)));
    case Init::kXavier:
    default:
      return rng.normal_matrix(rows, cols, std::sqrt(2.0 / static_cast<double>(rows + cols)));
  }
}

}  // namespace

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng, Init init, bool bias, double small_scale) {
  w_ = store.add(name + ".weight", init_matrix(out, in, rng, init, small_scale));
  if (bias) b_ = store.add(name + ".bias", Matrix(1, out));
}

Var Linear::operator()(Context& ctx, Var x) const {
  return ag::linear(x, ctx.params(w_), b_ >= 0 ? ctx.params(b_) : Var());
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t dim) {
  gain_ = store.add(name + ".gain", Matrix(1, dim, 1.0));
  shift_ = store.add(name + ".shift", Matrix(1, dim, 0.0));
}

Var LayerNorm::operator()(Context& ctx, Var x) const {
  return ag::add_row(ag::mul_row(ag::layer_norm(x, kLayerNormEps), ctx.params(gain_)),
                     ctx.params(shift_));
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                         Rng& rng, Init out_init)
    : norm_(store, name + ".norm", cfg.d_model),
      up_(store, name + ".up", cfg.d_model, cfg.d_model * cfg.ff_expansion, rng),
      down_(store, name + ".down", cfg.d_model * cfg.ff_expansion, cfg.d_model, rng, out_init),
      dropout_(cfg.dropout) {}

Var FeedForward::operator()(Context& ctx, Var x) const {
  Var h = ag::silu(up_(ctx, norm_(ctx, x)));
  h = ctx.dropout(h, dropout_);
  return ctx.dropout(down_(ctx, h), dropout_);
}

ConvModule::ConvModule(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                       Rng& rng, Init out_init)
    : norm_(store, name + ".norm", cfg.d_model),
      mid_norm_(store, name + ".mid_norm", cfg.d_model),
      pointwise_in_(store, name + ".pointwise_in", cfg.d_model, 2 * cfg.d_model, rng),
      pointwise_out_(store, name + ".pointwise_out", cfg.d_model, cfg.d_model, rng, out_init),
      dropout_(cfg.dropout) {
  depthwise_w_ = store.add(name + ".depthwise.weight",
                           rng.normal_matrix(cfg.conv_kernel, cfg.d_model,
                                             1.0 / std::sqrt(static_cast<double>(cfg.conv_kernel))));
  depthwise_b_ = store.add(name + ".depthwise.bias", Matrix(1, cfg.d_model));
}

Var ConvModule::operator()(Context& ctx, Var x) const {
  Var h = ag::glu(pointwise_in_(ctx, norm_(ctx, x)));
  h = ag::depthwise_conv1d(h, ctx.params(depthwise_w_), ctx.params(depthwise_b_));
  h = ag::silu(mid_norm_(ctx, h));
  return ctx.dropout(pointwise_out_(ctx, h), dropout_);
}

SelfAttention::SelfAttention(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                             Rng& rng, Init out_init)
    : norm_(store, name + ".norm", cfg.d_model),
      q_(store, name + ".q", cfg.d_model, cfg.d_model, rng),
      k_(store, name + ".k", cfg.d_model, cfg.d_model, rng),
      v_(store, name + ".v", cfg.d_model, cfg.d_model, rng),
      out_(store, name + ".out", cfg.d_model, cfg.d_model, rng, out_init),
      n_heads_(cfg.n_heads),
      dropout_(cfg.dropout) {
  for (std::size_t h = 0; h < cfg.n_heads; ++h)
    rel_bias_.push_back(store.add(name + ".rel_bias" + std::to_string(h),
                                  Matrix(1, 2 * cfg.rel_pos_clip + 1)));
}

Var SelfAttention::operator()(Context& ctx, Var x) const {
  Var xn = norm_(ctx, x);
  Var q = q_(ctx, xn), k = k_(ctx, xn), v = v_(ctx, xn);
  const std::size_t dh = x.cols() / n_heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  for (std::size_t h = 0; h < n_heads_; ++h) {
    Var qh = ag::slice_cols(q, h * dh, dh), kh = ag::slice_cols(k, h * dh, dh),
        vh = ag::slice_cols(v, h * dh, dh);
    Var scores = ag::add_relative_bias(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt),
                                       ctx.params(rel_bias_[h]));
    Var p = ag::softmax_rows(scores);
    if (ctx.trace) ctx.trace->attention_probs.push_back(p.value());
    heads.push_back(ag::matmul_nn(ctx.dropout(p, dropout_), vh));
  }
  Var cat = n_heads_ == 1 ? heads[0] : ag::concat_cols(heads);
  return ctx.dropout(out_(ctx, cat), dropout_);
}

ConformerBlock::ConformerBlock(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                               Rng& rng, bool use_instance_norm, bool use_pool, Init out_init)
    : ff1_(store, name + ".ff1", cfg, rng, out_init),
      ff2_(store, name + ".ff2", cfg, rng, out_init),
      mhsa_(store, name + ".mhsa", cfg, rng, out_init),
      conv_(store, name + ".conv", cfg, rng, out_init),
      final_norm_(store, name + ".final_norm", cfg.d_model),
      use_in_(use_instance_norm),
      use_pool_(use_pool) {
  cfg.validate();
}

Var ConformerBlock::operator()(Context& ctx, Var x) const {
  if (use_pool_ && x.rows() % 2 != 0)
    throw InputError("conformer_block: pooling needs an even frame count, got " +
                     std::to_string(x.rows()));
  x = ag::add(x, ag::scale(ff1_(ctx, x), 0.5));
  x = ag::add(x, mhsa_(ctx, x));
  x = ag::add(x, conv_(ctx, x));
  if (use_in_) {
    if (x.rows() < 2) throw InputError("conformer_block: instance norm needs >= 2 frames");
    x = ag::instance_norm(x, kInstanceNormEps);
    if (ctx.trace) ctx.trace->post_instance_norm.push_back(x.value());
  }
  if (use_pool_) x = ag::avg_pool2(x);
  x = ag::add(x, ag::scale(ff2_(ctx, x), 0.5));
  return final_norm_(ctx, x);
}

// ---------------------------------------------------------------------------
// Stylized attention.

namespace {

Var style_input(Var x, const StyleVars& style) {
  Var s = style.active() ? ag::add_row(ag::mul_row(x, style.s1), style.s2) : x;
  return ag::layer_norm(s, kLayerNormEps);
}

Var style_weight(Var w, const StyleVars& style) {
  Var s = style.active() ? ag::add_row(ag::mul_row(w, style.s1), style.s2) : w;
  return ag::normalize_rows(s, kWeightNormEps);
}

void check_finite(Var v, const char* where) {
  if (!v.value().all_finite())
    throw NumericError(std::string("non-finite activation in ") + where);
}

}  // namespace

Var attention_graph(Context& ctx, Var x, const AttentionGraphWeights& w, const StyleVars& style,
                    std::size_t n_heads, AttentionVariant variant, std::vector<Var>* probs) {
  const std::size_t d = x.cols();
  if (n_heads == 0 || d % n_heads != 0) throw InputError("attention: d_model not divisible by heads");
  if (w.w_q.rows() != d || w.w_q.cols() != d)
    throw InputError("attention: weight " + w.w_q.value().shape_string() + " for d_model " +
                     std::to_string(d));
  Var xs = style_input(x, style);
  Var q = ag::matmul_nt(xs, style_weight(w.w_q, style));
  Var k = ag::matmul_nt(xs, style_weight(w.w_k, style));
  Var u = ag::matmul_nt(xs, style_weight(w.w_u, style));
  Var v = variant == AttentionVariant::kSoftmax ? ag::matmul_nt(xs, style_weight(w.w_v, style)) : k;
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    Var qh = n_heads == 1 ? q : ag::slice_cols(q, h * dh, dh);
    Var kh = n_heads == 1 ? k : ag::slice_cols(k, h * dh, dh);
    Var vh = n_heads == 1 ? v : ag::slice_cols(v, h * dh, dh);
    Var scores = ag::scale(ag::matmul_nt(qh, kh), inv_sqrt);
    Var p = variant == AttentionVariant::kSoftmax ? ag::softmax_rows(scores) : scores;
    if (probs) probs->push_back(p);
    if (ctx.trace && variant == AttentionVariant::kSoftmax)
      ctx.trace->attention_probs.push_back(p.value());
    heads.push_back(ag::matmul_nn(p, vh));
  }
  Var cat = n_heads == 1 ? heads[0] : ag::concat_cols(heads);
  Var out = ag::add(cat, u);
  check_finite(out, "stylized attention");
  return out;
}

Var shared_score_attention_graph(Context& ctx, Var x, const std::vector<Var>& probs, Var w_value,
                                 Var w_u, const StyleVars& style) {
  const std::size_t n_heads = probs.size();
  const std::size_t d = x.cols();
  if (n_heads == 0 || d % n_heads != 0) throw InputError("shared attention: bad head count");
  Var xs = style_input(x, style);
  Var v = ag::matmul_nt(xs, style_weight(w_value, style));
  Var u = ag::matmul_nt(xs, style_weight(w_u, style));
  const std::size_t dh = d / n_heads;
  std::vector<Var> heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    if (ctx.trace) ctx.trace->shared_scores_second.push_back(probs[h].value());
    Var vh = n_heads == 1 ? v : ag::slice_cols(v, h * dh, dh);
    heads.push_back(ag::matmul_nn(probs[h], vh));
  }
  Var cat = n_heads == 1 ? heads[0] : ag::concat_cols(heads);
  Var out = ag::add(cat, u);
  check_finite(out, "shared-score attention");
  return out;
}

ZipformerBlock::ZipformerBlock(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                               Rng& rng)
    : ff1_(store, name + ".ff1", cfg, rng, Init::kXavier),
      ff2_(store, name + ".ff2", cfg, rng, Init::kXavier),
      conv_(store, name + ".conv", cfg, rng, Init::kXavier),
      final_norm_(store, name + ".final_norm", cfg.d_model),
      n_heads_(cfg.n_heads),
      variant_(cfg.attention) {
  cfg.validate();
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  auto square = [&](const char* tag) {
    return store.add(name + ".astm." + tag, rng.normal_matrix(cfg.d_model, cfg.d_model, sd));
  };
  w_q_ = square("w_q");
  w_k_ = square("w_k");
  w_v_ = square("w_v");
  w_u_ = square("w_u");
  w_v2_ = square("w_v2");
  w_u2_ = square("w_u2");
}

Var ZipformerBlock::operator()(Context& ctx, Var x, const StyleVars& style) const {
  x = ag::add(x, ag::scale(ff1_(ctx, x), 0.5));
  std::vector<Var> probs;
  AttentionGraphWeights w{ctx.params(w_q_), ctx.params(w_k_), ctx.params(w_v_), ctx.params(w_u_)};
  x = ag::add(x, attention_graph(ctx, x, w, style, n_heads_, variant_, &probs));
  if (ctx.trace)
    for (Var p : probs) ctx.trace->shared_scores_first.push_back(p.value());
  Var w_value = variant_ == AttentionVariant::kSoftmax ? ctx.params(w_v2_) : ctx.params(w_k_);
  x = ag::add(x, shared_score_attention_graph(ctx, x, probs, w_value, ctx.params(w_u2_), style));
  x = ag::add(x, conv_(ctx, x));
  x = ag::add(x, ag::scale(ff2_(ctx, x), 0.5));
  return final_norm_(ctx, x);
}

AttentiveStatsPool::AttentiveStatsPool(ParamStore& store, const std::string& name,
                                       std::size_t dim, std::size_t hidden, Rng& rng)
    : hidden_(store, name + ".hidden", dim, hidden, rng) {
  score_ = store.add(name + ".score", rng.normal_matrix(1, hidden, 1.0 / std::sqrt(static_cast<double>(hidden))));
}

Var AttentiveStatsPool::operator()(Context& ctx, Var h) const {
  Var e = ag::matmul_nt(ag::tanh(hidden_(ctx, h)), ctx.params(score_));  // [L x 1]
  Var alpha = ag::softmax_rows(ag::transpose(e));                         // [1 x L]
  Var mean = ag::matmul_nn(alpha, h);
  Var second = ag::matmul_nn(alpha, ag::square(h));
  Var stddev = ag::sqrt_eps(ag::sub(second, ag::square(mean)), 1e-6);
  const Var parts[] = {mean, stddev};
  return ag::concat_cols(parts);
}

}  // namespace stylevc::nn
