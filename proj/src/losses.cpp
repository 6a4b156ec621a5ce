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

#include "stylevc/losses.hpp"

#include <algorithm>
#include <cmath>

#include "stylevc/error.hpp"

namespace stylevc {

using ag::Var;

namespace {

constexpr double kNormEps = 1e-12;

void require_nonzero(const Matrix& v, const char* what) {
  double s = 0.0;
  for (double x : v.flat()) s += x * x;
  if (s == 0.0) throw InputError(std::string("triplet_loss: ") + what + " embedding is a zero vector");
}

}  // namespace

void LossConfig::validate() const {
  if (lambda1 < 0 || lambda3 < 0 || lambda4 < 0) throw ConfigError("loss: lambdas must be non-negative");
  if (delta < 0) throw ConfigError("loss: delta must be >= 0");
  if (aam_scale < 0 || aam_margin < 0) throw ConfigError("loss: aam_scale and aam_margin must be >= 0");
}

bool LossBreakdown::all_finite() const {
  for (double v : {l_vae_y1, l_vae_y2, l_recon_y1, l_recon_y2, l_kl_y1, l_kl_y2, l_aam, l_tri, total})
    if (!std::isfinite(v)) return false;
  return true;
}

VaeTerms vae_loss(Var x, Var x_dec, const LatentVars& z, const LossConfig& cfg) {
  if (!x.value().same_shape(x_dec.value()))
    throw InputError("vae_loss: x " + x.value().shape_string() + " vs x_dec " + x_dec.value().shape_string());
  VaeTerms t;
  t.recon = ag::mean_abs_diff(x, x_dec);
  Var inner;
  if (cfg.kl_form == KlForm::kStandard) {
    // r_s^2 + r_m^2 - log r_s^2 - 1, with log r_s^2 = 2 log_std.
    inner = ag::add_scalar(
        ag::sub(ag::add(ag::square(z.r_s), ag::square(z.r_m)), ag::scale(z.log_std, 2.0)), -1.0);
  } else {
    inner = ag::add_scalar(
        ag::sub(ag::add(z.r_c, ag::square(z.r_m)), ag::log(ag::add_scalar(ag::square(z.r_m), kLiteralKlEps))),
        -1.0);
  }
  t.kl = ag::scale(ag::mean_all(inner), 0.5);
  if (cfg.corrupt_kl_gradient) t.kl = ag::grad_scale(t.kl, -1.0);
  return t;
}

Var aam_softmax_loss(Var embedding, std::size_t label, Var class_weights, const LossConfig& cfg) {
  if (label >= class_weights.rows())
    throw InputError("aam_softmax_loss: label " + std::to_string(label) + " >= " +
                     std::to_string(class_weights.rows()) + " classes");
  if (embedding.cols() != class_weights.cols())
    throw InputError("aam_softmax_loss: embedding length does not match class weights");
  Var cos = ag::matmul_nt(ag::normalize_rows(embedding, kNormEps), ag::normalize_rows(class_weights, kNormEps));
  if (cfg.aam_margin != 0.0) cos = ag::angular_margin(cos, label, cfg.aam_margin);
  return ag::cross_entropy(ag::scale(cos, cfg.aam_scale), label);
}

Var cosine_similarity(Var a, Var b) {
  if (!a.value().same_shape(b.value())) throw InputError("cosine_similarity: length mismatch");
  return ag::sum_all(ag::mul(ag::normalize_rows(a, kNormEps), ag::normalize_rows(b, kNormEps)));
}

Var triplet_loss(Var e_anc, Var e_pos, Var e_neg, double delta, TripletForm form) {
  require_nonzero(e_anc.value(), "anchor");
  require_nonzero(e_pos.value(), "positive");
  require_nonzero(e_neg.value(), "negative");
  Var ap = cosine_similarity(e_anc, e_pos);
  Var an = cosine_similarity(e_anc, e_neg);
  if (form == TripletForm::kPaperLiteral) return ag::add_scalar(ag::sub(ap, an), delta);
  return ag::hinge(ag::add_scalar(ag::sub(an, ap), delta));
}

// ---------------------------------------------------------------------------

VaeValues vae_loss(const Matrix& x, const Matrix& x_dec, const ContentLatent& latent,
                   const LossConfig& cfg) {
  ag::Tape tape;
  LatentVars z;
  z.r_m = tape.constant(latent.r_m);
  z.r_s = tape.constant(latent.r_s);
  z.r_c = tape.constant(latent.r_c);
  Matrix log_std = latent.r_s;
  for (double& v : log_std.flat()) {
    if (!(v > 0.0)) throw InputError("vae_loss: r_s must be positive");
    v = std::log(v);
  }
  z.log_std = tape.constant(std::move(log_std));
  const VaeTerms t = vae_loss(tape.constant(x), tape.constant(x_dec), z, cfg);
  return {t.recon.scalar(), t.kl.scalar()};
}

double aam_softmax_loss(const Matrix& embedding, std::size_t label, const Matrix& class_weights,
                        const LossConfig& cfg) {
  ag::Tape tape;
  return aam_softmax_loss(tape.constant(embedding), label, tape.constant(class_weights), cfg).scalar();
}

double cosine_similarity(const Matrix& a, const Matrix& b) {
  ag::Tape tape;
  return cosine_similarity(tape.constant(a), tape.constant(b)).scalar();
}

double triplet_loss(const Matrix& e_anc, const Matrix& e_pos, const Matrix& e_neg, double delta,
                    TripletForm form) {
  ag::Tape tape;
  return triplet_loss(tape.constant(e_anc), tape.constant(e_pos), tape.constant(e_neg), delta, form)
      .scalar();
}

std::pair<double, double> vae_weights(VaePairing pairing, double lambda2) {
  return pairing == VaePairing::kLiteral ? std::pair{1.0, lambda2} : std::pair{lambda2, 1.0};
}

LossBreakdown total_loss(const std::vector<TripletTerms>& batch, const LossConfig& cfg, double lambda2) {
  LossBreakdown b;
  b.lambda2 = lambda2;
  if (batch.empty()) return b;
  for (const auto& t : batch) {
    b.l_recon_y1 += t.vae_y1.recon;
    b.l_kl_y1 += t.vae_y1.kl;
    b.l_recon_y2 += t.vae_y2.recon;
    b.l_kl_y2 += t.vae_y2.kl;
    b.l_aam += t.aam_anc + t.aam_pos + t.aam_neg;
    b.l_tri += t.tri;
  }
  const double n = static_cast<double>(batch.size());
  b.l_recon_y1 /= n;
  b.l_kl_y1 /= n;
  b.l_recon_y2 /= n;
  b.l_kl_y2 /= n;
  b.l_aam /= n;
  b.l_tri /= n;
  b.l_vae_y1 = b.l_recon_y1 + b.l_kl_y1;
  b.l_vae_y2 = b.l_recon_y2 + b.l_kl_y2;
  const auto [w1, w2] = vae_weights(cfg.pairing, lambda2);
  b.total = cfg.lambda1 * (w1 * b.l_vae_y1 + w2 * b.l_vae_y2) + cfg.lambda3 * b.l_aam + cfg.lambda4 * b.l_tri;
  return b;
}

}  // namespace stylevc
