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

// Training objectives: VAE (L1 reconstruction + Gaussian KL), angular-margin
// softmax, triplet loss over speaker embeddings, and the weighted total.

#include <cstddef>
#include <vector>

#include "stylevc/autograd.hpp"
#include "stylevc/model.hpp"

namespace stylevc {

enum class KlForm { kStandard, kPaperLiteral };
enum class TripletForm { kHinge, kPaperLiteral };
// Which reconstruction carries the weight lambda2. kLiteral: y1 (negative-
// speaker style) at full weight; kPositivePrimary swaps the two.
enum class VaePairing { kLiteral, kPositivePrimary };

struct LossConfig {
  double lambda1 = 10.0;
  double lambda3 = 1.0;
  double lambda4 = 1.0;
  double delta = 0.3;
  double aam_scale = 30.0;
  double aam_margin = 0.2;
  KlForm kl_form = KlForm::kStandard;
  TripletForm triplet_form = TripletForm::kHinge;
  VaePairing pairing = VaePairing::kLiteral;
  // Test fixture: reverses the analytic gradient of the KL term only.
  bool corrupt_kl_gradient = false;

  void validate() const;  // throws ConfigError
  bool operator==(const LossConfig&) const = default;
};

struct LossBreakdown {
  double l_vae_y1 = 0.0, l_vae_y2 = 0.0;
  double l_recon_y1 = 0.0, l_recon_y2 = 0.0;
  double l_kl_y1 = 0.0, l_kl_y2 = 0.0;
  double l_aam = 0.0, l_tri = 0.0;
  double total = 0.0;
  double lambda2 = 0.0;

  bool all_finite() const;
};

inline constexpr double kLiteralKlEps = 1e-8;

// ---- graph level ----
struct VaeTerms {
  ag::Var recon, kl;
};
VaeTerms vae_loss(ag::Var x, ag::Var x_dec, const LatentVars& latent, const LossConfig& cfg);
ag::Var aam_softmax_loss(ag::Var embedding, std::size_t label, ag::Var class_weights,
                         const LossConfig& cfg);
ag::Var cosine_similarity(ag::Var a, ag::Var b);
ag::Var triplet_loss(ag::Var e_anc, ag::Var e_pos, ag::Var e_neg, double delta,
                     TripletForm form = TripletForm::kHinge);

// ---- value level ----
struct VaeValues {
  double recon = 0.0, kl = 0.0;
};
VaeValues vae_loss(const Matrix& x, const Matrix& x_dec, const ContentLatent& latent,
                   const LossConfig& cfg = {});
double aam_softmax_loss(const Matrix& embedding, std::size_t label, const Matrix& class_weights,
                        const LossConfig& cfg = {});
double cosine_similarity(const Matrix& a, const Matrix& b);
double triplet_loss(const Matrix& e_anc, const Matrix& e_pos, const Matrix& e_neg, double delta,
                    TripletForm form = TripletForm::kHinge);

// Per-triplet term values, as produced by the forward pass of one example.
struct TripletTerms {
  VaeValues vae_y1, vae_y2;
  double aam_anc = 0.0, aam_pos = 0.0, aam_neg = 0.0;
  double tri = 0.0;
};

// Weight per-triplet terms into batch means and the total.
LossBreakdown total_loss(const std::vector<TripletTerms>& batch, const LossConfig& cfg,
                         double lambda2);

// Weights (w_y1, w_y2) applied to the two VAE terms before lambda1.
std::pair<double, double> vae_weights(VaePairing pairing, double lambda2);

}  // namespace stylevc
