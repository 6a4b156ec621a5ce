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

#include <cmath>

#include "doctest.h"
#include "stylevc/error.hpp"
#include "stylevc/losses.hpp"
#include "stylevc/training.hpp"
#include "test_util.hpp"

using namespace stylevc;
using ag::Var;
using test::random_matrix;

namespace {

ContentLatent latent(const Matrix& r_m, const Matrix& r_s) { return {r_m, r_s, r_m}; }

double naive_cos(const Matrix& a, const Matrix& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a.data()[k] * b.data()[k];
    aa += a.data()[k] * a.data()[k];
    bb += b.data()[k] * b.data()[k];
  }
  return ab / std::sqrt(aa * bb);
}

double naive_aam(const Matrix& e, std::size_t label, const Matrix& w, double s, double m) {
  std::vector<double> z(w.rows());
  for (std::size_t c = 0; c < w.rows(); ++c) {
    double cs = naive_cos(e, w.row_range(c, 1));
    if (c == label) cs = std::cos(std::acos(cs) + m);
    z[c] = s * cs;
  }
  double mx = z[0], sum = 0;
  for (double v : z) mx = std::max(mx, v);
  for (double v : z) sum += std::exp(v - mx);
  return -(z[label] - mx - std::log(sum));
}

}  // namespace

TEST_CASE("vae_loss examples") {
  Rng rng(1);
  const Matrix x = random_matrix(rng, 16, 80);
  auto v = vae_loss(x, x, latent(Matrix(2, 4, 0.0), Matrix(2, 4, 1.0)));
  CHECK(v.recon == 0.0);
  CHECK(v.kl == 0.0);
  v = vae_loss(x, x, latent(Matrix(2, 4, 1.0), Matrix(2, 4, 1.0)));
  CHECK(v.kl == 0.5);
  CHECK_THROWS_AS(vae_loss(x, random_matrix(rng, 16, 79), latent(Matrix(1, 1), Matrix(1, 1, 1.0))), InputError);
}

TEST_CASE("vae_loss matches a scalar-loop oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(rng, 5, 7), y = random_matrix(rng, 5, 7);
    const Matrix r_m = random_matrix(rng, 3, 4), r_s = random_matrix(rng, 3, 4, 0.1, 3.0);
    const auto v = vae_loss(x, y, latent(r_m, r_s));
    double recon = 0, kl = 0;
    for (std::size_t k = 0; k < x.size(); ++k) recon += std::abs(x.data()[k] - y.data()[k]);
    for (std::size_t k = 0; k < r_m.size(); ++k) {
      const double m = r_m.data()[k], s = r_s.data()[k];
      kl += s * s + m * m - std::log(s * s) - 1.0;
    }
    CHECK(std::abs(v.recon - recon / static_cast<double>(x.size())) < 1e-6);
    CHECK(std::abs(v.kl - 0.5 * kl / static_cast<double>(r_m.size())) < 1e-6);
  }
}

TEST_CASE("KL is non-negative and zero only at the prior") {
  Rng rng(3);
  const Matrix x(2, 2);
  for (int trial = 0; trial < 500; ++trial) {
    const Matrix r_m = random_matrix(rng, 2, 3, -3.0, 3.0), r_s = random_matrix(rng, 2, 3, 0.01, 4.0);
    CHECK(vae_loss(x, x, latent(r_m, r_s)).kl > 0.0);
  }
  CHECK(vae_loss(x, x, latent(Matrix(2, 3, 0.0), Matrix(2, 3, 1.0))).kl == 0.0);
}

TEST_CASE("paper-literal KL form") {
  LossConfig cfg;
  cfg.kl_form = KlForm::kPaperLiteral;
  const Matrix x(1, 1);
  ContentLatent z{Matrix(1, 1, 2.0), Matrix(1, 1, 1.0), Matrix(1, 1, 0.5)};
  // 0.5 (r_c + r_m^2 - log(r_m^2 + eps) - 1)
  CHECK(vae_loss(x, x, z, cfg).kl == doctest::Approx(0.5 * (0.5 + 4.0 - std::log(4.0 + kLiteralKlEps) - 1.0)));
}

TEST_CASE("AAM softmax without margin at scale 1 is cosine cross-entropy") {
  Rng rng(4);
  LossConfig cfg;
  cfg.aam_margin = 0.0;
  cfg.aam_scale = 1.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix e = random_matrix(rng, 1, 6), w = random_matrix(rng, 4, 6);
    const std::size_t label = rng.index(4);
    CHECK(std::abs(aam_softmax_loss(e, label, w, cfg) - naive_aam(e, label, w, 1.0, 0.0)) < 1e-6);
  }
}

TEST_CASE("AAM softmax closed form for an aligned embedding") {
  const Matrix w = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  const Matrix e = Matrix::from_rows({{2.0, 0.0}});
  const double s = 30.0, a = std::exp(s * std::cos(0.2));
  const double closed = -std::log(a / (a + std::exp(0.0)));
  const double loss = aam_softmax_loss(e, 0, w, LossConfig{});
  CHECK(std::abs(loss - closed) < 1e-6);
  CHECK(loss < 1e-6);
}

TEST_CASE("AAM softmax is monotone in the margin") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix e = random_matrix(rng, 1, 6), w = random_matrix(rng, 3, 6);
    const std::size_t label = rng.index(3);
    double prev = -1.0;
    for (double m = 0.0; m <= 0.8; m += 0.05) {
      LossConfig cfg;
      cfg.aam_margin = m;
      const double l = aam_softmax_loss(e, label, w, cfg);
      CHECK(l >= prev);
      prev = l;
    }
    LossConfig cfg;
    CHECK(std::abs(aam_softmax_loss(e, label, w, cfg) - naive_aam(e, label, w, 30.0, 0.2)) < 1e-6);
  }
  CHECK_THROWS_AS(aam_softmax_loss(Matrix(1, 6, 1.0), 3, random_matrix(rng, 3, 6), LossConfig{}), InputError);
}

TEST_CASE("triplet loss examples") {
  const Matrix a = Matrix::from_rows({{1.0, 0.0, 0.0}});
  const Matrix orth = Matrix::from_rows({{0.0, 2.0, 0.0}});
  CHECK(triplet_loss(a, a, orth, 0.3) == 0.0);
  CHECK(std::abs(triplet_loss(a, a, a, 0.3) - 0.3) < 1e-9);
  CHECK_THROWS_AS(triplet_loss(a, Matrix(1, 3, 0.0), orth, 0.3), InputError);
  // Paper-literal signed form: cos(a, p) - cos(a, n) + delta.
  CHECK(std::abs(triplet_loss(a, a, orth, 0.3, TripletForm::kPaperLiteral) - 1.3) < 1e-9);
}

TEST_CASE("triplet loss matches a naive cosine oracle and stays in range") {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const Matrix a = random_matrix(rng, 1, 8), p = random_matrix(rng, 1, 8), n = random_matrix(rng, 1, 8);
    const double l = triplet_loss(a, p, n, 0.3);
    const double expect = std::max(0.0, naive_cos(a, n) - naive_cos(a, p) + 0.3);
    CHECK(std::abs(l - expect) < 1e-6);
    CHECK(l >= 0.0);
    CHECK(l <= 2.3);
    if (naive_cos(a, p) - naive_cos(a, n) >= 0.3 + 1e-12) CHECK(l == 0.0);
  }
}

TEST_CASE("loss op gradients match finite differences") {
  Rng rng(7);
  const Matrix x = random_matrix(rng, 4, 5), y = random_matrix(rng, 4, 5);
  const Matrix r_m = random_matrix(rng, 2, 3), log_std = random_matrix(rng, 2, 3, -0.5, 0.5);
  const Matrix noise = random_matrix(rng, 2, 3);
  for (KlForm form : {KlForm::kStandard, KlForm::kPaperLiteral}) {
    LossConfig cfg;
    cfg.kl_form = form;
    auto f = [&](std::vector<Var>& v) {
      LatentVars z;
      z.r_m = v[1];
      z.log_std = v[2];
      z.r_s = ag::exp(v[2]);
      z.r_c = ag::add(z.r_m, ag::mul(v[0].tape()->constant(noise), z.r_s));
      const VaeTerms t = vae_loss(v[3], v[0], z, cfg);
      return ag::add(t.recon, t.kl);
    };
    CHECK(test::grad_rel_error(f, {y, r_m, log_std, x}) < 1e-6);
  }
  const Matrix e = random_matrix(rng, 1, 6), w = random_matrix(rng, 3, 6);
  CHECK(test::grad_rel_error([](auto& v) { return aam_softmax_loss(v[0], 1, v[1], LossConfig{}); }, {e, w}) < 1e-6);
  const Matrix a = random_matrix(rng, 1, 6), p = random_matrix(rng, 1, 6), n = random_matrix(rng, 1, 6);
  CHECK(test::grad_rel_error([](auto& v) { return triplet_loss(v[0], v[1], v[2], 2.0); }, {a, p, n}) < 1e-6);
  CHECK(test::grad_rel_error([](auto& v) { return cosine_similarity(v[0], v[1]); }, {a, p}) < 1e-6);
}

TEST_CASE("total_loss weighting") {
  Rng rng(8);
  std::vector<TripletTerms> batch(5);
  for (auto& t : batch) {
    t.vae_y1 = {rng.uniform(), rng.uniform()};
    t.vae_y2 = {rng.uniform(), rng.uniform()};
    t.aam_anc = rng.uniform();
    t.aam_pos = rng.uniform();
    t.aam_neg = rng.uniform();
    t.tri = rng.uniform();
  }
  LossConfig zero;
  zero.lambda1 = zero.lambda3 = zero.lambda4 = 0.0;
  CHECK(total_loss(batch, zero, 0.0).total == 0.0);

  LossConfig cfg;
  const auto b = total_loss(batch, cfg, 0.25);
  double vae1 = 0, vae2 = 0, aam = 0, tri = 0;
  for (const auto& t : batch) {
    vae1 += t.vae_y1.recon + t.vae_y1.kl;
    vae2 += t.vae_y2.recon + t.vae_y2.kl;
    aam += t.aam_anc + t.aam_pos + t.aam_neg;
    tri += t.tri;
  }
  const double n = 5.0;
  CHECK(std::abs(b.total - (10.0 * (vae1 / n + 0.25 * vae2 / n) + aam / n + tri / n)) < 1e-12);

  LossConfig twice = cfg;
  twice.lambda4 = 2.0;
  LossConfig none = cfg;
  none.lambda4 = 0.0;
  const double base = total_loss(batch, none, 0.25).total;
  CHECK(total_loss(batch, twice, 0.25).total - base == doctest::Approx(2.0 * (b.total - base)).epsilon(1e-14));

  LossConfig swapped = cfg;
  swapped.pairing = VaePairing::kPositivePrimary;
  CHECK(std::abs(total_loss(batch, swapped, 0.25).total - (10.0 * (0.25 * vae1 / n + vae2 / n) + aam / n + tri / n)) <
        1e-12);
}

TEST_CASE("perfect reconstruction at the prior costs nothing") {
  std::vector<TripletTerms> batch(3);  // all terms zero
  LossConfig cfg;
  cfg.lambda3 = cfg.lambda4 = 0.0;
  CHECK(total_loss(batch, cfg, 1.0).total == 0.0);
}

TEST_CASE("batch objective equals the composition of the value-level ops") {
  auto setup = make_gradcheck_setup(3);
  TripletBatch& batch = setup.batch;
  for (auto& n : batch.noise) n.fill(0.0);  // e = 0 so the value path agrees
  const Model& model = *setup.model;
  const double graph = batch_objective(model, batch, setup.loss, setup.lambda2, nullptr);
  const Matrix& w = model.params().at(model.params().index_of("aam.class_weights")).value;
  std::vector<TripletTerms> terms;
  for (const auto& t : batch.rows) {
    const auto z = model.content_encode(t.anc);
    const Matrix ea = model.speaker_encode(t.anc).values, ep = model.speaker_encode(t.pos).values,
                 en = model.speaker_encode(t.neg).values;
    TripletTerms tt;
    tt.vae_y1 = vae_loss(t.anc, model.decode(z.r_c, Model::split_style(en)), z, setup.loss);
    tt.vae_y2 = vae_loss(t.anc, model.decode(z.r_c, Model::split_style(ep)), z, setup.loss);
    tt.aam_anc = aam_softmax_loss(ea, t.spk_anc, w, setup.loss);
    tt.aam_pos = aam_softmax_loss(ep, t.spk_anc, w, setup.loss);
    tt.aam_neg = aam_softmax_loss(en, t.spk_neg, w, setup.loss);
    tt.tri = triplet_loss(ea, ep, en, setup.loss.delta);
    terms.push_back(tt);
  }
  const double composed = total_loss(terms, setup.loss, setup.lambda2).total;
  CHECK(std::abs(graph - composed) < 1e-6 * std::max(1.0, std::abs(composed)));
}

TEST_CASE("loss config validation") {
  LossConfig c;
  c.delta = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = LossConfig{};
  c.lambda3 = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
