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

#include "stylevc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylevc/error.hpp"

namespace stylevc {

using ag::Var;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("train: lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
  if (!(lambda2_start >= 0.0 && lambda2_start <= lambda2_end))
    throw ConfigError("train: need 0 <= lambda2_start <= lambda2_end");
  if (segment_frames == 0 || segment_frames % 16 != 0)
    throw ConfigError("train: segment_frames " + std::to_string(segment_frames) +
                      " is not a positive multiple of 16");
  if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
}

std::size_t TrainConfig::ramp_steps() const {
  return lambda2_ramp_steps > 0 ? lambda2_ramp_steps : steps / 5;
}

double lambda2_at(std::size_t step, const TrainConfig& cfg) {
  const std::size_t ramp = cfg.ramp_steps();
  if (ramp == 0 || step >= ramp) return cfg.lambda2_end;
  const double frac = static_cast<double>(step) / static_cast<double>(ramp);
  return cfg.lambda2_start + (cfg.lambda2_end - cfg.lambda2_start) * frac;
}

void AdamState::init(const ParamStore& params) {
  m.clear();
  v.clear();
  for (const auto& p : params.all()) {
    m.emplace_back(p.value.rows(), p.value.cols());
    v.emplace_back(p.value.rows(), p.value.cols());
  }
  t = 0;
}

void adam_update(ParamStore& params, const std::vector<Matrix>& grads, AdamState& s, const TrainConfig& cfg) {
  if (s.m.size() != params.size()) s.init(params);
  ++s.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.at(static_cast<int>(i));
    if (p.frozen || grads[i].empty()) continue;
    double* w = p.value.data();
    double* m = s.m[i].data();
    double* v = s.v[i].data();
    const double* g = grads[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      w[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g.flat()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g.flat()) x *= f;
  }
  return norm;
}

Var triplet_objective(nn::Context& ctx, const Model& model, const Triplet& t, const Matrix& noise,
                      const LossConfig& loss, double lambda2, TripletTerms* terms) {
  ag::Tape& tape = ctx.tape();
  Var xa = tape.constant(t.anc);
  Var xp = tape.constant(t.pos);
  Var xn = tape.constant(t.neg);

  LatentVars z = model.content_encode(ctx, xa, &noise);
  Var e_a = model.speaker_encode(ctx, xa);
  Var e_p = model.speaker_encode(ctx, xp);
  Var e_n = model.speaker_encode(ctx, xn);

  // y1 takes the negative speaker's style, y2 the positive's.
  Var y1 = model.decode(ctx, z.r_c, model.split_style(ctx, e_n));
  Var y2 = model.decode(ctx, z.r_c, model.split_style(ctx, e_p));
  const VaeTerms v1 = vae_loss(xa, y1, z, loss);
  const VaeTerms v2 = vae_loss(xa, y2, z, loss);

  Var w = model.class_weights(ctx);
  Var aam_a = aam_softmax_loss(e_a, t.spk_anc, w, loss);
  Var aam_p = aam_softmax_loss(e_p, t.spk_anc, w, loss);
  Var aam_n = aam_softmax_loss(e_n, t.spk_neg, w, loss);
  Var tri = triplet_loss(e_a, e_p, e_n, loss.delta, loss.triplet_form);

  const auto [w1, w2] = vae_weights(loss.pairing, lambda2);
  Var vae = ag::add(ag::scale(ag::add(v1.recon, v1.kl), w1), ag::scale(ag::add(v2.recon, v2.kl), w2));
  Var aam = ag::add(ag::add(aam_a, aam_p), aam_n);
  Var total = ag::add(ag::add(ag::scale(vae, loss.lambda1), ag::scale(aam, loss.lambda3)),
                      ag::scale(tri, loss.lambda4));
  if (terms) {
    terms->vae_y1 = {v1.recon.scalar(), v1.kl.scalar()};
    terms->vae_y2 = {v2.recon.scalar(), v2.kl.scalar()};
    terms->aam_anc = aam_a.scalar();
    terms->aam_pos = aam_p.scalar();
    terms->aam_neg = aam_n.scalar();
    terms->tri = tri.scalar();
  }
  return total;
}

namespace {

struct RowOutput {
  double total = 0.0;
  TripletTerms terms;
  std::vector<Matrix> grads;
  std::uint64_t signature = 0;
  std::string error;
};

std::vector<RowOutput> run_rows(const Model& model, const TripletBatch& batch, const LossConfig& loss,
                                double lambda2, bool with_grads, bool training) {
  const std::size_t n = batch.rows.size();
  if (batch.noise.size() != n || batch.dropout_seeds.size() != n)
    throw InputError("batch: noise / dropout seeds missing");
  std::vector<RowOutput> out(n);
  const double inv_n = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      ag::Tape tape;
      ParamBinding binding(tape, model.params());
      Rng dropout_rng(batch.dropout_seeds[i]);
      nn::Context ctx{binding, training, &dropout_rng};
      Var total = triplet_objective(ctx, model, batch.rows[i], batch.noise[i], loss, lambda2, &out[i].terms);
      out[i].total = total.scalar();
      out[i].signature = tape.branch_signature();
      if (with_grads) {
        tape.backward(ag::scale(total, inv_n));
        binding.accumulate_grads(out[i].grads);
      }
    } catch (const std::exception& ex) {
      out[i].error = ex.what();
    }
  }
  for (const auto& r : out)
    if (!r.error.empty()) throw InputError(r.error);
  return out;
}

// Ordered reduction: identical results for any thread count.
std::vector<Matrix> reduce_grads(const ParamStore& params, std::vector<RowOutput>& rows) {
  std::vector<Matrix> grads;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Matrix& v = params.at(static_cast<int>(p)).value;
    Matrix acc(v.rows(), v.cols());
    for (auto& r : rows) {
      if (p >= r.grads.size() || r.grads[p].empty()) continue;
      const double* g = r.grads[p].data();
      double* a = acc.data();
      for (std::size_t k = 0; k < acc.size(); ++k) a[k] += g[k];
    }
    grads.push_back(std::move(acc));
  }
  for (auto& r : rows) r.grads.clear();
  return grads;
}

}  // namespace

double batch_objective(const Model& model, const TripletBatch& batch, const LossConfig& loss, double lambda2,
                       std::vector<Matrix>* grads, std::uint64_t* signature, bool training) {
  auto rows = run_rows(model, batch, loss, lambda2, grads != nullptr, training);
  double total = 0.0;
  std::uint64_t sig = 0xcbf29ce484222325ULL;
  for (const auto& r : rows) {
    total += r.total;
    sig = (sig ^ r.signature) * 0x100000001b3ULL;
  }
  if (signature) *signature = sig;
  if (grads) *grads = reduce_grads(model.params(), rows);
  return total / static_cast<double>(rows.size());
}

StepResult train_step(Model& model, AdamState& adam, const TripletBatch& batch, const LossConfig& loss,
                      const TrainConfig& cfg, std::size_t step) {
  if (batch.rows.empty()) throw InputError("train_step: empty batch");
  const double lambda2 = lambda2_at(step, cfg);
  auto rows = run_rows(model, batch, loss, lambda2, true, true);
  std::vector<TripletTerms> terms;
  for (const auto& r : rows) terms.push_back(r.terms);
  StepResult res;
  res.losses = total_loss(terms, loss, lambda2);
  if (!res.losses.all_finite())
    throw NumericError("non-finite loss at step " + std::to_string(step));
  auto grads = reduce_grads(model.params(), rows);
  res.grad_norm = clip_global_norm(grads, cfg.grad_clip);
  if (!std::isfinite(res.grad_norm)) throw NumericError("non-finite gradient at step " + std::to_string(step));
  adam_update(model.params(), grads, adam, cfg);
  return res;
}

// ---------------------------------------------------------------------------

bool GradCheckReport::passed() const {
  for (const auto& g : groups)
    if (!(g.max_rel_error < tolerance)) return false;
  return !groups.empty();
}

const GradCheckGroup* GradCheckReport::find(const std::string& group) const {
  for (const auto& g : groups)
    if (g.name == group) return &g;
  return nullptr;
}

GradCheckReport gradient_check(Model& model, const TripletBatch& batch, const LossConfig& loss, double lambda2,
                               const GradCheckOptions& opt) {
  GradCheckReport report;
  report.tolerance = opt.tolerance;
  std::vector<Matrix> analytic;
  std::uint64_t sig0 = 0;
  report.loss = batch_objective(model, batch, loss, lambda2, &analytic, &sig0);

  Rng pick(opt.seed);
  ParamStore& params = model.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter& param = params.at(static_cast<int>(p));
    const Matrix& g = analytic[p];
    const std::size_t n = param.value.size();

    std::vector<std::size_t> entries;
    if (opt.top_entries == 0 && opt.random_entries == 0) {
      entries.resize(n);
      std::iota(entries.begin(), entries.end(), std::size_t{0});
    } else {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      const std::size_t top = std::min(opt.top_entries, n);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                        [&](std::size_t a, std::size_t b) { return std::abs(g.data()[a]) > std::abs(g.data()[b]); });
      entries.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top));
      for (std::size_t r = 0; r < opt.random_entries && entries.size() < n; ++r) {
        std::size_t k;
        do {
          k = pick.index(n);
        } while (std::find(entries.begin(), entries.end(), k) != entries.end());
        entries.push_back(k);
      }
    }

    const std::string group = ParamStore::group_of(param.name);
    auto it = std::find_if(report.groups.begin(), report.groups.end(),
                           [&](const GradCheckGroup& x) { return x.name == group; });
    if (it == report.groups.end()) {
      report.groups.push_back({group});
      it = report.groups.end() - 1;
    }
    it->frozen = it->frozen || param.frozen;

    for (std::size_t k : entries) {
      const double a = g.data()[k];
      if (param.frozen) {
        // Frozen tensors are constants of the objective: the expected
        // gradient is exactly zero.
        it->max_rel_error = std::max(it->max_rel_error, std::abs(a) / opt.floor);
        it->max_abs_analytic = std::max(it->max_abs_analytic, std::abs(a));
        ++it->checked;
        continue;
      }
      double& w = param.value.data()[k];
      const double orig = w;
      std::uint64_t sp = 0, sm = 0;
      w = orig + opt.step;
      const double lp = batch_objective(model, batch, loss, lambda2, nullptr, &sp);
      w = orig - opt.step;
      const double lm = batch_objective(model, batch, loss, lambda2, nullptr, &sm);
      w = orig;
      if (sp != sig0 || sm != sig0) {
        ++it->skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * opt.step);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
      it->max_rel_error = std::max(it->max_rel_error, rel);
      it->max_abs_analytic = std::max(it->max_abs_analytic, std::abs(a));
      ++it->checked;
    }
  }
  return report;
}

ModelConfig tiny_model_config(std::size_t n_speakers) {
  ModelConfig c;
  c.d_model = 8;
  c.d_content = 4;
  c.n_heads = 2;
  c.conv_kernel = 3;
  c.ff_expansion = 2;
  c.dropout = 0.0;
  c.speaker_blocks = 1;
  c.rel_pos_clip = 4;
  c.pool_hidden = 4;
  c.style_init_scale = 0.5;
  c.n_speakers = n_speakers;
  return c;
}

GradCheckSetup make_gradcheck_setup(std::uint64_t seed, const LossConfig& loss, bool literal_attention) {
  constexpr std::size_t kSpeakers = 2, kUtts = 2, kSegment = 32, kBatch = 2;
  GradCheckSetup s;
  s.loss = loss;
  Rng rng(seed);
  const FeatureConfig features;
  const auto voices = make_voices(kSpeakers, rng);
  for (std::size_t v = 0; v < kSpeakers; ++v) {
    for (std::size_t u = 0; u < kUtts; ++u) {
      s.bank.mels.push_back(extract_logmel(synthesize_utterance(voices[v], 0.5, features.sample_rate, rng), features));
      s.bank.labels.push_back(v);
      s.bank.utterance_ids.push_back(voices[v].speaker_id + "_u" + std::to_string(u));
    }
  }
  s.bank.n_speakers = kSpeakers;
  ModelConfig mc = tiny_model_config(kSpeakers);
  mc.paper_literal_attention = literal_attention;
  s.model = std::make_unique<Model>(mc, seed + 1);
  const TripletSampler sampler(s.bank, kSegment);
  s.batch = sampler.sample_batch(rng, kBatch, mc.d_content);
  return s;
}

}  // namespace stylevc
