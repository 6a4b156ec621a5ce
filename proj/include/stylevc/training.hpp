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

// Optimizer, lambda2 schedule, the per-batch training step and the
// finite-difference gradient check.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stylevc/data.hpp"
#include "stylevc/losses.hpp"
#include "stylevc/model.hpp"

namespace stylevc {

struct TrainConfig {
  std::size_t batch_size = 16;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-6;
  std::size_t steps = 2000;
  double lambda2_start = 1e-4;
  double lambda2_end = 1.0;
  // 0 means 20% of `steps`.
  std::size_t lambda2_ramp_steps = 0;
  std::size_t checkpoint_every = 500;
  double grad_clip = 5.0;  // global L2 norm; 0 disables
  std::size_t segment_frames = 128;
  std::size_t queue_capacity = 4;
  bool prefetch = true;
  std::size_t log_every = 50;

  void validate() const;  // throws ConfigError
  std::size_t ramp_steps() const;
  bool operator==(const TrainConfig&) const = default;
};

double lambda2_at(std::size_t step, const TrainConfig& cfg);

struct AdamState {
  std::vector<Matrix> m, v;
  std::size_t t = 0;

  void init(const ParamStore& params);
};

// One bias-corrected Adam update. Frozen parameters are skipped.
void adam_update(ParamStore& params, const std::vector<Matrix>& grads, AdamState& state,
                 const TrainConfig& cfg);

// Rescales grads in place when their global norm exceeds max_norm; returns
// the norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

// Builds the full objective graph of one triplet and returns its weighted
// total (a [1 x 1] var); `terms` receives the unweighted term values.
ag::Var triplet_objective(nn::Context& ctx, const Model& model, const Triplet& t, const Matrix& noise,
                          const LossConfig& loss, double lambda2, TripletTerms* terms);

struct StepResult {
  LossBreakdown losses;
  double grad_norm = 0.0;
};

// Forward + backward over the batch (triplets in parallel), then one Adam
// update. Throws NumericError, leaving parameters untouched, when the loss
// or gradient is non-finite.
StepResult train_step(Model& model, AdamState& adam, const TripletBatch& batch, const LossConfig& loss,
                      const TrainConfig& cfg, std::size_t step);

// Loss and gradient of the batch objective without updating anything. The
// objective is the batch mean of triplet_objective.
double batch_objective(const Model& model, const TripletBatch& batch, const LossConfig& loss, double lambda2,
                       std::vector<Matrix>* grads, std::uint64_t* branch_signature = nullptr,
                       bool training = false);

// ---- gradient check ----

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a non-differentiable point
  bool frozen = false;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double tolerance = 1e-4;
  double loss = 0.0;
  bool passed() const;
  const GradCheckGroup* find(const std::string& group) const;
};

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  // Relative-error denominator floor, well above the finite-difference
  // roundoff (~1e-10 absolute at this loss scale).
  double floor = 1e-5;
  // Entries checked per tensor: the largest-|gradient| ones plus random
  // picks. 0 checks every entry.
  std::size_t top_entries = 3;
  std::size_t random_entries = 3;
  std::uint64_t seed = 7;
};

GradCheckReport gradient_check(Model& model, const TripletBatch& batch, const LossConfig& loss, double lambda2,
                               const GradCheckOptions& opt = {});

// Configuration used by the gradient check: d_model 8, 32-frame segments,
// batch 2, no dropout.
ModelConfig tiny_model_config(std::size_t n_speakers);

// Self-contained gradient-check problem: tiny model, an in-memory synthetic
// corpus (no files) and one fixed batch.
struct GradCheckSetup {
  std::unique_ptr<Model> model;
  FeatureBank bank;
  TripletBatch batch;
  LossConfig loss;
  double lambda2 = 0.5;
};
GradCheckSetup make_gradcheck_setup(std::uint64_t seed, const LossConfig& loss = {},
                                    bool literal_attention = false);

}  // namespace stylevc
