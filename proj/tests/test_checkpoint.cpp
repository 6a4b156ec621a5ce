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

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "stylevc/checkpoint.hpp"
#include "stylevc/error.hpp"
#include "test_util.hpp"

using namespace stylevc;
namespace fs = std::filesystem;

namespace {

RunConfig small_run(std::uint64_t seed = 31) {
  RunConfig cfg;
  cfg.model = tiny_model_config(2);
  cfg.train.batch_size = 2;
  cfg.train.segment_frames = 32;
  cfg.train.steps = 10;
  cfg.train.checkpoint_every = 0;
  cfg.seed = seed;
  return cfg;
}

bool same_params(const Model& a, const Model& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i)
    if (!(a.params().at(static_cast<int>(i)).value == b.params().at(static_cast<int>(i)).value)) return false;
  return true;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void write_bytes(const fs::path& p, const std::string& b) { std::ofstream(p, std::ios::binary) << b; }

// Bank from the gradient-check fixture: 2 speakers x 2 utterances.
const FeatureBank& shared_bank() {
  static const GradCheckSetup setup = make_gradcheck_setup(30);
  return setup.bank;
}

}  // namespace

TEST_CASE("checkpoint round trip restores the full state") {
  const auto dir = test::temp_dir("ckpt_rt");
  const TripletSampler sampler(shared_bank(), 32);
  TrainState s = TrainState::create(small_run());
  train(s, sampler, 3);
  save_checkpoint(s, dir / "a.ckpt");
  const TrainState r = load_checkpoint(dir / "a.ckpt");
  CHECK(r.step == 3);
  CHECK(r.config == s.config);
  CHECK(r.rng == s.rng);
  CHECK(same_params(*r.model, *s.model));
  CHECK(r.adam.t == s.adam.t);
  for (std::size_t i = 0; i < s.adam.m.size(); ++i) {
    CHECK(r.adam.m[i] == s.adam.m[i]);
    CHECK(r.adam.v[i] == s.adam.v[i]);
  }
}

TEST_CASE("resume is bitwise identical to an uninterrupted run") {
  const auto dir = test::temp_dir("ckpt_resume");
  const TripletSampler sampler(shared_bank(), 32);
  std::vector<double> straight, resumed;
  TrainHooks h1;
  h1.on_step = [&](std::size_t, const StepResult& r) { straight.push_back(r.losses.total); };
  TrainState a = TrainState::create(small_run());
  train(a, sampler, 10, h1);

  TrainHooks h2;
  h2.on_step = [&](std::size_t, const StepResult& r) { resumed.push_back(r.losses.total); };
  TrainState b = TrainState::create(small_run());
  train(b, sampler, 5, h2);
  save_checkpoint(b, dir / "mid.ckpt");
  TrainState c = load_checkpoint(dir / "mid.ckpt");
  train(c, sampler, 10, h2);

  CHECK(c.step == 10);
  CHECK(straight == resumed);
  CHECK(same_params(*a.model, *c.model));
  CHECK(a.rng == c.rng);
}

TEST_CASE("prefetching does not change the batch sequence") {
  const TripletSampler sampler(shared_bank(), 32);
  RunConfig on = small_run(), off = small_run();
  off.train.prefetch = false;
  TrainState a = TrainState::create(on), b = TrainState::create(off);
  train(a, sampler, 6);
  train(b, sampler, 6);
  CHECK(same_params(*a.model, *b.model));
  CHECK(a.rng == b.rng);
}

TEST_CASE("training writes metrics, progress lines and periodic checkpoints") {
  const auto dir = test::temp_dir("ckpt_hooks");
  const TripletSampler sampler(shared_bank(), 32);
  RunConfig cfg = small_run();
  cfg.train.checkpoint_every = 2;
  cfg.train.log_every = 1;
  TrainState s = TrainState::create(cfg);
  std::ostringstream log;
  TrainHooks hooks;
  hooks.log = &log;
  hooks.metrics_csv = dir / "metrics.csv";
  hooks.checkpoint_path = dir / "run.ckpt";
  train(s, sampler, 4, hooks);
  std::ifstream is(dir / "metrics.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 5);  // header + 4 steps
  CHECK(!log.str().empty());
  CHECK(load_checkpoint(dir / "run.ckpt").step == 4);
}

TEST_CASE("corrupt and incompatible checkpoints are rejected") {
  const auto dir = test::temp_dir("ckpt_bad");
  TrainState s = TrainState::create(small_run());
  save_checkpoint(s, dir / "good.ckpt");
  const std::string bytes = read_bytes(dir / "good.ckpt");

  write_bytes(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 100));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), IntegrityError);
  write_bytes(dir / "tiny.ckpt", bytes.substr(0, 6));
  CHECK_THROWS_AS(load_checkpoint(dir / "tiny.ckpt"), IntegrityError);

  std::string flipped = bytes;
  flipped[flipped.size() - 9] ^= 0x5a;
  write_bytes(dir / "crc.ckpt", flipped);
  CHECK_THROWS_AS(load_checkpoint(dir / "crc.ckpt"), IntegrityError);

  std::string version = bytes;
  version[8] = 9;  // u32 version follows the 8-byte magic
  write_bytes(dir / "ver.ckpt", version);
  try {
    load_checkpoint(dir / "ver.ckpt");
    FAIL("expected a version error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("version 9") != std::string::npos);
  }

  RunConfig wide = small_run();
  wide.model.d_model = 16;
  TrainState other = TrainState::create(wide);
  try {
    restore_checkpoint(dir / "good.ckpt", other);
    FAIL("expected a shape error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("tensor '") != std::string::npos);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), IoError);
}
