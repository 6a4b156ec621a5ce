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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "stylevc/error.hpp"
#include "stylevc/model.hpp"
#include "stylevc/training.hpp"
#include "test_util.hpp"

using namespace stylevc;
using test::random_matrix;

namespace {

Matrix random_mel(Rng& rng, std::size_t L) { return random_matrix(rng, L, 80, -8.0, 2.0); }

double rel_norm_diff(const Matrix& a, const Matrix& b) {
  double d = 0, n = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    d += (a.data()[k] - b.data()[k]) * (a.data()[k] - b.data()[k]);
    n += a.data()[k] * a.data()[k];
  }
  return std::sqrt(d / n);
}

}  // namespace

TEST_CASE("content encoder divides the frame count by 16") {
  const Model model(tiny_model_config(3), 1);
  Rng rng(1);
  for (std::size_t L : {16u, 32u, 128u, 256u}) {
    const auto z = model.content_encode(random_mel(rng, L));
    CHECK(z.r_m.rows() == L / 16);
    CHECK(z.r_m.cols() == model.config().d_content);
    CHECK(z.r_s.same_shape(z.r_m));
    for (double v : z.r_s.flat()) CHECK(v > 0.0);
  }
  CHECK_THROWS_AS(model.content_encode(random_mel(rng, 40)), InputError);
  CHECK_THROWS_AS(model.content_encode(random_matrix(rng, 32, 40)), InputError);
}

TEST_CASE("content encoder sampling") {
  const Model model(tiny_model_config(3), 2);
  Rng data(2);
  const Matrix mel = random_mel(data, 64);
  const auto eval = model.content_encode(mel);
  CHECK(eval.r_c == eval.r_m);
  Rng a(7), b(7);
  const auto za = model.content_encode(mel, &a), zb = model.content_encode(mel, &b);
  CHECK(za.r_c == zb.r_c);
  CHECK(!(za.r_c == za.r_m));
}

TEST_CASE("reparameterized samples are standard normal through the encoder") {
  const Model model(tiny_model_config(3), 3);
  Rng data(3), rng(11);
  const Matrix mel = random_mel(data, 256);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  while (n < 10000) {
    const auto z = model.content_encode(mel, &rng);
    for (std::size_t k = 0; k < z.r_c.size(); ++k) {
      const double e = (z.r_c.data()[k] - z.r_m.data()[k]) / z.r_s.data()[k];
      sum += e;
      sq += e * e;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var > 0.9);
  CHECK(var < 1.1);
}

TEST_CASE("content encoder instance norms are zero-mean in time") {
  const Model model(tiny_model_config(3), 4);
  Rng data(4);
  ag::Tape tape;
  ParamBinding binding(tape, model.params());
  nn::BlockTrace trace;
  nn::Context ctx{binding};
  ctx.trace = &trace;
  model.content_encode(ctx, tape.constant(random_mel(data, 128)), nullptr);
  REQUIRE(trace.post_instance_norm.size() == 4);
  for (const auto& h : trace.post_instance_norm)
    for (std::size_t c = 0; c < h.cols(); ++c) {
      double m = 0;
      for (std::size_t t = 0; t < h.rows(); ++t) m += h(t, c);
      CHECK(std::abs(m / static_cast<double>(h.rows())) < 1e-5);
    }
}

TEST_CASE("speaker encoder output") {
  const Model model(tiny_model_config(3), 5);
  Rng data(5);
  for (std::size_t L : {16u, 23u, 100u}) {
    const auto e = model.speaker_encode(random_mel(data, L));
    CHECK(e.values.rows() == 1);
    CHECK(e.values.cols() == 2 * model.config().d_model);
    CHECK(e.logits.cols() == 3);
    const Matrix again = model.speaker_encode(random_mel(data, L)).values;
    CHECK(again.cols() == e.values.cols());
  }
  CHECK_THROWS_AS(model.speaker_encode(random_mel(data, 15)), InputError);
  const Matrix mel = random_mel(data, 48);
  CHECK(model.speaker_encode(mel).values == model.speaker_encode(mel).values);
}

TEST_CASE("speaker embedding is nearly invariant to frame order") {
  const Model model(tiny_model_config(3), 6);
  Rng data(6);
  const Matrix mel = random_mel(data, 64);
  std::vector<std::size_t> order(64);
  for (std::size_t i = 0; i < 64; ++i) order[i] = i;
  for (std::size_t i = 63; i > 0; --i) std::swap(order[i], order[data.index(i + 1)]);
  Matrix shuffled(64, 80);
  for (std::size_t t = 0; t < 64; ++t)
    for (std::size_t c = 0; c < 80; ++c) shuffled(t, c) = mel(order[t], c);
  const double r = rel_norm_diff(model.speaker_encode(mel).values, model.speaker_encode(shuffled).values);
  MESSAGE("frame-shuffle relative embedding change " << r);
  CHECK(r < 0.1);
}

TEST_CASE("split_style and merge_style") {
  const auto id = Model::split_style(Matrix(1, 8, 0.0));
  CHECK(id.s1 == Matrix(1, 4, 1.0));
  CHECK(id.s2 == Matrix(1, 4, 0.0));
  Rng rng(7);
  const Matrix e = random_matrix(rng, 1, 8, -2.0, 2.0);
  const auto st = Model::split_style(e);
  CHECK(st.dim() == 4);
  CHECK(max_abs_diff(Model::merge_style(st), e) < 1e-9);
  for (std::size_t j = 0; j < 4; ++j) CHECK(st.s2(0, j) == e(0, 4 + j));
  CHECK_THROWS_AS(Model::split_style(Matrix(1, 7)), InputError);
}

TEST_CASE("decoder restores the time reduction") {
  const Model model(tiny_model_config(3), 8);
  Rng rng(8);
  const auto id = nn::StyleParams::identity(model.config().d_model);
  const Matrix y = model.decode(random_matrix(rng, 8, model.config().d_content), id);
  CHECK(y.rows() == 128);
  CHECK(y.cols() == 80);
  CHECK_THROWS_AS(model.decode(random_matrix(rng, 8, 3), id), InputError);
  CHECK_THROWS_AS(model.decode(random_matrix(rng, 8, model.config().d_content), nn::StyleParams::identity(3)),
                  InputError);
}

TEST_CASE("convert keeps the source length") {
  const Model model(tiny_model_config(3), 9);
  Rng rng(9);
  for (std::size_t L : {16u, 32u, 128u, 256u}) {
    for (std::size_t T : {16u, 50u}) {
      const auto out = model.convert(random_mel(rng, L), random_mel(rng, T));
      CHECK(out.x_dec.rows() == L);
      CHECK(out.x_dec.cols() == 80);
      CHECK(out.x_dec.all_finite());
    }
  }
}

TEST_CASE("zero-initialized style projection makes decoding style-independent") {
  ModelConfig cfg = tiny_model_config(3);
  cfg.style_init_scale = 0.0;
  const Model model(cfg, 10);
  Rng rng(10);
  const Matrix src = random_mel(rng, 32);
  const auto a = model.convert(src, random_mel(rng, 32));
  const auto b = model.convert(src, random_mel(rng, 64));
  CHECK(a.x_dec == b.x_dec);
  CHECK(a.speaker.values == Matrix(1, cfg.embedding_dim(), 0.0));
}

TEST_CASE("model parameter naming and determinism") {
  const Model a(tiny_model_config(3), 11), b(tiny_model_config(3), 11), c(tiny_model_config(3), 12);
  REQUIRE(a.params().size() == b.params().size());
  bool all_same = true, any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    all_same = all_same && a.params().at(static_cast<int>(i)).value == b.params().at(static_cast<int>(i)).value;
    any_diff = any_diff || !(a.params().at(static_cast<int>(i)).value == c.params().at(static_cast<int>(i)).value);
  }
  CHECK(all_same);
  CHECK(any_diff);
  for (const char* name : {"content.input.weight", "speaker.output.weight", "aam.class_weights", "decoder.output.weight"})
    CHECK(a.params().index_of(name) >= 0);
  CHECK(ParamStore::group_of("content.block0.ff1.up.weight") == "content.block0");
}

TEST_CASE("model config validation") {
  ModelConfig cfg = tiny_model_config(3);
  cfg.n_heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_model_config(3);
  cfg.n_speakers = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
