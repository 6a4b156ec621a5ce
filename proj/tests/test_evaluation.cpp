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
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "stylevc/error.hpp"
#include "stylevc/evaluation.hpp"
#include "stylevc/training.hpp"
#include "test_util.hpp"

using namespace stylevc;
namespace fs = std::filesystem;
using test::random_matrix;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::size_t count_fields(const std::string& line) {
  std::size_t n = 1;
  for (char c : line) n += c == ',';
  return n;
}

}  // namespace

TEST_CASE("MCD constant and single-frame oracle") {
  const double expect = 10.0 / std::log(10.0) * std::sqrt(2.0);
  CHECK(std::abs(mcd_constant() - expect) < 1e-12);
  CHECK(std::abs(mcd_constant() - 6.1419) < 1e-4);
  Matrix a(1, kCepstralOrder, 0.0), b(1, kCepstralOrder, 0.0);
  b(0, 0) = 0.6;
  b(0, 5) = 0.8;  // difference vector of norm 1
  CHECK(std::abs(mcd_from_cepstra(a, b) - expect) < 1e-12);
  CHECK(std::abs(mcd_from_cepstra(a, b, true) - expect) < 1e-12);
}

TEST_CASE("mel cepstrum is the orthonormal DCT-II without c0") {
  Rng rng(50);
  const Matrix mel = random_matrix(rng, 3, 80, -6.0, 1.0);
  const Matrix c = mel_cepstrum(mel);
  REQUIRE(c.cols() == kCepstralOrder);
  const double N = 80.0;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 1; k <= kCepstralOrder; ++k) {
      double s = 0;
      for (std::size_t n = 0; n < 80; ++n) s += mel(t, n) * std::cos(std::numbers::pi * k * (n + 0.5) / N);
      CHECK(std::abs(c(t, k - 1) - std::sqrt(2.0 / N) * s) < 1e-9);
    }
  // A constant offset only moves c0.
  Matrix shifted = mel;
  for (double& v : shifted.flat()) v += 3.0;
  CHECK(max_abs_diff(mel_cepstrum(shifted), c) < 1e-9);
}

TEST_CASE("MCD properties") {
  Rng rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix a = random_matrix(rng, 20, 80, -6.0, 1.0), b = random_matrix(rng, 20, 80, -6.0, 1.0),
                 c = random_matrix(rng, 20, 80, -6.0, 1.0);
    CHECK(mcd(a, a) == 0.0);
    CHECK(mcd(a, a, true) == 0.0);
    const double ab = mcd(a, b);
    CHECK(ab > 0.0);
    CHECK(ab == mcd(b, a));
    CHECK(mcd(a, c) <= ab + mcd(b, c) + 1e-12);
    CHECK(mcd(a, b, true) <= ab + 1e-12);
  }
  // DTW absorbs a time stretch that naive alignment cannot compare.
  const Matrix a = random_matrix(rng, 10, 80);
  Matrix stretched(20, 80);
  for (std::size_t t = 0; t < 20; ++t)
    for (std::size_t k = 0; k < 80; ++k) stretched(t, k) = a(t / 2, k);
  CHECK(mcd(a, stretched, true) < 1e-12);
  CHECK_THROWS_AS(mcd(a, stretched), InputError);
  CHECK_THROWS_AS(mcd(a, random_matrix(rng, 10, 40)), InputError);
}

TEST_CASE("voice similarity surrogate") {
  const Model model(tiny_model_config(3), 52);
  Rng rng(52);
  const Matrix g = random_matrix(rng, 32, 80, -8.0, 1.0);
  CHECK(std::abs(vss_surrogate(model, g, {g}) - 1.0) < 1e-6);
  std::vector<Matrix> embs;
  for (int i = 0; i < 5; ++i) embs.push_back(random_matrix(rng, 1, 6));
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix x = random_matrix(rng, 1, 6);
    const double v = vss_surrogate_embeddings(x, embs);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  const Matrix x = random_matrix(rng, 1, 6);
  const double ref = vss_surrogate_embeddings(x, embs);
  std::vector<Matrix> reordered(embs.rbegin(), embs.rend());
  std::swap(reordered[0], reordered[2]);
  CHECK(std::abs(vss_surrogate_embeddings(x, reordered) - ref) < 1e-12);
  CHECK_THROWS_AS(vss_surrogate(model, g, {}), InputError);
}

TEST_CASE("embedding export") {
  const auto dir = test::temp_dir("export");
  const Model model(tiny_model_config(4), 53);
  FeatureBank bank;
  Manifest m;
  Rng rng(53);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t u = 0; u < 8; ++u) {
      MelSpectrogram mel;
      mel.values = random_matrix(rng, 24, 80, -8.0, 1.0);
      bank.mels.push_back(mel);
      bank.labels.push_back(s);
      const std::string id = "s" + std::to_string(s) + "_" + std::to_string(u);
      bank.utterance_ids.push_back(id);
      m.entries.push_back({id, id + ".wav", "s" + std::to_string(s)});
    }
  bank.n_speakers = 4;
  m.validate();
  CHECK(export_embeddings(model, bank, m, dir / "a.csv") == 32);
  const auto lines = read_lines(dir / "a.csv");
  REQUIRE(lines.size() == 33);
  for (const auto& l : lines) CHECK(count_fields(l) == 2 * model.config().d_model + 2);
  CHECK(lines[1].rfind("s0_0,s0,", 0) == 0);
  export_embeddings(model, bank, m, dir / "b.csv");
  CHECK(read_lines(dir / "b.csv") == lines);
}

TEST_CASE("silhouette against a direct computation") {
  Rng rng(54);
  std::vector<Matrix> emb;
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) {
      Matrix e = random_matrix(rng, 1, 5, -0.3, 0.3);
      e(0, c) += 2.0;
      emb.push_back(e);
      labels.push_back(c);
    }
  auto d = [&](std::size_t i, std::size_t j) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < 5; ++k) {
      ab += emb[i](0, k) * emb[j](0, k);
      aa += emb[i](0, k) * emb[i](0, k);
      bb += emb[j](0, k) * emb[j](0, k);
    }
    return 1.0 - ab / std::sqrt(aa * bb);
  };
  double total = 0;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    double a = 0, b = 1e300;
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0;
      int n = 0;
      for (std::size_t j = 0; j < emb.size(); ++j)
        if (j != i && labels[j] == c) {
          s += d(i, j);
          ++n;
        }
      if (c == labels[i]) a = s / n;
      else b = std::min(b, s / n);
    }
    total += (b - a) / std::max(a, b);
  }
  const double s = silhouette_cosine(emb, labels);
  CHECK(std::abs(s - total / emb.size()) < 1e-12);
  CHECK(s > 0.5);
  std::vector<std::size_t> shuffled = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  CHECK(silhouette_cosine(emb, shuffled) < s);
  CHECK_THROWS_AS(silhouette_cosine(emb, {0, 1}), InputError);
  CHECK_THROWS_AS(silhouette_cosine(emb, std::vector<std::size_t>(12, 0)), InputError);
}

TEST_CASE("confidence interval uses the t distribution") {
  const auto a = mean_ci95({1.0, 2.0, 3.0, 4.0, 5.0});
  CHECK(a.mean == 3.0);
  CHECK(a.n == 5);
  // t(0.975, 4) = 2.7764451051977987
  CHECK(std::abs(a.half_width - 2.7764451051977987 * std::sqrt(2.5) / std::sqrt(5.0)) < 1e-9);
  CHECK(mean_ci95({7.0}).half_width == 0.0);
  CHECK(mean_ci95({}).n == 0);
}

TEST_CASE("report and pair list formats") {
  const auto dir = test::temp_dir("report");
  const MetricReport r = summarize({{"a", "b", 5.0, 0.5}, {"c", "d", 7.0, 0.7}});
  CHECK(r.mcd.mean == 6.0);
  CHECK(r.vss.mean == doctest::Approx(0.6));
  write_report(r, dir / "r.csv");
  const auto lines = read_lines(dir / "r.csv");
  REQUIRE(lines.size() >= 6);
  CHECK(lines[0] == "source_id,target_id,mcd_db,vss_cosine");
  CHECK(lines[1] == "a,b,5,0.5");
  CHECK(lines[3] == "# pairs 2");
  CHECK(lines[4].rfind("# mcd_db mean 6 ci95_half_width ", 0) == 0);

  std::ofstream(dir / "pairs.tsv") << "# header\ns1\tsrc/a.wav\tt1\t/abs/b.wav\ns2\tc.wav\tt2\td.wav\tgen/x.mel\n";
  const auto pairs = load_eval_pairs(dir / "pairs.tsv");
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].source == dir / "src/a.wav");
  CHECK(pairs[0].target == fs::path("/abs/b.wav"));
  CHECK(pairs[0].generated.empty());
  CHECK(pairs[1].generated == dir / "gen/x.mel");
  std::ofstream(dir / "bad.tsv") << "s1\tonly\n";
  CHECK_THROWS_AS(load_eval_pairs(dir / "bad.tsv"), ParseError);
}
