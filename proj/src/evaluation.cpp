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

#include "stylevc/evaluation.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "stylevc/error.hpp"
#include "stylevc/losses.hpp"

namespace stylevc {

namespace fs = std::filesystem;

double mcd_constant() { return 10.0 / std::numbers::ln10 * std::numbers::sqrt2; }

Matrix mel_cepstrum(const Matrix& logmel, std::size_t n_coeffs) {
  const std::size_t D = logmel.cols();
  if (n_coeffs + 1 > D) throw InputError("mel_cepstrum: need more than " + std::to_string(n_coeffs) + " bins");
  Matrix c(logmel.rows(), n_coeffs);
  const double scale = std::sqrt(2.0 / static_cast<double>(D));
  for (std::size_t t = 0; t < logmel.rows(); ++t) {
    for (std::size_t k = 1; k <= n_coeffs; ++k) {
      double s = 0.0;
      for (std::size_t n = 0; n < D; ++n)
        s += logmel(t, n) * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * n + 1.0) / (2.0 * D));
      c(t, k - 1) = scale * s;
    }
  }
  return c;
}

namespace {

double frame_distance(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.cols(); ++d) {
    const double x = a(i, d) - b(j, d);
    s += x * x;
  }
  return std::sqrt(s);
}

}  // namespace

double mcd_from_cepstra(const Matrix& a, const Matrix& b, bool use_dtw) {
  if (a.cols() != b.cols()) throw InputError("mcd: coefficient count mismatch");
  if (a.rows() == 0 || b.rows() == 0) throw InputError("mcd: empty input");
  if (!use_dtw) {
    if (a.rows() != b.rows())
      throw InputError("mcd: frame counts differ (" + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) +
                       "); enable DTW");
    double s = 0.0;
    for (std::size_t t = 0; t < a.rows(); ++t) s += frame_distance(a, t, b, t);
    return mcd_constant() * s / static_cast<double>(a.rows());
  }
  const std::size_t n = a.rows(), m = b.rows();
  const double inf = std::numeric_limits<double>::infinity();
  Matrix cost(n, m), acc(n, m, inf);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cost(i, j) = frame_distance(a, i, b, j);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double best = (i == 0 && j == 0) ? 0.0 : inf;
      if (i > 0) best = std::min(best, acc(i - 1, j));
      if (j > 0) best = std::min(best, acc(i, j - 1));
      if (i > 0 && j > 0) best = std::min(best, acc(i - 1, j - 1));
      acc(i, j) = best + cost(i, j);
    }
  }
  // Backtrack for the path length; ties prefer the diagonal.
  std::size_t i = n - 1, j = m - 1, len = 1;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && acc(i - 1, j - 1) <= acc(i - 1, j) && acc(i - 1, j - 1) <= acc(i, j - 1)) {
      --i;
      --j;
    } else if (i > 0 && (j == 0 || acc(i - 1, j) <= acc(i, j - 1))) {
      --i;
    } else {
      --j;
    }
    ++len;
  }
  return mcd_constant() * acc(n - 1, m - 1) / static_cast<double>(len);
}

double mcd(const Matrix& ref, const Matrix& gen, bool use_dtw) {
  if (ref.cols() != gen.cols())
    throw InputError("mcd: bin count mismatch (" + std::to_string(ref.cols()) + " vs " + std::to_string(gen.cols()) + ")");
  if (!use_dtw && ref.rows() != gen.rows())
    throw InputError("mcd: frame counts differ (" + std::to_string(ref.rows()) + " vs " + std::to_string(gen.rows()) +
                     "); enable DTW");
  return mcd_from_cepstra(mel_cepstrum(ref), mel_cepstrum(gen), use_dtw);
}

double vss_surrogate_embeddings(const Matrix& generated, const std::vector<Matrix>& refs) {
  if (refs.empty()) throw InputError("vss_surrogate: at least one target reference is required");
  Matrix centroid(1, generated.cols());
  for (const auto& r : refs) {
    if (!r.same_shape(generated)) throw InputError("vss_surrogate: embedding shape mismatch");
    for (std::size_t k = 0; k < r.size(); ++k) centroid.data()[k] += r.data()[k];
  }
  for (double& v : centroid.flat()) v /= static_cast<double>(refs.size());
  return std::clamp(cosine_similarity(generated, centroid), -1.0, 1.0);
}

double vss_surrogate(const Model& embedder, const Matrix& generated, const std::vector<Matrix>& refs) {
  if (refs.empty()) throw InputError("vss_surrogate: at least one target reference is required");
  return vss_surrogate_embeddings(embedder.speaker_encode(generated).values, embed_all(embedder, refs));
}

std::vector<Matrix> embed_all(const Model& embedder, const std::vector<Matrix>& mels) {
  std::vector<Matrix> out(mels.size());
  std::vector<std::string> errors(mels.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < mels.size(); ++i) {
    try {
      out[i] = embedder.speaker_encode(mels[i]).values;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw InputError(e);
  return out;
}

std::size_t export_embeddings(const Model& embedder, const FeatureBank& bank, const Manifest& manifest,
                              const fs::path& out_csv) {
  std::vector<Matrix> mels;
  for (const auto& m : bank.mels) mels.push_back(m.values);
  const auto emb = embed_all(embedder, mels);
  std::ofstream os(out_csv);
  if (!os) throw IoError("cannot write " + out_csv.string());
  os << "utterance_id,speaker_id";
  const std::size_t dim = emb.empty() ? 0 : emb[0].cols();
  for (std::size_t k = 0; k < dim; ++k) os << ",e" << k;
  os << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < emb.size(); ++i) {
    os << bank.utterance_ids[i] << ',' << manifest.speakers.at(bank.labels[i]);
    for (double v : emb[i].flat()) os << ',' << v;
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + out_csv.string());
  return emb.size();
}

double silhouette_cosine(const std::vector<Matrix>& emb, const std::vector<std::size_t>& labels) {
  const std::size_t n = emb.size();
  if (labels.size() != n) throw InputError("silhouette: label count mismatch");
  std::size_t n_labels = 0;
  for (auto l : labels) n_labels = std::max(n_labels, l + 1);
  if (n < 2 || n_labels < 2) throw InputError("silhouette: need >= 2 samples and >= 2 clusters");
  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist(i, j) = dist(j, i) = 1.0 - cosine_similarity(emb[i], emb[j]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(n_labels, 0.0);
    std::vector<std::size_t> cnt(n_labels, 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum[labels[j]] += dist(i, j);
      ++cnt[labels[j]];
    }
    if (cnt[labels[i]] == 0) continue;  // singleton cluster scores 0
    const double a = sum[labels[i]] / static_cast<double>(cnt[labels[i]]);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < n_labels; ++l)
      if (l != labels[i] && cnt[l] > 0) b = std::min(b, sum[l] / static_cast<double>(cnt[l]));
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

Aggregate mean_ci95(const std::vector<double>& v) {
  Aggregate a;
  a.n = v.size();
  if (v.empty()) return a;
  for (double x : v) a.mean += x;
  a.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return a;
  double ss = 0.0;
  for (double x : v) ss += (x - a.mean) * (x - a.mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  const boost::math::students_t dist(static_cast<double>(v.size() - 1));
  a.half_width = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(v.size()));
  return a;
}

MetricReport summarize(std::vector<MetricRow> rows) {
  MetricReport r;
  std::vector<double> m, s;
  for (const auto& row : rows) {
    m.push_back(row.mcd_db);
    s.push_back(row.vss_cosine);
  }
  r.rows = std::move(rows);
  r.mcd = mean_ci95(m);
  r.vss = mean_ci95(s);
  return r;
}

void write_report(const MetricReport& r, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "source_id,target_id,mcd_db,vss_cosine\n" << std::setprecision(10);
  for (const auto& row : r.rows)
    os << row.source_id << ',' << row.target_id << ',' << row.mcd_db << ',' << row.vss_cosine << '\n';
  os << "# pairs " << r.rows.size() << '\n';
  os << "# mcd_db mean " << r.mcd.mean << " ci95_half_width " << r.mcd.half_width << '\n';
  os << "# vss_cosine mean " << r.vss.mean << " ci95_half_width " << r.vss.half_width << '\n';
  os << "# vss_cosine is measured with this model's own speaker encoder, not an external verifier;"
        " only relative ordering is meaningful\n";
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<EvalPair> load_eval_pairs(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open pair list " + path.string());
  const fs::path root = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : root / p; };
  std::vector<EvalPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string x;
    while (std::getline(ss, x, '\t')) f.push_back(x);
    if (f.size() != 4 && f.size() != 5)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected source_id, source_path, target_id, target_path[, generated_mel]");
    EvalPair p{f[0], f[2], resolve(f[1]), resolve(f[3]), {}};
    if (f.size() == 5) p.generated = resolve(f[4]);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace stylevc
