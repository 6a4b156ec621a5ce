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

#include "stylevc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "stylevc/error.hpp"

namespace stylevc::kernels {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw InputError(what);
}

long work(std::size_t m, std::size_t n, std::size_t k) {
  return static_cast<long>(m) * static_cast<long>(n) * static_cast<long>(k);
}

}  // namespace

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 16;

template <std::size_t R, std::size_t W>
inline void tile_fixed(const double* A, std::size_t lda, const double* B, std::size_t ldb, double* C,
                       std::size_t ldc, std::size_t k) {
  double acc[R][W] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* b = B + p * ldb;
    for (std::size_t r = 0; r < R; ++r) {
      const double a = A[r * lda + p];
#pragma omp simd
      for (std::size_t c = 0; c < W; ++c) acc[r][c] += a * b[c];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
#pragma omp simd
    for (std::size_t c = 0; c < W; ++c) C[r * ldc + c] += acc[r][c];
}

// C[R x w] += A[R x k] * B[k x w] for one register tile; the accumulator
// tile stays in vector registers across the k loop.
template <std::size_t R>
inline void tile(const double* A, std::size_t lda, const double* B, std::size_t ldb, double* C,
                 std::size_t ldc, std::size_t k, std::size_t w) {
  if (w == kColBlock) return tile_fixed<R, kColBlock>(A, lda, B, ldb, C, ldc, k);
  if (w == 8) return tile_fixed<R, 8>(A, lda, B, ldb, C, ldc, k);
  double acc[R][kColBlock] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* b = B + p * ldb;
    for (std::size_t r = 0; r < R; ++r) {
      const double a = A[r * lda + p];
      for (std::size_t c = 0; c < w; ++c) acc[r][c] += a * b[c];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < w; ++c) C[r * ldc + c] += acc[r][c];
}

template <std::size_t R>
inline void row_panel(const double* A, std::size_t lda, const double* B, std::size_t n, double* C,
                      std::size_t k) {
  for (std::size_t j = 0; j < n; j += kColBlock)
    tile<R>(A, lda, B + j, n, C + j, n, k, std::min(kColBlock, n - j));
}

// C[m x n] += A[m x k] * B[k x n], all row-major and densely packed. Work is
// split over blocks of output rows; every output element is accumulated in
// the same order whatever the thread count.
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t n, std::size_t k) {
  const long blocks = static_cast<long>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static) if (work(m, n, k) > kParallelThreshold)
  for (long ib = 0; ib < blocks; ++ib) {
    const std::size_t i = static_cast<std::size_t>(ib) * kRowBlock;
    const double* a = A + i * k;
    double* c = C + i * n;
    switch (std::min(kRowBlock, m - i)) {
      case 4: row_panel<4>(a, k, B, n, c, k); break;
      case 3: row_panel<3>(a, k, B, n, c, k); break;
      case 2: row_panel<2>(a, k, B, n, c, k); break;
      default: row_panel<1>(a, k, B, n, c, k); break;
    }
  }
}

void transpose_into(const double* src, std::size_t rows, std::size_t cols, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.cols() && out.rows() == a.rows() && out.cols() == b.rows(),
        "matmul_nt: shape mismatch");
  thread_local std::vector<double> bt;
  transpose_into(b.data(), b.rows(), b.cols(), bt);
  gemm_nn(a.data(), bt.data(), out.data(), a.rows(), b.rows(), a.cols());
}

void matmul_nn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.rows() && out.rows() == a.rows() && out.cols() == b.cols(),
        "matmul_nn: shape mismatch");
  gemm_nn(a.data(), b.data(), out.data(), a.rows(), b.cols(), a.cols());
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.rows() == b.rows() && out.rows() == a.cols() && out.cols() == b.cols(),
        "matmul_tn: shape mismatch");
  thread_local std::vector<double> at;
  transpose_into(a.data(), a.rows(), a.cols(), at);
  gemm_nn(at.data(), b.data(), out.data(), a.cols(), b.cols(), a.rows());
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  matmul_nt_acc(a, b, out);
  return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  matmul_nn_acc(a, b, out);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  matmul_tn_acc(a, b, out);
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  const long rows = static_cast<long>(x.rows());
#pragma omp parallel for schedule(static) if (work(x.rows(), x.cols(), 8) > kParallelThreshold)
  for (long r = 0; r < rows; ++r) {
    auto in = x.row(static_cast<std::size_t>(r));
    auto out = y.row(static_cast<std::size_t>(r));
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      s += out[c];
    }
    const double inv = 1.0 / s;
    for (double& v : out) v *= inv;
  }
  return y;
}

Matrix layer_norm_rows(const Matrix& x, double eps, std::vector<double>* inv_std) {
  Matrix y(x.rows(), x.cols());
  if (inv_std) inv_std->assign(x.rows(), 0.0);
  const double n = static_cast<double>(x.cols());
  const long rows = static_cast<long>(x.rows());
#pragma omp parallel for schedule(static) if (work(x.rows(), x.cols(), 4) > kParallelThreshold)
  for (long r = 0; r < rows; ++r) {
    auto in = x.row(static_cast<std::size_t>(r));
    auto out = y.row(static_cast<std::size_t>(r));
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = (in[c] - mean) * is;
    if (inv_std) (*inv_std)[static_cast<std::size_t>(r)] = is;
  }
  return y;
}

Matrix instance_norm_cols(const Matrix& x, double eps, std::vector<double>* inv_std) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Matrix y(rows, cols);
  std::vector<double> mean(cols, 0.0), var(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += x(r, c);
  for (double& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = x(r, c) - mean[c];
      var[c] += d * d;
    }
  std::vector<double> is(cols);
  for (std::size_t c = 0; c < cols; ++c)
    is[c] = 1.0 / std::sqrt(var[c] / static_cast<double>(rows) + eps);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y(r, c) = (x(r, c) - mean[c]) * is[c];
  if (inv_std) *inv_std = std::move(is);
  return y;
}

Matrix depthwise_conv1d(const Matrix& x, const Matrix& w, const Matrix& bias) {
  check(w.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols() && w.rows() % 2 == 1,
        "depthwise_conv1d: shape mismatch");
  const long L = static_cast<long>(x.rows());
  const std::size_t C = x.cols();
  const long half = static_cast<long>(w.rows() / 2);
  Matrix y(x.rows(), C);
#pragma omp parallel for schedule(static) if (work(x.rows(), C, w.rows()) > kParallelThreshold)
  for (long t = 0; t < L; ++t) {
    double* yt = y.data() + t * static_cast<long>(C);
    for (std::size_t c = 0; c < C; ++c) yt[c] = bias(0, c);
    for (long k = -half; k <= half; ++k) {
      const long src = t + k;
      if (src < 0 || src >= L) continue;
      const double* xs = x.data() + src * static_cast<long>(C);
      const double* wk = w.data() + (k + half) * static_cast<long>(C);
#pragma omp simd
      for (std::size_t c = 0; c < C; ++c) yt[c] += wk[c] * xs[c];
    }
  }
  return y;
}

namespace reference {

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check(a.cols() == b.cols(), "reference::matmul_nt: shape mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      out(i, j) = s;
    }
  return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  check(a.cols() == b.rows(), "reference::matmul_nn: shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check(a.rows() == b.rows(), "reference::matmul_tn: shape mismatch");
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      out(i, j) = s;
    }
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = x(r, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += std::exp(x(r, c) - mx);
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = std::exp(x(r, c) - mx) / s;
  }
  return y;
}

Matrix layer_norm_rows(const Matrix& x, double eps) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = (x(r, c) - mean) / std::sqrt(var + eps);
  }
  return y;
}

Matrix instance_norm_cols(const Matrix& x, double eps) {
  return layer_norm_rows(x.transposed(), eps).transposed();
}

Matrix depthwise_conv1d(const Matrix& x, const Matrix& w, const Matrix& bias) {
  const long L = static_cast<long>(x.rows());
  const long half = static_cast<long>(w.rows() / 2);
  Matrix y(x.rows(), x.cols());
  for (long t = 0; t < L; ++t)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double s = bias(0, c);
      for (long k = -half; k <= half; ++k) {
        const long src = t + k;
        if (src >= 0 && src < L)
          s += w(static_cast<std::size_t>(k + half), c) * x(static_cast<std::size_t>(src), c);
      }
      y(static_cast<std::size_t>(t), c) = s;
    }
  return y;
}

}  // namespace reference

}  // namespace stylevc::kernels
