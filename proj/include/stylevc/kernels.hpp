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

// Dense numeric kernels behind the autograd ops.
//
// Every kernel exists twice: an OpenMP-parallel version in `kernels` and a
// plain scalar-loop version in `kernels::reference`. The parallel versions
// split work over output rows only, so per-element arithmetic (and therefore
// the result) does not depend on the thread count. The reference versions are
// kept for tests and for the benchmark target.

#include "stylevc/matrix.hpp"

namespace stylevc::kernels {

// out += a * b^T        a: [m x k], b: [n x k], out: [m x n]
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a * b          a: [m x k], b: [k x n], out: [m x n]
void matmul_nn_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a^T * b        a: [k x m], b: [k x n], out: [m x n]
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);

Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& x);
// Parameter-free layer normalization over each row. `inv_std` (optional)
// receives one value per row.
Matrix layer_norm_rows(const Matrix& x, double eps, std::vector<double>* inv_std = nullptr);
// Per-column standardization over time (rows), variance denominator N.
Matrix instance_norm_cols(const Matrix& x, double eps, std::vector<double>* inv_std = nullptr);
// Depthwise 1-D convolution along rows with zero "same" padding.
// w: [k x C] with k odd, bias: [1 x C].
Matrix depthwise_conv1d(const Matrix& x, const Matrix& w, const Matrix& bias);

// Work threshold (multiply-adds) under which kernels stay serial.
inline constexpr long kParallelThreshold = 1L << 15;

namespace reference {

Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& x);
Matrix layer_norm_rows(const Matrix& x, double eps);
Matrix instance_norm_cols(const Matrix& x, double eps);
Matrix depthwise_conv1d(const Matrix& x, const Matrix& w, const Matrix& bias);

}  // namespace reference

}  // namespace stylevc::kernels
