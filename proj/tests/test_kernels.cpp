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

#include <omp.h>

#include "doctest.h"
#include "stylevc/kernels.hpp"
#include "test_util.hpp"

using namespace stylevc;
namespace k = stylevc::kernels;

namespace {

struct Shape {
  std::size_t m, n, kk;
};
const Shape kShapes[] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 8}, {17, 33, 9}, {64, 8, 64}, {130, 70, 40}, {256, 96, 130}};

}  // namespace

TEST_CASE("matmul kernels agree with the scalar reference") {
  Rng rng(1);
  for (const auto& s : kShapes) {
    CAPTURE(s.m);
    CAPTURE(s.n);
    CAPTURE(s.kk);
    const Matrix a = test::random_matrix(rng, s.m, s.kk);
    const Matrix b = test::random_matrix(rng, s.kk, s.n);
    const Matrix bt = b.transposed();
    const Matrix at = a.transposed();
    const double tol = 1e-12 * static_cast<double>(s.kk);
    CHECK(max_abs_diff(k::matmul_nn(a, b), k::reference::matmul_nn(a, b)) < tol);
    CHECK(max_abs_diff(k::matmul_nt(a, bt), k::reference::matmul_nt(a, bt)) < tol);
    CHECK(max_abs_diff(k::matmul_tn(at, b), k::reference::matmul_tn(at, b)) < tol);
    CHECK(max_abs_diff(k::matmul_nn(a, b), k::reference::matmul_nt(a, bt)) < tol);
  }
}

TEST_CASE("accumulating matmul adds onto the output") {
  Rng rng(2);
  const Matrix a = test::random_matrix(rng, 9, 5), b = test::random_matrix(rng, 5, 11);
  Matrix out(9, 11, 2.0);
  k::matmul_nn_acc(a, b, out);
  Matrix expect = k::reference::matmul_nn(a, b);
  for (double& v : expect.flat()) v += 2.0;
  CHECK(max_abs_diff(out, expect) < 1e-12);
  Matrix wrong(3, 3);
  CHECK_THROWS(k::matmul_nn_acc(a, b, wrong));
}

TEST_CASE("row kernels agree with the scalar reference") {
  Rng rng(3);
  for (std::size_t rows : {1u, 2u, 7u, 300u}) {
    const Matrix x = test::random_matrix(rng, rows, 37, -4.0, 4.0);
    CHECK(max_abs_diff(k::softmax_rows(x), k::reference::softmax_rows(x)) < 1e-14);
    CHECK(max_abs_diff(k::layer_norm_rows(x, 1e-5), k::reference::layer_norm_rows(x, 1e-5)) < 1e-12);
    if (rows >= 2)
      CHECK(max_abs_diff(k::instance_norm_cols(x, 1e-8), k::reference::instance_norm_cols(x, 1e-8)) < 1e-12);
    const Matrix w = test::random_matrix(rng, 5, 37), bias = test::random_matrix(rng, 1, 37);
    CHECK(max_abs_diff(k::depthwise_conv1d(x, w, bias), k::reference::depthwise_conv1d(x, w, bias)) < 1e-12);
  }
}

TEST_CASE("parallel kernels are independent of the thread count") {
  Rng rng(4);
  const Matrix a = test::random_matrix(rng, 300, 120), b = test::random_matrix(rng, 120, 90);
  const Matrix x = test::random_matrix(rng, 400, 64);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const Matrix c1 = k::matmul_nn(a, b), s1 = k::softmax_rows(x), n1 = k::instance_norm_cols(x, 1e-8);
  omp_set_num_threads(4);
  const Matrix c4 = k::matmul_nn(a, b), s4 = k::softmax_rows(x), n4 = k::instance_norm_cols(x, 1e-8);
  omp_set_num_threads(saved);
  CHECK(c1 == c4);
  CHECK(s1 == s4);
  CHECK(n1 == n4);
}

TEST_CASE("softmax is stable for large logits") {
  const Matrix x = Matrix::from_rows({{1000.0, 1000.0, -1000.0}});
  const Matrix p = k::softmax_rows(x);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(0, 2) == 0.0);
}

TEST_CASE("depthwise convolution uses zero same-padding") {
  const Matrix x = Matrix::from_rows({{1.0}, {2.0}, {3.0}});
  const Matrix w = Matrix::from_rows({{1.0}, {10.0}, {100.0}});
  const Matrix y = k::depthwise_conv1d(x, w, Matrix(1, 1, 0.5));
  // y[t] = x[t-1] + 10 x[t] + 100 x[t+1] + bias
  CHECK(y(0, 0) == doctest::Approx(0 + 10 + 200 + 0.5));
  CHECK(y(1, 0) == doctest::Approx(1 + 20 + 300 + 0.5));
  CHECK(y(2, 0) == doctest::Approx(2 + 30 + 0 + 0.5));
}
