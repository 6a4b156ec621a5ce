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

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "stylevc/autograd.hpp"
#include "stylevc/matrix.hpp"
#include "stylevc/rng.hpp"

namespace stylevc::test {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = lo + (hi - lo) * rng.uniform();
  return m;
}

using GraphFn = std::function<ag::Var(std::vector<ag::Var>&)>;

// Largest relative error between the analytic gradient of
// sum(f(inputs) * W) (W a fixed random projection) and central finite
// differences, over every input entry.
inline double grad_rel_error(const GraphFn& f, const std::vector<Matrix>& inputs, double h = 1e-5,
                             double floor = 1e-6, std::uint64_t seed = 99) {
  Matrix proj;
  auto eval = [&](const std::vector<Matrix>& in, std::vector<Matrix>* grads) {
    ag::Tape tape;
    std::vector<ag::Var> vars;
    for (const auto& m : in) vars.push_back(tape.input(m));
    ag::Var out = f(vars);
    if (proj.empty()) {
      Rng r(seed);
      proj = random_matrix(r, out.rows(), out.cols());
    }
    ag::Var loss = ag::sum_all(ag::mul(out, tape.constant(proj)));
    if (grads) {
      tape.backward(loss);
      for (auto v : vars) grads->push_back(tape.grad(v));
    }
    return loss.scalar();
  };
  std::vector<Matrix> analytic;
  eval(inputs, &analytic);
  double worst = 0.0;
  std::vector<Matrix> pert = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x0 = inputs[i].data()[k];
      pert[i].data()[k] = x0 + h;
      const double fp = eval(pert, nullptr);
      pert[i].data()[k] = x0 - h;
      const double fm = eval(pert, nullptr);
      pert[i].data()[k] = x0;
      const double num = (fp - fm) / (2.0 * h);
      const double a = analytic[i].data()[k];
      const double denom = std::max({std::abs(a), std::abs(num), floor});
      worst = std::max(worst, std::abs(a - num) / denom);
    }
  }
  return worst;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("stylevc_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace stylevc::test
