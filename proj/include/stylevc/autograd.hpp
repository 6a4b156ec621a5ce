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

// Tape-based reverse-mode differentiation over dense matrices.
//
// A Tape records every op of one forward pass. Values live on the tape
// (parameters are referenced, not copied); backward() walks the tape in
// reverse and accumulates gradients. One tape per thread: tapes share
// nothing mutable, so forward/backward of independent examples can run
// concurrently over the same read-only parameters.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stylevc/matrix.hpp"

namespace stylevc::ag {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  int id() const noexcept { return id_; }

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  // Value of a [1 x 1] variable.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf that receives a gradient.
  Var input(Matrix value);
  // Leaf referencing caller-owned storage, which must outlive the tape.
  Var external(const Matrix& value, bool requires_grad);

  const Matrix& value(Var v) const;
  // Gradient of the last backward() target w.r.t. v, zeros when unreached.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }

  // v must be [1 x 1].
  void backward(Var v);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Non-differentiable points (|.|, max(0, .), clamps) fold their branch
  // decisions into this signature so finite-difference checks can detect
  // perturbations that crossed a kink.
  void record_branch(bool taken) noexcept;
  std::uint64_t branch_signature() const noexcept { return branch_sig_; }

  // Op plumbing.
  Var push(Matrix value, bool requires_grad, Backprop backprop);
  const Matrix& value_at(int id) const;
  const Matrix& grad_at(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  // Gradient buffer for id, allocated (zeros) on first use.
  Matrix& grad_buffer(int id);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
  std::uint64_t branch_sig_ = 0xcbf29ce484222325ULL;
  std::uint64_t branch_count_ = 0;
};

// ---- elementwise / structural ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
// Broadcast a [1 x C] row over every row of a.
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var transpose(Var a);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);

// ---- unary ----
Var silu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt_eps(Var a, double eps);
// max(0, x), records branches.
Var hinge(Var a);
// Identity forward, gradient multiplied by `factor` on the way back. Used
// by fault-injection fixtures.
Var grad_scale(Var a, double factor);

// ---- linear algebra ----
Var matmul_nt(Var a, Var b);
Var matmul_nn(Var a, Var b);
// x * w^T + bias; bias may be invalid (no bias).
Var linear(Var x, Var w, Var bias);

// ---- normalization / attention ----
Var layer_norm(Var x, double eps);
Var instance_norm(Var x, double eps);
Var softmax_rows(Var x);
// Row-wise L2 normalization: row / sqrt(|row|^2 + eps).
Var normalize_rows(Var x, double eps);
// scores[i][j] + table[clip(j - i, -R, R) + R], table is [1 x (2R + 1)].
Var add_relative_bias(Var scores, Var table);

// ---- temporal ----
Var glu(Var x);
Var depthwise_conv1d(Var x, Var w, Var bias);
// [L x C] -> [L x K*C], column block k holds x shifted by k - K/2
// (zero padded). Followed by linear() it is a full 1-D convolution.
Var unfold_time(Var x, std::size_t kernel);
// Stride-2 average pooling in time; L must be even.
Var avg_pool2(Var x);
// Linear interpolation in time by an integer factor, replicating the last
// frame past the end: output frame t samples input position t / factor.
Var upsample_linear(Var x, std::size_t factor);

// ---- reductions / losses ----
Var sum_all(Var a);
Var mean_all(Var a);
// mean |a - b|, records branches.
Var mean_abs_diff(Var a, Var b);
// Replaces logits[0][label] = cos(theta) with cos(min(theta + margin, pi)).
Var angular_margin(Var cosines, std::size_t label, double margin);
// -log softmax(logits)[label] for a [1 x C] row.
Var cross_entropy(Var logits, std::size_t label);

}  // namespace stylevc::ag
