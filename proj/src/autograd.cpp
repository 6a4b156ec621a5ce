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

#include "stylevc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stylevc/error.hpp"
#include "stylevc/kernels.hpp"

namespace stylevc::ag {

const Matrix& Var::value() const {
  if (!tape_) throw InputError("Var::value on an empty variable");
  return tape_->value(*this);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw InputError("Var::scalar on " + v.shape_string());
  return v(0, 0);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::input(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::external(const Matrix& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::push(Matrix value, bool requires_grad, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Matrix& Tape::value_at(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

const Matrix& Tape::value(Var v) const {
  if (v.tape() != this) throw InputError("variable belongs to a different tape");
  return value_at(v.id());
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.empty()) {
    const Matrix& val = value_at(v.id());
    return Matrix(val.rows(), val.cols());
  }
  return n.grad;
}

Matrix& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) {
    const Matrix& val = n.external ? *n.external : n.value;
    n.grad = Matrix(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::backward(Var v) {
  if (v.tape() != this) throw InputError("backward: variable belongs to a different tape");
  const Matrix& val = value_at(v.id());
  if (val.rows() != 1 || val.cols() != 1)
    throw InputError("backward: target must be scalar, got " + val.shape_string());
  for (auto& n : nodes_) n.grad = Matrix();
  grad_buffer(v.id())(0, 0) = 1.0;
  for (int id = v.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, id);
  }
}

void Tape::record_branch(bool taken) noexcept {
  // FNV-1a over (position, decision).
  const std::uint64_t word = (branch_count_++ << 1) | (taken ? 1u : 0u);
  for (int i = 0; i < 8; ++i) {
    branch_sig_ ^= (word >> (8 * i)) & 0xffu;
    branch_sig_ *= 0x100000001b3ULL;
  }
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw InputError("operation on an empty variable");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw InputError("operands belong to different tapes");
  return t;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw InputError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
}

bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (v.valid() && t.needs_grad(v.id())) return true;
  return false;
}

void add_into(Matrix& dst, const Matrix& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require_same_shape(av, bv, "add");
  Matrix y = av;
  add_into(y, bv);
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(y), any_grad(t, {a, b}), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(ia)) add_into(tp.grad_buffer(ia), g);
    if (tp.needs_grad(ib)) add_into(tp.grad_buffer(ib), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require_same_shape(av, bv, "sub");
  Matrix y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] -= bv.data()[i];
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(y), any_grad(t, {a, b}), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(ia)) add_into(tp.grad_buffer(ia), g);
    if (tp.needs_grad(ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require_same_shape(av, bv, "mul");
  Matrix y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = av.data()[i] * bv.data()[i];
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(y), any_grad(t, {a, b}), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& av = tp.value_at(ia);
    const Matrix& bv = tp.value_at(ib);
    if (tp.needs_grad(ia)) {
      Matrix& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * bv.data()[i];
    }
    if (tp.needs_grad(ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * av.data()[i];
    }
  });
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a);
  Matrix y = a.value();
  for (double& v : y.flat()) v *= c;
  const int ia = a.id();
  return t.push(std::move(y), t.needs_grad(ia), [ia, c](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += c * g.data()[i];
  });
}

Var add_scalar(Var a, double c) {
  Tape& t = tape_of(a);
  Matrix y = a.value();
  for (double& v : y.flat()) v += c;
  const int ia = a.id();
  return t.push(std::move(y), t.needs_grad(ia), [ia](Tape& tp, int self) {
    add_into(tp.grad_buffer(ia), tp.grad_at(self));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw InputError("add_row: row " + rv.shape_string() + " vs " + av.shape_string());
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += rv(0, c);
  const int ia = a.id(), ir = row.id();
  return t.push(std::move(y), any_grad(t, {a, row}), [ia, ir](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(ia)) add_into(tp.grad_buffer(ia), g);
    if (tp.needs_grad(ir)) {
      Matrix& gr = tp.grad_buffer(ir);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c);
    }
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw InputError("mul_row: row " + rv.shape_string() + " vs " + av.shape_string());
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) *= rv(0, c);
  const int ia = a.id(), ir = row.id();
  return t.push(std::move(y), any_grad(t, {a, row}), [ia, ir](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& av = tp.value_at(ia);
    const Matrix& rv = tp.value_at(ir);
    if (tp.needs_grad(ia)) {
      Matrix& ga = tp.grad_buffer(ia);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * rv(0, c);
    }
    if (tp.needs_grad(ir)) {
      Matrix& gr = tp.grad_buffer(ir);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c) * av(r, c);
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().transposed(), t.needs_grad(ia), [ia](Tape& tp, int self) {
    add_into(tp.grad_buffer(ia), tp.grad_at(self).transposed());
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (begin + count > av.cols()) throw InputError("slice_cols: out of range");
  Matrix y(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) y(r, c) = av(r, begin + c);
  const int ia = a.id();
  return t.push(std::move(y), t.needs_grad(ia), [ia, begin, count](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) ga(r, begin + c) += g(r, c);
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (begin + count > av.rows()) throw InputError("slice_rows: out of range");
  const int ia = a.id();
  return t.push(av.row_range(begin, count), t.needs_grad(ia),
                [ia, begin, count](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  Matrix& ga = tp.grad_buffer(ia);
                  for (std::size_t r = 0; r < count; ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) ga(begin + r, c) += g(r, c);
                });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InputError("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    if (p.tape() != &t) throw InputError("concat_cols: operands belong to different tapes");
    if (p.rows() != rows) throw InputError("concat_cols: row count mismatch");
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
    rg = rg || t.needs_grad(p.id());
  }
  Matrix y(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), y.row(r).begin() + static_cast<long>(offsets[k]));
  }
  return t.push(std::move(y), rg, [ids, offsets](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.needs_grad(ids[k])) continue;
      Matrix& gk = tp.grad_buffer(ids[k]);
      for (std::size_t r = 0; r < gk.rows(); ++r)
        for (std::size_t c = 0; c < gk.cols(); ++c) gk(r, c) += g(r, offsets[k] + c);
    }
  });
}

// ---------------------------------------------------------------------------
// Unary ops: forward maps x -> y elementwise, derivative expressed through
// (x, y).

namespace {

template <typename Fwd, typename Deriv>
Var elementwise(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  Matrix y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = fwd(av.data()[i]);
  const int ia = a.id();
  return t.push(std::move(y), t.needs_grad(ia), [ia, deriv](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& x = tp.value_at(ia);
    const Matrix& y = tp.value_at(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] += g.data()[i] * deriv(x.data()[i], y.data()[i]);
  });
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var silu(Var a) {
  return elementwise(
      a, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var sigmoid(Var a) {
  return elementwise(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return elementwise(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return elementwise(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return elementwise(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return elementwise(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt_eps(Var a, double eps) {
  return elementwise(
      a, [eps](double x) { return std::sqrt(x + eps); },
      [](double, double y) { return 0.5 / y; });
}

Var hinge(Var a) {
  Tape& t = tape_of(a);
  for (double v : a.value().flat()) t.record_branch(v > 0.0);
  return elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var grad_scale(Var a, double factor) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value(), t.needs_grad(ia), [ia, factor](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += factor * g.data()[i];
  });
}

// ---------------------------------------------------------------------------

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const int ia = a.id(), ib = b.id();
  return t.push(kernels::matmul_nt(a.value(), b.value()), any_grad(t, {a, b}),
                [ia, ib](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  if (tp.needs_grad(ia)) kernels::matmul_nn_acc(g, tp.value_at(ib), tp.grad_buffer(ia));
                  if (tp.needs_grad(ib)) kernels::matmul_tn_acc(g, tp.value_at(ia), tp.grad_buffer(ib));
                });
}

Var matmul_nn(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const int ia = a.id(), ib = b.id();
  return t.push(kernels::matmul_nn(a.value(), b.value()), any_grad(t, {a, b}),
                [ia, ib](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  if (tp.needs_grad(ia)) kernels::matmul_nt_acc(g, tp.value_at(ib), tp.grad_buffer(ia));
                  if (tp.needs_grad(ib)) kernels::matmul_tn_acc(tp.value_at(ia), g, tp.grad_buffer(ib));
                });
}

Var linear(Var x, Var w, Var bias) {
  Tape& t = tape_of(x, w);
  Matrix y = kernels::matmul_nt(x.value(), w.value());
  const bool has_bias = bias.valid();
  if (has_bias) {
    if (bias.tape() != &t) throw InputError("linear: bias on a different tape");
    const Matrix& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != y.cols())
      throw InputError("linear: bias " + bv.shape_string() + " for output " + y.shape_string());
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += bv(0, c);
  }
  const int ix = x.id(), iw = w.id(), ib = has_bias ? bias.id() : -1;
  const bool rg = any_grad(t, {x, w}) || (has_bias && t.needs_grad(ib));
  return t.push(std::move(y), rg, [ix, iw, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(ix)) kernels::matmul_nn_acc(g, tp.value_at(iw), tp.grad_buffer(ix));
    if (tp.needs_grad(iw)) kernels::matmul_tn_acc(g, tp.value_at(ix), tp.grad_buffer(iw));
    if (ib >= 0 && tp.needs_grad(ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
    }
  });
}

// ---------------------------------------------------------------------------

Var layer_norm(Var x, double eps) {
  Tape& t = tape_of(x);
  std::vector<double> inv_std;
  Matrix y = kernels::layer_norm_rows(x.value(), eps, &inv_std);
  const int ix = x.id();
  return t.push(std::move(y), t.needs_grad(ix), [ix, inv_std = std::move(inv_std)](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& y = tp.value_at(self);
    Matrix& gx = tp.grad_buffer(ix);
    const double n = static_cast<double>(g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double mg = 0.0, mgy = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) {
        mg += g(r, c);
        mgy += g(r, c) * y(r, c);
      }
      mg /= n;
      mgy /= n;
      for (std::size_t c = 0; c < g.cols(); ++c)
        gx(r, c) += inv_std[r] * (g(r, c) - mg - y(r, c) * mgy);
    }
  });
}

Var instance_norm(Var x, double eps) {
  Tape& t = tape_of(x);
  std::vector<double> inv_std;
  Matrix y = kernels::instance_norm_cols(x.value(), eps, &inv_std);
  const int ix = x.id();
  return t.push(std::move(y), t.needs_grad(ix), [ix, inv_std = std::move(inv_std)](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& y = tp.value_at(self);
    Matrix& gx = tp.grad_buffer(ix);
    const double n = static_cast<double>(g.rows());
    std::vector<double> mg(g.cols(), 0.0), mgy(g.cols(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        mg[c] += g(r, c);
        mgy[c] += g(r, c) * y(r, c);
      }
    for (std::size_t c = 0; c < g.cols(); ++c) {
      mg[c] /= n;
      mgy[c] /= n;
    }
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c)
        gx(r, c) += inv_std[c] * (g(r, c) - mg[c] - y(r, c) * mgy[c]);
  });
}

Var softmax_rows(Var x) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  return t.push(kernels::softmax_rows(x.value()), t.needs_grad(ix), [ix](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& y = tp.value_at(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var normalize_rows(Var x, double eps) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  std::vector<double> inv_norm(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v * v;
    inv_norm[r] = 1.0 / std::sqrt(s + eps);
    for (std::size_t c = 0; c < xv.cols(); ++c) y(r, c) = xv(r, c) * inv_norm[r];
  }
  const int ix = x.id();
  return t.push(std::move(y), t.needs_grad(ix), [ix, inv_norm = std::move(inv_norm)](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& xv = tp.value_at(ix);
    Matrix& gx = tp.grad_buffer(ix);
    // y = x * s, s = (|x|^2 + eps)^(-1/2): dy/dx = s * (I - s^2 x x^T).
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double gdotx = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) gdotx += g(r, c) * xv(r, c);
      const double s = inv_norm[r];
      for (std::size_t c = 0; c < g.cols(); ++c)
        gx(r, c) += s * (g(r, c) - s * s * gdotx * xv(r, c));
    }
  });
}

Var add_relative_bias(Var scores, Var table) {
  Tape& t = tape_of(scores, table);
  const Matrix& sv = scores.value();
  const Matrix& tv = table.value();
  if (tv.rows() != 1 || tv.cols() % 2 == 0 || sv.rows() != sv.cols())
    throw InputError("add_relative_bias: bad shapes");
  const long R = static_cast<long>(tv.cols() / 2);
  auto index = [R](std::size_t i, std::size_t j) {
    const long d = std::clamp(static_cast<long>(j) - static_cast<long>(i), -R, R);
    return static_cast<std::size_t>(d + R);
  };
  Matrix y = sv;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += tv(0, index(i, j));
  const int is = scores.id(), it = table.id();
  return t.push(std::move(y), any_grad(t, {scores, table}), [is, it, index](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(is)) add_into(tp.grad_buffer(is), g);
    if (tp.needs_grad(it)) {
      Matrix& gt = tp.grad_buffer(it);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gt(0, index(i, j)) += g(i, j);
    }
  });
}

// ---------------------------------------------------------------------------

Var glu(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  if (xv.cols() % 2 != 0) throw InputError("glu: odd channel count");
  const std::size_t C = xv.cols() / 2;
  Matrix y(xv.rows(), C);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < C; ++c) y(r, c) = xv(r, c) * sigmoid_scalar(xv(r, C + c));
  const int ix = x.id();
  return t.push(std::move(y), t.needs_grad(ix), [ix, C](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& xv = tp.value_at(ix);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const double s = sigmoid_scalar(xv(r, C + c));
        gx(r, c) += g(r, c) * s;
        gx(r, C + c) += g(r, c) * xv(r, c) * s * (1.0 - s);
      }
  });
}

Var depthwise_conv1d(Var x, Var w, Var bias) {
  Tape& t = tape_of(x, w);
  if (bias.tape() != &t) throw InputError("depthwise_conv1d: bias on a different tape");
  const int ix = x.id(), iw = w.id(), ib = bias.id();
  return t.push(kernels::depthwise_conv1d(x.value(), w.value(), bias.value()),
                any_grad(t, {x, w, bias}), [ix, iw, ib](Tape& tp, int self) {
                  const Matrix& g = tp.grad_at(self);
                  const Matrix& xv = tp.value_at(ix);
                  const Matrix& wv = tp.value_at(iw);
                  const long L = static_cast<long>(g.rows());
                  const std::size_t C = g.cols();
                  const long half = static_cast<long>(wv.rows() / 2);
                  const bool gxo = tp.needs_grad(ix), gwo = tp.needs_grad(iw);
                  Matrix* gx = gxo ? &tp.grad_buffer(ix) : nullptr;
                  Matrix* gw = gwo ? &tp.grad_buffer(iw) : nullptr;
                  for (long tt = 0; tt < L; ++tt)
                    for (long k = -half; k <= half; ++k) {
                      const long src = tt + k;
                      if (src < 0 || src >= L) continue;
                      const auto ut = static_cast<std::size_t>(tt);
                      const auto us = static_cast<std::size_t>(src);
                      const auto uk = static_cast<std::size_t>(k + half);
                      for (std::size_t c = 0; c < C; ++c) {
                        if (gx) (*gx)(us, c) += g(ut, c) * wv(uk, c);
                        if (gw) (*gw)(uk, c) += g(ut, c) * xv(us, c);
                      }
                    }
                  if (tp.needs_grad(ib)) {
                    Matrix& gb = tp.grad_buffer(ib);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < C; ++c) gb(0, c) += g(r, c);
                  }
                });
}

Var unfold_time(Var x, std::size_t kernel) {
  Tape& t = tape_of(x);
  if (kernel % 2 == 0) throw InputError("unfold_time: kernel must be odd");
  const Matrix& xv = x.value();
  const long L = static_cast<long>(xv.rows());
  const std::size_t C = xv.cols();
  const long half = static_cast<long>(kernel / 2);
  Matrix y(xv.rows(), kernel * C);
  for (long tt = 0; tt < L; ++tt)
    for (long k = -half; k <= half; ++k) {
      const long src = tt + k;
      if (src < 0 || src >= L) continue;
      for (std::size_t c = 0; c < C; ++c)
        y(static_cast<std::size_t>(tt), static_cast<std::size_t>(k + half) * C + c) =
            xv(static_cast<std::size_t>(src), c);
    }
  const int ix = x.id();
  return t.push(std::move(y), t.needs_grad(ix), [ix, half, C](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& gx = tp.grad_buffer(ix);
    const long L = static_cast<long>(g.rows());
    for (long tt = 0; tt < L; ++tt)
      for (long k = -half; k <= half; ++k) {
        const long src = tt + k;
        if (src < 0 || src >= L) continue;
        for (std::size_t c = 0; c < C; ++c)
          gx(static_cast<std::size_t>(src), c) +=
              g(static_cast<std::size_t>(tt), static_cast<std::size_t>(k + half) * C + c);
      }
  });
}

Var avg_pool2(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  if (xv.rows() % 2 != 0)
    throw InputError("avg_pool2: odd frame count " + std::to_string(xv.rows()));
  Matrix y(xv.rows() / 2, xv.cols());
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) = 0.5 * (xv(2 * r, c) + xv(2 * r + 1, c));
  const int ix = x.id();
  return t.push(std::move(y), t.needs_grad(ix), [ix](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        gx(2 * r, c) += 0.5 * g(r, c);
        gx(2 * r + 1, c) += 0.5 * g(r, c);
      }
  });
}

namespace {

struct InterpTap {
  std::size_t lo, hi;
  double w_hi;
};

std::vector<InterpTap> interp_taps(std::size_t len, std::size_t factor) {
  std::vector<InterpTap> taps(len * factor);
  for (std::size_t t = 0; t < taps.size(); ++t) {
    const std::size_t lo = t / factor;
    const double frac = static_cast<double>(t % factor) / static_cast<double>(factor);
    taps[t] = {lo, std::min(lo + 1, len - 1), frac};
  }
  return taps;
}

}  // namespace

Var upsample_linear(Var x, std::size_t factor) {
  Tape& t = tape_of(x);
  if (factor < 1) throw InputError("upsample_linear: factor must be >= 1");
  const Matrix& xv = x.value();
  auto taps = interp_taps(xv.rows(), factor);
  Matrix y(taps.size(), xv.cols());
  for (std::size_t r = 0; r < taps.size(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c)
      y(r, c) = factor == 1 ? xv(r, c)
                            : (1.0 - taps[r].w_hi) * xv(taps[r].lo, c) + taps[r].w_hi * xv(taps[r].hi, c);
  const int ix = x.id();
  return t.push(std::move(y), t.needs_grad(ix), [ix, taps = std::move(taps)](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t r = 0; r < taps.size(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        gx(taps[r].lo, c) += (1.0 - taps[r].w_hi) * g(r, c);
        gx(taps[r].hi, c) += taps[r].w_hi * g(r, c);
      }
  });
}

// ---------------------------------------------------------------------------

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().flat()) s += v;
  const int ia = a.id();
  return t.push(Matrix(1, 1, s), t.needs_grad(ia), [ia](Tape& tp, int self) {
    const double g = tp.grad_at(self)(0, 0);
    for (double& v : tp.grad_buffer(ia).flat()) v += g;
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

Var mean_abs_diff(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require_same_shape(av, bv, "mean_abs_diff");
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av.data()[i] - bv.data()[i];
    t.record_branch(d > 0.0);
    s += std::abs(d);
  }
  const int ia = a.id(), ib = b.id();
  return t.push(Matrix(1, 1, s / n), any_grad(t, {a, b}), [ia, ib, n](Tape& tp, int self) {
    const double g = tp.grad_at(self)(0, 0) / n;
    const Matrix& av = tp.value_at(ia);
    const Matrix& bv = tp.value_at(ib);
    Matrix* ga = tp.needs_grad(ia) ? &tp.grad_buffer(ia) : nullptr;
    Matrix* gb = tp.needs_grad(ib) ? &tp.grad_buffer(ib) : nullptr;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av.data()[i] - bv.data()[i];
      const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (ga) ga->data()[i] += g * sg;
      if (gb) gb->data()[i] -= g * sg;
    }
  });
}

Var angular_margin(Var cosines, std::size_t label, double margin) {
  Tape& t = tape_of(cosines);
  const Matrix& cv = cosines.value();
  if (cv.rows() != 1 || label >= cv.cols())
    throw InputError("angular_margin: label " + std::to_string(label) + " out of range for " +
                     cv.shape_string());
  constexpr double kClamp = 1.0 - 1e-7;
  Matrix y = cv;
  const double c = cv(0, label);
  const double cc = std::clamp(c, -kClamp, kClamp);
  const double theta = std::acos(cc);
  const bool saturated = theta + margin >= std::numbers::pi;
  const bool clamped = cc != c;
  t.record_branch(saturated);
  t.record_branch(clamped);
  y(0, label) = saturated ? -1.0 : std::cos(theta + margin);
  const int ic = cosines.id();
  // d cos(theta + m) / d cos(theta) = sin(theta + m) / sin(theta).
  const double dlabel =
      (saturated || clamped) ? 0.0 : std::sin(theta + margin) / std::sin(theta);
  return t.push(std::move(y), t.needs_grad(ic), [ic, label, dlabel](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& gc = tp.grad_buffer(ic);
    for (std::size_t j = 0; j < g.cols(); ++j) gc(0, j) += j == label ? g(0, j) * dlabel : g(0, j);
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  Tape& t = tape_of(logits);
  const Matrix& lv = logits.value();
  if (lv.rows() != 1 || label >= lv.cols())
    throw InputError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     lv.shape_string());
  Matrix p = kernels::softmax_rows(lv);
  double mx = lv(0, 0);
  for (double v : lv.flat()) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : lv.flat()) s += std::exp(v - mx);
  const double loss = -(lv(0, label) - mx - std::log(s));
  const int il = logits.id();
  return t.push(Matrix(1, 1, loss), t.needs_grad(il), [il, label, p = std::move(p)](Tape& tp, int self) {
    const double g = tp.grad_at(self)(0, 0);
    Matrix& gl = tp.grad_buffer(il);
    for (std::size_t j = 0; j < p.cols(); ++j) gl(0, j) += g * (p(0, j) - (j == label ? 1.0 : 0.0));
  });
}

}  // namespace stylevc::ag
