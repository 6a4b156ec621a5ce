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

#include <map>
#include <string>
#include <vector>

#include "stylevc/autograd.hpp"
#include "stylevc/matrix.hpp"

namespace stylevc {

struct Parameter {
  std::string name;
  Matrix value;
  bool frozen = false;
};

// Ordered registry of named trainable tensors. Index order is the canonical
// order for optimizer state, checkpoints and gradient reduction.
class ParamStore {
 public:
  int add(std::string name, Matrix init);

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  Parameter& at(int index) { return params_.at(static_cast<std::size_t>(index)); }
  const Parameter& at(int index) const { return params_.at(static_cast<std::size_t>(index)); }
  int index_of(const std::string& name) const;  // -1 when absent
  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }

  // Freeze every parameter whose name starts with `prefix`.
  void set_frozen(const std::string& prefix, bool frozen);
  // Group key used in reports: the first two dot-separated name components.
  static std::string group_of(const std::string& name);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, int> by_name_;
};

// Lazily binds parameters onto one tape for one forward pass.
class ParamBinding {
 public:
  ParamBinding(ag::Tape& tape, const ParamStore& store)
      : tape_(tape), store_(store), vars_(store.size()) {}

  ag::Var operator()(int index);
  ag::Tape& tape() noexcept { return tape_; }

  // Adds this pass's parameter gradients into `acc` (one Matrix per
  // parameter, resized on first use). Unbound parameters contribute nothing.
  void accumulate_grads(std::vector<Matrix>& acc) const;

 private:
  ag::Tape& tape_;
  const ParamStore& store_;
  std::vector<ag::Var> vars_;
};

}  // namespace stylevc
