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

#include "stylevc/params.hpp"

#include "stylevc/error.hpp"

namespace stylevc {

int ParamStore::add(std::string name, Matrix init) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  const int idx = static_cast<int>(params_.size());
  by_name_[name] = idx;
  params_.push_back(Parameter{std::move(name), std::move(init), false});
  return idx;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

int ParamStore::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

void ParamStore::set_frozen(const std::string& prefix, bool frozen) {
  for (auto& p : params_)
    if (p.name.rfind(prefix, 0) == 0) p.frozen = frozen;
}

std::string ParamStore::group_of(const std::string& name) {
  const auto first = name.find('.');
  if (first == std::string::npos) return name;
  const auto second = name.find('.', first + 1);
  return second == std::string::npos ? name : name.substr(0, second);
}

ag::Var ParamBinding::operator()(int index) {
  auto& v = vars_.at(static_cast<std::size_t>(index));
  if (!v.valid()) {
    const Parameter& p = store_.at(index);
    v = tape_.external(p.value, !p.frozen);
  }
  return v;
}

void ParamBinding::accumulate_grads(std::vector<Matrix>& acc) const {
  acc.resize(store_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (!vars_[i].valid()) continue;
    const Matrix& g = tape_.grad_at(vars_[i].id());
    if (g.empty()) continue;
    if (acc[i].empty()) {
      acc[i] = g;
      continue;
    }
    double* d = acc[i].data();
    for (std::size_t k = 0; k < g.size(); ++k) d[k] += g.data()[k];
  }
}

}  // namespace stylevc
