// Copyright 2026 The seqtrans Authors.
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

#include "seqtrans/param_tree.h"

#include <cmath>
#include <utility>

namespace seqtrans {

void ParamTree::Add(std::string name, Array value) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  index_.emplace(name, leaves_.size());
  leaves_.push_back({std::move(name), std::move(value)});
}

bool ParamTree::Contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::optional<std::size_t> ParamTree::IndexOf(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Array& ParamTree::Get(std::string_view name) const {
  auto idx = IndexOf(name);
  if (!idx) {
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  }
  return leaves_[*idx].value;
}

Array& ParamTree::Get(std::string_view name) {
  return const_cast<Array&>(std::as_const(*this).Get(name));
}

bool ParamTree::SameStructure(const ParamTree& other) const {
  if (leaves_.size() != other.leaves_.size()) return false;
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    if (leaves_[i].name != other.leaves_[i].name ||
        leaves_[i].value.shape() != other.leaves_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

ParamTree ParamTree::ZerosLike() const {
  ParamTree out;
  for (const auto& leaf : leaves_) out.Add(leaf.name, Array(leaf.value.shape()));
  return out;
}

std::size_t ParamTree::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& leaf : leaves_) n += leaf.value.size();
  return n;
}

bool operator==(const ParamTree& a, const ParamTree& b) {
  if (a.leaves_.size() != b.leaves_.size()) return false;
  for (std::size_t i = 0; i < a.leaves_.size(); ++i) {
    if (a.leaves_[i].name != b.leaves_[i].name ||
        !(a.leaves_[i].value == b.leaves_[i].value)) {
      return false;
    }
  }
  return true;
}

double GlobalNorm(const ParamTree& tree) {
  double sq = 0.0;
  for (const auto& leaf : tree) {
    for (double v : leaf.value.values()) sq += v * v;
  }
  return std::sqrt(sq);
}

void AddScaled(ParamTree& dst, const ParamTree& src, double scale) {
  if (!dst.SameStructure(src)) {
    throw ShapeError("AddScaled: parameter trees differ in structure");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto d = dst.leaf(i).value.values();
    auto s = src.leaf(i).value.values();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += scale * s[j];
  }
}

void Scale(ParamTree& tree, double factor) {
  for (auto& leaf : tree) {
    for (double& v : leaf.value.values()) v *= factor;
  }
}

bool AllFinite(const ParamTree& tree) {
  for (const auto& leaf : tree) {
    if (!leaf.value.AllFinite()) return false;
  }
  return true;
}

}  // namespace seqtrans
