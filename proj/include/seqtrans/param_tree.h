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

#ifndef SEQTRANS_PARAM_TREE_H_
#define SEQTRANS_PARAM_TREE_H_

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seqtrans/array.h"

namespace seqtrans {

// Named collection of arrays. Iteration follows insertion order, so two trees
// built by the same code always line up leaf for leaf.
class ParamTree {
 public:
  struct Leaf {
    std::string name;
    Array value;
  };

  void Add(std::string name, Array value);

  bool Contains(std::string_view name) const;
  std::optional<std::size_t> IndexOf(std::string_view name) const;
  const Array& Get(std::string_view name) const;
  Array& Get(std::string_view name);

  std::size_t size() const { return leaves_.size(); }
  bool empty() const { return leaves_.empty(); }
  const Leaf& leaf(std::size_t i) const { return leaves_[i]; }
  Leaf& leaf(std::size_t i) { return leaves_[i]; }

  auto begin() { return leaves_.begin(); }
  auto end() { return leaves_.end(); }
  auto begin() const { return leaves_.begin(); }
  auto end() const { return leaves_.end(); }

  // Same names, same order, same shapes.
  bool SameStructure(const ParamTree& other) const;
  ParamTree ZerosLike() const;
  std::size_t ParameterCount() const;

  friend bool operator==(const ParamTree& a, const ParamTree& b);

 private:
  std::vector<Leaf> leaves_;
  std::unordered_map<std::string, std::size_t> index_;
};

double GlobalNorm(const ParamTree& tree);
// dst += scale * src; structures must match.
void AddScaled(ParamTree& dst, const ParamTree& src, double scale = 1.0);
void Scale(ParamTree& tree, double factor);
bool AllFinite(const ParamTree& tree);

}  // namespace seqtrans

#endif  // SEQTRANS_PARAM_TREE_H_
