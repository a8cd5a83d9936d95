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

#ifndef SEQTRANS_AUTODIFF_H_
#define SEQTRANS_AUTODIFF_H_

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqtrans/array.h"
#include "seqtrans/param_tree.h"

namespace seqtrans {

using Rng = std::mt19937_64;

// Mixes a base seed with a list of stream identifiers (splitmix64). Used to
// give every (step, utterance, purpose) its own reproducible generator.
std::uint64_t DeriveSeed(std::uint64_t base,
                         std::initializer_list<std::uint64_t> streams);

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Parameters of a ParamTree bound to a tape, addressable by name.
class BoundParams {
 public:
  BoundParams() = default;
  BoundParams(const ParamTree* tree, std::vector<Var> vars)
      : tree_(tree), vars_(std::move(vars)) {}

  Var operator[](std::string_view name) const;
  const ParamTree& tree() const { return *tree_; }

 private:
  const ParamTree* tree_ = nullptr;
  std::vector<Var> vars_;
};

// Records primitive applications in execution order. Nodes are appended
// only, so operands always precede their consumers and a reverse sweep is a
// valid topological traversal.
class Tape {
 public:
  // Called once during Backward with the id of the node that owns the rule.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Array value);
  Var Variable(Array value);

  // Binds every leaf of `params`. The tree must outlive the tape; leaf
  // values are referenced, not copied. Trainable leaves receive gradients
  // in Backward().
  BoundParams Bind(const ParamTree& params, bool trainable = true);

  // Appends a node. `backward` is dropped when no input requires a gradient.
  Var Record(Array value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var Record(Array value, std::span<const Var> inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss. Returns d(loss)/d(leaf) for every
  // trainable bound parameter, zeros for leaves the loss does not reach.
  ParamTree Backward(Var loss);

  const Array& Value(std::size_t id) const;
  bool RequiresGrad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient accumulator for a node, zero-initialized on first use.
  Array& GradBuffer(std::size_t id);
  // Gradient after Backward; an empty array when the node was not reached.
  const Array& Grad(Var v) const { return nodes_[v.id()].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array owned;
    const Array* external = nullptr;
    Array grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  struct Binding {
    const ParamTree* tree;
    std::size_t first_node;
    bool trainable;
  };

  Var Push(Node node);

  std::deque<Node> nodes_;
  std::vector<Binding> bindings_;
};

// ---------------------------------------------------------------------------
// Primitives. Matrices are rank-2 arrays; "row vector" arguments may be
// rank-1 of length cols or rank-2 of shape (1, cols).

Var MatMul(Var a, Var b);
Var Transpose(Var a);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var AddRowVector(Var a, Var bias);
Var Scale(Var a, double factor);
Var Neg(Var a);

Var Tanh(Var a);
Var Sigmoid(Var a);
Var Relu(Var a);

// Along the last axis; max-subtracted for stability.
Var Softmax(Var a);
Var LogSoftmax(Var a);

Var Sum(Var a);
Var Mean(Var a);

Var Reshape(Var a, Shape shape);
Var SliceRows(Var a, std::size_t begin, std::size_t count);
Var SliceCols(Var a, std::size_t begin, std::size_t count);
Var ConcatRows(std::span<const Var> parts);
Var ConcatCols(std::span<const Var> parts);

// x: (T, C_in), weight: (K, C_in, C_out), bias: (C_out). Odd K, zero
// "same" padding, stride 1.
Var Conv1d(Var x, Var weight, Var bias);
// Windows of `kernel` rows with stride `kernel`; trailing rows dropped.
Var AvgPool1d(Var x, std::size_t kernel);
// Normalizes each row, then applies gain and bias of shape (cols).
Var LayerNorm(Var x, Var gain, Var bias, double eps = 1e-5);
// Rows of `table` (V, E) selected by ids; result (ids.size(), E).
Var EmbeddingLookup(Var table, std::span<const int> ids);
// Elementwise product with a fixed mask (no gradient to the mask).
Var ApplyMask(Var x, const Array& mask);
// Inverted dropout. Identity when rng is null (evaluation) or rate is 0.
Var Dropout(Var x, double rate, Rng* rng);
// a: (N, J), b: (M, J) -> (N*M, J) with row n*M + m = a[n] + b[m].
Var PairwiseAdd(Var a, Var b);
// out[r] = x[r, index[r]]; result has shape (rows).
Var PickColumns(Var x, std::span<const int> index);

// ---------------------------------------------------------------------------
// Gradient checking.

using ScalarGraphFn = std::function<Var(Tape&, const BoundParams&)>;

struct FiniteDifferenceOptions {
  double eps = 1e-5;
  // Components checked per leaf; 0 checks all of them.
  std::size_t samples_per_leaf = 0;
  std::uint64_t seed = 0;
  // Leaves whose name ends with one of these suffixes are not checked.
  std::vector<std::string> skip_suffixes;
};

struct FiniteDifferenceReport {
  double max_relative_error = 0.0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  // Rounding in f limits the numeric derivative to roughly
  // DBL_EPSILON * |f| / eps absolute accuracy. roundoff_floor is 1e4 times
  // that, the magnitude below which a 1e-4 relative error cannot be resolved.
  double roundoff_floor = 0.0;
  std::size_t below_floor = 0;
  // The same relative error with the 1e-8 floor raised to roundoff_floor.
  double max_floored_error = 0.0;
};

// Compares Backward() against central differences (f(x+e) - f(x-e)) / 2e.
// Relative error is |analytic - numeric| / max(1e-8, |numeric|).
FiniteDifferenceReport FiniteDifferenceCheck(
    const ScalarGraphFn& f, const ParamTree& params,
    const FiniteDifferenceOptions& options = {});

}  // namespace seqtrans

#endif  // SEQTRANS_AUTODIFF_H_
