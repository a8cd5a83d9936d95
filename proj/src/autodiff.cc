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

#include "seqtrans/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace seqtrans {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap AsMat(Array& a) {
  return MatMap(a.data(), static_cast<Eigen::Index>(a.rows()),
                static_cast<Eigen::Index>(a.cols()));
}
ConstMatMap AsMat(const Array& a) {
  return ConstMatMap(a.data(), static_cast<Eigen::Index>(a.rows()),
                     static_cast<Eigen::Index>(a.cols()));
}

void CheckSameTape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw std::invalid_argument(std::string(op) +
                                ": operands recorded on different tapes");
  }
}

void RequireRank2(const Array& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                     ShapeToString(a.shape()));
  }
}

// Length of a row-vector operand, or throws.
std::size_t RowVectorLength(const Array& v, const char* op) {
  if (v.rank() == 1 || (v.rank() == 2 && v.dim(0) == 1)) return v.cols();
  throw ShapeError(std::string(op) + ": expected a row vector, got shape " +
                   ShapeToString(v.shape()));
}

template <typename Forward, typename Derivative>
Var Elementwise(Var a, Forward forward, Derivative derivative) {
  const Array& x = a.value();
  Array y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  return a.tape().Record(
      std::move(y), {a},
      [ia = a.id(), derivative](Tape& t, std::size_t self) {
        const Array& x = t.Value(ia);
        const Array& y = t.Value(self);
        const Array& g = t.GradBuffer(self);
        Array& gx = t.GradBuffer(ia);
        for (std::size_t i = 0; i < x.size(); ++i) {
          gx[i] += g[i] * derivative(x[i], y[i]);
        }
      });
}

Var Im2Col(Var x, std::size_t kernel) {
  const Array& xv = x.value();
  RequireRank2(xv, "conv1d");
  const std::size_t steps = xv.rows(), channels = xv.cols();
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  Array cols({steps, kernel * channels});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const std::ptrdiff_t src =
          static_cast<std::ptrdiff_t>(t + k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
      std::copy_n(xv.data() + src * channels, channels,
                  cols.data() + t * kernel * channels + k * channels);
    }
  }
  return x.tape().Record(
      std::move(cols), {x},
      [ix = x.id(), kernel, half, steps, channels](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        Array& gx = t.GradBuffer(ix);
        for (std::size_t s = 0; s < steps; ++s) {
          for (std::size_t k = 0; k < kernel; ++k) {
            const std::ptrdiff_t src =
                static_cast<std::ptrdiff_t>(s + k) - half;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
            const double* gp = g.data() + s * kernel * channels + k * channels;
            double* dst = gx.data() + src * channels;
            for (std::size_t c = 0; c < channels; ++c) dst[c] += gp[c];
          }
        }
      });
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t base,
                         std::initializer_list<std::uint64_t> streams) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t s : streams) h = mix(h ^ mix(s));
  return h;
}

// ---------------------------------------------------------------------------
// Var / BoundParams

const Array& Var::value() const { return tape_->Value(id_); }
bool Var::requires_grad() const { return tape_->RequiresGrad(id_); }

Var BoundParams::operator[](std::string_view name) const {
  auto idx = tree_->IndexOf(name);
  if (!idx) {
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  }
  return vars_[*idx];
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::Push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::Constant(Array value) {
  Node n;
  n.owned = std::move(value);
  return Push(std::move(n));
}

Var Tape::Variable(Array value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return Push(std::move(n));
}

BoundParams Tape::Bind(const ParamTree& params, bool trainable) {
  bindings_.push_back({&params, nodes_.size(), trainable});
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& leaf : params) {
    Node n;
    n.external = &leaf.value;
    n.requires_grad = trainable;
    vars.push_back(Push(std::move(n)));
  }
  return BoundParams(&params, std::move(vars));
}

Var Tape::Record(Array value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return Record(std::move(value),
                std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::Record(Array value, std::span<const Var> inputs,
                 BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& v : inputs) {
    if (&v.tape() != this) {
      throw std::invalid_argument("operand recorded on a different tape");
    }
    n.requires_grad = n.requires_grad || v.requires_grad();
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Push(std::move(n));
}

const Array& Tape::Value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Array& Tape::GradBuffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Array(Value(id).shape());
  return n.grad;
}

ParamTree Tape::Backward(Var loss) {
  if (&loss.tape() != this) {
    throw std::invalid_argument("Backward: loss recorded on a different tape");
  }
  if (loss.value().size() != 1) {
    throw ShapeError("Backward: loss must be a scalar, got shape " +
                     ShapeToString(loss.shape()));
  }
  for (Node& n : nodes_) n.grad = Array();
  GradBuffer(loss.id()).Fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }

  ParamTree grads;
  for (const Binding& b : bindings_) {
    if (!b.trainable) continue;
    for (std::size_t i = 0; i < b.tree->size(); ++i) {
      const Node& n = nodes_[b.first_node + i];
      grads.Add(b.tree->leaf(i).name,
                n.grad.empty() ? Array(b.tree->leaf(i).value.shape())
                               : n.grad);
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Linear algebra

Var MatMul(Var a, Var b) {
  CheckSameTape(a, b, "matmul");
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: shape mismatch " + ShapeToString(av.shape()) +
                     " x " + ShapeToString(bv.shape()));
  }
  Array c({av.dim(0), bv.dim(1)});
  AsMat(c).noalias() = AsMat(av) * AsMat(bv);
  return a.tape().Record(
      std::move(c), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        if (t.RequiresGrad(ia)) {
          AsMat(t.GradBuffer(ia)).noalias() +=
              AsMat(g) * AsMat(t.Value(ib)).transpose();
        }
        if (t.RequiresGrad(ib)) {
          AsMat(t.GradBuffer(ib)).noalias() +=
              AsMat(t.Value(ia)).transpose() * AsMat(g);
        }
      });
}

Var Transpose(Var a) {
  const Array& av = a.value();
  RequireRank2(av, "transpose");
  Array out({av.dim(1), av.dim(0)});
  AsMat(out) = AsMat(av).transpose();
  return a.tape().Record(std::move(out), {a},
                         [ia = a.id()](Tape& t, std::size_t self) {
                           AsMat(t.GradBuffer(ia)) +=
                               AsMat(t.GradBuffer(self)).transpose();
                         });
}

namespace {

template <typename Op, typename GradA, typename GradB>
Var Binary(Var a, Var b, const char* name, Op op, GradA grad_a,
           GradB grad_b) {
  CheckSameTape(a, b, name);
  const Array& av = a.value();
  const Array& bv = b.value();
  CheckSameShape(av.shape(), bv.shape(), name);
  Array out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(av[i], bv[i]);
  return a.tape().Record(
      std::move(out), {a, b},
      [ia = a.id(), ib = b.id(), grad_a, grad_b](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        const Array& av = t.Value(ia);
        const Array& bv = t.Value(ib);
        if (t.RequiresGrad(ia)) {
          Array& ga = t.GradBuffer(ia);
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * grad_a(av[i], bv[i]);
          }
        }
        if (t.RequiresGrad(ib)) {
          Array& gb = t.GradBuffer(ib);
          for (std::size_t i = 0; i < g.size(); ++i) {
            gb[i] += g[i] * grad_b(av[i], bv[i]);
          }
        }
      });
}

}  // namespace

Var Add(Var a, Var b) {
  return Binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var Sub(Var a, Var b) {
  return Binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var Mul(Var a, Var b) {
  return Binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var AddRowVector(Var a, Var bias) {
  CheckSameTape(a, bias, "add_row_vector");
  const Array& av = a.value();
  const Array& bv = bias.value();
  const std::size_t cols = RowVectorLength(bv, "add_row_vector");
  if (av.cols() != cols) {
    throw ShapeError("add_row_vector: shape mismatch " +
                     ShapeToString(av.shape()) + " + " +
                     ShapeToString(bv.shape()));
  }
  Array out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) row[c] += bv[c];
  }
  return a.tape().Record(
      std::move(out), {a, bias},
      [ia = a.id(), ib = bias.id()](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        if (t.RequiresGrad(ia)) {
          Array& ga = t.GradBuffer(ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.RequiresGrad(ib)) {
          Array& gb = t.GradBuffer(ib);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            auto row = g.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
          }
        }
      });
}

Var Scale(Var a, double factor) {
  const Array& av = a.value();
  Array out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return a.tape().Record(std::move(out), {a},
                         [ia = a.id(), factor](Tape& t, std::size_t self) {
                           const Array& g = t.GradBuffer(self);
                           Array& ga = t.GradBuffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] += factor * g[i];
                           }
                         });
}

Var Neg(Var a) { return Scale(a, -1.0); }

// ---------------------------------------------------------------------------
// Activations

Var Tanh(Var a) {
  return Elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var Sigmoid(Var a) {
  return Elementwise(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var Relu(Var a) {
  return Elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Softmax(Var a) {
  const Array& av = a.value();
  Array out(av.shape());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto in = av.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (double& v : o) v /= z;
  }
  return a.tape().Record(std::move(out), {a},
                         [ia = a.id()](Tape& t, std::size_t self) {
                           const Array& y = t.Value(self);
                           const Array& g = t.GradBuffer(self);
                           Array& ga = t.GradBuffer(ia);
                           for (std::size_t r = 0; r < y.rows(); ++r) {
                             auto yr = y.row(r);
                             auto gr = g.row(r);
                             auto out = ga.row(r);
                             double dot = 0.0;
                             for (std::size_t c = 0; c < yr.size(); ++c) {
                               dot += yr[c] * gr[c];
                             }
                             for (std::size_t c = 0; c < yr.size(); ++c) {
                               out[c] += yr[c] * (gr[c] - dot);
                             }
                           }
                         });
}

Var LogSoftmax(Var a) {
  const Array& av = a.value();
  Array out(av.shape());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto in = av.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - lse;
  }
  return a.tape().Record(std::move(out), {a},
                         [ia = a.id()](Tape& t, std::size_t self) {
                           const Array& y = t.Value(self);
                           const Array& g = t.GradBuffer(self);
                           Array& ga = t.GradBuffer(ia);
                           for (std::size_t r = 0; r < y.rows(); ++r) {
                             auto yr = y.row(r);
                             auto gr = g.row(r);
                             auto out = ga.row(r);
                             double total = 0.0;
                             for (double v : gr) total += v;
                             for (std::size_t c = 0; c < yr.size(); ++c) {
                               out[c] += gr[c] - std::exp(yr[c]) * total;
                             }
                           }
                         });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

Var Sum(Var a) {
  const Array& av = a.value();
  double s = 0.0;
  for (double v : av.values()) s += v;
  return a.tape().Record(Array::Scalar(s), {a},
                         [ia = a.id()](Tape& t, std::size_t self) {
                           const double g = t.GradBuffer(self)[0];
                           for (double& v : t.GradBuffer(ia).values()) v += g;
                         });
}

Var Mean(Var a) {
  return Scale(Sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var Reshape(Var a, Shape shape) {
  Array out = a.value().Reshaped(std::move(shape));
  return a.tape().Record(std::move(out), {a},
                         [ia = a.id()](Tape& t, std::size_t self) {
                           const Array& g = t.GradBuffer(self);
                           Array& ga = t.GradBuffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] += g[i];
                           }
                         });
}

Var SliceRows(Var a, std::size_t begin, std::size_t count) {
  const Array& av = a.value();
  RequireRank2(av, "slice_rows");
  if (count == 0 || begin + count > av.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     ShapeToString(av.shape()));
  }
  const std::size_t cols = av.cols();
  Array out({count, cols});
  std::copy_n(av.data() + begin * cols, count * cols, out.data());
  return a.tape().Record(
      std::move(out), {a}, [ia = a.id(), begin, cols](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        double* dst = t.GradBuffer(ia).data() + begin * cols;
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      });
}

Var SliceCols(Var a, std::size_t begin, std::size_t count) {
  const Array& av = a.value();
  RequireRank2(av, "slice_cols");
  if (count == 0 || begin + count > av.cols()) {
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     ShapeToString(av.shape()));
  }
  Array out({av.rows(), count});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.row(r).data() + begin, count, out.row(r).data());
  }
  return a.tape().Record(
      std::move(out), {a}, [ia = a.id(), begin](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        Array& ga = t.GradBuffer(ia);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto src = g.row(r);
          double* dst = ga.row(r).data() + begin;
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
      });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    RequireRank2(p.value(), "concat_rows");
    if (p.value().cols() != cols) {
      throw ShapeError("concat_rows: shape mismatch " +
                       ShapeToString(parts[0].shape()) + " vs " +
                       ShapeToString(p.shape()));
    }
    rows += p.value().rows();
  }
  Array out({rows, cols});
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + offset);
    offset += p.value().size();
    ids.push_back(p.id());
  }
  return parts[0].tape().Record(
      std::move(out), parts, [ids = std::move(ids)](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        std::size_t offset = 0;
        for (std::size_t id : ids) {
          const std::size_t n = t.Value(id).size();
          if (t.RequiresGrad(id)) {
            Array& gp = t.GradBuffer(id);
            for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
          }
          offset += n;
        }
      });
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    RequireRank2(p.value(), "concat_cols");
    if (p.value().rows() != rows) {
      throw ShapeError("concat_cols: shape mismatch " +
                       ShapeToString(parts[0].shape()) + " vs " +
                       ShapeToString(p.shape()));
    }
    cols += p.value().cols();
  }
  Array out({rows, cols});
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Array& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.row(r).data(), pv.cols(), out.row(r).data() + offset);
    }
    offset += pv.cols();
    ids.push_back(p.id());
  }
  return parts[0].tape().Record(
      std::move(out), parts, [ids = std::move(ids)](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        std::size_t offset = 0;
        for (std::size_t id : ids) {
          const std::size_t w = t.Value(id).cols();
          if (t.RequiresGrad(id)) {
            Array& gp = t.GradBuffer(id);
            for (std::size_t r = 0; r < g.rows(); ++r) {
              const double* src = g.row(r).data() + offset;
              auto dst = gp.row(r);
              for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
            }
          }
          offset += w;
        }
      });
}

// ---------------------------------------------------------------------------
// Sequence layers

Var Conv1d(Var x, Var weight, Var bias) {
  const Array& xv = x.value();
  const Array& wv = weight.value();
  RequireRank2(xv, "conv1d");
  if (wv.rank() != 3 || wv.dim(1) != xv.cols() || wv.dim(0) % 2 == 0) {
    throw ShapeError("conv1d: shape mismatch input " +
                     ShapeToString(xv.shape()) + " weight " +
                     ShapeToString(wv.shape()));
  }
  const std::size_t kernel = wv.dim(0);
  Var cols = Im2Col(x, kernel);
  Var w2 = Reshape(weight, {kernel * wv.dim(1), wv.dim(2)});
  return AddRowVector(MatMul(cols, w2), bias);
}

Var AvgPool1d(Var x, std::size_t kernel) {
  const Array& xv = x.value();
  RequireRank2(xv, "avg_pool1d");
  if (kernel == 0 || xv.rows() < kernel) {
    throw ShapeError("avg_pool1d: kernel " + std::to_string(kernel) +
                     " does not fit input " + ShapeToString(xv.shape()));
  }
  const std::size_t out_rows = xv.rows() / kernel, cols = xv.cols();
  const double inv = 1.0 / static_cast<double>(kernel);
  Array out({out_rows, cols});
  for (std::size_t r = 0; r < out_rows; ++r) {
    auto o = out.row(r);
    for (std::size_t k = 0; k < kernel; ++k) {
      auto in = xv.row(r * kernel + k);
      for (std::size_t c = 0; c < cols; ++c) o[c] += in[c];
    }
    for (double& v : o) v *= inv;
  }
  return x.tape().Record(
      std::move(out), {x}, [ix = x.id(), kernel, inv](Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        Array& gx = t.GradBuffer(ix);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto gr = g.row(r);
          for (std::size_t k = 0; k < kernel; ++k) {
            auto dst = gx.row(r * kernel + k);
            for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c] * inv;
          }
        }
      });
}

Var LayerNorm(Var x, Var gain, Var bias, double eps) {
  CheckSameTape(x, gain, "layer_norm");
  CheckSameTape(x, bias, "layer_norm");
  const Array& xv = x.value();
  const std::size_t cols = xv.cols();
  if (RowVectorLength(gain.value(), "layer_norm") != cols ||
      RowVectorLength(bias.value(), "layer_norm") != cols) {
    throw ShapeError("layer_norm: shape mismatch input " +
                     ShapeToString(xv.shape()) + " gain " +
                     ShapeToString(gain.shape()));
  }
  const Array& gv = gain.value();
  const Array& bv = bias.value();
  Array out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    double mean = 0.0, var = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(cols);
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = (in[c] - mean) * rstd * gv[c] + bv[c];
    }
  }
  return x.tape().Record(
      std::move(out), {x, gain, bias},
      [ix = x.id(), ig = gain.id(), ib = bias.id(), eps](Tape& t,
                                                         std::size_t self) {
        const Array& xv = t.Value(ix);
        const Array& gv = t.Value(ig);
        const Array& g = t.GradBuffer(self);
        const std::size_t cols = xv.cols();
        const double n = static_cast<double>(cols);
        std::vector<double> xhat(cols), dxhat(cols);
        for (std::size_t r = 0; r < xv.rows(); ++r) {
          auto in = xv.row(r);
          auto gr = g.row(r);
          double mean = 0.0, var = 0.0;
          for (double v : in) mean += v;
          mean /= n;
          for (double v : in) var += (v - mean) * (v - mean);
          var /= n;
          const double rstd = 1.0 / std::sqrt(var + eps);
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            xhat[c] = (in[c] - mean) * rstd;
            dxhat[c] = gr[c] * gv[c];
            sum_d += dxhat[c];
            sum_dx += dxhat[c] * xhat[c];
          }
          if (t.RequiresGrad(ix)) {
            auto dst = t.GradBuffer(ix).row(r);
            for (std::size_t c = 0; c < cols; ++c) {
              dst[c] += rstd * (dxhat[c] - sum_d / n - xhat[c] * sum_dx / n);
            }
          }
          if (t.RequiresGrad(ig)) {
            Array& gg = t.GradBuffer(ig);
            for (std::size_t c = 0; c < cols; ++c) gg[c] += gr[c] * xhat[c];
          }
          if (t.RequiresGrad(ib)) {
            Array& gb = t.GradBuffer(ib);
            for (std::size_t c = 0; c < cols; ++c) gb[c] += gr[c];
          }
        }
      });
}

Var EmbeddingLookup(Var table, std::span<const int> ids) {
  const Array& tv = table.value();
  RequireRank2(tv, "embedding_lookup");
  if (ids.empty()) throw ShapeError("embedding_lookup: no ids");
  const std::size_t dim = tv.cols();
  Array out({ids.size(), dim});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw ShapeError("embedding_lookup: id " + std::to_string(ids[i]) +
                       " out of range for table " + ShapeToString(tv.shape()));
    }
    std::copy_n(tv.row(ids[i]).data(), dim, out.row(i).data());
  }
  return table.tape().Record(
      std::move(out), {table},
      [it = table.id(), ids = std::vector<int>(ids.begin(), ids.end())](
          Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        Array& gt = t.GradBuffer(it);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          auto src = g.row(i);
          auto dst = gt.row(ids[i]);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
      });
}

Var ApplyMask(Var x, const Array& mask) {
  const Array& xv = x.value();
  CheckSameShape(xv.shape(), mask.shape(), "apply_mask");
  Array out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return x.tape().Record(std::move(out), {x},
                         [ix = x.id(), mask](Tape& t, std::size_t self) {
                           const Array& g = t.GradBuffer(self);
                           Array& gx = t.GradBuffer(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             gx[i] += g[i] * mask[i];
                           }
                         });
}

Var Dropout(Var x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  Array mask(x.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = keep(*rng) ? scale : 0.0;
  return ApplyMask(x, mask);
}

Var PairwiseAdd(Var a, Var b) {
  CheckSameTape(a, b, "pairwise_add");
  const Array& av = a.value();
  const Array& bv = b.value();
  RequireRank2(av, "pairwise_add");
  RequireRank2(bv, "pairwise_add");
  if (av.cols() != bv.cols()) {
    throw ShapeError("pairwise_add: shape mismatch " +
                     ShapeToString(av.shape()) + " vs " +
                     ShapeToString(bv.shape()));
  }
  const std::size_t n = av.rows(), m = bv.rows(), cols = av.cols();
  Array out({n * m, cols});
  for (std::size_t i = 0; i < n; ++i) {
    auto ar = av.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      auto br = bv.row(j);
      auto o = out.row(i * m + j);
      for (std::size_t c = 0; c < cols; ++c) o[c] = ar[c] + br[c];
    }
  }
  return a.tape().Record(
      std::move(out), {a, b}, [ia = a.id(), ib = b.id(), n, m](Tape& t,
                                                               std::size_t self) {
        const Array& g = t.GradBuffer(self);
        const bool need_a = t.RequiresGrad(ia), need_b = t.RequiresGrad(ib);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            auto src = g.row(i * m + j);
            if (need_a) {
              auto dst = t.GradBuffer(ia).row(i);
              for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
            }
            if (need_b) {
              auto dst = t.GradBuffer(ib).row(j);
              for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
            }
          }
        }
      });
}

Var PickColumns(Var x, std::span<const int> index) {
  const Array& xv = x.value();
  RequireRank2(xv, "pick_columns");
  if (index.size() != xv.rows()) {
    throw ShapeError("pick_columns: " + std::to_string(index.size()) +
                     " indices for input " + ShapeToString(xv.shape()));
  }
  Array out({xv.rows()});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= xv.cols()) {
      throw ShapeError("pick_columns: column " + std::to_string(index[r]) +
                       " out of range for " + ShapeToString(xv.shape()));
    }
    out[r] = xv.at(r, index[r]);
  }
  return x.tape().Record(
      std::move(out), {x},
      [ix = x.id(), idx = std::vector<int>(index.begin(), index.end())](
          Tape& t, std::size_t self) {
        const Array& g = t.GradBuffer(self);
        Array& gx = t.GradBuffer(ix);
        for (std::size_t r = 0; r < idx.size(); ++r) gx.at(r, idx[r]) += g[r];
      });
}

// ---------------------------------------------------------------------------
// Gradient checking

FiniteDifferenceReport FiniteDifferenceCheck(
    const ScalarGraphFn& f, const ParamTree& params,
    const FiniteDifferenceOptions& options) {
  ParamTree analytic;
  double f0 = 0.0;
  {
    Tape tape;
    const BoundParams bound = tape.Bind(params);
    Var out = f(tape, bound);
    f0 = out.value().item();
    if (!std::isfinite(f0)) {
      throw std::domain_error("finite difference check: f is not finite");
    }
    analytic = tape.Backward(out);
  }

  ParamTree work = params;
  auto evaluate = [&]() {
    Tape tape;
    const BoundParams bound = tape.Bind(work, /*trainable=*/false);
    const double v = f(tape, bound).value().item();
    if (!std::isfinite(v)) {
      throw std::domain_error("finite difference check: f is not finite");
    }
    return v;
  };

  Rng rng(options.seed);
  FiniteDifferenceReport report;
  report.roundoff_floor = 1e4 * std::numeric_limits<double>::epsilon() *
                          std::max(1.0, std::abs(f0)) / options.eps;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const std::string& name = work.leaf(i).name;
    if (std::any_of(options.skip_suffixes.begin(), options.skip_suffixes.end(),
                    [&](const std::string& s) { return name.ends_with(s); })) {
      continue;
    }
    Array& leaf = work.leaf(i).value;
    std::vector<std::size_t> indices(leaf.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.samples_per_leaf > 0 &&
        options.samples_per_leaf < indices.size()) {
      std::vector<std::size_t> picked;
      std::sample(indices.begin(), indices.end(), std::back_inserter(picked),
                  options.samples_per_leaf, rng);
      indices = std::move(picked);
    }
    for (std::size_t idx : indices) {
      const double original = leaf[idx];
      leaf[idx] = original + options.eps;
      const double plus = evaluate();
      leaf[idx] = original - options.eps;
      const double minus = evaluate();
      leaf[idx] = original;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double grad = analytic.leaf(i).value[idx];
      const double rel =
          std::abs(grad - numeric) / std::max(1e-8, std::abs(numeric));
      ++report.checked;
      if (std::abs(numeric) < report.roundoff_floor) ++report.below_floor;
      report.max_floored_error = std::max(
          report.max_floored_error,
          std::abs(grad - numeric) /
              std::max({1e-8, report.roundoff_floor, std::abs(numeric)}));
      if (rel > report.max_relative_error || report.worst_leaf.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, rel);
        report.worst_leaf = work.leaf(i).name;
        report.worst_index = idx;
        report.worst_analytic = grad;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace seqtrans
