#include "seqtrans/autodiff.h"

#include <cmath>
#include <functional>
#include <string>

#include "doctest.h"
#include "test_util.h"

namespace seqtrans {
namespace {

using testing::RandomArray;
using testing::RandomInt;

TEST_CASE("softmax and log_softmax on uniform rows") {
  Tape tape;
  Var x = tape.Constant(Array({2}, 0.0));
  Var y = Softmax(x);
  CHECK(y.value()[0] == doctest::Approx(0.5));
  CHECK(y.value()[1] == doctest::Approx(0.5));

  Var z = LogSoftmax(tape.Constant(Array({3}, 0.0)));
  for (double v : z.value().values()) {
    CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-12));
  }
}

TEST_CASE("matmul of a row and a column") {
  Tape tape;
  Var a = tape.Constant(Array::Matrix(1, 2, {1, 2}));
  Var b = tape.Constant(Array::Matrix(2, 1, {3, 4}));
  Var c = MatMul(a, b);
  CHECK(c.shape() == Shape{1, 1});
  CHECK(c.value()[0] == 11.0);
}

TEST_CASE("shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.Constant(Array({2, 3}));
  Var b = tape.Constant(Array({2, 3}));
  try {
    MatMul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2, 3) x (2, 3)") != std::string::npos);
  }
  CHECK_THROWS_AS(Add(a, tape.Constant(Array({3, 2}))), ShapeError);
}

TEST_CASE("backward of simple reductions") {
  ParamTree params;
  params.Add("x", Array::Matrix(1, 2, {1, 2}));
  params.Add("unused", Array({3}, 7.0));

  SUBCASE("sum gives ones") {
    Tape tape;
    auto p = tape.Bind(params);
    auto grads = tape.Backward(Sum(p["x"]));
    CHECK(grads.Get("x") == Array::Matrix(1, 2, {1, 1}));
    CHECK(grads.Get("unused") == Array({3}, 0.0));
  }
  SUBCASE("sum of squares gives 2x") {
    Tape tape;
    auto p = tape.Bind(params);
    auto grads = tape.Backward(Sum(Mul(p["x"], p["x"])));
    CHECK(grads.Get("x") == Array::Matrix(1, 2, {2, 4}));
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape tape;
    auto p = tape.Bind(params);
    CHECK_THROWS_AS(tape.Backward(p["x"]), ShapeError);
  }
}

// Applies a primitive to random operands and reduces with a fixed random
// weighting so every output element carries a distinct adjoint.
struct PrimitiveCase {
  std::string name;
  std::function<ParamTree(Rng&)> make;
  std::function<Var(Tape&, const BoundParams&)> apply;
};

Var WeightedSum(Var y, std::uint64_t seed) {
  Rng rng(seed);
  Var w = y.tape().Constant(RandomArray(y.shape(), rng));
  return Sum(Mul(y, w));
}

// Keeps values away from the relu kink.
Array AwayFromZero(Array a) {
  for (double& v : a.values()) v = v >= 0 ? v + 0.1 : v - 0.1;
  return a;
}

std::vector<PrimitiveCase> PrimitiveCases() {
  auto mat = [](std::string name, std::size_t lo, std::size_t hi) {
    return [=](Rng& rng) {
      ParamTree p;
      p.Add(name, RandomArray({RandomInt(rng, lo, hi), RandomInt(rng, lo, hi)},
                              rng));
      return p;
    };
  };
  std::vector<PrimitiveCase> cases;
  cases.push_back({"matmul",
                   [](Rng& rng) {
                     const auto n = RandomInt(rng, 1, 4), k = RandomInt(rng, 1, 4),
                                m = RandomInt(rng, 1, 4);
                     ParamTree p;
                     p.Add("a", RandomArray({n, k}, rng));
                     p.Add("b", RandomArray({k, m}, rng));
                     return p;
                   },
                   [](Tape&, const BoundParams& p) {
                     return MatMul(p["a"], p["b"]);
                   }});
  cases.push_back({"add_mul_sub",
                   [](Rng& rng) {
                     const Shape s{RandomInt(rng, 1, 4), RandomInt(rng, 1, 4)};
                     ParamTree p;
                     p.Add("a", RandomArray(s, rng));
                     p.Add("b", RandomArray(s, rng));
                     return p;
                   },
                   [](Tape&, const BoundParams& p) {
                     return Sub(Mul(p["a"], p["b"]), Add(p["a"], p["b"]));
                   }});
  cases.push_back({"add_row_vector",
                   [](Rng& rng) {
                     const auto n = RandomInt(rng, 1, 4), m = RandomInt(rng, 1, 4);
                     ParamTree p;
                     p.Add("a", RandomArray({n, m}, rng));
                     p.Add("b", RandomArray({m}, rng));
                     return p;
                   },
                   [](Tape&, const BoundParams& p) {
                     return AddRowVector(p["a"], p["b"]);
                   }});
  cases.push_back({"tanh", mat("x", 1, 4),
                   [](Tape&, const BoundParams& p) { return Tanh(p["x"]); }});
  cases.push_back({"sigmoid", mat("x", 1, 4),
                   [](Tape&, const BoundParams& p) { return Sigmoid(p["x"]); }});
  cases.push_back({"relu",
                   [](Rng& rng) {
                     ParamTree p;
                     p.Add("x", AwayFromZero(RandomArray(
                                    {RandomInt(rng, 1, 4), RandomInt(rng, 1, 4)},
                                    rng)));
                     return p;
                   },
                   [](Tape&, const BoundParams& p) { return Relu(p["x"]); }});
  cases.push_back({"softmax", mat("x", 1, 5),
                   [](Tape&, const BoundParams& p) { return Softmax(p["x"]); }});
  cases.push_back({"log_softmax", mat("x", 1, 5), [](Tape&, const BoundParams& p) {
                     return LogSoftmax(p["x"]);
                   }});
  cases.push_back({"transpose_scale", mat("x", 1, 4),
                   [](Tape&, const BoundParams& p) {
                     return Scale(Transpose(p["x"]), -1.5);
                   }});
  cases.push_back({"slice_concat", mat("x", 2, 5), [](Tape&, const BoundParams& p) {
                     Var x = p["x"];
                     const auto r = x.value().rows(), c = x.value().cols();
                     std::vector<Var> rows{SliceRows(x, r - 1, 1),
                                           SliceRows(x, 0, r - 1)};
                     std::vector<Var> cols{SliceCols(x, 1, c - 1),
                                           SliceCols(x, 0, 1)};
                     Var a = ConcatRows(rows);
                     Var b = ConcatCols(cols);
                     return Mul(a, b);
                   }});
  cases.push_back({"conv1d",
                   [](Rng& rng) {
                     const auto steps = RandomInt(rng, 1, 6),
                                cin = RandomInt(rng, 1, 3),
                                cout = RandomInt(rng, 1, 3);
                     const std::size_t kernel = RandomInt(rng, 0, 1) ? 3 : 1;
                     ParamTree p;
                     p.Add("x", RandomArray({steps, cin}, rng));
                     p.Add("w", RandomArray({kernel, cin, cout}, rng));
                     p.Add("b", RandomArray({cout}, rng));
                     return p;
                   },
                   [](Tape&, const BoundParams& p) {
                     return Conv1d(p["x"], p["w"], p["b"]);
                   }});
  cases.push_back({"avg_pool1d", mat("x", 2, 7), [](Tape&, const BoundParams& p) {
                     return AvgPool1d(p["x"], 2);
                   }});
  cases.push_back({"layer_norm",
                   [](Rng& rng) {
                     const auto n = RandomInt(rng, 1, 4), m = RandomInt(rng, 2, 5);
                     ParamTree p;
                     p.Add("x", RandomArray({n, m}, rng));
                     p.Add("g", RandomArray({m}, rng));
                     p.Add("b", RandomArray({m}, rng));
                     return p;
                   },
                   [](Tape&, const BoundParams& p) {
                     return LayerNorm(p["x"], p["g"], p["b"]);
                   }});
  cases.push_back({"embedding_lookup", mat("table", 2, 5),
                   [](Tape&, const BoundParams& p) {
                     const auto rows = static_cast<int>(p["table"].value().rows());
                     std::vector<int> ids{rows - 1, 0, rows - 1, 1 % rows};
                     return EmbeddingLookup(p["table"], ids);
                   }});
  cases.push_back({"pairwise_add",
                   [](Rng& rng) {
                     const auto j = RandomInt(rng, 1, 3);
                     ParamTree p;
                     p.Add("a", RandomArray({RandomInt(rng, 1, 4), j}, rng));
                     p.Add("b", RandomArray({RandomInt(rng, 1, 4), j}, rng));
                     return p;
                   },
                   [](Tape&, const BoundParams& p) {
                     return Tanh(PairwiseAdd(p["a"], p["b"]));
                   }});
  cases.push_back({"pick_columns_mean", mat("x", 1, 4),
                   [](Tape&, const BoundParams& p) {
                     const auto& v = p["x"].value();
                     std::vector<int> idx;
                     for (std::size_t r = 0; r < v.rows(); ++r) {
                       idx.push_back(static_cast<int>((r * 7) % v.cols()));
                     }
                     return Reshape(Mean(PickColumns(p["x"], idx)), {1});
                   }});
  cases.push_back({"dropout_fixed_mask", mat("x", 1, 4),
                   [](Tape&, const BoundParams& p) {
                     Rng mask_rng(99);
                     return Dropout(p["x"], 0.5, &mask_rng);
                   }});
  return cases;
}

TEST_CASE("every primitive matches central differences") {
  Rng rng(20261016);
  std::size_t instances = 0;
  for (const auto& c : PrimitiveCases()) {
    for (int rep = 0; rep < 8; ++rep) {
      const ParamTree params = c.make(rng);
      const std::uint64_t wseed = rng();
      auto f = [&](Tape& t, const BoundParams& p) {
        return WeightedSum(c.apply(t, p), wseed);
      };
      const auto report = FiniteDifferenceCheck(f, params, {1e-5, 0, 1});
      INFO(c.name, " worst leaf ", report.worst_leaf, " analytic ",
           report.worst_analytic, " numeric ", report.worst_numeric);
      CHECK(report.max_relative_error <= 1e-4);
      ++instances;
    }
  }
  CHECK(instances >= 100);
}

TEST_CASE("two-layer tanh network matches central differences") {
  Rng rng(7);
  ParamTree params;
  params.Add("w1", RandomArray({4, 6}, rng));
  params.Add("b1", RandomArray({6}, rng));
  params.Add("w2", RandomArray({6, 3}, rng));
  const Array input = RandomArray({5, 4}, rng);
  auto f = [&](Tape& t, const BoundParams& p) {
    Var x = t.Constant(input);
    Var h = Tanh(AddRowVector(MatMul(x, p["w1"]), p["b1"]));
    return Sum(Mul(Tanh(MatMul(h, p["w2"])), Tanh(MatMul(h, p["w2"]))));
  };
  CHECK(FiniteDifferenceCheck(f, params).max_relative_error <= 1e-4);
}

TEST_CASE("finite difference check of a plain sum is exact") {
  Rng rng(3);
  ParamTree params;
  params.Add("a", RandomArray({3, 2}, rng));
  auto f = [](Tape&, const BoundParams& p) { return Sum(p["a"]); };
  CHECK(FiniteDifferenceCheck(f, params).max_relative_error < 1e-9);
}

TEST_CASE("non-finite function is rejected by the gradient check") {
  ParamTree params;
  params.Add("a", Array({2}, 0.0));
  auto f = [](Tape&, const BoundParams& p) {
    return Sum(LogSoftmax(Scale(p["a"], 0.0)));  // finite
  };
  CHECK_NOTHROW(FiniteDifferenceCheck(f, params));
  auto g = [](Tape& t, const BoundParams&) {
    return t.Constant(Array::Scalar(std::nan("")));
  };
  CHECK_THROWS_AS(FiniteDifferenceCheck(g, params), std::domain_error);
}

TEST_CASE("a leaf used k times accumulates k single-use adjoints") {
  Rng rng(11);
  ParamTree params;
  params.Add("x", RandomArray({3, 3}, rng));
  std::vector<Array> weights;
  for (int i = 0; i < 4; ++i) weights.push_back(RandomArray({3, 3}, rng));

  Tape shared;
  auto p = shared.Bind(params);
  Var total = Sum(Tanh(MatMul(p["x"], shared.Constant(weights[0]))));
  for (std::size_t i = 1; i < weights.size(); ++i) {
    total = Add(total, Sum(Tanh(MatMul(p["x"], shared.Constant(weights[i])))));
  }
  const Array combined = shared.Backward(total).Get("x");

  Array manual({3, 3});
  for (const Array& w : weights) {
    Tape single;
    auto q = single.Bind(params);
    const Array g =
        single.Backward(Sum(Tanh(MatMul(q["x"], single.Constant(w))))).Get("x");
    for (std::size_t i = 0; i < g.size(); ++i) manual[i] += g[i];
  }
  for (std::size_t i = 0; i < manual.size(); ++i) {
    CHECK(combined[i] == doctest::Approx(manual[i]).epsilon(1e-13));
  }
}

TEST_CASE("identical forward with identical dropout seed is bit-identical") {
  Rng rng(5);
  const Array x = RandomArray({4, 8}, rng);
  auto run = [&]() {
    Tape tape;
    Rng drop(DeriveSeed(42, {1, 2}));
    Var h = Dropout(Tanh(tape.Constant(x)), 0.3, &drop);
    return h.value();
  };
  CHECK(run() == run());

  Tape tape;
  Var v = tape.Constant(x);
  CHECK(Dropout(v, 0.3, nullptr).id() == v.id());
}

TEST_CASE("derived seeds are stable and stream-separated") {
  CHECK(DeriveSeed(1, {2, 3}) == DeriveSeed(1, {2, 3}));
  CHECK(DeriveSeed(1, {2, 3}) != DeriveSeed(1, {3, 2}));
  CHECK(DeriveSeed(1, {}) != DeriveSeed(2, {}));
}

}  // namespace
}  // namespace seqtrans
