#ifndef SEQTRANS_TESTS_TEST_UTIL_H_
#define SEQTRANS_TESTS_TEST_UTIL_H_

#include <random>

#include "seqtrans/array.h"
#include "seqtrans/autodiff.h"

namespace seqtrans::testing {

inline Array RandomArray(Shape shape, Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
  Array a(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : a.values()) v = dist(rng);
  return a;
}

// Rows are log-softmax normalized random logits.
inline Array RandomLogProbs(Shape shape, Rng& rng, double spread = 2.0) {
  Array a = RandomArray(shape, rng, -spread, spread);
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double* row = a.data() + r * cols;
    double mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) row[c] -= lse;
  }
  return a;
}

inline std::size_t RandomInt(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace seqtrans::testing

#endif  // SEQTRANS_TESTS_TEST_UTIL_H_
