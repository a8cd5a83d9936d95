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

#ifndef SEQTRANS_LOSSES_H_
#define SEQTRANS_LOSSES_H_

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <utility>

#include "seqtrans/array.h"
#include "seqtrans/autodiff.h"

namespace seqtrans {

inline constexpr int kBlankId = 0;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) with -inf as the additive identity.
inline double LogAddExp(double a, double b);

// Weights of the joint objective
//   L_total = ctc * L_ctc + transducer * L_trans + lm * L_lm.
struct LossWeights {
  double ctc = 0.0;
  double transducer = 1.0;
  double lm = 0.0;

  // Throws unless all weights are >= 0 and at least one is positive.
  void Validate() const;

  // Named experiment presets: "baseline", "ctc", "lm", "ctc+lm".
  static LossWeights FromPreset(std::string_view name);
};

struct LossAndGrad {
  double loss = 0.0;
  // d(loss)/d(input log-probabilities), same shape as the input.
  Array grad;
};

// Negative log-likelihood of `target` under per-frame distributions
// `log_probs` (T, V) summed over all CTC alignments. Only the first `frames`
// rows are used (all rows when unset). Returns +inf and zero gradient when the
// target cannot fit in the available frames.
LossAndGrad CtcForwardBackward(const Array& log_probs,
                               std::span<const int> target,
                               std::optional<std::size_t> frames = {});

// Negative log-likelihood of `target` over all monotonic transducer paths of
// the lattice `log_probs` (T, U1, V), U1 >= U + 1. Rows beyond `frames` and
// label positions beyond U are padding and ignored.
LossAndGrad TransducerForwardBackward(const Array& log_probs,
                                      std::span<const int> target,
                                      std::optional<std::size_t> frames = {});

// Log-likelihood only (no beta pass).
double TransducerLogLikelihood(const Array& log_probs,
                               std::span<const int> target,
                               std::optional<std::size_t> frames = {});

// Tape versions: scalar nodes whose backward rule is the exact
// forward-backward gradient.
Var CtcLoss(Var log_probs, std::span<const int> target,
            std::optional<std::size_t> frames = {});
Var TransducerLoss(Var log_probs, std::span<const int> target,
                   std::optional<std::size_t> frames = {});

// Mean negative log-probability of the next token. Row u of `lm_log_probs`
// (over real tokens, column id - 1) predicts target[u]; rows past the target
// length are ignored.
Var LmLoss(Var lm_log_probs, std::span<const int> target);

// Weighted sum. Components with weight zero are skipped so an unused
// infinite loss does not poison the total.
double TotalLoss(double ctc, double transducer, double lm,
                 const LossWeights& weights);
Var TotalLoss(Var ctc, Var transducer, Var lm, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Enumeration oracles, independent of the dynamic programs above.

// Enumerates all V^T frame labelings. Refuses T > 6 or V > 5.
double BruteForceCtc(const Array& log_probs, std::span<const int> target);
// Enumerates all emission sequences of a (T, U+1, V) lattice. Refuses
// T + U > 10.
double BruteForceTransducer(const Array& log_probs,
                            std::span<const int> target);

inline double LogAddExp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

}  // namespace seqtrans

#endif  // SEQTRANS_LOSSES_H_
