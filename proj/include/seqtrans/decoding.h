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

#ifndef SEQTRANS_DECODING_H_
#define SEQTRANS_DECODING_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqtrans/array.h"
#include "seqtrans/networks.h"

namespace seqtrans {

// Fused score = transducer * log P_trans + lm * log P_LM. The CTC weight is
// carried for completeness but must stay 0.
struct DecodeWeights {
  double ctc = 0.0;
  double transducer = 1.0;
  double lm = 0.1;

  void Validate() const;
  double Fuse(double score_trans, double score_lm) const;
};

struct Hypothesis {
  std::vector<int> prefix;
  double score_trans = 0.0;  // log path-sum over the searched alignments
  double score_lm = 0.0;     // sum of internal-LM log-probs of the labels
  double fused = 0.0;
  PredictionState state;     // prediction network after the prefix
};

struct BeamSearchOptions {
  std::size_t beam_size = 20;
  DecodeWeights weights;
  // Label emissions allowed per frame; 0 means beam_size.
  std::size_t max_symbols_per_frame = 0;
  // Longest prefix considered; 0 means unlimited.
  std::size_t max_prefix_len = 0;
  // Hypotheses returned; 0 means beam_size.
  std::size_t nbest = 0;
};

// Frame-synchronous transducer beam search with internal-LM shallow fusion.
// Within a frame, prefixes are expanded level by level (by length); paths
// reaching the same prefix in the same frame are merged by log-add, and
// each level is pruned to beam_size by fused score. Results are sorted by
// fused score, ties going to the lexicographically smaller prefix.
std::vector<Hypothesis> BeamSearch(const Model& model, const Array& features,
                                   const BeamSearchOptions& options = {});

// Best single path extension per frame; equal to BeamSearch with beam 1 and
// no LM weight.
Hypothesis GreedyDecode(const Model& model, const Array& features,
                        std::size_t max_symbols_per_frame = 1);

// Scores every label sequence of length <= max_len by its exact transducer
// log-likelihood plus weights.lm times its LM score and returns the best.
Hypothesis ExhaustiveDecode(const Model& model, const Array& features,
                            std::size_t max_len, const DecodeWeights& weights);

// Sum over the prefix of log o_LM(g_u)[y_u], from a whole-sequence pass.
double LmScore(const Model& model, std::span<const int> prefix);

// ---------------------------------------------------------------------------
// Word error rate

struct ErrorCounts {
  std::size_t edits = 0;
  std::size_t reference_words = 0;
  double rate() const;
};

std::vector<std::string> SplitWords(std::string_view text);
// Levenshtein distance between word sequences; empty reference throws.
ErrorCounts WordErrors(std::span<const std::string> reference,
                       std::span<const std::string> hypothesis);
double Wer(std::string_view reference, std::string_view hypothesis);

// Percent reduction from `baseline` to `system`: 100 (b - s) / b.
double RelativeReduction(double baseline, double system);

}  // namespace seqtrans

#endif  // SEQTRANS_DECODING_H_
