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

#ifndef SEQTRANS_SELFTEST_H_
#define SEQTRANS_SELFTEST_H_

#include <cstdint>
#include <string>
#include <vector>

#include "seqtrans/losses.h"
#include "seqtrans/networks.h"

namespace seqtrans {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// `corrupt` flips the sign of the loss under test, which every suite must
// detect.
SuiteResult CtcOracleSuite(std::size_t instances, std::uint64_t seed,
                           bool corrupt = false);
SuiteResult TransducerOracleSuite(std::size_t instances, std::uint64_t seed,
                                  bool corrupt = false);
// Finite differences of both DP losses w.r.t. their input grids.
SuiteResult LossGradientSuite(std::size_t instances, std::uint64_t seed,
                              bool corrupt = false);
// Finite differences through the whole model and the weighted total loss,
// `samples_per_leaf` components per parameter leaf (0 = all).
SuiteResult ModelGradientSuite(const ModelConfig& config,
                               const LossWeights& weights, std::uint64_t seed,
                               std::size_t samples_per_leaf,
                               bool corrupt = false);
// Beam search with an unpruned beam against exhaustive enumeration on tiny
// random models, for beta3 in {0, 0.1, 1}; also checks that beta3 = 0
// ignores the LM classifier.
SuiteResult BeamExhaustiveSuite(std::size_t models, std::uint64_t seed,
                                bool corrupt = false);

// Small random model (D_trans = vocab_lm + 1) with sharpened output layers.
Model RandomTinyModel(std::uint64_t seed, std::size_t vocab_lm = 3);

// Desk-profile model with a 10-token vocabulary.
ModelConfig DeskModelConfig();

struct SelfTestOptions {
  std::uint64_t seed = 1;
  // Oracle instances per loss; the other suites scale from it.
  std::size_t instances = 500;
  ModelConfig model = DeskModelConfig();
  std::size_t samples_per_leaf = 4;
  bool corrupt = false;
};
std::vector<SuiteResult> RunSelfTest(const SelfTestOptions& options);

}  // namespace seqtrans

#endif  // SEQTRANS_SELFTEST_H_
