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

#include "seqtrans/decoding.h"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "seqtrans/losses.h"
#include "test_util.h"

namespace seqtrans {
namespace {

using testing::RandomArray;
using testing::RandomInt;

ModelConfig TinyConfig(std::size_t vocab_lm = 3) {
  ModelConfig cfg;
  cfg.feat_dim = 3;
  cfg.vocab_lm = vocab_lm;
  auto& tc = cfg.transcription;
  tc.cnn_head_out = tc.d_model = 4;
  tc.n_heads = 1;
  tc.n_layers = 1;
  tc.ffn_conv1_out = 6;
  tc.ffn_conv2_out = 4;
  tc.dropout = 0.0;
  cfg.prediction.embed_dim = 3;
  cfg.prediction.lstm_layers = 1;
  cfg.prediction.lstm_cell = 5;
  cfg.prediction.dropout = 0.0;
  cfg.joint.joint_dim = 6;
  return cfg;
}

// Random model with sharpened output layers so decisions are not near-ties.
Model RandomModel(std::uint64_t seed, const ModelConfig& cfg = TinyConfig()) {
  Model model = Model::Create(cfg, seed);
  Rng rng(seed + 1000);
  for (auto& leaf : model.params) {
    if (leaf.name == "joint.w_o" || leaf.name == "lm.w") {
      leaf.value = RandomArray(leaf.value.shape(), rng, -3, 3);
    }
  }
  return model;
}

void RandomizeLm(Model& model, Rng& rng) {
  for (auto& leaf : model.params) {
    if (leaf.name == "lm.w") leaf.value = RandomArray(leaf.value.shape(), rng, -5, 5);
  }
}

TEST_CASE("beam search agrees with exhaustive search on tiny models") {
  Rng rng(1);
  int lm_changed_choice = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Model model = RandomModel(rep);
    const std::size_t frames = RandomInt(rng, 4, 15);  // T' in 1..3
    const Array feats = RandomArray({frames, 3}, rng, -2, 2);
    for (double beta3 : {0.0, 0.1, 1.0}) {
      const DecodeWeights w{0.0, 1.0, beta3};
      // 1 + 3 + 9 prefixes are reachable with max length 2.
      BeamSearchOptions opts{.beam_size = 13, .weights = w, .max_prefix_len = 2};
      const auto beam = BeamSearch(model, feats, opts);
      const Hypothesis best = ExhaustiveDecode(model, feats, 2, w);
      INFO("rep ", rep, " beta3 ", beta3);
      REQUIRE(!beam.empty());
      CHECK(beam[0].prefix == best.prefix);
      CHECK(std::abs(beam[0].fused - best.fused) <= 1e-9);
      CHECK(std::abs(beam[0].score_trans - best.score_trans) <= 1e-9);
      if (beta3 == 1.0 && best.prefix != ExhaustiveDecode(model, feats, 2, {0, 1, 0}).prefix) {
        ++lm_changed_choice;
      }
    }
  }
  // The LM weight matters on a fair share of instances.
  CHECK(lm_changed_choice > 5);
}

TEST_CASE("beta3 zero ignores the LM classifier") {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    Model model = RandomModel(50 + rep, TinyConfig(5));
    const Array feats = RandomArray({RandomInt(rng, 8, 30), 3}, rng, -2, 2);
    const BeamSearchOptions opts{.beam_size = 4, .weights = {0.0, 1.0, 0.0}};
    const auto before = BeamSearch(model, feats, opts);
    RandomizeLm(model, rng);
    const auto after = BeamSearch(model, feats, opts);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(before[i].prefix == after[i].prefix);
      CHECK(before[i].fused == after[i].fused);
      CHECK(before[i].score_lm == 0.0);
      CHECK(before[i].fused == before[i].score_trans);
    }
  }
}

TEST_CASE("stored LM scores are recomputable from the prefix") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Model model = RandomModel(80 + rep, TinyConfig(4));
    const Array feats = RandomArray({RandomInt(rng, 8, 30), 3}, rng, -2, 2);
    const BeamSearchOptions opts{.beam_size = 5, .weights = {0.0, 1.0, 0.7}};
    for (const auto& h : BeamSearch(model, feats, opts)) {
      CHECK(std::abs(h.score_lm - LmScore(model, h.prefix)) <= 1e-10);
      CHECK(h.fused == doctest::Approx(h.score_trans + 0.7 * h.score_lm));
    }
  }
}

TEST_CASE("greedy decoding equals beam search with beam 1") {
  Rng rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    const Model model = RandomModel(200 + rep, TinyConfig(1 + rep % 6));
    const Array feats = RandomArray({RandomInt(rng, 4, 40), 3}, rng, -2, 2);
    const Hypothesis greedy = GreedyDecode(model, feats);
    const auto beam = BeamSearch(model, feats, {.beam_size = 1, .weights = {0, 1, 0}});
    INFO("rep ", rep);
    CHECK(greedy.prefix == beam[0].prefix);
    CHECK(greedy.score_trans == beam[0].score_trans);
    // Same with two emissions per frame.
    const Hypothesis greedy2 = GreedyDecode(model, feats, 2);
    const auto beam2 = BeamSearch(
        model, feats, {.beam_size = 1, .weights = {0, 1, 0}, .max_symbols_per_frame = 2});
    CHECK(greedy2.prefix == beam2[0].prefix);
    CHECK(greedy2.score_trans == beam2[0].score_trans);
  }
}

TEST_CASE("all-blank grid decodes to the empty prefix") {
  const ModelConfig cfg = TinyConfig();
  Model model = Model::Create(cfg, 1);
  for (auto& leaf : model.params) {
    // Constant encoder output of ones, tanh(f W_TR) ~ 1, blank logit large.
    if (leaf.name == "enc.layer0.norm2.gain" || leaf.name == "joint.w_pr") leaf.value.Fill(0.0);
    if (leaf.name == "enc.layer0.norm2.bias" || leaf.name == "joint.w_tr") leaf.value.Fill(1.0);
    if (leaf.name == "joint.w_o") {
      leaf.value.Fill(0.0);
      for (std::size_t j = 0; j < leaf.value.rows(); ++j) leaf.value.at(j, 0) = 10.0;
    }
  }
  Rng rng(5);
  const Array feats = RandomArray({4, 3}, rng);
  const auto beam = BeamSearch(model, feats, {.beam_size = 4});
  CHECK(beam[0].prefix.empty());
  CHECK(beam[0].score_trans > -1e-6);
  CHECK(GreedyDecode(model, feats).prefix.empty());
  CHECK(GreedyDecode(model, RandomArray({40, 3}, rng)).prefix.empty());
}

TEST_CASE("decoding is deterministic and validates input") {
  const Model model = RandomModel(7, TinyConfig(5));
  Rng rng(6);
  const Array feats = RandomArray({30, 3}, rng, -2, 2);
  const auto a = BeamSearch(model, feats, {.beam_size = 6});
  const auto b = BeamSearch(model, feats, {.beam_size = 6});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].prefix == b[i].prefix);
    CHECK(a[i].fused == b[i].fused);
    if (i > 0) CHECK(a[i - 1].fused >= a[i].fused);
  }
  CHECK(a.size() <= 6);
  CHECK(BeamSearch(model, feats, {.beam_size = 6, .nbest = 2}).size() == 2);
  CHECK_THROWS_AS(BeamSearch(model, Array({3, 3}), {}), ShapeError);  // too short
  CHECK_THROWS_AS(BeamSearch(model, feats, {.beam_size = 0}), std::invalid_argument);
  CHECK_THROWS_AS(BeamSearch(model, feats, {.weights = {0.3, 1.0, 0.1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(BeamSearch(model, feats, {.weights = {0.0, 0.0, 0.1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(ExhaustiveDecode(model, feats, 8, {}), std::invalid_argument);
}

TEST_CASE("exhaustive decoding") {
  Rng rng(7);
  SUBCASE("a single candidate is returned as is") {
    const Model model = RandomModel(3, TinyConfig(1));
    const Array feats = RandomArray({8, 3}, rng);
    CHECK(ExhaustiveDecode(model, feats, 0, {}).prefix.empty());
    // One label and length 1: the candidates are "" and "1".
    const Hypothesis h = ExhaustiveDecode(model, feats, 1, {0, 1, 0});
    CHECK((h.prefix.empty() || h.prefix == std::vector<int>{1}));
  }
  SUBCASE("a large LM weight moves the choice toward the LM") {
    int moved = 0;
    for (int rep = 0; rep < 30; ++rep) {
      const Model model = RandomModel(300 + rep);
      const Array feats = RandomArray({12, 3}, rng, -2, 2);
      const Hypothesis plain = ExhaustiveDecode(model, feats, 2, {0, 1, 0});
      const Hypothesis fused = ExhaustiveDecode(model, feats, 2, {0, 1, 50});
      const double plain_lm = LmScore(model, plain.prefix);
      CHECK(fused.score_lm >= plain_lm - 1e-12);
      CHECK(fused.score_trans <= plain.score_trans + 1e-12);
      if (fused.prefix != plain.prefix) ++moved;
    }
    CHECK(moved > 0);
  }
}

TEST_CASE("beam size and top-1 score") {
  // Larger beams usually find better hypotheses; pruned search gives no
  // guarantee, so count violations instead of requiring none.
  Rng rng(8);
  int violations = 0, comparisons = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const Model model = RandomModel(400 + rep, TinyConfig(5));
    const Array feats = RandomArray({RandomInt(rng, 12, 40), 3}, rng, -2, 2);
    double prev = kNegInf;
    for (std::size_t beam : {1, 2, 4, 8, 16}) {
      const double top = BeamSearch(model, feats, {.beam_size = beam})[0].fused;
      if (top < prev - 1e-12) ++violations;
      ++comparisons;
      prev = top;
    }
  }
  MESSAGE("beam monotonicity violations: ", violations, " / ", comparisons);
  CHECK(violations == 0);
}

TEST_CASE("word error rate") {
  CHECK(Wer("a b c", "a b c") == 0.0);
  CHECK(Wer("a b c", "a x c") == doctest::Approx(1.0 / 3));
  CHECK(Wer("a b c", "a c") == doctest::Approx(1.0 / 3));
  CHECK(Wer("a b", "a b c d") == doctest::Approx(1.0));
  CHECK(Wer("  a   b ", "a b") == 0.0);
  CHECK(Wer("a", "") == 1.0);
  CHECK_THROWS_AS(Wer("", "a"), std::invalid_argument);
  CHECK(RelativeReduction(4.2, 3.5) == doctest::Approx(16.6667).epsilon(1e-4));
  CHECK(RelativeReduction(10.5, 9.1) == doctest::Approx(13.3333).epsilon(1e-4));
}

}  // namespace
}  // namespace seqtrans
