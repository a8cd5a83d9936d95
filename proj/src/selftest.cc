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

#include "seqtrans/selftest.h"

#include <chrono>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "seqtrans/config.h"
#include "seqtrans/decoding.h"

namespace seqtrans {
namespace {

std::size_t Uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Array RandomLogProbs(Shape shape, Rng& rng) {
  Array a(std::move(shape));
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (double& v : a.values()) v = dist(rng);
  Tape tape;
  return LogSoftmax(tape.Constant(a)).value();
}

std::vector<int> RandomTarget(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<int> y(len);
  for (int& v : y) v = static_cast<int>(Uniform(rng, 1, vocab - 1));
  return y;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Shared loop for the two oracle suites.
template <typename Draw>
SuiteResult OracleSuite(const char* name, std::size_t instances, Draw draw) {
  Timer timer;
  double worst = 0.0;
  std::size_t infeasible = 0, failures = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto [fast, oracle] = draw();
    if (std::isinf(fast) && std::isinf(oracle) && fast > 0 && oracle > 0) {
      ++infeasible;
      continue;
    }
    const double err = std::abs(fast - oracle);
    if (!(err <= 1e-9)) ++failures;
    if (!(err <= worst)) worst = err;
  }
  std::ostringstream detail;
  detail << instances << " instances, max |dp - oracle| = " << worst;
  if (infeasible > 0) detail << ", " << infeasible << " infeasible (both +inf)";
  return {name, failures == 0, detail.str(), timer.seconds()};
}

}  // namespace

SuiteResult CtcOracleSuite(std::size_t instances, std::uint64_t seed, bool corrupt) {
  Rng rng(seed);
  const double sign = corrupt ? -1.0 : 1.0;
  return OracleSuite("ctc oracle", instances, [&] {
    const std::size_t steps = Uniform(rng, 1, 5), vocab = Uniform(rng, 2, 4);
    const Array lp = RandomLogProbs({steps, vocab}, rng);
    const auto y = RandomTarget(rng, Uniform(rng, 0, 3), vocab);
    return std::pair{sign * CtcForwardBackward(lp, y).loss, BruteForceCtc(lp, y)};
  });
}

SuiteResult TransducerOracleSuite(std::size_t instances, std::uint64_t seed,
                                  bool corrupt) {
  Rng rng(seed);
  const double sign = corrupt ? -1.0 : 1.0;
  return OracleSuite("transducer oracle", instances, [&] {
    const std::size_t steps = Uniform(rng, 1, 4), vocab = Uniform(rng, 2, 4);
    const auto y = RandomTarget(rng, Uniform(rng, 0, 3), vocab);
    const Array lp = RandomLogProbs({steps, y.size() + 1, vocab}, rng);
    return std::pair{sign * TransducerForwardBackward(lp, y).loss,
                     BruteForceTransducer(lp, y)};
  });
}

SuiteResult LossGradientSuite(std::size_t instances, std::uint64_t seed, bool corrupt) {
  Timer timer;
  Rng rng(seed);
  const double sign = corrupt ? -1.0 : 1.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const bool ctc = i % 2 == 0;
    const std::size_t vocab = Uniform(rng, 2, 4);
    const auto y = RandomTarget(rng, Uniform(rng, 0, 2), vocab);
    const std::size_t steps = ctc ? Uniform(rng, 2 * y.size() + 1, 6) : Uniform(rng, 1, 4);
    ParamTree params;
    params.Add("x", ctc ? RandomLogProbs({steps, vocab}, rng)
                        : RandomLogProbs({steps, y.size() + 1, vocab}, rng));
    auto f = [&](Tape& tape, const BoundParams& p) {
      Var loss = ctc ? CtcLoss(p["x"], y) : TransducerLoss(p["x"], y);
      // The corrupted variant reports -loss but keeps the true gradient.
      return sign > 0 ? loss : Sub(tape.Constant(Array::Scalar(-2 * loss.value().item())),
                                   Neg(loss));
    };
    const auto report = FiniteDifferenceCheck(f, params, {.seed = seed + i, .skip_suffixes = {}});
    worst = std::max(worst, report.max_relative_error);
  }
  std::ostringstream detail;
  detail << instances << " grids, max relative error " << worst;
  return {"loss gradients", worst <= 1e-4, detail.str(), timer.seconds()};
}

SuiteResult ModelGradientSuite(const ModelConfig& config, const LossWeights& weights,
                               std::uint64_t seed, std::size_t samples_per_leaf,
                               bool corrupt) {
  Timer timer;
  Rng rng(seed);
  const Model model = Model::Create(config, seed);
  Array feats({16, config.feat_dim});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : feats.values()) v = normal(rng);
  const std::size_t labels = std::min<std::size_t>(config.vocab_lm, 9);
  const std::vector<int> target = RandomTarget(rng, 3, labels + 1);
  const double sign = corrupt ? -1.0 : 1.0;
  auto f = [&](Tape& tape, const BoundParams& p) {
    Rng dropout(DeriveSeed(seed, {7}));  // identical masks on every call
    ModelGraph graph(tape, config, p, &dropout);
    Var enc = graph.Transcription(feats);
    Var g = graph.Prediction(target).g;
    Var ctc = CtcLoss(LogSoftmax(graph.CtcLogits(enc)), target);
    Var trans = TransducerLoss(graph.JointLogProbs(enc, g), target);
    Var lm = LmLoss(LogSoftmax(graph.LmLogits(g)), target);
    Var total = TotalLoss(ctc, trans, lm, weights);
    return sign > 0 ? total
                    : Sub(tape.Constant(Array::Scalar(-2 * total.value().item())), Neg(total));
  };
  const auto report =
      FiniteDifferenceCheck(f, model.params, {.samples_per_leaf = samples_per_leaf,
                                              .seed = seed,
                                              .skip_suffixes = {"attn.bk"}});
  std::ostringstream detail;
  detail << report.checked << " components, max relative error "
         << report.max_relative_error << " (worst " << report.worst_leaf << "["
         << report.worst_index << "] analytic " << report.worst_analytic << " numeric "
         << report.worst_numeric << "); " << report.below_floor
         << " components below the roundoff floor " << report.roundoff_floor
         << ", error with that floor " << report.max_floored_error;
  return {"model gradients", report.max_relative_error <= 1e-4, detail.str(),
          timer.seconds()};
}

Model RandomTinyModel(std::uint64_t seed, std::size_t vocab_lm) {
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
  cfg.prediction = {3, 1, 5, 0.0};
  cfg.joint.joint_dim = 6;
  Model model = Model::Create(cfg, seed);
  Rng rng(DeriveSeed(seed, {1}));
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (auto& leaf : model.params) {
    if (leaf.name == "joint.w_o" || leaf.name == "lm.w") {
      for (double& v : leaf.value.values()) v = dist(rng);
    }
  }
  return model;
}

SuiteResult BeamExhaustiveSuite(std::size_t models, std::uint64_t seed, bool corrupt) {
  Timer timer;
  Rng rng(seed);
  std::size_t mismatches = 0, lm_sensitive = 0, checks = 0;
  std::uniform_real_distribution<double> feat(-2.0, 2.0);
  for (std::size_t m = 0; m < models; ++m) {
    Model model = RandomTinyModel(DeriveSeed(seed, {m}));
    Array feats({Uniform(rng, 4, 15), 3});  // T' in 1..3
    for (double& v : feats.values()) v = feat(rng);
    for (double beta3 : {0.0, 0.1, 1.0}) {
      const DecodeWeights w{0.0, 1.0, beta3};
      // 1 + 3 + 9 prefixes reachable at max length 2.
      const auto beam = BeamSearch(model, feats, {.beam_size = 13, .weights = w, .max_prefix_len = 2});
      const Hypothesis best = ExhaustiveDecode(model, feats, 2, w);
      const double fused = corrupt ? -beam[0].fused : beam[0].fused;
      ++checks;
      if (beam[0].prefix != best.prefix || std::abs(fused - best.fused) > 1e-9) ++mismatches;
    }
    // beta3 = 0 must not depend on the LM classifier.
    const BeamSearchOptions plain{.beam_size = 4, .weights = {0.0, 1.0, 0.0}};
    const auto before = BeamSearch(model, feats, plain);
    for (auto& leaf : model.params) {
      if (leaf.name == "lm.w") {
        for (double& v : leaf.value.values()) v = 5.0 * feat(rng);
      }
    }
    const auto after = BeamSearch(model, feats, plain);
    bool same = before.size() == after.size();
    for (std::size_t i = 0; same && i < before.size(); ++i) {
      same = before[i].prefix == after[i].prefix && before[i].fused == after[i].fused;
    }
    if (!same) ++lm_sensitive;
  }
  std::ostringstream detail;
  detail << checks << " beam/exhaustive comparisons, " << mismatches
         << " mismatches; " << lm_sensitive << " of " << models
         << " beta3=0 decodes changed with W_LM";
  return {"beam vs exhaustive", mismatches == 0 && lm_sensitive == 0, detail.str(),
          timer.seconds()};
}

ModelConfig DeskModelConfig() {
  ModelConfig model = RunConfig::Desk().model;
  model.vocab_lm = 10;
  return model;
}

std::vector<SuiteResult> RunSelfTest(const SelfTestOptions& options) {
  const std::size_t n = options.instances;
  // Infeasible CTC instances are expected here; keep their warnings quiet.
  const auto level = spdlog::get_level();
  spdlog::set_level(spdlog::level::err);
  std::vector<SuiteResult> results = {
      CtcOracleSuite(n, options.seed, options.corrupt),
      TransducerOracleSuite(n, options.seed + 1, options.corrupt),
      LossGradientSuite(std::max<std::size_t>(n / 10, 2), options.seed + 2, options.corrupt),
      ModelGradientSuite(options.model, LossWeights::FromPreset("ctc+lm"), options.seed + 3,
                         options.samples_per_leaf, options.corrupt),
      BeamExhaustiveSuite(std::max<std::size_t>(n / 5, 2), options.seed + 4, options.corrupt),
  };
  spdlog::set_level(level);
  return results;
}

}  // namespace seqtrans
