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

#ifndef SEQTRANS_TRAINING_H_
#define SEQTRANS_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqtrans/data.h"
#include "seqtrans/losses.h"
#include "seqtrans/networks.h"
#include "seqtrans/param_tree.h"

namespace seqtrans {

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t warmup_steps = 25000;
  double peak_lr = 0.0;
  // 0 leaves the rate at peak after warmup; RunTraining replaces 0 with
  // the run's final step.
  std::size_t total_steps = 0;

  void Validate() const;
};

// scale / sqrt(vocab_trans); scale 1 is the full-scale recipe.
double PeakLearningRate(std::size_t vocab_trans, double scale = 1.0);

// Learning rate used for the 1-based update `step`: linear warmup to peak,
// then linear decay reaching 0 at total_steps.
double LearningRate(const AdamConfig& config, std::size_t step);

struct OptimizerState {
  std::size_t step = 0;
  ParamTree m;
  ParamTree v;

  static OptimizerState Init(const ParamTree& params);
  // Checkpoint-format file with leaves "m/<name>", "v/<name>" and "step".
  void Save(const std::filesystem::path& path) const;
  static OptimizerState Load(const std::filesystem::path& path);
};

// One bias-corrected Adam update; returns the learning rate used.
double AdamStep(const AdamConfig& config, OptimizerState& state,
                ParamTree& params, const ParamTree& grads);

// Rescales `grads` to global norm max_norm when it is larger. Returns the
// norm before clipping. An infinite max_norm disables clipping.
double ClipGradients(ParamTree& grads, double max_norm);

// ---------------------------------------------------------------------------
// Two-step multitask update

struct TrainConfig {
  LossWeights weights = LossWeights::FromPreset("ctc+lm");
  double grad_clip = 5.0;
  std::size_t epochs = 130;
  std::size_t average_last = 15;
  std::size_t speech_batch = 8;
  std::size_t text_batch = 8;
  std::uint64_t seed = 1;
  AdamConfig adam;
  bool spec_augment = true;
  SpecAugmentConfig augment;
  std::size_t workers = 1;
  // Consecutive skipped (diverged) steps tolerated before training aborts.
  std::size_t max_diverged_steps = 10;

  void Validate() const;
};

class DivergenceError : public std::runtime_error {
 public:
  // `component` names the loss term ("ctc", "transducer", "lm") or
  // "gradient" when the loss was finite but its gradient was not.
  explicit DivergenceError(std::string component);
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

struct PassGradients {
  ParamTree grads;  // full parameter structure; untouched leaves are zero
  double ctc = 0.0;
  double transducer = 0.0;
  double lm = 0.0;
};

// Gradient of weights.lm * L_LM over a text batch (mean over sentences).
PassGradients TextPassGradients(const Model& model,
                                std::span<const std::vector<int>> batch,
                                const LossWeights& weights,
                                std::uint64_t dropout_seed,
                                std::size_t workers = 1);

// Gradient of weights.ctc * L_CTC + weights.transducer * L_trans over a
// speech batch (mean over utterances). With an augment config, each
// utterance gets its own SpecAugment draw from `seed`.
PassGradients SpeechPassGradients(const Model& model,
                                  std::span<const Utterance* const> batch,
                                  const LossWeights& weights,
                                  std::uint64_t seed,
                                  const SpecAugmentConfig* augment = nullptr,
                                  std::size_t workers = 1);

struct StepResult {
  PassGradients text;    // after the first clip
  PassGradients speech;
  ParamTree combined;    // after the second clip
  double total = 0.0;
  double grad_norm = 0.0;  // combined norm before the second clip
  double lr = 0.0;
};

// Both passes and both clips without touching parameters. Throws
// DivergenceError when a weighted component is not finite.
StepResult TwoStepGradients(const Model& model,
                            std::span<const std::vector<int>> text_batch,
                            std::span<const Utterance* const> speech_batch,
                            const TrainConfig& config, std::uint64_t step_seed);

// TwoStepGradients followed by one Adam update.
StepResult TwoStepUpdate(Model& model, OptimizerState& state,
                         std::span<const std::vector<int>> text_batch,
                         std::span<const Utterance* const> speech_batch,
                         const TrainConfig& config, std::uint64_t step_seed);

// ---------------------------------------------------------------------------
// Checkpoint averaging

ParamTree AverageParams(std::span<const ParamTree> trees);
ParamTree AverageCheckpoints(std::span<const std::filesystem::path> paths);

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double ctc = 0.0;
  double transducer = 0.0;
  double lm = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;

  std::string ToCsv() const;
};

struct TrainingResult {
  Model model;                 // parameters after the last step
  ParamTree averaged;          // mean over the last average_last epochs
  std::vector<MetricsRecord> metrics;  // records written by this call
  std::vector<std::filesystem::path> checkpoints;  // retained, oldest first
  std::size_t steps = 0;       // global step count reached
  std::size_t skipped_steps = 0;
};

struct TrainingCallbacks {
  std::function<void(const MetricsRecord&)> on_step;
  std::function<void(std::size_t epoch, const Model&)> on_epoch;
};

std::size_t StepsPerEpoch(std::size_t utterances, std::size_t batch);

// Trains from `seed` (or resumes from the newest checkpoint in out_dir when
// `resume` is set). Writes epoch_{n}.stck, optimizer.stck, metrics.csv and
// averaged.stck into out_dir. Every random draw derives from the config seed
// and the global step, so resumed runs match uninterrupted ones bit for bit.
TrainingResult RunTraining(const ModelConfig& model_config,
                           const TrainConfig& config,
                           std::span<const Utterance> speech,
                           const TextCorpus& text,
                           const std::filesystem::path& out_dir,
                           bool resume = false,
                           const TrainingCallbacks& callbacks = {});

}  // namespace seqtrans

#endif  // SEQTRANS_TRAINING_H_
