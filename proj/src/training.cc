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

#include "seqtrans/training.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

namespace seqtrans {
namespace {

// Independent random streams under the run seed.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kSpeechShuffle = 2,
  kTextShuffle = 3,
  kStepStream = 4,
};

std::filesystem::path EpochPath(const std::filesystem::path& dir,
                                std::size_t epoch) {
  return dir / ("epoch_" + std::to_string(epoch) + ".stck");
}

std::vector<std::size_t> Permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j =
        std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
// rethrown in index order.
template <typename Fn>
void ParallelFor(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t first) {
    for (std::size_t i = first; i < n; i += workers) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void CheckFinite(double value, const char* component) {
  if (!std::isfinite(value)) throw DivergenceError(component);
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer

void AdamConfig::Validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("Adam eps must be positive");
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr)) {
    throw std::invalid_argument("peak learning rate must be finite and >= 0");
  }
  if (total_steps != 0 && total_steps < warmup_steps) {
    throw std::invalid_argument("total_steps must be 0 or >= warmup_steps");
  }
}

double PeakLearningRate(std::size_t vocab_trans, double scale) {
  return scale / std::sqrt(static_cast<double>(vocab_trans));
}

double LearningRate(const AdamConfig& config, std::size_t step) {
  const double peak = config.peak_lr;
  if (step <= config.warmup_steps) {
    return peak * static_cast<double>(step) /
           static_cast<double>(config.warmup_steps);
  }
  if (config.total_steps == 0) return peak;
  if (step >= config.total_steps) return 0.0;
  return peak * static_cast<double>(config.total_steps - step) /
         static_cast<double>(config.total_steps - config.warmup_steps);
}

OptimizerState OptimizerState::Init(const ParamTree& params) {
  return {0, params.ZerosLike(), params.ZerosLike()};
}

void OptimizerState::Save(const std::filesystem::path& path) const {
  ParamTree tree;
  tree.Add("step", Array::Scalar(static_cast<double>(step)));
  for (const auto& leaf : m) tree.Add("m/" + leaf.name, leaf.value);
  for (const auto& leaf : v) tree.Add("v/" + leaf.name, leaf.value);
  SaveParams(path, tree);
}

OptimizerState OptimizerState::Load(const std::filesystem::path& path) {
  const ParamTree tree = LoadParams(path);
  if (!tree.Contains("step")) {
    throw std::runtime_error("optimizer state " + path.string() +
                             " has no step counter");
  }
  OptimizerState state;
  state.step = static_cast<std::size_t>(tree.Get("step").item());
  for (const auto& leaf : tree) {
    if (leaf.name.starts_with("m/")) state.m.Add(leaf.name.substr(2), leaf.value);
    if (leaf.name.starts_with("v/")) state.v.Add(leaf.name.substr(2), leaf.value);
  }
  return state;
}

double AdamStep(const AdamConfig& config, OptimizerState& state,
                ParamTree& params, const ParamTree& grads) {
  if (!params.SameStructure(grads) || !params.SameStructure(state.m) ||
      !params.SameStructure(state.v)) {
    throw ShapeError("adam_step: parameter, gradient and moment trees differ");
  }
  const std::size_t t = ++state.step;
  const double lr = LearningRate(config, t);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params.leaf(i).value.data();
    double* m = state.m.leaf(i).value.data();
    double* v = state.v.leaf(i).value.data();
    const double* g = grads.leaf(i).value.data();
    const std::size_t n = params.leaf(i).value.size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
  return lr;
}

double ClipGradients(ParamTree& grads, double max_norm) {
  if (!(max_norm > 0.0)) {
    throw std::invalid_argument("clip norm must be positive");
  }
  const double norm = GlobalNorm(grads);
  if (std::isfinite(max_norm) && norm > max_norm) {
    Scale(grads, max_norm / norm);
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Two-step update

void TrainConfig::Validate() const {
  weights.Validate();
  adam.Validate();
  if (!(grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be > 0");
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (average_last == 0 || average_last > epochs) {
    throw std::invalid_argument("average_last must be in [1, epochs]");
  }
  if (speech_batch == 0 || text_batch == 0) {
    throw std::invalid_argument("batch sizes must be positive");
  }
  if (workers == 0) throw std::invalid_argument("workers must be positive");
}

DivergenceError::DivergenceError(std::string component)
    : std::runtime_error("non-finite " + component + " loss"),
      component_(std::move(component)) {}

PassGradients TextPassGradients(const Model& model,
                                std::span<const std::vector<int>> batch,
                                const LossWeights& weights,
                                std::uint64_t dropout_seed,
                                std::size_t workers) {
  if (batch.empty()) throw std::invalid_argument("empty text batch");
  const double scale = weights.lm / static_cast<double>(batch.size());
  std::vector<ParamTree> grads(batch.size());
  std::vector<double> losses(batch.size());
  ParallelFor(batch.size(), workers, [&](std::size_t i) {
    Tape tape;
    Rng rng(DeriveSeed(dropout_seed, {i}));
    ModelGraph graph(tape, model, true, &rng);
    Var g = graph.Prediction(batch[i]).g;
    Var lm = LmLoss(LogSoftmax(graph.LmLogits(g)), batch[i]);
    losses[i] = lm.value().item();
    CheckFinite(losses[i], "lm");
    grads[i] = tape.Backward(Scale(lm, scale));
  });
  PassGradients out{model.params.ZerosLike(), 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    AddScaled(out.grads, grads[i]);
    out.lm += losses[i];
  }
  out.lm /= static_cast<double>(batch.size());
  return out;
}

PassGradients SpeechPassGradients(const Model& model,
                                  std::span<const Utterance* const> batch,
                                  const LossWeights& weights,
                                  std::uint64_t seed,
                                  const SpecAugmentConfig* augment,
                                  std::size_t workers) {
  if (batch.empty()) throw std::invalid_argument("empty speech batch");
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  std::vector<ParamTree> grads(batch.size());
  std::vector<double> ctc(batch.size()), trans(batch.size());
  ParallelFor(batch.size(), workers, [&](std::size_t i) {
    const Utterance& utt = *batch[i];
    std::optional<Array> augmented;
    if (augment != nullptr && !augment->IsIdentity()) {
      Rng aug_rng(DeriveSeed(seed, {i, 0}));
      augmented = SpecAugment(utt.features, *augment, aug_rng).features;
    }
    Tape tape;
    Rng drop_rng(DeriveSeed(seed, {i, 1}));
    ModelGraph graph(tape, model, true, &drop_rng);
    Var f = graph.Transcription(augmented ? *augmented : utt.features);
    std::optional<Var> objective;
    auto accumulate = [&](Var term, double weight) {
      term = Scale(term, weight * inv_batch);
      objective = objective ? Add(*objective, term) : term;
    };
    if (weights.ctc > 0.0) {
      Var loss = CtcLoss(LogSoftmax(graph.CtcLogits(f)), utt.tokens);
      ctc[i] = loss.value().item();
      CheckFinite(ctc[i], "ctc");
      accumulate(loss, weights.ctc);
    }
    if (weights.transducer > 0.0) {
      Var g = graph.Prediction(utt.tokens).g;
      Var loss = TransducerLoss(graph.JointLogProbs(f, g), utt.tokens);
      trans[i] = loss.value().item();
      CheckFinite(trans[i], "transducer");
      accumulate(loss, weights.transducer);
    }
    grads[i] = objective ? tape.Backward(*objective) : model.params.ZerosLike();
  });
  PassGradients out{model.params.ZerosLike(), 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    AddScaled(out.grads, grads[i]);
    out.ctc += ctc[i] * inv_batch;
    out.transducer += trans[i] * inv_batch;
  }
  return out;
}

StepResult TwoStepGradients(const Model& model,
                            std::span<const std::vector<int>> text_batch,
                            std::span<const Utterance* const> speech_batch,
                            const TrainConfig& config,
                            std::uint64_t step_seed) {
  const LossWeights& w = config.weights;
  StepResult result;
  // Step 1: the LM pass. Its gradient is clipped and retained, not applied.
  if (w.lm > 0.0) {
    if (text_batch.empty()) {
      throw std::invalid_argument("lm weight is positive but the text batch is empty");
    }
    result.text = TextPassGradients(model, text_batch, w,
                                    DeriveSeed(step_seed, {0}), config.workers);
    ClipGradients(result.text.grads, config.grad_clip);
  } else {
    result.text.grads = model.params.ZerosLike();
  }
  // Step 2: the speech pass over CTC and transducer terms.
  if (w.ctc > 0.0 || w.transducer > 0.0) {
    result.speech = SpeechPassGradients(
        model, speech_batch, w, DeriveSeed(step_seed, {1}),
        config.spec_augment ? &config.augment : nullptr, config.workers);
  } else {
    result.speech.grads = model.params.ZerosLike();
  }
  // Step 3: accumulate and clip again.
  result.combined = result.speech.grads;
  AddScaled(result.combined, result.text.grads);
  if (!AllFinite(result.combined)) throw DivergenceError("gradient");
  result.grad_norm = ClipGradients(result.combined, config.grad_clip);
  result.total = TotalLoss(result.speech.ctc, result.speech.transducer,
                           result.text.lm, w);
  return result;
}

StepResult TwoStepUpdate(Model& model, OptimizerState& state,
                         std::span<const std::vector<int>> text_batch,
                         std::span<const Utterance* const> speech_batch,
                         const TrainConfig& config, std::uint64_t step_seed) {
  StepResult result =
      TwoStepGradients(model, text_batch, speech_batch, config, step_seed);
  result.lr = AdamStep(config.adam, state, model.params, result.combined);
  return result;
}

// ---------------------------------------------------------------------------
// Averaging

ParamTree AverageParams(std::span<const ParamTree> trees) {
  if (trees.empty()) throw std::invalid_argument("nothing to average");
  // mean = x_0 + sum_k (x_k - x_0) / K, exact when all trees are equal.
  ParamTree mean = trees[0];
  ParamTree offset = trees[0].ZerosLike();
  for (std::size_t k = 1; k < trees.size(); ++k) {
    if (!trees[k].SameStructure(trees[0])) {
      throw ShapeError("checkpoints to average have different structure");
    }
    AddScaled(offset, trees[k]);
    AddScaled(offset, trees[0], -1.0);
  }
  AddScaled(mean, offset, 1.0 / static_cast<double>(trees.size()));
  return mean;
}

ParamTree AverageCheckpoints(std::span<const std::filesystem::path> paths) {
  std::vector<ParamTree> trees;
  trees.reserve(paths.size());
  for (const auto& p : paths) trees.push_back(LoadParams(p));
  return AverageParams(trees);
}

// ---------------------------------------------------------------------------
// Training loop

std::string MetricsRecord::ToCsv() const {
  std::ostringstream out;
  out << std::setprecision(10) << epoch << ',' << step << ',' << ctc << ','
      << transducer << ',' << lm << ',' << total << ',' << grad_norm << ','
      << lr;
  return out.str();
}

std::size_t StepsPerEpoch(std::size_t utterances, std::size_t batch) {
  return (utterances + batch - 1) / batch;
}

TrainingResult RunTraining(const ModelConfig& model_config,
                           const TrainConfig& requested,
                           std::span<const Utterance> speech,
                           const TextCorpus& text,
                           const std::filesystem::path& out_dir, bool resume,
                           const TrainingCallbacks& callbacks) {
  model_config.Validate();
  requested.Validate();
  TrainConfig config = requested;
  if (speech.empty()) throw std::invalid_argument("no training utterances");
  std::vector<const std::vector<int>*> sentences;
  for (const auto& s : text.sentences) {
    if (!s.empty()) sentences.push_back(&s);
  }
  if (config.weights.lm > 0.0 && sentences.empty()) {
    throw std::invalid_argument("lm weight is positive but the text corpus is empty");
  }

  const std::size_t per_epoch = StepsPerEpoch(speech.size(), config.speech_batch);
  std::size_t max_steps = config.epochs * per_epoch;
  if (config.adam.total_steps > 0) {
    max_steps = std::min(max_steps, config.adam.total_steps);
  }
  // Without an explicit end, the decay ends with the last epoch.
  if (config.adam.total_steps == 0) {
    config.adam.total_steps = std::max(max_steps, config.adam.warmup_steps);
  }
  const std::size_t last_epoch = StepsPerEpoch(max_steps, per_epoch);
  std::filesystem::create_directories(out_dir);
  const auto optimizer_path = out_dir / "optimizer.stck";
  const auto metrics_path = out_dir / "metrics.csv";

  TrainingResult result;
  OptimizerState state;
  std::size_t first_epoch = 1;
  std::size_t global_step = 0;
  if (resume && std::filesystem::exists(out_dir / "progress.stck")) {
    const ParamTree sidecar = LoadParams(out_dir / "progress.stck");
    const std::size_t done = static_cast<std::size_t>(sidecar.Get("epoch").item());
    global_step = static_cast<std::size_t>(sidecar.Get("global_step").item());
    result.model = Model::FromParams(model_config, LoadParams(EpochPath(out_dir, done)));
    state = OptimizerState::Load(optimizer_path);
    first_epoch = done + 1;
    // Drop metrics from steps that were never checkpointed.
    std::vector<std::string> kept;
    std::ifstream in(metrics_path);
    for (std::string line; std::getline(in, line);) {
      const auto comma = line.find(',');
      const auto comma2 = line.find(',', comma + 1);
      if (comma == std::string::npos || !std::isdigit(line[0]) ||
          std::stoull(line.substr(comma + 1, comma2 - comma - 1)) <= global_step) {
        kept.push_back(line);
      }
    }
    std::ofstream out(metrics_path, std::ios::trunc);
    for (const auto& line : kept) out << line << '\n';
    spdlog::info("resuming after epoch {} (step {})", done, global_step);
  } else {
    result.model = Model::Create(model_config, DeriveSeed(config.seed, {kInitStream}));
    state = OptimizerState::Init(result.model.params);
    std::ofstream out(metrics_path, std::ios::trunc);
    out << "epoch,step,L_ctc,L_trans,L_lm,L_total,grad_norm,lr\n";
  }
  std::ofstream metrics(metrics_path, std::ios::app);

  std::vector<std::size_t> text_order;
  std::size_t text_epoch = std::numeric_limits<std::size_t>::max();
  std::size_t consecutive_failures = 0;
  std::vector<std::vector<int>> text_batch;
  std::vector<const Utterance*> speech_batch;

  for (std::size_t epoch = first_epoch; epoch <= last_epoch; ++epoch) {
    const auto order =
        Permutation(speech.size(), DeriveSeed(config.seed, {kSpeechShuffle, epoch}));
    for (std::size_t k = 0; k < per_epoch && global_step < max_steps; ++k) {
      const std::size_t step = ++global_step;
      speech_batch.clear();
      for (std::size_t j = k * config.speech_batch;
           j < std::min(speech.size(), (k + 1) * config.speech_batch); ++j) {
        speech_batch.push_back(&speech[order[j]]);
      }
      text_batch.clear();
      if (config.weights.lm > 0.0) {
        // The text corpus cycles on its own schedule, a pure function of step.
        for (std::size_t j = 0; j < config.text_batch; ++j) {
          const std::size_t flat = (step - 1) * config.text_batch + j;
          const std::size_t te = flat / sentences.size();
          if (te != text_epoch) {
            text_epoch = te;
            text_order = Permutation(sentences.size(),
                                     DeriveSeed(config.seed, {kTextShuffle, te}));
          }
          text_batch.push_back(*sentences[text_order[flat % sentences.size()]]);
        }
      }
      MetricsRecord record{epoch, step};
      try {
        const StepResult r =
            TwoStepUpdate(result.model, state, text_batch, speech_batch, config,
                          DeriveSeed(config.seed, {kStepStream, step}));
        record.ctc = r.speech.ctc;
        record.transducer = r.speech.transducer;
        record.lm = r.text.lm;
        record.total = r.total;
        record.grad_norm = r.grad_norm;
        record.lr = r.lr;
        consecutive_failures = 0;
      } catch (const DivergenceError& e) {
        ++result.skipped_steps;
        spdlog::warn("step {}: {}; update skipped", step, e.what());
        if (++consecutive_failures > config.max_diverged_steps) throw;
        continue;
      }
      metrics << record.ToCsv() << '\n';
      result.metrics.push_back(record);
      if (callbacks.on_step) callbacks.on_step(record);
    }
    metrics.flush();
    SaveParams(EpochPath(out_dir, epoch), result.model.params);
    state.Save(optimizer_path);
    ParamTree progress;
    progress.Add("epoch", Array::Scalar(static_cast<double>(epoch)));
    progress.Add("global_step", Array::Scalar(static_cast<double>(global_step)));
    SaveParams(out_dir / "progress.stck", progress);
    if (epoch > config.average_last) {
      std::filesystem::remove(EpochPath(out_dir, epoch - config.average_last));
    }
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, result.model);
  }

  const std::size_t final_epoch = std::max(first_epoch, last_epoch + 1) - 1;
  for (std::size_t e = final_epoch >= config.average_last
                           ? final_epoch - config.average_last + 1
                           : 1;
       e <= final_epoch; ++e) {
    if (std::filesystem::exists(EpochPath(out_dir, e))) {
      result.checkpoints.push_back(EpochPath(out_dir, e));
    }
  }
  if (result.checkpoints.empty()) {
    throw std::runtime_error("no checkpoints to average in " + out_dir.string());
  }
  result.averaged = AverageCheckpoints(result.checkpoints);
  SaveParams(out_dir / "averaged.stck", result.averaged);
  result.steps = global_step;
  return result;
}

}  // namespace seqtrans
