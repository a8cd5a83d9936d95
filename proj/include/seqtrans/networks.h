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

#ifndef SEQTRANS_NETWORKS_H_
#define SEQTRANS_NETWORKS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "seqtrans/array.h"
#include "seqtrans/autodiff.h"
#include "seqtrans/param_tree.h"

namespace seqtrans {

// 1D-CNN head followed by a stack of transformer encoder layers whose
// feed-forward block is two 1D convolutions.
struct TranscriptionConfig {
  std::size_t cnn_head_out = 512;
  std::size_t cnn_head_kernel = 3;
  std::size_t pool_kernel = 2;
  std::size_t n_layers = 15;
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t ffn_conv_kernel = 3;
  std::size_t ffn_conv1_out = 2048;
  std::size_t ffn_conv2_out = 512;
  double dropout = 0.1;
};

// Token embedding followed by stacked LSTMs.
struct PredictionConfig {
  std::size_t embed_dim = 256;
  std::size_t lstm_layers = 2;
  std::size_t lstm_cell = 1024;
  double dropout = 0.1;
};

struct JointConfig {
  std::size_t joint_dim = 1024;
};

struct ModelConfig {
  std::size_t feat_dim = 128;
  // Number of real tokens (the LM output width).
  std::size_t vocab_lm = 2048;
  TranscriptionConfig transcription;
  PredictionConfig prediction;
  JointConfig joint;

  std::size_t vocab_trans() const { return vocab_lm + 1; }
  std::size_t vocab_ctc() const { return vocab_trans(); }
  std::size_t transcription_dim() const { return transcription.d_model; }
  std::size_t prediction_dim() const { return prediction.lstm_cell; }
  // Encoder output length for `frames` input frames (two pooling stages).
  std::size_t OutputFrames(std::size_t frames) const;

  // Throws ShapeError describing the first violated constraint.
  void Validate() const;
};

// Recurrent state of every LSTM layer, each (1, lstm_cell).
struct PredictionState {
  std::vector<Array> h;
  std::vector<Array> c;
};

struct Model {
  ModelConfig config;
  ParamTree params;

  // Xavier-uniform matrices, zero biases, unit layer-norm gains and
  // N(0, 1/embed_dim) embeddings, all drawn from `seed`.
  static Model Create(const ModelConfig& config, std::uint64_t seed);
  // Adopts existing parameters after checking names and shapes.
  static Model FromParams(const ModelConfig& config, ParamTree params);
};

// Builds the networks of a Model on a tape. With a dropout generator the
// graph is in training mode; without one, dropout is the identity.
class ModelGraph {
 public:
  ModelGraph(Tape& tape, const Model& model, bool trainable = true,
             Rng* dropout_rng = nullptr);
  // Uses parameters already bound to `tape`, e.g. by a gradient check.
  ModelGraph(Tape& tape, const ModelConfig& config, BoundParams params,
             Rng* dropout_rng = nullptr);

  Tape& tape() const { return *tape_; }
  const ModelConfig& config() const { return *config_; }
  Var param(std::string_view name) const { return params_[name]; }
  const BoundParams& params() const { return params_; }

  // (T, feat_dim) -> (OutputFrames(T), cnn_head_out). Throws ShapeError
  // "utterance too short for downsampling" when T < pool_kernel^2.
  Var CnnHead(Var features);
  Var TransformerLayer(Var x, std::size_t layer);
  // Returns f: (T', D_TR).
  Var Transcription(const Array& features);

  struct PredictionOutput {
    Var g;  // (rows, D_PR)
    PredictionState state;
  };
  // Without an initial state the input is <start> followed by `tokens`, and
  // the output has tokens.size() + 1 rows. With one, only `tokens` are fed.
  PredictionOutput Prediction(std::span<const int> tokens,
                              const PredictionState* initial = nullptr);

  // (T, J) and (U1, J) projections combined into lattice log-probabilities
  // of shape (T, U1, D_trans).
  Var JointLogProbs(Var f, Var g);
  // Logits for a single (f_t, g_u) pair: (1, D_trans).
  Var JointLogits(Var f_row, Var g_row);
  // The joint network split at its linear projections, so decoders can
  // project each f_t and g_u once: f W_TR, g W_PR, and
  // tanh(a_i + b_j) W_o for every pair -> (rows(a) * rows(b), D_trans).
  Var ProjectTranscription(Var f);
  Var ProjectPrediction(Var g);
  Var JointFromProjections(Var a, Var b);

  Var CtcLogits(Var f);  // (T', D_CTC)
  Var LmLogits(Var g);   // (rows, D_LM)

 private:
  Var Lstm(std::size_t layer, Var inputs, Var& h, Var& c);

  Tape* tape_;
  const ModelConfig* config_;
  BoundParams params_;
  Rng* dropout_rng_;
};

// Convenience wrappers returning probability rows.
Array CtcClassifierForward(const Model& model, const Array& f);
Array LmClassifierForward(const Model& model, const Array& g);

// Checkpoint file: "STCK", u32 version = 1, then per leaf in tree order:
// u32 name length, UTF-8 name, u32 rank, u32 extents[rank], float64 payload.
void SaveParams(const std::filesystem::path& path, const ParamTree& params);
ParamTree LoadParams(const std::filesystem::path& path);

}  // namespace seqtrans

#endif  // SEQTRANS_NETWORKS_H_
