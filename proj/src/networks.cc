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

#include "seqtrans/networks.h"

#include <array>
#include <cmath>
#include <fstream>
#include <string>

namespace seqtrans {
namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'S', 'T', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string Layer(std::size_t i) { return "enc.layer" + std::to_string(i); }

void AddXavier(ParamTree& p, const std::string& name, Shape shape,
               std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Array w(std::move(shape));
  for (double& v : w.values()) v = dist(rng);
  p.Add(name, std::move(w));
}

void AddMatrix(ParamTree& p, const std::string& name, std::size_t rows,
               std::size_t cols, Rng& rng) {
  AddXavier(p, name, {rows, cols}, rows, cols, rng);
}

void AddConv(ParamTree& p, const std::string& name, std::size_t kernel,
             std::size_t in, std::size_t out, Rng& rng) {
  AddXavier(p, name + ".w", {kernel, in, out}, kernel * in, kernel * out, rng);
  p.Add(name + ".b", Array({out}));
}

void AddLayerNorm(ParamTree& p, const std::string& name, std::size_t dim) {
  p.Add(name + ".gain", Array({dim}, 1.0));
  p.Add(name + ".bias", Array({dim}));
}

ParamTree InitParams(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  Rng rng(seed);
  ParamTree p;
  const auto& tc = cfg.transcription;
  const std::size_t d = tc.d_model;

  AddConv(p, "enc.head.conv0", tc.cnn_head_kernel, cfg.feat_dim,
          tc.cnn_head_out, rng);
  for (int i = 1; i < 4; ++i) {
    AddConv(p, "enc.head.conv" + std::to_string(i), tc.cnn_head_kernel,
            tc.cnn_head_out, tc.cnn_head_out, rng);
  }
  for (std::size_t l = 0; l < tc.n_layers; ++l) {
    const std::string base = Layer(l);
    for (const char* proj : {"q", "k", "v", "o"}) {
      AddMatrix(p, base + ".attn.w" + proj, d, d, rng);
      p.Add(base + ".attn.b" + proj, Array({d}));
    }
    AddLayerNorm(p, base + ".norm1", d);
    AddConv(p, base + ".ffn.conv1", tc.ffn_conv_kernel, d, tc.ffn_conv1_out,
            rng);
    AddConv(p, base + ".ffn.conv2", tc.ffn_conv_kernel, tc.ffn_conv1_out,
            tc.ffn_conv2_out, rng);
    AddLayerNorm(p, base + ".norm2", d);
  }

  const auto& pc = cfg.prediction;
  {
    // Row 0 is the <start> embedding; rows 1..vocab_lm embed real tokens.
    Array embed({cfg.vocab_trans(), pc.embed_dim});
    std::normal_distribution<double> dist(
        0.0, 1.0 / std::sqrt(static_cast<double>(pc.embed_dim)));
    for (double& v : embed.values()) v = dist(rng);
    p.Add("pred.embed", std::move(embed));
  }
  for (std::size_t l = 0; l < pc.lstm_layers; ++l) {
    const std::string base = "pred.lstm" + std::to_string(l);
    const std::size_t in = l == 0 ? pc.embed_dim : pc.lstm_cell;
    AddMatrix(p, base + ".wx", in, 4 * pc.lstm_cell, rng);
    AddMatrix(p, base + ".wh", pc.lstm_cell, 4 * pc.lstm_cell, rng);
    p.Add(base + ".b", Array({4 * pc.lstm_cell}));
  }

  AddMatrix(p, "joint.w_tr", cfg.transcription_dim(), cfg.joint.joint_dim, rng);
  AddMatrix(p, "joint.w_pr", cfg.prediction_dim(), cfg.joint.joint_dim, rng);
  AddMatrix(p, "joint.w_o", cfg.joint.joint_dim, cfg.vocab_trans(), rng);
  AddMatrix(p, "ctc.w", cfg.transcription_dim(), cfg.vocab_ctc(), rng);
  AddMatrix(p, "lm.w", cfg.prediction_dim(), cfg.vocab_lm, rng);
  return p;
}

void WriteU32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

bool ReadU32(std::istream& in, std::uint32_t& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return in.gcount() == sizeof(v);
}

}  // namespace

std::size_t ModelConfig::OutputFrames(std::size_t frames) const {
  const std::size_t k = transcription.pool_kernel;
  return frames / k / k;
}

void ModelConfig::Validate() const {
  const auto& tc = transcription;
  auto fail = [](const std::string& msg) { throw ShapeError(msg); };
  if (feat_dim == 0) fail("feat_dim must be positive");
  if (vocab_lm == 0) fail("vocabulary has no real tokens");
  if (tc.d_model == 0 || tc.n_heads == 0 || tc.d_model % tc.n_heads != 0) {
    fail("d_model " + std::to_string(tc.d_model) +
         " must be divisible by n_heads " + std::to_string(tc.n_heads));
  }
  if (tc.ffn_conv2_out != tc.d_model) {
    fail("ffn_conv2_out " + std::to_string(tc.ffn_conv2_out) +
         " must equal d_model " + std::to_string(tc.d_model));
  }
  if (tc.cnn_head_out != tc.d_model) {
    fail("cnn_head_out " + std::to_string(tc.cnn_head_out) +
         " must equal d_model " + std::to_string(tc.d_model));
  }
  if (tc.cnn_head_kernel % 2 == 0 || tc.ffn_conv_kernel % 2 == 0) {
    fail("convolution kernels must be odd");
  }
  if (tc.pool_kernel == 0) fail("pool_kernel must be positive");
  if (tc.ffn_conv1_out == 0) fail("ffn_conv1_out must be positive");
  if (prediction.lstm_layers == 0) fail("lstm_layers must be at least 1");
  if (prediction.embed_dim == 0 || prediction.lstm_cell == 0) {
    fail("prediction network dims must be positive");
  }
  if (joint.joint_dim == 0) fail("joint_dim must be positive");
  if (tc.dropout < 0.0 || tc.dropout >= 1.0 || prediction.dropout < 0.0 ||
      prediction.dropout >= 1.0) {
    fail("dropout rates must be in [0, 1)");
  }
}

Model Model::Create(const ModelConfig& config, std::uint64_t seed) {
  return {config, InitParams(config, seed)};
}

Model Model::FromParams(const ModelConfig& config, ParamTree params) {
  const ParamTree expected = InitParams(config, 0);
  if (!expected.SameStructure(params)) {
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i >= params.size() || params.leaf(i).name != expected.leaf(i).name ||
          params.leaf(i).value.shape() != expected.leaf(i).value.shape()) {
        throw ShapeError(
            "parameters do not match the model configuration at leaf '" +
            expected.leaf(i).name + "' " +
            ShapeToString(expected.leaf(i).value.shape()));
      }
    }
    throw ShapeError("parameters have extra leaves beyond the configuration");
  }
  return {config, std::move(params)};
}

// ---------------------------------------------------------------------------
// ModelGraph

ModelGraph::ModelGraph(Tape& tape, const Model& model, bool trainable,
                       Rng* dropout_rng)
    : tape_(&tape),
      config_(&model.config),
      params_(tape.Bind(model.params, trainable)),
      dropout_rng_(dropout_rng) {}

ModelGraph::ModelGraph(Tape& tape, const ModelConfig& config,
                       BoundParams params, Rng* dropout_rng)
    : tape_(&tape),
      config_(&config),
      params_(std::move(params)),
      dropout_rng_(dropout_rng) {}

Var ModelGraph::CnnHead(Var features) {
  const auto& tc = config().transcription;
  const std::size_t frames = features.value().rows();
  if (features.value().rank() != 2 || features.value().cols() != config().feat_dim) {
    throw ShapeError("features of shape " + ShapeToString(features.shape()) +
                     " do not match feat_dim " +
                     std::to_string(config().feat_dim));
  }
  if (frames < tc.pool_kernel * tc.pool_kernel) {
    throw ShapeError("utterance too short for downsampling: " +
                     std::to_string(frames) + " frames");
  }
  auto conv = [&](Var x, int i) {
    const std::string name = "enc.head.conv" + std::to_string(i);
    return Relu(Conv1d(x, param(name + ".w"), param(name + ".b")));
  };
  Var x = conv(conv(features, 0), 1);
  x = AvgPool1d(x, tc.pool_kernel);
  x = conv(conv(x, 2), 3);
  return AvgPool1d(x, tc.pool_kernel);
}

Var ModelGraph::TransformerLayer(Var x, std::size_t layer) {
  const auto& tc = config().transcription;
  const std::string base = Layer(layer);
  auto proj = [&](Var in, const char* which) {
    return AddRowVector(MatMul(in, param(base + ".attn.w" + which)),
                        param(base + ".attn.b" + which));
  };
  const std::size_t head_dim = tc.d_model / tc.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Var q = proj(x, "q"), k = proj(x, "k"), v = proj(x, "v");
  std::vector<Var> heads;
  heads.reserve(tc.n_heads);
  for (std::size_t h = 0; h < tc.n_heads; ++h) {
    Var qh = SliceCols(q, h * head_dim, head_dim);
    Var kh = SliceCols(k, h * head_dim, head_dim);
    Var vh = SliceCols(v, h * head_dim, head_dim);
    Var weights = Softmax(Scale(MatMul(qh, Transpose(kh)), scale));
    heads.push_back(MatMul(weights, vh));
  }
  Var attended = proj(tc.n_heads == 1 ? heads[0] : ConcatCols(heads), "o");
  Var x1 = LayerNorm(Add(x, Dropout(attended, tc.dropout, dropout_rng_)),
                     param(base + ".norm1.gain"), param(base + ".norm1.bias"));
  Var ffn = Relu(Conv1d(x1, param(base + ".ffn.conv1.w"),
                        param(base + ".ffn.conv1.b")));
  ffn = Conv1d(ffn, param(base + ".ffn.conv2.w"), param(base + ".ffn.conv2.b"));
  return LayerNorm(Add(x1, Dropout(ffn, tc.dropout, dropout_rng_)),
                   param(base + ".norm2.gain"), param(base + ".norm2.bias"));
}

Var ModelGraph::Transcription(const Array& features) {
  Var x = CnnHead(tape_->Constant(features));
  for (std::size_t l = 0; l < config().transcription.n_layers; ++l) {
    x = TransformerLayer(x, l);
  }
  return x;
}

Var ModelGraph::Lstm(std::size_t layer, Var x, Var& h, Var& c) {
  const std::string base = "pred.lstm" + std::to_string(layer);
  const std::size_t cell = config().prediction.lstm_cell;
  Var gates = AddRowVector(Add(MatMul(x, param(base + ".wx")),
                               MatMul(h, param(base + ".wh"))),
                           param(base + ".b"));
  Var in_gate = Sigmoid(SliceCols(gates, 0, cell));
  Var forget = Sigmoid(SliceCols(gates, cell, cell));
  Var candidate = Tanh(SliceCols(gates, 2 * cell, cell));
  Var out_gate = Sigmoid(SliceCols(gates, 3 * cell, cell));
  c = Add(Mul(forget, c), Mul(in_gate, candidate));
  h = Mul(out_gate, Tanh(c));
  return h;
}

ModelGraph::PredictionOutput ModelGraph::Prediction(
    std::span<const int> tokens, const PredictionState* initial) {
  const auto& pc = config().prediction;
  std::vector<int> inputs;
  if (initial == nullptr) inputs.push_back(0);
  for (int y : tokens) {
    if (y <= 0 || static_cast<std::size_t>(y) > config().vocab_lm) {
      throw std::invalid_argument(
          "prediction network input id " + std::to_string(y) +
          " is not a real token (blank or out of range)");
    }
    inputs.push_back(y);
  }
  if (inputs.empty()) {
    throw std::invalid_argument("prediction network called with no input");
  }

  std::vector<Var> h, c;
  for (std::size_t l = 0; l < pc.lstm_layers; ++l) {
    if (initial != nullptr) {
      h.push_back(tape_->Constant(initial->h.at(l)));
      c.push_back(tape_->Constant(initial->c.at(l)));
    } else {
      h.push_back(tape_->Constant(Array({1, pc.lstm_cell})));
      c.push_back(tape_->Constant(Array({1, pc.lstm_cell})));
    }
  }

  Var embedded = EmbeddingLookup(param("pred.embed"), inputs);
  std::vector<Var> rows;
  rows.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Var x = SliceRows(embedded, i, 1);
    for (std::size_t l = 0; l < pc.lstm_layers; ++l) {
      x = Lstm(l, Dropout(x, pc.dropout, dropout_rng_), h[l], c[l]);
    }
    rows.push_back(x);
  }

  PredictionOutput out{rows.size() == 1 ? rows[0] : ConcatRows(rows), {}};
  for (std::size_t l = 0; l < pc.lstm_layers; ++l) {
    out.state.h.push_back(h[l].value());
    out.state.c.push_back(c[l].value());
  }
  return out;
}

Var ModelGraph::ProjectTranscription(Var f) {
  return MatMul(f, param("joint.w_tr"));
}

Var ModelGraph::ProjectPrediction(Var g) {
  return MatMul(g, param("joint.w_pr"));
}

Var ModelGraph::JointFromProjections(Var a, Var b) {
  return MatMul(Tanh(PairwiseAdd(a, b)), param("joint.w_o"));
}

Var ModelGraph::JointLogProbs(Var f, Var g) {
  Var logits =
      JointFromProjections(ProjectTranscription(f), ProjectPrediction(g));
  return Reshape(LogSoftmax(logits),
                 {f.value().rows(), g.value().rows(), config().vocab_trans()});
}

Var ModelGraph::JointLogits(Var f_row, Var g_row) {
  return JointFromProjections(ProjectTranscription(f_row),
                              ProjectPrediction(g_row));
}

Var ModelGraph::CtcLogits(Var f) { return MatMul(f, param("ctc.w")); }

Var ModelGraph::LmLogits(Var g) { return MatMul(g, param("lm.w")); }

Array CtcClassifierForward(const Model& model, const Array& f) {
  Tape tape;
  ModelGraph graph(tape, model, false);
  return Softmax(graph.CtcLogits(tape.Constant(f))).value();
}

Array LmClassifierForward(const Model& model, const Array& g) {
  Tape tape;
  ModelGraph graph(tape, model, false);
  return Softmax(graph.LmLogits(tape.Constant(g))).value();
}

// ---------------------------------------------------------------------------
// Checkpoints

void SaveParams(const std::filesystem::path& path, const ParamTree& params) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  WriteU32(out, kCheckpointVersion);
  for (const auto& leaf : params) {
    WriteU32(out, static_cast<std::uint32_t>(leaf.name.size()));
    out.write(leaf.name.data(), static_cast<std::streamsize>(leaf.name.size()));
    WriteU32(out, static_cast<std::uint32_t>(leaf.value.rank()));
    for (std::size_t e : leaf.value.shape()) {
      WriteU32(out, static_cast<std::uint32_t>(e));
    }
    out.write(reinterpret_cast<const char*>(leaf.value.data()),
              static_cast<std::streamsize>(leaf.value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ParamTree LoadParams(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& what) {
    return std::runtime_error("checkpoint " + path.string() + ": " + what);
  };
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kCheckpointMagic) throw fail("bad magic");
  std::uint32_t version = 0;
  if (!ReadU32(in, version) || version != kCheckpointVersion) {
    throw fail("unsupported version");
  }
  ParamTree params;
  std::uint32_t name_len = 0;
  while (ReadU32(in, name_len)) {
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rank = 0;
    if (static_cast<std::uint32_t>(in.gcount()) != name_len ||
        !ReadU32(in, rank)) {
      throw fail("truncated leaf header");
    }
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint32_t v = 0;
      if (!ReadU32(in, v)) throw fail("truncated extents of '" + name + "'");
      e = v;
    }
    Array value(shape);
    in.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != value.size() * sizeof(double)) {
      throw fail("truncated payload of '" + name + "'");
    }
    params.Add(std::move(name), std::move(value));
  }
  if (in.gcount() != 0) throw fail("trailing bytes");
  return params;
}

}  // namespace seqtrans
