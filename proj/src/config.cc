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

#include "seqtrans/config.h"

#include <charconv>
#include <fstream>
#include <sstream>
#include <type_traits>
#include <variant>

namespace seqtrans {
namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>,
              "seed and size fields share one parser");
using FieldPtr = std::variant<std::size_t*, double*, bool*, std::string*>;

struct Field {
  const char* name;
  const char* help;
  FieldPtr ptr;
};

std::vector<Field> Fields(RunConfig& c) {
  auto& tc = c.model.transcription;
  auto& pc = c.model.prediction;
  auto& t = c.train;
  auto& d = c.decode;
  auto& s = c.synth;
  return {
      {"seed", "base random seed", &c.seed},
      {"workers", "threads for per-utterance work", &c.workers},
      {"feat_dim", "feature dimension D_feat", &c.model.feat_dim},
      {"vocab_size", "real tokens D_LM (0 = from data)", &c.vocab_size},
      {"cnn_head_out", "CNN head output channels", &tc.cnn_head_out},
      {"cnn_head_kernel", "CNN head kernel", &tc.cnn_head_kernel},
      {"pool_kernel", "average pooling kernel and stride", &tc.pool_kernel},
      {"n_layers", "transformer encoder layers", &tc.n_layers},
      {"d_model", "transformer width", &tc.d_model},
      {"n_heads", "attention heads", &tc.n_heads},
      {"ffn_conv_kernel", "feed-forward convolution kernel", &tc.ffn_conv_kernel},
      {"ffn_conv1_out", "first feed-forward convolution width", &tc.ffn_conv1_out},
      {"ffn_conv2_out", "second feed-forward convolution width", &tc.ffn_conv2_out},
      {"enc_dropout", "transcription network dropout", &tc.dropout},
      {"embed_dim", "prediction network embedding size", &pc.embed_dim},
      {"lstm_layers", "prediction network LSTM layers", &pc.lstm_layers},
      {"lstm_cell", "LSTM cell size", &pc.lstm_cell},
      {"pred_dropout", "prediction network dropout", &pc.dropout},
      {"joint_dim", "joint network size D_J", &c.model.joint.joint_dim},
      {"loss_preset", "baseline | ctc | lm | ctc+lm | ctc_fixed (sets alphas)",
       &c.loss_preset},
      {"alpha_ctc", "CTC loss weight", &t.weights.ctc},
      {"alpha_trans", "transducer loss weight", &t.weights.transducer},
      {"alpha_lm", "LM loss weight", &t.weights.lm},
      {"grad_clip", "max global gradient norm", &t.grad_clip},
      {"epochs", "training epochs", &t.epochs},
      {"average_last", "checkpoints averaged at the end", &t.average_last},
      {"speech_batch", "utterances per update", &t.speech_batch},
      {"text_batch", "text sentences per update", &t.text_batch},
      {"adam_beta1", "Adam beta1", &t.adam.beta1},
      {"adam_beta2", "Adam beta2", &t.adam.beta2},
      {"adam_eps", "Adam epsilon", &t.adam.eps},
      {"warmup_steps", "learning-rate warmup steps", &t.adam.warmup_steps},
      {"total_steps", "last step of the linear decay (0 = epochs)", &t.adam.total_steps},
      {"lr_scale", "peak lr = lr_scale / sqrt(D_trans)", &c.lr_scale},
      {"max_diverged_steps", "consecutive skipped steps before abort",
       &t.max_diverged_steps},
      {"spec_augment", "apply SpecAugment during training", &t.spec_augment},
      {"time_warp", "SpecAugment W", &t.augment.time_warp},
      {"freq_mask", "SpecAugment F", &t.augment.freq_mask},
      {"freq_masks", "SpecAugment m_F", &t.augment.freq_masks},
      {"time_mask", "SpecAugment T", &t.augment.time_mask},
      {"time_masks", "SpecAugment m_T", &t.augment.time_masks},
      {"beam_size", "decoder beam", &d.beam_size},
      {"beta1", "decode CTC weight (must be 0)", &d.weights.ctc},
      {"beta2", "decode transducer weight", &d.weights.transducer},
      {"beta3", "decode LM weight", &d.weights.lm},
      {"max_symbols_per_frame", "label emissions per frame (0 = beam)",
       &d.max_symbols_per_frame},
      {"nbest", "hypotheses written per utterance (0 = 1)", &d.nbest},
      {"synth_utts", "synthetic training utterances", &s.n_utts},
      {"synth_letters", "synthetic alphabet size", &s.letters},
      {"synth_lexicon", "synthetic lexicon size", &s.lexicon_size},
      {"frames_per_token", "synthetic frames per token", &s.frames_per_token},
      {"silence_frames", "synthetic leading/trailing silence", &s.silence_frames},
      {"synth_noise", "synthetic feature noise", &s.noise},
      {"extra_sentences", "text-only sentences beyond transcripts", &s.extra_sentences},
      {"heldout_utts", "synthetic held-out utterances", &c.heldout_utts},
      {"data_dir", "dataset directory", &c.data_dir},
      {"model_dir", "training output / model directory", &c.model_dir},
      {"checkpoint", "checkpoint file inside model_dir", &c.checkpoint},
  };
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view text) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("bad value '" + std::string(text) + "' for key '" +
                      std::string(key) + "'");
  }
  return value;
}

std::string FormatDouble(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& ConfigKeys() {
  static const std::vector<ConfigKey> keys = [] {
    RunConfig c;
    std::vector<ConfigKey> out;
    for (const auto& f : Fields(c)) out.push_back({f.name, f.help});
    return out;
  }();
  return keys;
}

void RunConfig::Set(std::string_view key, std::string_view value) {
  value = Trim(value);
  for (const auto& f : Fields(*this)) {
    if (key != f.name) continue;
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::string>) {
            *p = std::string(value);
          } else if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1") {
              *p = true;
            } else if (value == "false" || value == "0") {
              *p = false;
            } else {
              throw ConfigError("bad boolean '" + std::string(value) +
                                "' for key '" + std::string(key) + "'");
            }
          } else {
            *p = ParseNumber<T>(key, value);
          }
        },
        f.ptr);
    if (key == "loss_preset") {
      try {
        train.weights = LossWeights::FromPreset(loss_preset);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    return;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string RunConfig::ToText() const {
  std::ostringstream out;
  for (const auto& f : Fields(const_cast<RunConfig&>(*this))) {
    out << f.name << '=';
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>) {
            out << FormatDouble(*p);
          } else if constexpr (std::is_same_v<T, bool>) {
            out << (*p ? "true" : "false");
          } else {
            out << *p;
          }
        },
        f.ptr);
    out << '\n';
  }
  return out.str();
}

RunConfig RunConfig::Parse(std::string_view text) {
  RunConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    c.Set(Trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

RunConfig RunConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return Parse(buf.str());
}

void RunConfig::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << ToText();
}

void RunConfig::Finalize(std::size_t data_vocab_lm) {
  if (vocab_size == 0) vocab_size = data_vocab_lm;
  if (data_vocab_lm != 0 && vocab_size != data_vocab_lm) {
    throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                      " does not match the data vocabulary (" +
                      std::to_string(data_vocab_lm) + " tokens)");
  }
  model.vocab_lm = vocab_size;
  train.seed = seed;
  train.workers = workers;
  train.adam.peak_lr = PeakLearningRate(model.vocab_trans(), lr_scale);
  try {
    model.Validate();
    train.Validate();
    decode.weights.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (decode.beam_size == 0) throw ConfigError("beam_size must be >= 1");
}

RunConfig RunConfig::Desk() {
  RunConfig c;
  c.Set("vocab_size", "0");
  c.Set("feat_dim", "20");
  auto& tc = c.model.transcription;
  tc.n_layers = 2;
  tc.d_model = tc.cnn_head_out = tc.ffn_conv2_out = 64;
  tc.n_heads = 2;
  tc.ffn_conv1_out = 128;
  c.model.prediction.embed_dim = 32;
  c.model.prediction.lstm_cell = 128;
  c.model.joint.joint_dim = 128;
  c.train.adam.warmup_steps = 200;
  c.train.adam.total_steps = 2000;
  c.train.speech_batch = 5;
  c.train.text_batch = 8;
  c.train.epochs = 200;  // 10 updates per epoch over 50 utterances
  c.train.average_last = 15;
  c.lr_scale = 0.03;
  // Synthetic tokens last 8 frames; a mask that can hide a whole token teaches
  // the model to emit it late, next to its neighbour.
  c.train.augment = {2, 4, 1, 4, 1};
  c.synth.feat_dim = 20;
  return c;
}

RunConfig RunConfig::Profile(std::string_view name) {
  if (name == "full") return Full();
  if (name == "desk") return Desk();
  throw ConfigError("unknown profile '" + std::string(name) + "' (full, desk)");
}

}  // namespace seqtrans
