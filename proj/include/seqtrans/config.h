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

#ifndef SEQTRANS_CONFIG_H_
#define SEQTRANS_CONFIG_H_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "seqtrans/data.h"
#include "seqtrans/decoding.h"
#include "seqtrans/networks.h"
#include "seqtrans/training.h"

namespace seqtrans {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Everything a command needs, as one flat key=value table. Defaults are the
// full-scale recipe; the desk profile shrinks them.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  // Real-token count D_LM; 0 takes it from the data vocabulary.
  std::size_t vocab_size = 2048;
  std::string loss_preset = "ctc+lm";
  // Peak learning rate = lr_scale / sqrt(D_trans).
  double lr_scale = 1.0;
  ModelConfig model;
  TrainConfig train;
  BeamSearchOptions decode;
  SynthConfig synth;
  std::size_t heldout_utts = 20;
  std::string data_dir = "data";
  std::string model_dir = "model";
  std::string checkpoint = "averaged.stck";

  // Resolves the vocabulary size and derived learning rate and validates
  // every section.
  void Finalize(std::size_t data_vocab_lm);

  // Applies one "key=value" setting; throws ConfigError for unknown keys or
  // malformed values.
  void Set(std::string_view key, std::string_view value);
  // Normalized text: every key in table order, one per line.
  std::string ToText() const;
  static RunConfig Parse(std::string_view text);
  static RunConfig Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;

  static RunConfig Full() { return {}; }
  static RunConfig Desk();
  static RunConfig Profile(std::string_view name);
};

struct ConfigKey {
  std::string name;
  std::string help;
};
// All accepted keys, in normalized order.
const std::vector<ConfigKey>& ConfigKeys();

}  // namespace seqtrans

#endif  // SEQTRANS_CONFIG_H_
