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

#include <doctest.h>

#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "seqtrans/config.h"

namespace seqtrans {
namespace {

std::map<std::string, std::string> AsMap(const RunConfig& config) {
  std::map<std::string, std::string> out;
  std::istringstream in(config.ToText());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

TEST_CASE("full-scale defaults, one row at a time") {
  const auto m = AsMap(RunConfig::Full());
  // Transcription network.
  CHECK(m.at("cnn_head_out") == "512");
  CHECK(m.at("cnn_head_kernel") == "3");
  CHECK(m.at("pool_kernel") == "2");
  CHECK(m.at("n_layers") == "15");
  CHECK(m.at("d_model") == "512");
  CHECK(m.at("n_heads") == "8");
  CHECK(m.at("ffn_conv_kernel") == "3");
  CHECK(m.at("ffn_conv1_out") == "2048");
  CHECK(m.at("ffn_conv2_out") == "512");
  CHECK(m.at("enc_dropout") == "0.1");
  // Prediction and joint networks.
  CHECK(m.at("vocab_size") == "2048");
  CHECK(m.at("embed_dim") == "256");
  CHECK(m.at("lstm_layers") == "2");
  CHECK(m.at("lstm_cell") == "1024");
  CHECK(m.at("pred_dropout") == "0.1");
  CHECK(m.at("joint_dim") == "1024");
  // Training recipe.
  CHECK(m.at("feat_dim") == "128");
  CHECK(m.at("time_warp") == "5");
  CHECK(m.at("freq_mask") == "32");
  CHECK(m.at("freq_masks") == "2");
  CHECK(m.at("time_mask") == "40");
  CHECK(m.at("time_masks") == "2");
  CHECK(m.at("adam_beta1") == "0.9");
  CHECK(m.at("adam_beta2") == "0.98");
  CHECK(m.at("adam_eps") == "1e-09");
  CHECK(m.at("warmup_steps") == "25000");
  CHECK(m.at("lr_scale") == "1");
  CHECK(m.at("grad_clip") == "5");
  CHECK(m.at("epochs") == "130");
  CHECK(m.at("average_last") == "15");
  CHECK(m.at("loss_preset") == "ctc+lm");
  CHECK(m.at("alpha_ctc") == "0.5");
  CHECK(m.at("alpha_trans") == "1");
  CHECK(m.at("alpha_lm") == "1");
  // Decoding.
  CHECK(m.at("beam_size") == "20");
  CHECK(m.at("beta1") == "0");
  CHECK(m.at("beta2") == "1");
  CHECK(m.at("beta3") == "0.1");

  RunConfig full = RunConfig::Full();
  full.Finalize(2048);
  CHECK(full.model.vocab_trans() == 2049);
  CHECK(full.train.adam.peak_lr == doctest::Approx(0.02209).epsilon(1e-3));
}

TEST_CASE("every key is listed and round-trips") {
  const auto m = AsMap(RunConfig::Full());
  CHECK(m.size() == ConfigKeys().size());
  for (const RunConfig& c : {RunConfig::Full(), RunConfig::Desk()}) {
    const std::string text = c.ToText();
    CHECK(RunConfig::Parse(text).ToText() == text);
  }
  RunConfig c = RunConfig::Desk();
  c.Set("beta3", "0.25");
  c.Set("data_dir", "/tmp/x y");
  CHECK(RunConfig::Parse(c.ToText()).ToText() == c.ToText());

  const auto path = std::filesystem::temp_directory_path() / "seqtrans_config_test.txt";
  c.Save(path);
  CHECK(RunConfig::Load(path).ToText() == c.ToText());
  std::filesystem::remove(path);
}

TEST_CASE("bad keys and values are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(c.Set("n_layer", "3"), ConfigError);
  CHECK_THROWS_AS(c.Set("n_layers", "three"), ConfigError);
  CHECK_THROWS_AS(c.Set("n_layers", "-1"), ConfigError);
  CHECK_THROWS_AS(c.Set("beta3", ""), ConfigError);
  CHECK_THROWS_AS(c.Set("spec_augment", "maybe"), ConfigError);
  CHECK_THROWS_AS(c.Set("loss_preset", "everything"), ConfigError);
  CHECK_THROWS_AS(RunConfig::Parse("seed=1\nunknown=2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::Profile("laptop"), ConfigError);

  RunConfig bad = RunConfig::Desk();
  bad.Set("beta1", "0.3");
  CHECK_THROWS_AS(bad.Finalize(10), ConfigError);
  RunConfig mismatch = RunConfig::Full();
  CHECK_THROWS_AS(mismatch.Finalize(10), ConfigError);
}

TEST_CASE("loss presets set the weights; later keys win") {
  RunConfig c;
  c.Set("loss_preset", "lm");
  CHECK(c.train.weights.ctc == 0.0);
  CHECK(c.train.weights.transducer == 1.0);
  CHECK(c.train.weights.lm == 1.0);
  c.Set("loss_preset", "ctc+lm");
  CHECK(c.train.weights.ctc == 0.5);
  CHECK(c.train.weights.transducer == 1.0);
  CHECK(c.train.weights.lm == 1.0);
  c.Set("loss_preset", "ctc");
  CHECK(c.train.weights.transducer == 0.1);
  c.Set("alpha_trans", "0.7");
  CHECK(c.train.weights.transducer == 0.7);
}

TEST_CASE("desk profile") {
  RunConfig c = RunConfig::Desk();
  c.Finalize(10);
  CHECK(c.model.transcription.n_layers == 2);
  CHECK(c.model.transcription.d_model == 64);
  CHECK(c.model.transcription.n_heads == 2);
  CHECK(c.model.prediction.lstm_cell == 128);
  CHECK(c.model.joint.joint_dim == 128);
  CHECK(c.train.adam.warmup_steps == 200);
  CHECK(c.train.adam.total_steps == 2000);
  CHECK(c.model.vocab_trans() == 11);
}

}  // namespace
}  // namespace seqtrans
