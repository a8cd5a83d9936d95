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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "seqtrans/cli.h"
#include "seqtrans/config.h"
#include "seqtrans/workspace.h"

namespace seqtrans {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run Cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> Listing(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    out.push_back(fs::relative(e.path(), dir).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / "seqtrans_cli_test") {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

// A model small enough to train in a second.
std::vector<std::string> Tiny(std::vector<std::string> args) {
  for (const char* a : {"--profile=desk", "--n_layers=1", "--d_model=16", "--cnn_head_out=16",
                        "--ffn_conv1_out=16", "--ffn_conv2_out=16", "--embed_dim=8",
                        "--lstm_layers=1", "--lstm_cell=16", "--joint_dim=16",
                        "--synth_utts=6", "--heldout_utts=3", "--epochs=2",
                        "--average_last=2", "--total_steps=0", "--warmup_steps=2"}) {
    args.push_back(a);
  }
  return args;
}

TEST_CASE("synth is deterministic and complete") {
  TempDir tmp;
  REQUIRE(Cli(Tiny({"synth", "--data_dir=" + (tmp / "a")})).code == kExitOk);
  REQUIRE(Cli(Tiny({"synth", "--data_dir=" + (tmp / "b")})).code == kExitOk);
  const auto files = Listing(tmp / "a");
  CHECK(files == Listing(tmp / "b"));
  for (const auto& f : files) {
    if (fs::is_regular_file(fs::path(tmp / "a") / f)) {
      CHECK_MESSAGE(Slurp(fs::path(tmp / "a") / f) == Slurp(fs::path(tmp / "b") / f), f);
    }
  }
  const DataDir data = ReadDataDir(tmp / "a");
  CHECK(data.train.utterances.size() == 6);
  CHECK(std::distance(fs::directory_iterator(fs::path(tmp / "a") / "train" / "feats"),
                      fs::directory_iterator{}) == 6);
  REQUIRE(data.heldout.has_value());
  CHECK(data.heldout->utterances.size() == 3);

  // A different seed, from the environment, changes the data.
  setenv("SEQTRANS_SEED", "99", 1);
  REQUIRE(Cli(Tiny({"synth", "--data_dir=" + (tmp / "c")})).code == kExitOk);
  REQUIRE(Cli(Tiny({"synth", "--data_dir=" + (tmp / "d"), "--seed=1"})).code == kExitOk);
  unsetenv("SEQTRANS_SEED");
  CHECK(Slurp(tmp / "c/train/transcripts.txt") != Slurp(tmp / "a/train/transcripts.txt"));
  // An explicit flag beats the environment.
  CHECK(Slurp(tmp / "d/train/transcripts.txt") == Slurp(tmp / "a/train/transcripts.txt"));
}

TEST_CASE("usage and data errors map to exit codes") {
  TempDir tmp;
  CHECK(Cli({}).code == kExitUsage);
  CHECK(Cli({"fly"}).code == kExitUsage);
  CHECK(Cli({"train", "--no_such_key=1"}).code == kExitUsage);
  CHECK(Cli({"train", "--n_layers=many"}).code == kExitUsage);
  CHECK(Cli({"train", "--profile=laptop"}).code == kExitUsage);
  CHECK(Cli({"--help"}).code == kExitOk);

  const Run missing = Cli({"train", "--profile=desk", "--data_dir=" + (tmp / "nope")});
  CHECK(missing.code == kExitData);
  CHECK(missing.err.find(tmp / "nope") != std::string::npos);
  CHECK(Cli({"decode", "--model_dir=" + (tmp / "nope")}).code == kExitData);
}

TEST_CASE("train, resume, decode and eval") {
  TempDir tmp;
  const std::string data = "--data_dir=" + (tmp / "data");
  const std::string model = "--model_dir=" + (tmp / "model");
  REQUIRE(Cli(Tiny({"synth", data})).code == kExitOk);
  const Run train = Cli(Tiny({"train", data, model}));
  REQUIRE_MESSAGE(train.code == kExitOk, train.err);
  for (const char* f : {"config.txt", "vocab.txt", "stats.json", "metrics.csv",
                        "averaged.stck", "epoch_2.stck", "optimizer.stck"}) {
    CHECK_MESSAGE(fs::exists(fs::path(tmp / "model") / f), f);
  }
  const RunConfig saved = RunConfig::Load(tmp / "model/config.txt");
  CHECK(saved.train.weights.ctc == 0.5);
  CHECK(saved.train.weights.transducer == 1.0);
  CHECK(saved.train.weights.lm == 1.0);

  // With the schedule pinned, resuming a finished run with more epochs
  // matches a run that went straight through.
  const std::string model2 = "--model_dir=" + (tmp / "model2");
  auto epochs = [](std::vector<std::string> a, const char* n) {
    a = Tiny(std::move(a));
    a.push_back(std::string("--epochs=") + n);
    a.push_back("--total_steps=6");
    return a;
  };
  REQUIRE(Cli(epochs({"train", data, model2}, "3")).code == kExitOk);
  REQUIRE(Cli(epochs({"train", data, model}, "2")).code == kExitOk);
  REQUIRE(Cli(epochs({"train", data, model, "--resume"}, "3")).code == kExitOk);
  CHECK(Slurp(tmp / "model/epoch_3.stck") == Slurp(tmp / "model2/epoch_3.stck"));

  // Decoding defaults: beam 20, weights {0, 1, 0.1}.
  CHECK(saved.decode.beam_size == 20);
  CHECK(saved.decode.weights.ctc == 0.0);
  CHECK(saved.decode.weights.transducer == 1.0);
  CHECK(saved.decode.weights.lm == 0.1);
  const Run dec = Cli({"decode", model, "--beam_size=3", "--output=" + (tmp / "h1.txt")});
  REQUIRE_MESSAGE(dec.code == kExitOk, dec.err);
  CHECK(dec.out.find("beta3 0.1") != std::string::npos);
  REQUIRE(Cli({"decode", model, "--beam_size=3", "--output=" + (tmp / "h2.txt")}).code == kExitOk);
  CHECK(Slurp(tmp / "h1.txt") == Slurp(tmp / "h2.txt"));
  const Run plain = Cli({"decode", model, "--beam_size=3", "--beta3=0", "--output=" + (tmp / "h3.txt")});
  CHECK(plain.out.find("beta3 0)") != std::string::npos);
  CHECK(ReadHypotheses(tmp / "h1.txt").size() == 3);

  const Run nbest = Cli({"decode", model, "--beam_size=3", "--nbest=2", "--split=train",
                         "--output=" + (tmp / "nbest.txt")});
  REQUIRE(nbest.code == kExitOk);
  CHECK(ReadHypotheses(tmp / "nbest.txt").size() == 6);

  // Eval: references against themselves score 0.
  const Run self = Cli({"eval", "--ref=" + (tmp / "data/heldout"),
                        "--hyp=" + (tmp / "data/heldout/transcripts.txt"), "--set=heldout",
                        "--report=" + (tmp / "r.tsv")});
  REQUIRE_MESSAGE(self.code == kExitOk, self.err);
  CHECK(self.out.find("heldout\t0\t") != std::string::npos);
  CHECK(ReadWerReport(tmp / "r.tsv").at(0).wer_percent == 0.0);

  // Mismatched ids are a data error.
  CHECK(Cli({"eval", "--ref=" + (tmp / "data/train"), "--hyp=" + (tmp / "h1.txt")}).code ==
        kExitData);
}

TEST_CASE("eval compares reports") {
  TempDir tmp;
  WriteWerReport(tmp / "base.tsv", std::vector<WerRow>{{"test-clean", 4.2}, {"test-other", 10.5}});
  WriteWerReport(tmp / "sys.tsv", std::vector<WerRow>{{"test-clean", 3.5}, {"test-other", 9.1}});
  const Run r = Cli({"eval", "--system=" + (tmp / "sys.tsv"), "--baseline=" + (tmp / "base.tsv")});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("test-clean\t4.20\t3.50\t16.67%") != std::string::npos);
  CHECK(r.out.find("test-other\t10.50\t9.10\t13.33%") != std::string::npos);
  CHECK(Cli({"eval"}).code == kExitUsage);
}

TEST_CASE("selftest catches a flipped loss sign") {
  const Run bad = Cli({"selftest", "--instances=20", "--corrupt-loss-sign"});
  CHECK(bad.code != kExitOk);
  CHECK(bad.out.find("FAIL ctc oracle") != std::string::npos);
  CHECK(bad.out.find("FAIL transducer oracle") != std::string::npos);
  CHECK(bad.out.find("FAIL loss gradients") != std::string::npos);
  CHECK(bad.out.find("FAIL beam vs exhaustive") != std::string::npos);
  const Run good = Cli({"selftest", "--instances=20"});
  CHECK(good.out.find("PASS ctc oracle") != std::string::npos);
  CHECK(good.out.find("PASS transducer oracle") != std::string::npos);
  CHECK(good.out.find("PASS loss gradients") != std::string::npos);
  CHECK(good.out.find("PASS beam vs exhaustive") != std::string::npos);
}

}  // namespace
}  // namespace seqtrans
