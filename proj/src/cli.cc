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

#include "seqtrans/cli.h"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "seqtrans/config.h"
#include "seqtrans/selftest.h"
#include "seqtrans/workspace.h"

namespace seqtrans {
namespace {

namespace fs = std::filesystem;

// Settings in the order they were layered: profile, config file, flags.
struct ConfigSources {
  std::string profile = "full";
  std::string config_file;
  std::map<std::string, std::string> flags;

  void Register(CLI::App& app) {
    app.add_option("--profile", profile, "base settings: full | desk")
        ->capture_default_str();
    app.add_option("--config", config_file, "key=value file applied over the profile");
    for (const ConfigKey& key : ConfigKeys()) {
      app.add_option("--" + key.name, flags[key.name], key.help)
          ->group("Config keys")
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  // `base` replaces the profile when given (decode starts from the trained
  // model's config).
  RunConfig Resolve(const RunConfig* base = nullptr) const {
    RunConfig config = base != nullptr ? *base : RunConfig::Profile(profile);
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw ConfigError("cannot read config file " + config_file);
      std::ostringstream text;
      text << in.rdbuf();
      std::istringstream lines(text.str());
      std::string line;
      while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value: " + line);
        config.Set(line.substr(0, eq), line.substr(eq + 1));
      }
    }
    bool seed_flag = false;
    // Table order puts loss_preset before the alphas, so explicit alphas win.
    for (const ConfigKey& key : ConfigKeys()) {
      const std::string& value = flags.at(key.name);
      if (value.empty()) continue;
      config.Set(key.name, value);
      seed_flag |= key.name == "seed";
    }
    if (const char* env = std::getenv("SEQTRANS_SEED"); env != nullptr && !seed_flag) {
      config.Set("seed", env);
    }
    return config;
  }
};

int Synth(const ConfigSources& sources, std::ostream& out) {
  RunConfig config = sources.Resolve();
  config.synth.seed = config.seed;
  config.synth.feat_dim = config.model.feat_dim;
  WriteSynthDataDir(config.data_dir, config.synth, config.heldout_utts);
  out << "wrote " << config.synth.n_utts << " training and " << config.heldout_utts
      << " held-out utterances to " << config.data_dir << "\n";
  return kExitOk;
}

void CheckFeatureDim(const RunConfig& config, const DataDir& data) {
  const std::size_t dim = data.stats.mean.size();
  if (dim != config.model.feat_dim) {
    throw ConfigError("feat_dim is " + std::to_string(config.model.feat_dim) +
                      " but the data has " + std::to_string(dim) + " feature channels");
  }
}

int Train(const ConfigSources& sources, bool resume, std::ostream& out) {
  RunConfig config = sources.Resolve();
  const DataDir data = ReadDataDir(config.data_dir);
  config.Finalize(data.vocab.size_lm());
  CheckFeatureDim(config, data);
  const fs::path dir = config.model_dir;
  fs::create_directories(dir);
  config.Save(dir / "config.txt");
  data.vocab.Save(dir / "vocab.txt");
  data.stats.Save(dir / "stats.json");

  std::vector<Utterance> speech = data.train.utterances;
  for (Utterance& u : speech) data.stats.Apply(u.features);
  TrainingCallbacks callbacks;
  MetricsRecord last;
  callbacks.on_step = [&](const MetricsRecord& r) { last = r; };
  callbacks.on_epoch = [&](std::size_t epoch, const Model&) {
    out << "epoch " << epoch << " step " << last.step << " loss " << last.total << "\n";
  };
  const TrainingResult result =
      RunTraining(config.model, config.train, speech, data.text, dir, resume, callbacks);
  out << "trained " << result.steps << " steps (" << result.skipped_steps
      << " skipped); averaged model in " << (dir / "averaged.stck").string() << "\n";
  return kExitOk;
}

struct DecodeArgs {
  std::string split;
  std::string input;
  std::string output;
};

int Decode(const ConfigSources& sources, const DecodeArgs& args, std::ostream& out) {
  RunConfig config = sources.Resolve();
  const fs::path dir = config.model_dir;
  if (!fs::exists(dir / "config.txt")) {
    throw DataError("no trained model in " + dir.string() + " (missing config.txt)");
  }
  const RunConfig trained = RunConfig::Load(dir / "config.txt");
  config = sources.Resolve(&trained);
  const Vocabulary vocab = Vocabulary::Load(dir / "vocab.txt");
  config.Finalize(vocab.size_lm());
  const FeatureStats stats = FeatureStats::Load(dir / "stats.json");
  const Model model{config.model, LoadParams(dir / config.checkpoint)};
  Model::FromParams(config.model, model.params);  // validates leaf shapes

  fs::path input = args.input;
  std::string name = args.split;
  if (input.empty()) {
    if (name.empty()) {
      name = fs::exists(fs::path(config.data_dir) / "heldout") ? "heldout" : "train";
    }
    input = fs::path(config.data_dir) / name;
  } else if (name.empty()) {
    name = input.filename().string();
  }
  const Split split = ReadSplit(input, vocab);
  const auto decoded =
      DecodeUtterances(model, stats, split.utterances, config.decode, config.workers);
  const fs::path output = args.output.empty() ? dir / ("hyp_" + name + ".txt") : fs::path(args.output);
  WriteHypotheses(output, decoded, vocab, config.decode.nbest > 1);
  out << "decoded " << decoded.size() << " utterances (beam " << config.decode.beam_size
      << ", beta3 " << config.decode.weights.lm << ") to " << output.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ref;
  std::string hyp;
  std::string set = "test";
  std::string report;
  std::string system;
  std::string baseline;
};

int Eval(const EvalArgs& args, std::ostream& out) {
  std::vector<WerRow> rows;
  if (!args.ref.empty() || !args.hyp.empty()) {
    if (args.ref.empty() || args.hyp.empty()) throw ConfigError("--ref and --hyp go together");
    fs::path ref = args.ref;
    if (fs::is_directory(ref)) ref /= "transcripts.txt";
    const ErrorCounts counts = CorpusErrors(ReadTranscripts(ref), ReadHypotheses(args.hyp));
    rows.push_back({args.set, 100.0 * counts.rate()});
    out << "set\twer_percent\n";
    out << args.set << "\t" << rows.back().wer_percent << "\t(" << counts.edits << "/"
        << counts.reference_words << ")\n";
    if (!args.report.empty()) WriteWerReport(args.report, rows);
  } else if (!args.system.empty()) {
    rows = ReadWerReport(args.system);
  } else {
    throw ConfigError("eval needs --ref/--hyp or --system");
  }
  if (!args.baseline.empty()) out << CompareWerReports(ReadWerReport(args.baseline), rows);
  return kExitOk;
}

int SelfTest(const ConfigSources& sources, std::size_t instances, bool corrupt,
             std::ostream& out) {
  const RunConfig config = sources.Resolve();
  SelfTestOptions options;
  options.seed = config.seed;
  options.instances = instances;
  options.corrupt = corrupt;
  bool ok = true;
  for (const SuiteResult& r : RunSelfTest(options)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << " ["
        << r.seconds << " s]\n";
    ok &= r.passed;
  }
  return ok ? kExitOk : kExitUsage;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"seq-transducer toolkit", "seqtrans"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every command");

  ConfigSources synth_src, train_src, decode_src, selftest_src;
  CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset to data_dir");
  synth_src.Register(*synth);

  CLI::App* train = app.add_subcommand("train", "train on data_dir, writing model_dir");
  train_src.Register(*train);
  bool resume = false;
  train->add_flag("--resume", resume, "continue from the last epoch checkpoint");

  CLI::App* decode = app.add_subcommand("decode", "beam-search a split with a trained model");
  decode_src.Register(*decode);
  DecodeArgs decode_args;
  decode->add_option("--split", decode_args.split, "split under data_dir (default heldout)");
  decode->add_option("--input", decode_args.input, "split directory, overrides --split");
  decode->add_option("--output", decode_args.output, "hypothesis file");

  CLI::App* eval = app.add_subcommand("eval", "score hypotheses and compare WER reports");
  EvalArgs eval_args;
  eval->add_option("--ref", eval_args.ref, "reference transcripts (file or split dir)");
  eval->add_option("--hyp", eval_args.hyp, "decoder output");
  eval->add_option("--set", eval_args.set, "set name used in the report")->capture_default_str();
  eval->add_option("--report", eval_args.report, "write the WER report here");
  eval->add_option("--system", eval_args.system, "existing WER report to compare");
  eval->add_option("--baseline", eval_args.baseline, "baseline WER report");

  CLI::App* selftest = app.add_subcommand("selftest", "run the verification suites");
  selftest_src.Register(*selftest);
  std::size_t instances = 500;
  bool corrupt = false;
  selftest->add_option("--instances", instances, "oracle instances per loss")
      ->capture_default_str();
  selftest->add_flag("--corrupt-loss-sign", corrupt, "negate the loss (suites must fail)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return Synth(synth_src, out);
    if (train->parsed()) return Train(train_src, resume, out);
    if (decode->parsed()) return Decode(decode_src, decode_args, out);
    if (eval->parsed()) return Eval(eval_args, out);
    return SelfTest(selftest_src, instances, corrupt, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace seqtrans
