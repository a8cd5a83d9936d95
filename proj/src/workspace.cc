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

#include "seqtrans/workspace.h"

#include <algorithm>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

namespace seqtrans {
namespace fs = std::filesystem;

void WriteSplit(const fs::path& dir, const Vocabulary& vocab,
                std::span<const Utterance> utterances) {
  fs::create_directories(dir / "feats");
  std::vector<TranscriptEntry> entries;
  for (const auto& u : utterances) {
    WriteFeatures(dir / "feats" / (u.id + ".stfe"), u.features);
    entries.push_back({u.id, vocab.Decode(u.tokens)});
  }
  WriteTranscripts(dir / "transcripts.txt", entries);
}

Split ReadSplit(const fs::path& dir, const Vocabulary& vocab) {
  const fs::path transcripts = dir / "transcripts.txt";
  if (!fs::exists(transcripts)) {
    throw DataError("missing transcript file " + transcripts.string());
  }
  Split split;
  split.transcripts = ReadTranscripts(transcripts);
  for (const auto& entry : split.transcripts) {
    const fs::path feats = dir / "feats" / (entry.id + ".stfe");
    if (!fs::exists(feats)) throw DataError("missing feature file " + feats.string());
    split.utterances.push_back({entry.id, ReadFeatures(feats), vocab.Encode(entry.text)});
  }
  return split;
}

void WriteSynthDataDir(const fs::path& dir, const SynthConfig& config,
                       std::size_t heldout) {
  const SynthDataset data = SynthesizeDataset(config);
  if (data.utterances.empty()) {
    throw DataError("synthetic dataset is empty (synth_utts = 0)");
  }
  fs::create_directories(dir);
  data.vocab.Save(dir / "vocab.txt");
  ComputeFeatureStats(data.utterances).Save(dir / "stats.json");
  WriteTextCorpus(dir / "text.txt", data.text_lines);
  WriteSplit(dir / "train", data.vocab, data.utterances);
  if (heldout > 0) {
    WriteSplit(dir / "heldout", data.vocab,
               SynthesizeHeldOut(config, data, heldout, /*stream=*/1));
  }
}

DataDir ReadDataDir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " not found");
  for (const char* name : {"vocab.txt", "stats.json", "text.txt"}) {
    if (!fs::exists(dir / name)) throw DataError("missing " + (dir / name).string());
  }
  DataDir d{Vocabulary::Load(dir / "vocab.txt"), FeatureStats::Load(dir / "stats.json"),
            {}, ReadTextCorpus(dir / "text.txt"), {}, {}};
  d.train = ReadSplit(dir / "train", d.vocab);
  for (const auto& line : d.text_lines) d.text.sentences.push_back(d.vocab.Encode(line));
  if (fs::exists(dir / "heldout" / "transcripts.txt")) {
    d.heldout = ReadSplit(dir / "heldout", d.vocab);
  }
  return d;
}

void WriteHypotheses(const fs::path& path, std::span<const DecodedUtterance> decoded,
                     const Vocabulary& vocab, bool with_rank) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(10);
  for (const auto& d : decoded) {
    const std::size_t n = with_rank ? d.nbest.size() : std::min<std::size_t>(1, d.nbest.size());
    for (std::size_t r = 0; r < n; ++r) {
      out << d.id << '\t';
      if (with_rank) out << r + 1 << '\t';
      out << vocab.Decode(d.nbest[r].prefix) << '\t' << d.nbest[r].fused << '\n';
    }
  }
}

std::vector<TranscriptEntry> ReadHypotheses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<TranscriptEntry> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, '\t');) cols.push_back(col);
    if (line.back() == '\t') cols.emplace_back();
    if (cols.size() == 2 || cols.size() == 3) {
      out.push_back({cols[0], cols[1]});
    } else if (cols.size() == 4) {
      if (cols[1] == "1") out.push_back({cols[0], cols[2]});
    } else {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 2 to 4 tab-separated columns");
    }
  }
  return out;
}

std::vector<DecodedUtterance> DecodeUtterances(const Model& model,
                                               const FeatureStats& stats,
                                               std::span<const Utterance> utterances,
                                               const BeamSearchOptions& options,
                                               std::size_t workers) {
  std::vector<DecodedUtterance> out(utterances.size());
  std::vector<std::exception_ptr> errors(utterances.size());
  const bool greedy = options.beam_size == 1 && options.weights.lm == 0.0;
  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < utterances.size(); i += stride) {
      try {
        Array feats = utterances[i].features;
        stats.Apply(feats);
        out[i].id = utterances[i].id;
        if (greedy) {
          const std::size_t cap = options.max_symbols_per_frame > 0 ? options.max_symbols_per_frame : 1;
          out[i].nbest = {GreedyDecode(model, feats, cap)};
          out[i].nbest[0].fused = options.weights.Fuse(out[i].nbest[0].score_trans, 0.0);
        } else {
          out[i].nbest = BeamSearch(model, feats, options);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, utterances.size()));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w, workers);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

ErrorCounts CorpusErrors(std::span<const TranscriptEntry> references,
                         std::span<const TranscriptEntry> hypotheses) {
  std::map<std::string, std::string> hyp;
  for (const auto& h : hypotheses) {
    if (!hyp.emplace(h.id, h.text).second) throw DataError("duplicate hypothesis id " + h.id);
  }
  if (hyp.size() != references.size()) {
    throw DataError("hypotheses cover " + std::to_string(hyp.size()) +
                    " utterances but references have " + std::to_string(references.size()));
  }
  ErrorCounts total;
  for (const auto& r : references) {
    const auto it = hyp.find(r.id);
    if (it == hyp.end()) throw DataError("no hypothesis for utterance " + r.id);
    const auto ref_words = SplitWords(r.text);
    const auto hyp_words = SplitWords(it->second);
    const ErrorCounts e = WordErrors(ref_words, hyp_words);
    total.edits += e.edits;
    total.reference_words += e.reference_words;
  }
  return total;
}

void WriteWerReport(const fs::path& path, std::span<const WerRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(10);
  for (const auto& r : rows) out << r.set << '\t' << r.wer_percent << '\n';
}

std::vector<WerRow> ReadWerReport(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<WerRow> rows;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    try {
      if (tab == std::string::npos) throw std::invalid_argument("no tab");
      std::size_t used = 0;
      const std::string num = line.substr(tab + 1);
      rows.push_back({line.substr(0, tab), std::stod(num, &used)});
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 'set<TAB>wer_percent'");
    }
  }
  return rows;
}

std::string CompareWerReports(std::span<const WerRow> baseline,
                              std::span<const WerRow> system) {
  std::ostringstream out;
  out << "set\tbaseline\tsystem\trelative_reduction\n" << std::fixed;
  for (const auto& s : system) {
    const auto b = std::find_if(baseline.begin(), baseline.end(),
                                [&](const WerRow& r) { return r.set == s.set; });
    if (b == baseline.end()) continue;
    out << s.set << '\t' << std::setprecision(2) << b->wer_percent << '\t'
        << s.wer_percent << '\t' << RelativeReduction(b->wer_percent, s.wer_percent)
        << "%\n";
  }
  return out.str();
}

}  // namespace seqtrans
