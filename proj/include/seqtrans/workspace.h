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

#ifndef SEQTRANS_WORKSPACE_H_
#define SEQTRANS_WORKSPACE_H_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqtrans/data.h"
#include "seqtrans/decoding.h"
#include "seqtrans/networks.h"

namespace seqtrans {

// On-disk layout of a dataset directory:
//   vocab.txt  stats.json  text.txt
//   train/transcripts.txt  train/feats/<utt_id>.stfe
//   heldout/...            (optional, same layout as train/)
// Features are stored unnormalized; stats.json holds training statistics.

struct Split {
  std::vector<Utterance> utterances;
  std::vector<TranscriptEntry> transcripts;
};

void WriteSplit(const std::filesystem::path& dir, const Vocabulary& vocab,
                std::span<const Utterance> utterances);
// Errors name the missing or malformed file.
Split ReadSplit(const std::filesystem::path& dir, const Vocabulary& vocab);

struct DataDir {
  Vocabulary vocab;
  FeatureStats stats;
  Split train;
  std::vector<std::string> text_lines;
  TextCorpus text;
  std::optional<Split> heldout;
};

// Synthesizes a dataset plus `heldout` extra utterances and writes it.
void WriteSynthDataDir(const std::filesystem::path& dir,
                       const SynthConfig& config, std::size_t heldout);
DataDir ReadDataDir(const std::filesystem::path& dir);

// Decoder output: "utt_id<TAB>text<TAB>fused_score", or with n-best lists
// "utt_id<TAB>rank<TAB>text<TAB>fused_score".
struct DecodedUtterance {
  std::string id;
  std::vector<Hypothesis> nbest;
};
void WriteHypotheses(const std::filesystem::path& path,
                     std::span<const DecodedUtterance> decoded,
                     const Vocabulary& vocab, bool with_rank);
// Reads either layout, or plain "utt_id<TAB>text" transcripts, and keeps the
// top-ranked text per utterance.
std::vector<TranscriptEntry> ReadHypotheses(const std::filesystem::path& path);

// Normalizes with `stats` and beam-searches every utterance, in parallel
// over `workers` threads. Greedy decoding when beam_size is 1 and beta3 is 0.
std::vector<DecodedUtterance> DecodeUtterances(
    const Model& model, const FeatureStats& stats,
    std::span<const Utterance> utterances, const BeamSearchOptions& options,
    std::size_t workers = 1);

// Corpus-level WER over matching utterance ids; a hypothesis set that
// misses or adds ids is an error.
ErrorCounts CorpusErrors(std::span<const TranscriptEntry> references,
                         std::span<const TranscriptEntry> hypotheses);

// "set<TAB>wer_percent" report lines.
struct WerRow {
  std::string set;
  double wer_percent = 0.0;
};
void WriteWerReport(const std::filesystem::path& path, std::span<const WerRow> rows);
std::vector<WerRow> ReadWerReport(const std::filesystem::path& path);
// Table rows "set  baseline  system  relative%" for sets present in both.
std::string CompareWerReports(std::span<const WerRow> baseline,
                              std::span<const WerRow> system);

}  // namespace seqtrans

#endif  // SEQTRANS_WORKSPACE_H_
