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

#ifndef SEQTRANS_DATA_H_
#define SEQTRANS_DATA_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seqtrans/array.h"
#include "seqtrans/autodiff.h"

namespace seqtrans {

// Malformed or missing input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Splits UTF-8 text into code points, each returned as its own string.
std::vector<std::string> SplitUtf8(std::string_view text);

// Token inventory shared by the CTC, transducer, and LM outputs. Id 0 is the
// blank; real tokens occupy ids 1..size_lm(). The LM head predicts real
// tokens only, so its column for token id k is k - 1.
class Vocabulary {
 public:
  static constexpr std::string_view kBlank = "<blank>";

  // Blank only; size_lm() == 0.
  Vocabulary();

  // Character vocabulary: blank, then the sorted distinct code points of the
  // corpus. Throws on an empty corpus.
  static Vocabulary FromCorpus(std::span<const std::string> corpus);
  // Real tokens in id order (blank is added in front).
  static Vocabulary FromTokens(std::vector<std::string> tokens);

  std::size_t size_lm() const { return tokens_.size() - 1; }
  std::size_t size_trans() const { return tokens_.size(); }
  std::size_t size_ctc() const { return size_trans(); }

  const std::string& token(int id) const;
  int id(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> Encode(std::string_view text) const;
  std::string Decode(std::span<const int> ids) const;

  void Save(const std::filesystem::path& path) const;
  static Vocabulary Load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct Utterance {
  std::string id;
  Array features;           // (frames, feature_dim)
  std::vector<int> tokens;  // real token ids, no blanks
};

struct TextCorpus {
  std::vector<std::vector<int>> sentences;
};

// ---------------------------------------------------------------------------
// Normalization

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> variance;

  static constexpr double kVarianceFloor = 1e-8;

  void Apply(Array& features) const;
  void Save(const std::filesystem::path& path) const;
  static FeatureStats Load(const std::filesystem::path& path);
};

// Per-bin mean and variance over all frames of all utterances.
FeatureStats ComputeFeatureStats(std::span<const Utterance> utterances);
// Computes statistics and normalizes every utterance in place.
FeatureStats NormalizeGlobal(std::vector<Utterance>& utterances);

// ---------------------------------------------------------------------------
// SpecAugment

struct SpecAugmentConfig {
  std::size_t time_warp = 5;
  std::size_t freq_mask = 32;
  std::size_t freq_masks = 2;
  std::size_t time_mask = 40;
  std::size_t time_masks = 2;

  bool IsIdentity() const {
    return time_warp == 0 && (freq_mask == 0 || freq_masks == 0) &&
           (time_mask == 0 || time_masks == 0);
  }
};

struct MaskSpan {
  std::size_t begin = 0;
  std::size_t width = 0;
};

struct SpecAugmentResult {
  Array features;
  bool warped = false;
  std::vector<MaskSpan> freq_masks;
  std::vector<MaskSpan> time_masks;
};

// Time warp (one interior anchor moved by at most time_warp frames, frames
// resampled by linear interpolation), then zero-filled frequency and time
// masks with widths uniform in [0, F] and [0, T]. Warping is skipped when
// the utterance is shorter than 2 * time_warp + 3 frames.
SpecAugmentResult SpecAugment(const Array& features,
                              const SpecAugmentConfig& config, Rng& rng);

// ---------------------------------------------------------------------------
// Feature and text files

// "STFE", u32 version = 1, u32 frames, u32 dim, then frames * dim float32,
// all little-endian. Values are stored at float32 precision.
void WriteFeatures(const std::filesystem::path& path, const Array& features);
Array ReadFeatures(const std::filesystem::path& path);
void WriteFeatures(std::ostream& out, const Array& features);
Array ReadFeatures(std::istream& in);

struct TranscriptEntry {
  std::string id;
  std::string text;
};

// "utt_id<TAB>text" per line.
void WriteTranscripts(const std::filesystem::path& path,
                      std::span<const TranscriptEntry> entries);
std::vector<TranscriptEntry> ReadTranscripts(
    const std::filesystem::path& path);
// One sentence per line.
void WriteTextCorpus(const std::filesystem::path& path,
                     std::span<const std::string> sentences);
std::vector<std::string> ReadTextCorpus(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic corpus

// Small generative language: a lexicon of words over the first `letters`
// lowercase letters (no letter doubled inside a word) and a sparse word
// bigram model. Sentences have 2..3 words joined by single spaces.
class SyntheticLanguage {
 public:
  static SyntheticLanguage Create(std::uint64_t seed, std::size_t letters,
                                  std::size_t lexicon_size);

  std::string Sample(Rng& rng) const;
  // Every character the language can produce, as one string.
  std::string Alphabet() const;
  const std::vector<std::string>& lexicon() const { return lexicon_; }

 private:
  std::vector<std::string> lexicon_;
  std::vector<std::vector<std::size_t>> successors_;
  std::size_t letters_ = 0;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_utts = 50;
  std::size_t letters = 8;
  std::size_t lexicon_size = 12;
  std::size_t frames_per_token = 8;
  std::size_t feat_dim = 20;
  std::size_t silence_frames = 4;
  double noise = 0.3;
  std::size_t extra_sentences = 200;
};

struct SynthDataset {
  Vocabulary vocab;
  std::vector<Utterance> utterances;
  std::vector<std::string> transcripts;
  TextCorpus text;
  std::vector<std::string> text_lines;
  // Row 0 is the silence template, row k the template of token id k.
  Array templates;
};

// Deterministic in the config. Each token contributes frames_per_token
// noisy copies of its template; utterances are padded with silence. The text
// corpus holds every transcript plus extra_sentences further samples.
SynthDataset SynthesizeDataset(const SynthConfig& config);
// Fresh utterances from the same language and templates, drawn from an
// independent random stream.
std::vector<Utterance> SynthesizeHeldOut(const SynthConfig& config,
                                         const SynthDataset& dataset,
                                         std::size_t count,
                                         std::uint64_t stream);

}  // namespace seqtrans

#endif  // SEQTRANS_DATA_H_
