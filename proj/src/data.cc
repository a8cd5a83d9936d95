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

#include "seqtrans/data.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace seqtrans {
namespace {

constexpr std::array<char, 4> kFeatureMagic = {'S', 'T', 'F', 'E'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::string_view kSpaceToken = "<space>";

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::ifstream OpenForRead(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

// Reads exactly n bytes or throws naming the offset where data ran out.
void ReadExact(std::istream& in, void* dst, std::size_t n, const char* what) {
  const std::streamoff offset = in.tellg();
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw DataError(std::string("truncated ") + what + " at byte offset " +
                    std::to_string(offset + in.gcount()));
  }
}

std::string StripCarriageReturn(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::vector<std::string> SplitUtf8(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    if (i + len > text.size()) {
      throw DataError("invalid UTF-8 sequence at byte " + std::to_string(i));
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary({std::string(kBlank)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::FromCorpus(std::span<const std::string> corpus) {
  std::set<std::string> chars;
  for (const auto& line : corpus) {
    for (auto& c : SplitUtf8(line)) chars.insert(std::move(c));
  }
  if (chars.empty()) {
    throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  }
  return FromTokens(std::vector<std::string>(chars.begin(), chars.end()));
}

Vocabulary Vocabulary::FromTokens(std::vector<std::string> tokens) {
  if (tokens.empty()) throw std::invalid_argument("vocabulary has no tokens");
  std::vector<std::string> all;
  all.reserve(tokens.size() + 1);
  all.emplace_back(kBlank);
  for (auto& t : tokens) {
    if (t == kBlank) throw std::invalid_argument("blank is not a real token");
    all.push_back(std::move(t));
  }
  return Vocabulary(std::move(all));
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) +
                            " out of range");
  }
  return tokens_[id];
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end() || it->second == 0) {
    throw std::out_of_range("unknown token '" + std::string(token) + "'");
  }
  return it->second;
}

std::vector<int> Vocabulary::Encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& c : SplitUtf8(text)) ids.push_back(id(c));
  return ids;
}

std::string Vocabulary::Decode(std::span<const int> ids) const {
  std::string text;
  for (int i : ids) {
    if (i == 0) throw std::invalid_argument("cannot decode the blank id");
    text += token(i);
  }
  return text;
}

void Vocabulary::Save(const std::filesystem::path& path) const {
  std::ofstream out = OpenForWrite(path);
  for (std::size_t i = 1; i < tokens_.size(); ++i) {
    out << (tokens_[i] == " " ? std::string(kSpaceToken) : tokens_[i]) << '\n';
  }
}

Vocabulary Vocabulary::Load(const std::filesystem::path& path) {
  std::ifstream in = OpenForRead(path);
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    line = StripCarriageReturn(std::move(line));
    if (line.empty()) continue;
    tokens.push_back(line == kSpaceToken ? " " : line);
  }
  if (tokens.empty()) throw DataError("empty vocabulary file " + path.string());
  return FromTokens(std::move(tokens));
}

// ---------------------------------------------------------------------------
// Normalization

void FeatureStats::Apply(Array& features) const {
  if (features.cols() != mean.size()) {
    throw ShapeError("feature statistics for dim " +
                     std::to_string(mean.size()) + " applied to " +
                     ShapeToString(features.shape()));
  }
  for (std::size_t r = 0; r < features.rows(); ++r) {
    auto row = features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = (row[c] - mean[c]) /
               std::sqrt(std::max(variance[c], kVarianceFloor));
    }
  }
}

void FeatureStats::Save(const std::filesystem::path& path) const {
  std::ofstream out = OpenForWrite(path);
  out << nlohmann::json{{"mean", mean}, {"variance", variance}}.dump() << '\n';
}

FeatureStats FeatureStats::Load(const std::filesystem::path& path) {
  std::ifstream in = OpenForRead(path);
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("mean").get<std::vector<double>>(),
            j.at("variance").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad statistics file " + path.string() + ": " + e.what());
  }
}

FeatureStats ComputeFeatureStats(std::span<const Utterance> utterances) {
  if (utterances.empty()) {
    throw std::invalid_argument("normalization needs at least one utterance");
  }
  const std::size_t dim = utterances[0].features.cols();
  std::vector<double> sum(dim, 0.0);
  std::size_t frames = 0;
  for (const auto& u : utterances) {
    if (u.features.cols() != dim) {
      throw ShapeError("utterance " + u.id + " has feature shape " +
                       ShapeToString(u.features.shape()) + ", expected dim " +
                       std::to_string(dim));
    }
    for (std::size_t r = 0; r < u.features.rows(); ++r) {
      auto row = u.features.row(r);
      for (std::size_t c = 0; c < dim; ++c) sum[c] += row[c];
    }
    frames += u.features.rows();
  }
  FeatureStats stats{std::vector<double>(dim), std::vector<double>(dim, 0.0)};
  for (std::size_t c = 0; c < dim; ++c) {
    stats.mean[c] = sum[c] / static_cast<double>(frames);
  }
  // Two-pass variance.
  for (const auto& u : utterances) {
    for (std::size_t r = 0; r < u.features.rows(); ++r) {
      auto row = u.features.row(r);
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = row[c] - stats.mean[c];
        stats.variance[c] += d * d;
      }
    }
  }
  for (double& v : stats.variance) v /= static_cast<double>(frames);
  return stats;
}

FeatureStats NormalizeGlobal(std::vector<Utterance>& utterances) {
  FeatureStats stats = ComputeFeatureStats(utterances);
  for (auto& u : utterances) stats.Apply(u.features);
  return stats;
}

// ---------------------------------------------------------------------------
// SpecAugment

SpecAugmentResult SpecAugment(const Array& features,
                              const SpecAugmentConfig& config, Rng& rng) {
  SpecAugmentResult result{features, false, {}, {}};
  Array& x = result.features;
  const std::size_t frames = x.rows(), dim = x.cols();
  auto uniform = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  const std::size_t w = config.time_warp;
  if (w > 0 && frames >= 2 * w + 3) {
    const std::size_t anchor = uniform(w + 1, frames - w - 2);
    const auto shift = static_cast<std::ptrdiff_t>(uniform(0, 2 * w)) -
                       static_cast<std::ptrdiff_t>(w);
    const double src_anchor = static_cast<double>(anchor);
    const double dst_anchor = src_anchor + static_cast<double>(shift);
    const double last = static_cast<double>(frames - 1);
    Array warped(x.shape());
    for (std::size_t t = 0; t < frames; ++t) {
      const double pos = static_cast<double>(t);
      const double src =
          pos <= dst_anchor
              ? pos * src_anchor / dst_anchor
              : src_anchor + (pos - dst_anchor) * (last - src_anchor) /
                                 (last - dst_anchor);
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, frames - 1);
      const double frac = src - static_cast<double>(lo);
      auto out = warped.row(t);
      auto a = x.row(lo);
      auto b = x.row(hi);
      for (std::size_t c = 0; c < dim; ++c) {
        out[c] = (1.0 - frac) * a[c] + frac * b[c];
      }
    }
    x = std::move(warped);
    result.warped = true;
  }

  for (std::size_t i = 0; i < config.freq_masks && config.freq_mask > 0; ++i) {
    const std::size_t width = std::min(uniform(0, config.freq_mask), dim);
    const std::size_t begin = uniform(0, dim - width);
    for (std::size_t r = 0; r < frames; ++r) {
      auto row = x.row(r);
      std::fill_n(row.begin() + begin, width, 0.0);
    }
    result.freq_masks.push_back({begin, width});
  }
  for (std::size_t i = 0; i < config.time_masks && config.time_mask > 0; ++i) {
    const std::size_t width = std::min(uniform(0, config.time_mask), frames);
    const std::size_t begin = uniform(0, frames - width);
    for (std::size_t r = begin; r < begin + width; ++r) {
      auto row = x.row(r);
      std::fill(row.begin(), row.end(), 0.0);
    }
    result.time_masks.push_back({begin, width});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Files

void WriteFeatures(std::ostream& out, const Array& features) {
  if (features.rank() != 2) {
    throw ShapeError("feature matrix must be rank 2, got " +
                     ShapeToString(features.shape()));
  }
  const std::uint32_t header[3] = {kFeatureVersion,
                                   static_cast<std::uint32_t>(features.rows()),
                                   static_cast<std::uint32_t>(features.cols())};
  out.write(kFeatureMagic.data(), kFeatureMagic.size());
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  std::vector<float> payload(features.values().begin(),
                             features.values().end());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw DataError("failed writing feature payload");
}

Array ReadFeatures(std::istream& in) {
  std::array<char, 4> magic{};
  ReadExact(in, magic.data(), magic.size(), "header");
  if (magic != kFeatureMagic) {
    throw DataError("bad feature magic at byte offset 0");
  }
  std::uint32_t header[3];
  ReadExact(in, header, sizeof(header), "header");
  if (header[0] != kFeatureVersion) {
    throw DataError("unsupported feature version " +
                    std::to_string(header[0]) + " at byte offset 4");
  }
  if (header[1] == 0 || header[2] == 0) {
    throw DataError("feature header declares an empty matrix at byte offset 8");
  }
  std::vector<float> payload(static_cast<std::size_t>(header[1]) * header[2]);
  ReadExact(in, payload.data(), payload.size() * sizeof(float), "payload");
  return Array({header[1], header[2]},
               std::vector<double>(payload.begin(), payload.end()));
}

void WriteFeatures(const std::filesystem::path& path, const Array& features) {
  std::ofstream out = OpenForWrite(path);
  WriteFeatures(out, features);
}

Array ReadFeatures(const std::filesystem::path& path) {
  std::ifstream in = OpenForRead(path);
  try {
    return ReadFeatures(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void WriteTranscripts(const std::filesystem::path& path,
                      std::span<const TranscriptEntry> entries) {
  std::ofstream out = OpenForWrite(path);
  for (const auto& e : entries) out << e.id << '\t' << e.text << '\n';
}

std::vector<TranscriptEntry> ReadTranscripts(
    const std::filesystem::path& path) {
  std::ifstream in = OpenForRead(path);
  std::vector<TranscriptEntry> entries;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    line = StripCarriageReturn(std::move(line));
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 'utt_id<TAB>text'");
    }
    entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return entries;
}

void WriteTextCorpus(const std::filesystem::path& path,
                     std::span<const std::string> sentences) {
  std::ofstream out = OpenForWrite(path);
  for (const auto& s : sentences) out << s << '\n';
}

std::vector<std::string> ReadTextCorpus(const std::filesystem::path& path) {
  std::ifstream in = OpenForRead(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    line = StripCarriageReturn(std::move(line));
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

SyntheticLanguage SyntheticLanguage::Create(std::uint64_t seed,
                                            std::size_t letters,
                                            std::size_t lexicon_size) {
  if (letters < 2 || letters > 26) {
    throw std::invalid_argument("synthetic language needs 2..26 letters");
  }
  if (lexicon_size == 0) throw std::invalid_argument("empty lexicon");
  Rng rng(DeriveSeed(seed, {0x1e8}));
  SyntheticLanguage lang;
  lang.letters_ = letters;
  std::set<std::string> seen;
  std::uniform_int_distribution<std::size_t> letter(0, letters - 1);
  std::uniform_int_distribution<std::size_t> length(2, 4);
  while (lang.lexicon_.size() < lexicon_size) {
    std::string word;
    const std::size_t n = length(rng);
    while (word.size() < n) {
      const char c = static_cast<char>('a' + letter(rng));
      if (!word.empty() && word.back() == c) continue;
      word.push_back(c);
    }
    if (seen.insert(word).second) lang.lexicon_.push_back(word);
  }
  // Every letter appears somewhere so the alphabet is the full letter set.
  for (std::size_t i = 0; i < letters; ++i) {
    const std::string single(1, static_cast<char>('a' + i));
    bool used = false;
    for (const auto& w : lang.lexicon_) {
      used = used || w.find(single) != std::string::npos;
    }
    if (!used) lang.lexicon_[i % lang.lexicon_.size()] += single;
  }
  std::uniform_int_distribution<std::size_t> word(0, lexicon_size - 1);
  lang.successors_.resize(lexicon_size);
  for (auto& next : lang.successors_) {
    while (next.size() < std::min<std::size_t>(3, lexicon_size)) {
      const std::size_t w = word(rng);
      if (std::find(next.begin(), next.end(), w) == next.end()) {
        next.push_back(w);
      }
    }
  }
  return lang;
}

std::string SyntheticLanguage::Sample(Rng& rng) const {
  const std::size_t words = std::uniform_int_distribution<std::size_t>(2, 3)(rng);
  std::size_t w =
      std::uniform_int_distribution<std::size_t>(0, lexicon_.size() - 1)(rng);
  std::string sentence = lexicon_[w];
  for (std::size_t i = 1; i < words; ++i) {
    const auto& next = successors_[w];
    w = next[std::uniform_int_distribution<std::size_t>(0, next.size() - 1)(
        rng)];
    sentence += ' ';
    sentence += lexicon_[w];
  }
  return sentence;
}

std::string SyntheticLanguage::Alphabet() const {
  std::string alphabet = " ";
  for (std::size_t i = 0; i < letters_; ++i) {
    alphabet.push_back(static_cast<char>('a' + i));
  }
  return alphabet;
}

namespace {

Utterance RenderUtterance(const SynthConfig& config, const Array& templates,
                          std::string id, std::vector<int> tokens, Rng& rng) {
  const std::size_t frames =
      2 * config.silence_frames + tokens.size() * config.frames_per_token;
  const std::size_t dim = templates.cols();
  Array features({frames, dim});
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t t = 0;
  auto emit = [&](std::size_t row, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++t) {
      auto out = features.row(t);
      auto tpl = templates.row(row);
      for (std::size_t c = 0; c < dim; ++c) {
        out[c] = tpl[c] + config.noise * noise(rng);
      }
    }
  };
  emit(0, config.silence_frames);
  for (int k : tokens) emit(static_cast<std::size_t>(k), config.frames_per_token);
  emit(0, config.silence_frames);
  return {std::move(id), std::move(features), std::move(tokens)};
}

std::string UtteranceId(const char* prefix, std::size_t index) {
  std::ostringstream os;
  os << prefix << '_' << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

SynthDataset SynthesizeDataset(const SynthConfig& config) {
  if (config.frames_per_token < 2) {
    throw std::invalid_argument("frames_per_token must be at least 2");
  }
  const SyntheticLanguage lang =
      SyntheticLanguage::Create(config.seed, config.letters, config.lexicon_size);
  const std::string alphabet = lang.Alphabet();
  const std::vector<std::string> alphabet_corpus{alphabet};

  SynthDataset ds;
  ds.vocab = Vocabulary::FromCorpus(alphabet_corpus);

  Rng tpl_rng(DeriveSeed(config.seed, {0x7e3}));
  std::normal_distribution<double> normal(0.0, 1.0);
  ds.templates = Array({ds.vocab.size_trans(), config.feat_dim});
  for (double& v : ds.templates.values()) v = normal(tpl_rng);

  Rng text_rng(DeriveSeed(config.seed, {0x7e7}));
  Rng noise_rng(DeriveSeed(config.seed, {0x0a1}));
  for (std::size_t i = 0; i < config.n_utts; ++i) {
    std::string text = lang.Sample(text_rng);
    ds.utterances.push_back(RenderUtterance(config, ds.templates,
                                            UtteranceId("utt", i),
                                            ds.vocab.Encode(text), noise_rng));
    ds.transcripts.push_back(std::move(text));
  }
  ds.text_lines = ds.transcripts;
  for (std::size_t i = 0; i < config.extra_sentences; ++i) {
    ds.text_lines.push_back(lang.Sample(text_rng));
  }
  for (const auto& line : ds.text_lines) {
    ds.text.sentences.push_back(ds.vocab.Encode(line));
  }
  return ds;
}

std::vector<Utterance> SynthesizeHeldOut(const SynthConfig& config,
                                         const SynthDataset& dataset,
                                         std::size_t count,
                                         std::uint64_t stream) {
  const SyntheticLanguage lang =
      SyntheticLanguage::Create(config.seed, config.letters, config.lexicon_size);
  Rng text_rng(DeriveSeed(config.seed, {0x4e1d, stream}));
  Rng noise_rng(DeriveSeed(config.seed, {0x4e1e, stream}));
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(RenderUtterance(config, dataset.templates,
                                  UtteranceId("heldout", i),
                                  dataset.vocab.Encode(lang.Sample(text_rng)),
                                  noise_rng));
  }
  return out;
}

}  // namespace seqtrans
