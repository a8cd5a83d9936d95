#include "seqtrans/data.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <sstream>

#include "doctest.h"
#include "test_util.h"

namespace seqtrans {
namespace {

namespace fs = std::filesystem;
using testing::RandomArray;

fs::path TempDir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("seqtrans_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST_CASE("character vocabulary construction") {
  const std::vector<std::string> ab{"ab", "ba"};
  const Vocabulary v = Vocabulary::FromCorpus(ab);
  CHECK(v.tokens() == std::vector<std::string>{"<blank>", "a", "b"});
  CHECK(v.size_lm() == 2);
  CHECK(v.size_trans() == 3);
  CHECK(v.size_ctc() == v.size_trans());

  const std::vector<std::string> aaa{"aaa"};
  const Vocabulary one = Vocabulary::FromCorpus(aaa);
  CHECK(one.size_lm() == 1);
  CHECK(one.size_trans() == 2);

  CHECK_THROWS(Vocabulary::FromCorpus(std::vector<std::string>{}));
  CHECK_THROWS(Vocabulary::FromCorpus(std::vector<std::string>{""}));
  CHECK_THROWS(v.id("<blank>"));
  CHECK_THROWS(v.Encode("abc"));
}

TEST_CASE("full-scale vocabulary relations") {
  std::vector<std::string> pieces;
  for (int i = 0; i < 2048; ++i) pieces.push_back("p" + std::to_string(i));
  const Vocabulary v = Vocabulary::FromTokens(pieces);
  CHECK(v.size_lm() == 2048);
  CHECK(v.size_trans() == 2049);
  CHECK(v.size_ctc() == 2049);
}

TEST_CASE("encode and decode round trip over a corpus") {
  const std::vector<std::string> corpus{"hello world", "héllo wörld", "abc"};
  const Vocabulary v = Vocabulary::FromCorpus(corpus);
  for (const auto& line : corpus) {
    const auto ids = v.Encode(line);
    CHECK(v.Decode(ids) == line);
    CHECK(v.Encode(v.Decode(ids)) == ids);
    for (int id : ids) CHECK(id >= 1);
  }
  CHECK(v.size_trans() == v.size_lm() + 1);
  CHECK(SplitUtf8("héllo").size() == 5);
}

TEST_CASE("vocabulary file round trip keeps the space token") {
  const auto dir = TempDir("vocab");
  const std::vector<std::string> corpus{"a b"};
  const Vocabulary v = Vocabulary::FromCorpus(corpus);
  v.Save(dir / "vocab.txt");
  CHECK(Vocabulary::Load(dir / "vocab.txt") == v);
}

TEST_CASE("global normalization") {
  SUBCASE("constant frames normalize to zero") {
    std::vector<Utterance> utts{{"u", Array({4, 3}, 2.5), {1}}};
    NormalizeGlobal(utts);
    for (double v : utts[0].features.values()) CHECK(v == 0.0);
  }
  SUBCASE("two frames [0] and [2]") {
    std::vector<Utterance> utts{{"u", Array::Matrix(2, 1, {0, 2}), {1}}};
    const auto stats = NormalizeGlobal(utts);
    CHECK(stats.mean[0] == 1.0);
    CHECK(utts[0].features[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(utts[0].features[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("random dataset has zero mean and unit variance afterwards") {
    Rng rng(1);
    std::vector<Utterance> utts;
    for (int i = 0; i < 5; ++i) {
      utts.push_back({"u" + std::to_string(i),
                      RandomArray({3 + static_cast<std::size_t>(i), 4}, rng,
                                  -3.0, 7.0),
                      {1}});
    }
    NormalizeGlobal(utts);
    const auto after = ComputeFeatureStats(utts);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(std::abs(after.mean[c]) <= 1e-10);
      CHECK(std::abs(after.variance[c] - 1.0) <= 1e-10);
    }
    // Idempotent once statistics are applied.
    const auto before = utts;
    NormalizeGlobal(utts);
    for (std::size_t i = 0; i < utts.size(); ++i) {
      for (std::size_t j = 0; j < utts[i].features.size(); ++j) {
        CHECK(std::abs(utts[i].features[j] - before[i].features[j]) <= 1e-10);
      }
    }
  }
  SUBCASE("statistics persist") {
    const auto dir = TempDir("stats");
    const FeatureStats stats{{1.0 / 3.0, -2.0}, {0.1, 5.0}};
    stats.Save(dir / "stats.json");
    const auto loaded = FeatureStats::Load(dir / "stats.json");
    CHECK(loaded.mean == stats.mean);
    CHECK(loaded.variance == stats.variance);
  }
  CHECK_THROWS(ComputeFeatureStats(std::vector<Utterance>{}));
}

TEST_CASE("spec augment") {
  Rng rng(3);
  const Array x = RandomArray({60, 16}, rng, 0.5, 1.5);

  SUBCASE("all-zero configuration is the identity") {
    const SpecAugmentConfig none{0, 0, 0, 0, 0};
    CHECK(none.IsIdentity());
    Rng r(1);
    CHECK(SpecAugment(x, none, r).features == x);
  }
  SUBCASE("full-band frequency mask zeroes everything") {
    const SpecAugmentConfig cfg{0, 16, 1, 0, 0};
    bool found = false;
    for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
      Rng r(seed);
      const auto out = SpecAugment(x, cfg, r);
      if (out.freq_masks[0].width != 16) continue;
      found = true;
      for (double v : out.features.values()) CHECK(v == 0.0);
    }
    CHECK(found);
  }
  SUBCASE("default parameters on a 128-bin utterance") {
    Rng r(5);
    const Array big = RandomArray({300, 128}, r, 0.5, 1.5);
    const SpecAugmentConfig defaults;
    CHECK(defaults.time_warp == 5);
    CHECK(defaults.freq_mask == 32);
    CHECK(defaults.freq_masks == 2);
    CHECK(defaults.time_mask == 40);
    CHECK(defaults.time_masks == 2);
    for (int i = 0; i < 20; ++i) {
      const auto out = SpecAugment(big, defaults, r);
      CHECK(out.features.shape() == big.shape());
      std::vector<bool> bins(128, false), frames(300, false);
      for (const auto& m : out.freq_masks) {
        CHECK(m.width <= 32);
        for (std::size_t c = m.begin; c < m.begin + m.width; ++c) bins[c] = true;
      }
      for (const auto& m : out.time_masks) {
        CHECK(m.width <= 40);
        for (std::size_t t = m.begin; t < m.begin + m.width; ++t) frames[t] = true;
      }
      CHECK(std::count(bins.begin(), bins.end(), true) <= 64);
      CHECK(std::count(frames.begin(), frames.end(), true) <= 80);
      // Inputs are strictly positive and warping interpolates, so zeros
      // come from masks only.
      std::size_t zeros = 0;
      for (double v : out.features.values()) zeros += v == 0.0;
      CHECK(zeros <= 2 * 32 * 300 + 2 * 40 * 128);
    }
  }
  SUBCASE("short utterances skip warping but are still masked") {
    const SpecAugmentConfig cfg{5, 4, 1, 2, 1};
    Rng r(9);
    const Array short_x = RandomArray({10, 16}, r, 0.5, 1.5);
    const auto out = SpecAugment(short_x, cfg, r);
    CHECK_FALSE(out.warped);
    CHECK(out.features.shape() == short_x.shape());
  }
  SUBCASE("warp keeps shape and stays within the input range") {
    const SpecAugmentConfig warp_only{5, 0, 0, 0, 0};
    Rng r(2);
    const auto out = SpecAugment(x, warp_only, r);
    CHECK(out.warped);
    CHECK(out.features.shape() == x.shape());
    for (double v : out.features.values()) {
      CHECK(v >= 0.5);
      CHECK(v <= 1.5);
    }
  }
}

TEST_CASE("feature file format") {
  const auto dir = TempDir("features");
  Rng rng(4);
  Array x = RandomArray({7, 16}, rng);
  for (double& v : x.values()) v = static_cast<float>(v);

  SUBCASE("round trip is bit exact") {
    WriteFeatures(dir / "a.stfe", x);
    CHECK(ReadFeatures(dir / "a.stfe") == x);
    CHECK(fs::file_size(dir / "a.stfe") == 16 + 7 * 16 * 4);
  }
  SUBCASE("layout is magic, version, frames, dim, float32 payload") {
    std::stringstream ss;
    WriteFeatures(ss, Array::Matrix(1, 2, {1.0, -2.0}));
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "STFE");
    CHECK(bytes.size() == 24);
    const unsigned char* b = reinterpret_cast<const unsigned char*>(bytes.data());
    CHECK(b[4] == 1);
    CHECK(b[8] == 1);
    CHECK(b[12] == 2);
    float v;
    std::memcpy(&v, b + 20, 4);
    CHECK(v == -2.0f);
  }
  SUBCASE("empty file") {
    std::ofstream(dir / "empty.stfe").close();
    CHECK_THROWS_WITH_AS(ReadFeatures(dir / "empty.stfe"),
                         doctest::Contains("truncated header"), DataError);
  }
  SUBCASE("payload shorter than declared") {
    std::stringstream ss;
    WriteFeatures(ss, Array({2, 3}, 1.0));
    const std::string bytes = ss.str().substr(0, 16 + 5 * 4);
    std::stringstream cut(bytes);
    CHECK_THROWS_WITH_AS(ReadFeatures(cut),
                         doctest::Contains("truncated payload at byte offset 36"),
                         DataError);
  }
  SUBCASE("magic mismatch") {
    std::stringstream bad("XXXX0000000000000000");
    CHECK_THROWS_WITH_AS(ReadFeatures(bad), doctest::Contains("magic"),
                         DataError);
  }
}

TEST_CASE("transcript and corpus files") {
  const auto dir = TempDir("text");
  const std::vector<TranscriptEntry> entries{{"u1", "ab cd"}, {"u2", "ba"}};
  WriteTranscripts(dir / "t.txt", entries);
  const auto back = ReadTranscripts(dir / "t.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "u1");
  CHECK(back[0].text == "ab cd");

  std::ofstream(dir / "bad.txt") << "no tab here\n";
  CHECK_THROWS_AS(ReadTranscripts(dir / "bad.txt"), DataError);

  const std::vector<std::string> lines{"one", "two three"};
  WriteTextCorpus(dir / "c.txt", lines);
  CHECK(ReadTextCorpus(dir / "c.txt") == lines);
  CHECK_THROWS_AS(ReadTextCorpus(dir / "missing.txt"), DataError);
}

// Nearest-template frame classifier followed by run collapsing.
std::vector<int> TemplateDecode(const Array& features, const Array& templates) {
  std::vector<int> out;
  int prev = 0;
  for (std::size_t t = 0; t < features.rows(); ++t) {
    int best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < templates.rows(); ++k) {
      double d = 0.0;
      for (std::size_t c = 0; c < features.cols(); ++c) {
        const double diff = features.at(t, c) - templates.at(k, c);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    if (best != prev && best != 0) out.push_back(best);
    prev = best;
  }
  return out;
}

TEST_CASE("synthetic dataset") {
  SynthConfig cfg;
  const auto a = SynthesizeDataset(cfg);
  const auto b = SynthesizeDataset(cfg);

  SUBCASE("deterministic in the seed") {
    REQUIRE(a.utterances.size() == b.utterances.size());
    for (std::size_t i = 0; i < a.utterances.size(); ++i) {
      CHECK(a.utterances[i].features == b.utterances[i].features);
      CHECK(a.utterances[i].tokens == b.utterances[i].tokens);
    }
    CHECK(a.text_lines == b.text_lines);
    cfg.seed = 2;
    CHECK_FALSE(SynthesizeDataset(cfg).utterances[0].features ==
                a.utterances[0].features);
  }
  SUBCASE("default configuration shape") {
    CHECK(a.utterances.size() == 50);
    CHECK(a.vocab.size_lm() == 9);  // 8 letters + space
    CHECK(a.text.sentences.size() == 50 + cfg.extra_sentences);
    for (std::size_t i = 0; i < a.transcripts.size(); ++i) {
      CHECK(a.text_lines[i] == a.transcripts[i]);
      const auto& toks = a.utterances[i].tokens;
      for (std::size_t j = 1; j < toks.size(); ++j) CHECK(toks[j] != toks[j - 1]);
    }
  }
  SUBCASE("template oracle decodes noiseless data perfectly") {
    SynthConfig clean;
    clean.noise = 0.0;
    const auto ds = SynthesizeDataset(clean);
    for (const auto& u : ds.utterances) {
      CHECK(TemplateDecode(u.features, ds.templates) == u.tokens);
    }
  }
  SUBCASE("no utterances") {
    SynthConfig empty;
    empty.n_utts = 0;
    CHECK(SynthesizeDataset(empty).utterances.empty());
    empty.frames_per_token = 1;
    CHECK_THROWS(SynthesizeDataset(empty));
  }
  SUBCASE("held-out set uses fresh text and noise") {
    const auto held = SynthesizeHeldOut(cfg, a, 10, 1);
    CHECK(held.size() == 10);
    CHECK_FALSE(held[0].features == a.utterances[0].features);
    const auto again = SynthesizeHeldOut(cfg, a, 10, 1);
    CHECK(again[3].features == held[3].features);
  }
}

}  // namespace
}  // namespace seqtrans
