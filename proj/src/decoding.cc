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

#include "seqtrans/decoding.h"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>

#include "seqtrans/losses.h"

namespace seqtrans {
namespace {

using Prefix = std::vector<int>;

// Better fused score first; equal scores favour the smaller prefix.
bool Better(double a_score, const Prefix& a, double b_score, const Prefix& b) {
  if (a_score != b_score) return a_score > b_score;
  return a < b;
}

void CheckFeatures(const Array& features) {
  if (features.empty() || features.rank() != 2) {
    throw std::invalid_argument("decoding needs a non-empty (T, D) feature matrix");
  }
}

// Shared per-utterance machinery: encoder projections and a cache of
// prediction-network outputs keyed by prefix.
class Scorer {
 public:
  Scorer(const Model& model, const Array& features, bool need_lm)
      : graph_(tape_, model, /*trainable=*/false), need_lm_(need_lm) {
    CheckFeatures(features);
    projected_ = graph_.ProjectTranscription(graph_.Transcription(features));
  }

  std::size_t frames() const { return projected_.value().rows(); }
  std::size_t vocab() const { return graph_.config().vocab_trans(); }

  struct Entry {
    PredictionState state;
    Var projected;      // g W_PR, (1, J)
    Array lm_log_probs;  // (1, D_LM) when LM scores are needed
  };

  const Entry& Get(const Prefix& prefix) {
    auto it = cache_.find(prefix);
    if (it != cache_.end()) return it->second;
    ModelGraph::PredictionOutput out;
    if (prefix.empty()) {
      out = graph_.Prediction({});
    } else {
      const Entry& parent = Get(Prefix(prefix.begin(), prefix.end() - 1));
      PredictionState state = parent.state;
      const int last[] = {prefix.back()};
      out = graph_.Prediction(last, &state);
    }
    Entry entry{std::move(out.state), graph_.ProjectPrediction(out.g), {}};
    if (need_lm_) entry.lm_log_probs = LogSoftmax(graph_.LmLogits(out.g)).value();
    return cache_.emplace(prefix, std::move(entry)).first->second;
  }

  // Joint log-probabilities at frame t for each prefix, one row each.
  Array JointLogProbs(std::size_t t, std::span<const Prefix* const> prefixes) {
    std::vector<Var> rows;
    rows.reserve(prefixes.size());
    for (const Prefix* p : prefixes) rows.push_back(Get(*p).projected);
    Var b = rows.size() == 1 ? rows[0] : ConcatRows(rows);
    return LogSoftmax(graph_.JointFromProjections(SliceRows(projected_, t, 1), b))
        .value();
  }

 private:
  Tape tape_;
  ModelGraph graph_;
  bool need_lm_;
  Var projected_;
  std::map<Prefix, Entry> cache_;
};

struct Partial {
  double trans = 0.0;
  double lm = 0.0;
  std::size_t emitted = 0;
};

using Beam = std::map<Prefix, Partial>;

// Keeps the `size` best entries by fused score.
void Prune(Beam& beam, std::size_t size, const DecodeWeights& w) {
  if (beam.size() <= size) return;
  std::vector<std::pair<double, const Prefix*>> order;
  order.reserve(beam.size());
  for (const auto& [prefix, p] : beam) order.emplace_back(w.Fuse(p.trans, p.lm), &prefix);
  std::nth_element(order.begin(), order.begin() + size - 1, order.end(),
                   [](const auto& a, const auto& b) {
                     return Better(a.first, *a.second, b.first, *b.second);
                   });
  Beam kept;
  for (std::size_t i = 0; i < size; ++i) kept.insert(*beam.find(*order[i].second));
  beam = std::move(kept);
}

}  // namespace

void DecodeWeights::Validate() const {
  if (ctc != 0.0) {
    throw std::invalid_argument("CTC re-scoring is not supported; beta1 must be 0");
  }
  if (!(transducer > 0.0)) throw std::invalid_argument("beta2 must be positive");
  if (!(lm >= 0.0)) throw std::invalid_argument("beta3 must be >= 0");
}

double DecodeWeights::Fuse(double score_trans, double score_lm) const {
  return lm == 0.0 ? transducer * score_trans
                   : transducer * score_trans + lm * score_lm;
}

std::vector<Hypothesis> BeamSearch(const Model& model, const Array& features,
                                   const BeamSearchOptions& options) {
  const DecodeWeights& w = options.weights;
  w.Validate();
  if (options.beam_size == 0) throw std::invalid_argument("beam_size must be >= 1");
  const std::size_t beam = options.beam_size;
  const std::size_t cap = options.max_symbols_per_frame > 0
                              ? options.max_symbols_per_frame
                              : beam;
  const std::size_t max_len = options.max_prefix_len;
  const bool use_lm = w.lm != 0.0;

  Scorer scorer(model, features, use_lm);
  const std::size_t labels = scorer.vocab() - 1;
  const std::size_t per_parent = std::min(beam, labels);

  Beam current{{Prefix{}, Partial{}}};
  for (std::size_t t = 0; t < scorer.frames(); ++t) {
    std::map<std::size_t, Beam> levels;
    for (auto& [prefix, p] : current) {
      levels[prefix.size()].emplace(prefix, Partial{p.trans, p.lm, 0});
    }
    Beam next;
    // New levels are only ever added above the one being expanded.
    for (auto level = levels.begin(); level != levels.end(); ++level) {
      Beam& hyps = level->second;
      Prune(hyps, beam, w);
      std::vector<const Prefix*> prefixes;
      for (const auto& entry : hyps) prefixes.push_back(&entry.first);
      const Array lp = scorer.JointLogProbs(t, prefixes);
      std::size_t row = 0;
      for (const auto& [prefix, p] : hyps) {
        const double* scores = lp.data() + row++ * scorer.vocab();
        next.emplace(prefix, Partial{p.trans + scores[kBlankId], p.lm, 0});
        if (p.emitted >= cap || (max_len > 0 && prefix.size() >= max_len)) continue;
        const Array* lm_lp = use_lm ? &scorer.Get(prefix).lm_log_probs : nullptr;
        auto increment = [&](std::size_t k) {
          return w.Fuse(scores[k], lm_lp ? (*lm_lp)[k - 1] : 0.0);
        };
        std::vector<std::size_t> ks(labels);
        for (std::size_t k = 1; k <= labels; ++k) ks[k - 1] = k;
        if (per_parent < labels) {
          std::partial_sort(ks.begin(), ks.begin() + per_parent, ks.end(),
                            [&](std::size_t a, std::size_t b) {
                              const double sa = increment(a), sb = increment(b);
                              return sa != sb ? sa > sb : a < b;
                            });
          ks.resize(per_parent);
        }
        Beam& children = levels[level->first + 1];
        for (std::size_t k : ks) {
          Prefix child = prefix;
          child.push_back(static_cast<int>(k));
          const Partial c{p.trans + scores[k],
                          p.lm + (lm_lp ? (*lm_lp)[k - 1] : 0.0), p.emitted + 1};
          auto [it, inserted] = children.emplace(std::move(child), c);
          if (!inserted) {
            it->second.trans = LogAddExp(it->second.trans, c.trans);
            it->second.emitted = std::min(it->second.emitted, c.emitted);
          }
        }
      }
    }
    Prune(next, beam, w);
    current = std::move(next);
  }

  std::vector<Hypothesis> out;
  for (const auto& [prefix, p] : current) {
    out.push_back({prefix, p.trans, p.lm, w.Fuse(p.trans, p.lm),
                   scorer.Get(prefix).state});
  }
  std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return Better(a.fused, a.prefix, b.fused, b.prefix);
  });
  const std::size_t keep = options.nbest > 0 ? options.nbest : beam;
  if (out.size() > keep) out.resize(keep);
  return out;
}

Hypothesis GreedyDecode(const Model& model, const Array& features,
                        std::size_t max_symbols_per_frame) {
  if (max_symbols_per_frame == 0) {
    throw std::invalid_argument("max_symbols_per_frame must be >= 1");
  }
  Scorer scorer(model, features, false);
  const std::size_t vocab = scorer.vocab();
  Prefix best;
  double score = 0.0;
  for (std::size_t t = 0; t < scorer.frames(); ++t) {
    // Follow the single best label chain, then leave the frame from
    // whichever point of the chain scores highest.
    Prefix prefix = best;
    double chain = score;
    Prefix choice;
    double choice_score = kNegInf;
    for (std::size_t n = 0;; ++n) {
      const Prefix* one[] = {&prefix};
      const Array lp = scorer.JointLogProbs(t, one);
      const double leave = chain + lp[kBlankId];
      if (choice_score == kNegInf || leave > choice_score) {
        choice = prefix;
        choice_score = leave;
      }
      if (n == max_symbols_per_frame) break;
      std::size_t k_best = 1;
      for (std::size_t k = 2; k < vocab; ++k) {
        if (lp[k] > lp[k_best]) k_best = k;
      }
      chain += lp[k_best];
      prefix.push_back(static_cast<int>(k_best));
    }
    best = std::move(choice);
    score = choice_score;
  }
  Hypothesis h{best, score, 0.0, score, scorer.Get(best).state};
  return h;
}

Hypothesis ExhaustiveDecode(const Model& model, const Array& features,
                            std::size_t max_len, const DecodeWeights& weights) {
  weights.Validate();
  CheckFeatures(features);
  Tape tape;
  ModelGraph graph(tape, model, false);
  Var f = graph.Transcription(features);
  const std::size_t labels = model.config.vocab_trans() - 1;
  std::size_t candidates = 0;
  for (std::size_t len = 0, n = 1; len <= max_len; ++len, n *= labels) {
    candidates += n;
    if (candidates * f.value().rows() > 100000) {
      throw std::invalid_argument("exhaustive decode: search space too large");
    }
  }

  std::optional<Hypothesis> best;
  Prefix y;
  auto score = [&](const Prefix& cand) {
    Var g = graph.Prediction(cand).g;
    const double trans = TransducerLogLikelihood(graph.JointLogProbs(f, g).value(), cand);
    double lm = 0.0;
    if (weights.lm != 0.0) {
      const Array lp = LogSoftmax(graph.LmLogits(g)).value();
      for (std::size_t u = 0; u < cand.size(); ++u) {
        lm += lp.at(u, static_cast<std::size_t>(cand[u] - 1));
      }
    }
    const double fused = weights.Fuse(trans, lm);
    if (!best || Better(fused, cand, best->fused, best->prefix)) {
      best = Hypothesis{cand, trans, lm, fused, {}};
    }
  };
  // Depth-first over all sequences up to max_len.
  std::function<void()> visit = [&] {
    score(y);
    if (y.size() == max_len) return;
    for (std::size_t k = 1; k <= labels; ++k) {
      y.push_back(static_cast<int>(k));
      visit();
      y.pop_back();
    }
  };
  visit();
  return *best;
}

double LmScore(const Model& model, std::span<const int> prefix) {
  Tape tape;
  ModelGraph graph(tape, model, false);
  const Array lp = LogSoftmax(graph.LmLogits(graph.Prediction(prefix).g)).value();
  double total = 0.0;
  for (std::size_t u = 0; u < prefix.size(); ++u) {
    total += lp.at(u, static_cast<std::size_t>(prefix[u] - 1));
  }
  return total;
}

// ---------------------------------------------------------------------------
// WER

double ErrorCounts::rate() const {
  if (reference_words == 0) throw std::invalid_argument("empty reference");
  return static_cast<double>(edits) / static_cast<double>(reference_words);
}

std::vector<std::string> SplitWords(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

ErrorCounts WordErrors(std::span<const std::string> reference,
                       std::span<const std::string> hypothesis) {
  if (reference.empty()) throw std::invalid_argument("empty reference");
  const std::size_t n = reference.size(), m = hypothesis.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return {prev[m], n};
}

double Wer(std::string_view reference, std::string_view hypothesis) {
  const auto ref = SplitWords(reference);
  const auto hyp = SplitWords(hypothesis);
  return WordErrors(ref, hyp).rate();
}

double RelativeReduction(double baseline, double system) {
  if (baseline == 0.0) throw std::invalid_argument("baseline error rate is zero");
  return 100.0 * (baseline - system) / baseline;
}

}  // namespace seqtrans
