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

#include "seqtrans/losses.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqtrans {
namespace {

void CheckTarget(std::span<const int> target, std::size_t vocab,
                 const char* op) {
  for (int y : target) {
    if (y <= kBlankId || static_cast<std::size_t>(y) >= vocab) {
      throw std::invalid_argument(std::string(op) + ": target id " +
                                  std::to_string(y) +
                                  " outside real-token range [1, " +
                                  std::to_string(vocab - 1) + "]");
    }
  }
}

std::size_t ResolveFrames(std::optional<std::size_t> frames, std::size_t rows,
                          const char* op) {
  const std::size_t n = frames.value_or(rows);
  if (n == 0 || n > rows) {
    throw ShapeError(std::string(op) + ": frame count " + std::to_string(n) +
                     " invalid for " + std::to_string(rows) + " rows");
  }
  return n;
}

// Lattice accessor for a (T, U1, V) array.
struct Lattice {
  const Array& a;
  std::size_t u1, v;
  double operator()(std::size_t t, std::size_t u, std::size_t k) const {
    return a[(t * u1 + u) * v + k];
  }
};

void CheckLattice(const Array& log_probs, std::span<const int> target,
                  const char* op) {
  if (log_probs.rank() != 3 || log_probs.dim(1) < target.size() + 1) {
    throw ShapeError(std::string(op) + ": lattice shape " +
                     ShapeToString(log_probs.shape()) +
                     " inconsistent with target length " +
                     std::to_string(target.size()));
  }
  CheckTarget(target, log_probs.dim(2), op);
}

// Forward variables alpha(t, u): log-probability of reaching node (t, u)
// having emitted target[0..u).
std::vector<double> TransducerAlpha(const Lattice& lp, std::size_t frames,
                                    std::span<const int> target) {
  const std::size_t u_len = target.size() + 1;
  std::vector<double> alpha(frames * u_len, kNegInf);
  alpha[0] = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u < u_len; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = alpha[(t - 1) * u_len + u] + lp(t - 1, u, kBlankId);
      if (u > 0) {
        a = LogAddExp(a, alpha[t * u_len + u - 1] +
                             lp(t, u - 1, target[u - 1]));
      }
      alpha[t * u_len + u] = a;
    }
  }
  return alpha;
}

}  // namespace

void LossWeights::Validate() const {
  if (ctc < 0.0 || transducer < 0.0 || lm < 0.0) {
    throw std::invalid_argument("loss weights must be nonnegative");
  }
  if (ctc == 0.0 && transducer == 0.0 && lm == 0.0) {
    throw std::invalid_argument("at least one loss weight must be positive");
  }
}

LossWeights LossWeights::FromPreset(std::string_view name) {
  if (name == "baseline") return {0.0, 1.0, 0.0};
  if (name == "ctc") return {0.5, 0.1, 0.0};
  if (name == "lm") return {0.0, 1.0, 1.0};
  if (name == "ctc+lm") return {0.5, 1.0, 1.0};
  if (name == "ctc_fixed") return {0.5, 1.0, 0.0};
  throw std::invalid_argument("unknown loss preset '" + std::string(name) +
                              "' (expected baseline, ctc, lm, ctc+lm, ctc_fixed)");
}

// ---------------------------------------------------------------------------
// CTC

LossAndGrad CtcForwardBackward(const Array& log_probs,
                               std::span<const int> target,
                               std::optional<std::size_t> frames) {
  if (log_probs.rank() != 2) {
    throw ShapeError("ctc_loss: expected (T, V) log-probs, got " +
                     ShapeToString(log_probs.shape()));
  }
  const std::size_t steps = ResolveFrames(frames, log_probs.rows(), "ctc_loss");
  const std::size_t vocab = log_probs.cols();
  CheckTarget(target, vocab, "ctc_loss");

  // Extended label sequence: blank, y1, blank, y2, ..., blank.
  const std::size_t states = 2 * target.size() + 1;
  std::vector<int> ext(states, kBlankId);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto can_skip = [&](std::size_t s) {
    return s >= 2 && ext[s] != kBlankId && ext[s] != ext[s - 2];
  };

  LossAndGrad out{kInf, Array(log_probs.shape())};
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++repeats;
  }
  if (target.size() + repeats > steps) {
    spdlog::warn("ctc_loss: target of length {} needs {} frames, only {}",
                 target.size(), target.size() + repeats, steps);
    return out;
  }

  std::vector<double> alpha(steps * states, kNegInf);
  std::vector<double> beta(steps * states, kNegInf);
  auto lp = [&](std::size_t t, std::size_t s) {
    return log_probs.at(t, ext[s]);
  };

  alpha[0] = lp(0, 0);
  if (states > 1) alpha[1] = lp(0, 1);
  for (std::size_t t = 1; t < steps; ++t) {
    const double* prev = alpha.data() + (t - 1) * states;
    double* cur = alpha.data() + t * states;
    for (std::size_t s = 0; s < states; ++s) {
      double a = prev[s];
      if (s >= 1) a = LogAddExp(a, prev[s - 1]);
      if (can_skip(s)) a = LogAddExp(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + lp(t, s);
    }
  }
  const double* last = alpha.data() + (steps - 1) * states;
  double log_like = last[states - 1];
  if (states > 1) log_like = LogAddExp(log_like, last[states - 2]);
  if (log_like == kNegInf) return out;

  // beta(t, s): log-probability of the emissions after frame t given state s
  // at frame t.
  double* tail = beta.data() + (steps - 1) * states;
  tail[states - 1] = 0.0;
  if (states > 1) tail[states - 2] = 0.0;
  for (std::size_t t = steps - 1; t-- > 0;) {
    const double* next = beta.data() + (t + 1) * states;
    double* cur = beta.data() + t * states;
    for (std::size_t s = 0; s < states; ++s) {
      double b = next[s] + lp(t + 1, s);
      if (s + 1 < states) b = LogAddExp(b, next[s + 1] + lp(t + 1, s + 1));
      if (s + 2 < states && can_skip(s + 2)) {
        b = LogAddExp(b, next[s + 2] + lp(t + 1, s + 2));
      }
      cur[s] = b;
    }
  }

  out.loss = -log_like;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      const double occ = alpha[t * states + s] + beta[t * states + s];
      if (occ == kNegInf) continue;
      out.grad.at(t, ext[s]) -= std::exp(occ - log_like);
    }
  }
  return out;
}

Var CtcLoss(Var log_probs, std::span<const int> target,
            std::optional<std::size_t> frames) {
  LossAndGrad r = CtcForwardBackward(log_probs.value(), target, frames);
  return log_probs.tape().Record(
      Array::Scalar(r.loss), {log_probs},
      [ip = log_probs.id(), grad = std::move(r.grad)](Tape& t,
                                                      std::size_t self) {
        const double g = t.GradBuffer(self)[0];
        Array& dst = t.GradBuffer(ip);
        for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += g * grad[i];
      });
}

// ---------------------------------------------------------------------------
// Transducer

double TransducerLogLikelihood(const Array& log_probs,
                               std::span<const int> target,
                               std::optional<std::size_t> frames) {
  CheckLattice(log_probs, target, "transducer_loss");
  const std::size_t steps =
      ResolveFrames(frames, log_probs.dim(0), "transducer_loss");
  const Lattice lp{log_probs, log_probs.dim(1), log_probs.dim(2)};
  const std::vector<double> alpha = TransducerAlpha(lp, steps, target);
  const std::size_t u = target.size();
  return alpha[(steps - 1) * (u + 1) + u] + lp(steps - 1, u, kBlankId);
}

LossAndGrad TransducerForwardBackward(const Array& log_probs,
                                      std::span<const int> target,
                                      std::optional<std::size_t> frames) {
  CheckLattice(log_probs, target, "transducer_loss");
  const std::size_t steps =
      ResolveFrames(frames, log_probs.dim(0), "transducer_loss");
  const std::size_t u_max = target.size();
  const std::size_t u_len = u_max + 1;
  const Lattice lp{log_probs, log_probs.dim(1), log_probs.dim(2)};

  const std::vector<double> alpha = TransducerAlpha(lp, steps, target);
  const double log_like =
      alpha[(steps - 1) * u_len + u_max] + lp(steps - 1, u_max, kBlankId);

  // beta(t, u): log-probability of finishing from node (t, u), including the
  // emission made at (t, u).
  std::vector<double> beta(steps * u_len, kNegInf);
  for (std::size_t t = steps; t-- > 0;) {
    for (std::size_t u = u_len; u-- > 0;) {
      double b = kNegInf;
      if (t + 1 < steps) {
        b = beta[(t + 1) * u_len + u] + lp(t, u, kBlankId);
      } else if (u == u_max) {
        b = lp(t, u, kBlankId);
      }
      if (u < u_max) {
        b = LogAddExp(b, beta[t * u_len + u + 1] + lp(t, u, target[u]));
      }
      beta[t * u_len + u] = b;
    }
  }

  LossAndGrad out{-log_like, Array(log_probs.shape())};
  if (log_like == kNegInf) {
    out.loss = kInf;
    return out;
  }
  const std::size_t u1 = log_probs.dim(1), vocab = log_probs.dim(2);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t u = 0; u < u_len; ++u) {
      const double a = alpha[t * u_len + u];
      if (a == kNegInf) continue;
      double* g = out.grad.data() + (t * u1 + u) * vocab;
      double next_blank = kNegInf;
      if (t + 1 < steps) {
        next_blank = beta[(t + 1) * u_len + u];
      } else if (u == u_max) {
        next_blank = 0.0;
      }
      if (next_blank != kNegInf) {
        g[kBlankId] -=
            std::exp(a + lp(t, u, kBlankId) + next_blank - log_like);
      }
      if (u < u_max) {
        g[target[u]] -= std::exp(a + lp(t, u, target[u]) +
                                 beta[t * u_len + u + 1] - log_like);
      }
    }
  }
  return out;
}

Var TransducerLoss(Var log_probs, std::span<const int> target,
                   std::optional<std::size_t> frames) {
  LossAndGrad r = TransducerForwardBackward(log_probs.value(), target, frames);
  return log_probs.tape().Record(
      Array::Scalar(r.loss), {log_probs},
      [ip = log_probs.id(), grad = std::move(r.grad)](Tape& t,
                                                      std::size_t self) {
        const double g = t.GradBuffer(self)[0];
        Array& dst = t.GradBuffer(ip);
        for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += g * grad[i];
      });
}

// ---------------------------------------------------------------------------
// LM and joint objective

Var LmLoss(Var lm_log_probs, std::span<const int> target) {
  if (target.empty()) {
    throw std::invalid_argument("lm_loss: empty target");
  }
  const Array& v = lm_log_probs.value();
  if (v.rank() != 2 || v.rows() < target.size()) {
    throw ShapeError("lm_loss: log-probs " + ShapeToString(v.shape()) +
                     " too short for target length " +
                     std::to_string(target.size()));
  }
  std::vector<int> columns;
  columns.reserve(target.size());
  for (int y : target) {
    if (y <= kBlankId || static_cast<std::size_t>(y) > v.cols()) {
      throw std::invalid_argument("lm_loss: target id " + std::to_string(y) +
                                  " outside [1, " + std::to_string(v.cols()) +
                                  "]");
    }
    columns.push_back(y - 1);
  }
  Var steps = SliceRows(lm_log_probs, 0, target.size());
  return Neg(Mean(PickColumns(steps, columns)));
}

double TotalLoss(double ctc, double transducer, double lm,
                 const LossWeights& weights) {
  double total = 0.0;
  if (weights.ctc != 0.0) total += weights.ctc * ctc;
  if (weights.transducer != 0.0) total += weights.transducer * transducer;
  if (weights.lm != 0.0) total += weights.lm * lm;
  return total;
}

Var TotalLoss(Var ctc, Var transducer, Var lm, const LossWeights& weights) {
  std::vector<Var> terms;
  if (weights.ctc != 0.0) terms.push_back(Scale(ctc, weights.ctc));
  if (weights.transducer != 0.0) {
    terms.push_back(Scale(transducer, weights.transducer));
  }
  if (weights.lm != 0.0) terms.push_back(Scale(lm, weights.lm));
  if (terms.empty()) throw std::invalid_argument("all loss weights are zero");
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = Add(total, terms[i]);
  return total;
}

// ---------------------------------------------------------------------------
// Oracles

double BruteForceCtc(const Array& log_probs, std::span<const int> target) {
  if (log_probs.rank() != 2) {
    throw ShapeError("brute_force_ctc: expected (T, V), got " +
                     ShapeToString(log_probs.shape()));
  }
  const std::size_t steps = log_probs.rows(), vocab = log_probs.cols();
  if (steps > 6 || vocab > 5) {
    throw std::invalid_argument("brute_force_ctc: instance too large");
  }
  std::vector<int> labeling(steps, 0);
  double total = kNegInf;
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    double path = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const int k = labeling[t];
      path += log_probs.at(t, k);
      if (k != prev && k != kBlankId) collapsed.push_back(k);
      prev = k;
    }
    if (std::equal(collapsed.begin(), collapsed.end(), target.begin(),
                   target.end())) {
      total = LogAddExp(total, path);
    }
    // Odometer increment over all V^T labelings.
    std::size_t t = 0;
    while (t < steps && ++labeling[t] == static_cast<int>(vocab)) {
      labeling[t++] = 0;
    }
    if (t == steps) break;
  }
  return -total;
}

double BruteForceTransducer(const Array& log_probs,
                            std::span<const int> target) {
  if (log_probs.rank() != 3 || log_probs.dim(1) != target.size() + 1) {
    throw ShapeError("brute_force_rnnt: lattice " +
                     ShapeToString(log_probs.shape()) +
                     " does not match target length " +
                     std::to_string(target.size()));
  }
  const std::size_t steps = log_probs.dim(0), vocab = log_probs.dim(2);
  if (steps + target.size() > 10) {
    throw std::invalid_argument("brute_force_rnnt: instance too large");
  }
  const Lattice lp{log_probs, log_probs.dim(1), vocab};
  double total = kNegInf;
  std::vector<int> emitted;
  // Every symbol (blank or label) is tried at every node; label sequences
  // that stop being a prefix of the target are abandoned.
  std::function<void(std::size_t, double)> walk = [&](std::size_t t,
                                                      double score) {
    const std::size_t u = emitted.size();
    for (std::size_t k = 0; k < vocab; ++k) {
      const double s = score + lp(t, u, k);
      if (k == kBlankId) {
        if (t + 1 < steps) {
          walk(t + 1, s);
        } else if (std::equal(emitted.begin(), emitted.end(), target.begin(),
                              target.end())) {
          total = LogAddExp(total, s);
        }
        continue;
      }
      if (u >= target.size() || target[u] != static_cast<int>(k)) continue;
      emitted.push_back(static_cast<int>(k));
      walk(t, s);
      emitted.pop_back();
    }
  };
  walk(0, 0.0);
  return -total;
}

}  // namespace seqtrans
